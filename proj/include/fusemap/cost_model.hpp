#pragma once

#include <span>
#include <vector>

#include "fusemap/strategy.hpp"
#include "fusemap/workload.hpp"

namespace fusemap {

struct AcceleratorConfig {
  Count pes = 1024;
  Bytes onchip_buffer = Bytes{64} << 20;
  double bw_off = 900e9;   // bytes/s
  double bw_on = 9000e9;   // bytes/s
  double freq = 1e9;       // Hz
  bool double_buffer = false;

  void validate() const;
};

struct GroupCost {
  std::size_t first_layer = 1;  // one-based, inclusive
  std::size_t last_layer = 1;
  Count macs = 0;
  double t_comp = 0;
  double t_off = 0;
  double t_on = 0;
  Bytes offchip = 0;
  Bytes onchip = 0;
  Bytes peak = 0;

  double latency() const;
};

struct CostReport {
  double latency = 0;  // seconds
  Bytes peak_onchip = 0;
  Bytes offchip_traffic = 0;
  Bytes onchip_traffic = 0;
  Bytes mem_budget = 0;
  bool valid = false;
  std::vector<GroupCost> per_group;
};

/// Roofline model of fused-layer execution bound to one workload and
/// accelerator. Per-layer quantities are precomputed so repeated evaluation
/// (search, dataset decoration) only walks the strategy. Immutable and
/// thread-safe after construction.
///
/// Per fused group g = [f..l] with per-layer staging micro-batches:
///   t_comp  = sum macs(i, B) / (pes * freq)
///   offchip = in(f, B) + out(l, B) + sum weights(i) + skip reads from outside g
///   onchip  = sum (in(i, B) + out(i, B) + weights(i))
///   peak    = sum out(i, mb_i) + in(f, mb_{f-1}) + weights + staged outside skips
/// where in(i, b) is the tensor written by layer i-1 (the network input for
/// i = 1). A single-layer group streams its weights through the buffer like
/// an ordinary layer-by-layer mapping, so weights only count toward the
/// peak of groups with two or more layers.
/// latency = sum over groups of max(t_comp, t_off, t_on), accumulated as the
/// exact compute floor plus per-group memory stalls so compute-bound
/// strategies tie bit-for-bit.
class CostModel {
 public:
  CostModel(Workload workload, AcceleratorConfig accel);

  const Workload& workload() const { return workload_; }
  const AcceleratorConfig& accelerator() const { return accel_; }
  std::size_t layers() const { return workload_.size(); }

  CostReport evaluate(const Strategy& strategy, Bytes mem_budget) const;
  /// Latency of the prefix padded with Sync (and the full batch at index 0
  /// when the prefix is empty).
  double partial_perf(std::span<const Action> prefix, Count batch) const;
  double baseline_latency(Count batch) const;
  /// Sum of macs / (pes * freq): no strategy can run faster.
  double compute_floor(Count batch) const;

 private:
  Workload workload_;
  AcceleratorConfig accel_;
  std::vector<Count> macs_per_sample_;
  std::vector<Bytes> out_per_sample_;
  std::vector<Bytes> in_per_sample_;
  std::vector<Bytes> weights_;
};

CostReport evaluate(const Workload& workload, const AcceleratorConfig& accel, const Strategy& strategy,
                    Bytes mem_budget);
double partial_perf(const Workload& workload, const AcceleratorConfig& accel, std::span<const Action> prefix,
                    Count batch);
double speedup(const Workload& workload, const AcceleratorConfig& accel, const Strategy& strategy);

/// Largest uniform micro-batch (no Sync anywhere) whose peak fits the
/// budget; falls back to no_fusion when even mb = 1 does not fit.
Strategy uniform_microbatch(const CostModel& model, Count batch, Bytes mem_budget);
Strategy uniform_microbatch(const Workload& workload, const AcceleratorConfig& accel, Count batch, Bytes mem_budget);

std::string report_to_json(const CostReport& report, double speedup, int indent = 2);

}  // namespace fusemap
