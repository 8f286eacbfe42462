#include "fusemap/cost_model.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

namespace fusemap {

void AcceleratorConfig::validate() const {
  if (pes <= 0 || onchip_buffer <= 0 || !(bw_off > 0) || !(bw_on > 0) || !(freq > 0)) {
    throw ValidationError("accelerator: pes, buffer, bandwidths and frequency must all be > 0");
  }
  if (bw_on < bw_off) throw ValidationError("accelerator: on-chip bandwidth must be >= off-chip bandwidth");
}

double GroupCost::latency() const { return std::max({t_comp, t_off, t_on}); }

CostModel::CostModel(Workload workload, AcceleratorConfig accel) : workload_(std::move(workload)), accel_(accel) {
  validate(workload_);
  accel_.validate();
  const std::size_t n = workload_.size();
  macs_per_sample_.resize(n);
  out_per_sample_.resize(n);
  in_per_sample_.resize(n);
  weights_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const LayerShape& l = workload_.layers[i];
    macs_per_sample_[i] = macs(l, 1);
    out_per_sample_[i] = out_activation_bytes(l, 1, workload_.bytes_per_element);
    in_per_sample_[i] = input_activation_bytes(workload_, i, 1);
    weights_[i] = weight_bytes(l, workload_.bytes_per_element);
  }
}

double CostModel::compute_floor(Count batch) const {
  Count total = 0;
  for (Count m : macs_per_sample_) total += m;
  return static_cast<double>(total * batch) / (static_cast<double>(accel_.pes) * accel_.freq);
}

CostReport CostModel::evaluate(const Strategy& strategy, Bytes mem_budget) const {
  const std::size_t n = layers();
  check_legal(strategy, n);
  const Count batch = strategy.batch;
  const double rate = static_cast<double>(accel_.pes) * accel_.freq;
  const Bytes staging_factor = accel_.double_buffer ? 2 : 1;

  // group_of[i] for zero-based layer i; group ends where a Sync sits.
  std::vector<std::size_t> group_of(n);
  std::vector<std::size_t> group_last;
  for (std::size_t i = 0; i < n; ++i) {
    group_of[i] = group_last.size();
    if (strategy.actions[i + 1].is_sync() || i + 1 == n) group_last.push_back(i);
  }

  CostReport report;
  report.mem_budget = mem_budget;
  report.per_group.resize(group_last.size());
  std::size_t first = 0;
  for (std::size_t g = 0; g < group_last.size(); ++g) {
    GroupCost& gc = report.per_group[g];
    const std::size_t last = group_last[g];
    gc.first_layer = first + 1;
    gc.last_layer = last + 1;
    const bool fused = last > first;
    Bytes weights = 0;
    Bytes staged = in_per_sample_[first] * strategy.actions[first].staging();
    for (std::size_t i = first; i <= last; ++i) {
      gc.macs += macs_per_sample_[i] * batch;
      weights += weights_[i];
      gc.onchip += (in_per_sample_[i] + out_per_sample_[i]) * batch + weights_[i];
      staged += out_per_sample_[i] * strategy.actions[i + 1].staging();
    }
    gc.offchip = (in_per_sample_[first] + out_per_sample_[last]) * batch + weights;
    gc.peak = staged * staging_factor + (fused ? weights : 0);
    first = last + 1;
  }

  // Skip tensors: free inside a group; otherwise re-read by the consumer's
  // group and staged at the consumer's micro-batch. A producer that is not
  // the last layer of its group must additionally write the tensor out.
  std::vector<bool> extra_write(n, false);
  for (std::size_t q = 0; q < n; ++q) {
    const auto& skip = workload_.layers[q].skip_from;
    if (!skip || group_of[*skip] == group_of[q]) continue;
    const std::size_t p = *skip;
    GroupCost& consumer = report.per_group[group_of[q]];
    consumer.offchip += out_per_sample_[p] * batch;
    consumer.peak += out_per_sample_[p] * strategy.actions[q + 1].staging() * staging_factor;
    if (group_last[group_of[p]] != p && !extra_write[p]) {
      extra_write[p] = true;
      report.per_group[group_of[p]].offchip += out_per_sample_[p] * batch;
    }
  }

  Count total_macs = 0;
  double stall = 0;
  for (GroupCost& gc : report.per_group) {
    gc.t_comp = static_cast<double>(gc.macs) / rate;
    gc.t_off = static_cast<double>(gc.offchip) / accel_.bw_off;
    gc.t_on = static_cast<double>(gc.onchip) / accel_.bw_on;
    total_macs += gc.macs;
    stall += std::max(0.0, std::max(gc.t_off, gc.t_on) - gc.t_comp);
    report.offchip_traffic += gc.offchip;
    report.onchip_traffic += gc.onchip;
    report.peak_onchip = std::max(report.peak_onchip, gc.peak);
  }
  report.latency = static_cast<double>(total_macs) / rate + stall;
  report.valid = report.peak_onchip <= mem_budget;
  return report;
}

double CostModel::partial_perf(std::span<const Action> prefix, Count batch) const {
  const std::size_t n = layers();
  if (prefix.size() > n + 1) throw StrategyError("partial_perf: prefix longer than the strategy");
  Strategy padded = no_fusion(workload_, batch);
  std::copy(prefix.begin(), prefix.end(), padded.actions.begin());
  return evaluate(padded, std::numeric_limits<Bytes>::max()).latency;
}

double CostModel::baseline_latency(Count batch) const {
  return evaluate(no_fusion(workload_, batch), std::numeric_limits<Bytes>::max()).latency;
}

CostReport evaluate(const Workload& workload, const AcceleratorConfig& accel, const Strategy& strategy,
                    Bytes mem_budget) {
  return CostModel(workload, accel).evaluate(strategy, mem_budget);
}

double partial_perf(const Workload& workload, const AcceleratorConfig& accel, std::span<const Action> prefix,
                    Count batch) {
  return CostModel(workload, accel).partial_perf(prefix, batch);
}

double speedup(const Workload& workload, const AcceleratorConfig& accel, const Strategy& strategy) {
  CostModel model(workload, accel);
  return model.baseline_latency(strategy.batch) / model.evaluate(strategy, 0).latency;
}

Strategy uniform_microbatch(const CostModel& model, Count batch, Bytes mem_budget) {
  if (mem_budget <= 0) throw std::invalid_argument("uniform_microbatch: budget must be > 0");
  const auto space = action_space(batch);
  for (auto it = space.rbegin(); it != space.rend(); ++it) {
    if (it->is_sync()) continue;
    Strategy s;
    s.batch = batch;
    s.actions.assign(model.layers() + 1, *it);
    if (model.evaluate(s, mem_budget).valid) return s;
  }
  return no_fusion(model.workload(), batch);
}

Strategy uniform_microbatch(const Workload& workload, const AcceleratorConfig& accel, Count batch, Bytes mem_budget) {
  return uniform_microbatch(CostModel(workload, accel), batch, mem_budget);
}

std::string report_to_json(const CostReport& r, double speedup, int indent) {
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : r.per_group) {
    groups.push_back({{"layers", {g.first_layer, g.last_layer}},
                      {"t_comp", g.t_comp},
                      {"t_off", g.t_off},
                      {"t_on", g.t_on},
                      {"offchip", g.offchip},
                      {"onchip", g.onchip},
                      {"peak", g.peak}});
  }
  nlohmann::json doc = {{"latency", r.latency},
                        {"peak_onchip", r.peak_onchip},
                        {"offchip_traffic", r.offchip_traffic},
                        {"onchip_traffic", r.onchip_traffic},
                        {"mem_budget", r.mem_budget},
                        {"valid", r.valid},
                        {"speedup", speedup},
                        {"per_group", std::move(groups)}};
  return doc.dump(indent) + "\n";
}

}  // namespace fusemap
