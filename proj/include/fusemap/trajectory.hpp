#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fusemap/cost_model.hpp"
#include "fusemap/search.hpp"
#include "fusemap/transformer.hpp"

namespace fusemap::seq {

/// Normalization constants of the state and reward features. Stored in
/// checkpoints so inference does not depend on compiled-in defaults.
struct StateEncoding {
  double shape_log2_scale = 16.0;
  double reward_unit = 64.0 * (1 << 20);  // budget bytes per reward unit
  double mem_unit = 1 << 20;              // bytes per sample unit
  double mem_scale = 64.0;
  double mem_clamp = 2.0;

  double reward(Bytes mem_budget) const { return static_cast<double>(mem_budget) / reward_unit; }
  double memory_feature(Bytes mem_budget, Count batch) const;

  bool operator==(const StateEncoding&) const = default;
};

void to_json(nlohmann::json& j, const StateEncoding& e);
void from_json(const nlohmann::json& j, StateEncoding& e);

using StateVector = Eigen::Matrix<double, 1, kStateDim>;

struct TrajectoryStep {
  double reward = 0;
  StateVector state = StateVector::Zero();
  double action = 0;
};

struct TrajectoryMeta {
  std::string workload;
  Count batch = 0;
  Bytes budget_bytes = 0;
  double latency = 0;
  Bytes peak = 0;
};

struct Trajectory {
  TrajectoryMeta meta;
  std::vector<TrajectoryStep> steps;
};

/// State at step t: shape of layer t (t = 0 is the network input with
/// k = c = input channels and r = s = 1), budget feature and normalized
/// partial latency of the decided prefix.
StateVector state_vector(const CostModel& model, std::size_t t, Count batch, Bytes mem_budget, double p_norm,
                         const StateEncoding& enc);

Trajectory build_trajectory(const CostModel& model, const Strategy& strategy, Bytes mem_budget,
                            const StateEncoding& enc = {});

Sequence<double> to_sequence(const Trajectory& trajectory);

std::string trajectory_to_json(const Trajectory& trajectory);
Trajectory parse_trajectory(std::string_view line);
void write_dataset(std::ostream& out, const std::vector<Trajectory>& trajectories);
std::vector<Trajectory> read_dataset(std::istream& in);
std::vector<Trajectory> load_dataset(const std::string& path);

struct DatasetOptions {
  Count batch = 64;
  std::vector<Bytes> budgets;
  std::size_t top_k = 8;
  GaConfig ga;
  int threads = 0;
  StateEncoding encoding;
};

struct DatasetResult {
  std::vector<Trajectory> trajectories;
  std::vector<Bytes> skipped_budgets;
  long samples_used = 0;
};

/// Runs the GA once per budget (seed ga.seed + budget index) and turns the
/// best top_k distinct valid strategies of each final population into
/// trajectories. Budgets without any valid strategy are skipped via warn.
DatasetResult gen_dataset(const CostModel& model, const DatasetOptions& options,
                          const std::function<void(const std::string&)>& warn = {});

}  // namespace fusemap::seq
