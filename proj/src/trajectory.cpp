#include "fusemap/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

namespace fusemap::seq {

double StateEncoding::memory_feature(Bytes mem_budget, Count batch) const {
  const double per_sample = static_cast<double>(mem_budget) / (static_cast<double>(batch) * mem_unit);
  return std::clamp(per_sample / mem_scale, 0.0, mem_clamp);
}

void to_json(nlohmann::json& j, const StateEncoding& e) {
  j = {{"shape_log2_scale", e.shape_log2_scale},
       {"reward_unit", e.reward_unit},
       {"mem_unit", e.mem_unit},
       {"mem_scale", e.mem_scale},
       {"mem_clamp", e.mem_clamp}};
}

void from_json(const nlohmann::json& j, StateEncoding& e) {
  j.at("shape_log2_scale").get_to(e.shape_log2_scale);
  j.at("reward_unit").get_to(e.reward_unit);
  j.at("mem_unit").get_to(e.mem_unit);
  j.at("mem_scale").get_to(e.mem_scale);
  j.at("mem_clamp").get_to(e.mem_clamp);
}

StateVector state_vector(const CostModel& model, std::size_t t, Count batch, Bytes mem_budget, double p_norm,
                         const StateEncoding& enc) {
  const Workload& w = model.workload();
  if (t > w.size()) throw std::out_of_range("state_vector: step beyond the last layer");
  LayerShape shape;
  if (t == 0) {
    shape.k = w.input_channels;
    shape.c = w.input_channels;
    shape.y = w.input_y;
    shape.x = w.input_x;
  } else {
    shape = w.layers[t - 1];
  }
  auto feature = [&](Count v) { return std::log2(static_cast<double>(v)) / enc.shape_log2_scale; };
  StateVector s;
  s << feature(shape.k), feature(shape.c), feature(shape.y), feature(shape.x), feature(shape.r), feature(shape.s),
      enc.memory_feature(mem_budget, batch), p_norm;
  return s;
}

Trajectory build_trajectory(const CostModel& model, const Strategy& strategy, Bytes mem_budget,
                            const StateEncoding& enc) {
  const std::size_t n = model.layers();
  check_legal(strategy, n);
  const CostReport report = model.evaluate(strategy, mem_budget);
  const double baseline = model.baseline_latency(strategy.batch);

  Trajectory traj;
  traj.meta = {model.workload().name, strategy.batch, mem_budget, report.latency, report.peak_onchip};
  traj.steps.reserve(n + 1);
  const double reward = enc.reward(mem_budget);
  const std::span<const Action> actions(strategy.actions);
  for (std::size_t t = 0; t <= n; ++t) {
    const double p_norm = model.partial_perf(actions.first(t), strategy.batch) / baseline;
    traj.steps.push_back({reward, state_vector(model, t, strategy.batch, mem_budget, p_norm, enc),
                          encode_action(strategy.actions[t], strategy.batch)});
  }
  return traj;
}

Sequence<double> to_sequence(const Trajectory& trajectory) {
  Sequence<double> seq;
  const std::size_t n = trajectory.steps.size();
  seq.states.resize(static_cast<Eigen::Index>(n), kStateDim);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& step = trajectory.steps[t];
    seq.rewards.push_back(step.reward);
    seq.states.row(static_cast<Eigen::Index>(t)) = step.state;
    seq.actions.push_back(step.action);
  }
  return seq;
}

std::string trajectory_to_json(const Trajectory& trajectory) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& step : trajectory.steps) {
    steps.push_back({{"r", step.reward},
                     {"s", std::vector<double>(step.state.data(), step.state.data() + kStateDim)},
                     {"a", step.action}});
  }
  const auto& m = trajectory.meta;
  nlohmann::json doc = {{"meta",
                         {{"workload", m.workload},
                          {"batch", m.batch},
                          {"budget_bytes", m.budget_bytes},
                          {"latency", m.latency},
                          {"peak", m.peak}}},
                        {"steps", std::move(steps)}};
  return doc.dump();
}

Trajectory parse_trajectory(std::string_view line) {
  try {
    const auto doc = nlohmann::json::parse(line);
    Trajectory traj;
    const auto& m = doc.at("meta");
    traj.meta.workload = m.at("workload").get<std::string>();
    traj.meta.batch = m.at("batch").get<Count>();
    traj.meta.budget_bytes = m.at("budget_bytes").get<Bytes>();
    traj.meta.latency = m.at("latency").get<double>();
    traj.meta.peak = m.at("peak").get<Bytes>();
    for (const auto& s : doc.at("steps")) {
      TrajectoryStep step;
      step.reward = s.at("r").get<double>();
      const auto state = s.at("s").get<std::vector<double>>();
      if (state.size() != kStateDim) throw ParseError("trajectory: state must have 8 features");
      for (int i = 0; i < kStateDim; ++i) step.state(i) = state[static_cast<std::size_t>(i)];
      step.action = s.at("a").get<double>();
      traj.steps.push_back(step);
    }
    if (traj.steps.empty()) throw ParseError("trajectory: no steps");
    return traj;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("trajectory: ") + e.what());
  }
}

void write_dataset(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  for (const auto& t : trajectories) out << trajectory_to_json(t) << '\n';
}

std::vector<Trajectory> read_dataset(std::istream& in) {
  std::vector<Trajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_trajectory(line));
    } catch (const ParseError& e) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Trajectory> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset " + path);
  return read_dataset(in);
}

DatasetResult gen_dataset(const CostModel& model, const DatasetOptions& options,
                          const std::function<void(const std::string&)>& warn) {
  if (options.budgets.empty()) throw std::invalid_argument("gen_dataset: no budgets given");
  if (options.top_k == 0) throw std::invalid_argument("gen_dataset: top_k must be >= 1");
  DatasetResult result;
  for (std::size_t i = 0; i < options.budgets.size(); ++i) {
    SearchOptions search;
    search.batch = options.batch;
    search.mem_budget = options.budgets[i];
    search.threads = options.threads;
    GaConfig ga = options.ga;
    ga.seed = options.ga.seed + i;
    const SearchResult found = ga_search(model, search, ga);
    result.samples_used += found.samples_used;
    const auto elites = top_distinct_valid(found.final_population, options.top_k);
    if (elites.empty()) {
      result.skipped_budgets.push_back(options.budgets[i]);
      if (warn) warn("no valid strategy for budget " + std::to_string(options.budgets[i]) + " bytes; skipped");
      continue;
    }
    for (const auto& e : elites) {
      result.trajectories.push_back(build_trajectory(model, e.strategy, options.budgets[i], options.encoding));
    }
  }
  return result;
}

}  // namespace fusemap::seq
