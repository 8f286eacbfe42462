#include "fusemap/mapper.hpp"

#include <chrono>

#include "fusemap/trajectory.hpp"

namespace fusemap::seq {

namespace {
using Clock = std::chrono::steady_clock;
}

InferenceResult infer(const Checkpoint& checkpoint, const CostModel& model, Count batch, Bytes mem_budget) {
  const auto start = Clock::now();
  const std::size_t n = model.layers();
  if (n + 1 > static_cast<std::size_t>(checkpoint.config.max_timesteps)) {
    throw std::invalid_argument("infer: workload " + model.workload().name + " needs " + std::to_string(n + 1) +
                                " steps; checkpoint max_timesteps is " +
                                std::to_string(checkpoint.config.max_timesteps));
  }
  if (batch < 1) throw std::invalid_argument("infer: batch must be >= 1");
  if (mem_budget <= 0) throw std::invalid_argument("infer: budget must be > 0");

  InferenceResult result;
  const auto& meta = checkpoint.metadata;
  result.budget_outside_training = mem_budget < meta.min_budget || mem_budget > meta.max_budget;

  double cost_seconds = 0;
  auto timed = [&](auto&& fn) {
    const auto t0 = Clock::now();
    auto value = fn();
    cost_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    return value;
  };

  const StateEncoding& enc = checkpoint.encoding;
  const double baseline = timed([&] { return model.baseline_latency(batch); });
  const double reward = enc.reward(mem_budget);
  Decoder<double> decoder(checkpoint.params, checkpoint.config);
  Strategy& s = result.strategy;
  s.batch = batch;
  s.actions.reserve(n + 1);
  for (std::size_t t = 0; t <= n; ++t) {
    const double partial = timed([&] { return model.partial_perf(s.actions, batch); });
    const StateVector state = state_vector(model, t, batch, mem_budget, partial / baseline, enc);
    const double raw = decoder.predict(reward, state);
    result.raw_actions.push_back(raw);
    const Action a = decode_action(raw, batch, t != 0);
    s.actions.push_back(a);
    decoder.commit(encode_action(a, batch));
  }
  result.report = timed([&] { return model.evaluate(s, mem_budget); });
  result.cost_model_seconds = cost_seconds;
  result.mapper_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return result;
}

}  // namespace fusemap::seq
