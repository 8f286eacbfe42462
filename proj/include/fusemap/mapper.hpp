#pragma once

#include <vector>

#include "fusemap/checkpoint.hpp"
#include "fusemap/cost_model.hpp"

namespace fusemap::seq {

struct InferenceResult {
  Strategy strategy;
  CostReport report;
  std::vector<double> raw_actions;  // model outputs before legalization
  double mapper_seconds = 0;        // whole decode, including cost-model calls
  double cost_model_seconds = 0;    // partial_perf and final evaluation only
  bool budget_outside_training = false;
};

/// Single-pass closed-loop decode: each step's state uses the partial
/// latency of the actions decoded so far; each raw output is snapped to the
/// nearest legal action before it is fed back.
InferenceResult infer(const Checkpoint& checkpoint, const CostModel& model, Count batch, Bytes mem_budget);

}  // namespace fusemap::seq
