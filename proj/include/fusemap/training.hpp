#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fusemap/checkpoint.hpp"
#include "fusemap/trajectory.hpp"

namespace fusemap::seq {

struct TrainConfig {
  ModelConfig model;
  int epochs = 3000;
  double lr = 1e-4;
  int minibatch = 16;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  Checkpoint checkpoint;
  /// loss_curve[0] is the dataset loss at initialization; loss_curve[e] the
  /// mean minibatch loss seen during epoch e.
  std::vector<double> loss_curve;
};

using ProgressFn = std::function<void(int epoch, double loss)>;

/// Imitation training with the MSE action loss. Deterministic for a given
/// seed, dataset and config (single-threaded).
TrainResult train(const std::vector<Trajectory>& dataset, const TrainConfig& cfg, const StateEncoding& encoding = {},
                  const ProgressFn& progress = {});

struct FineTuneConfig {
  double epoch_fraction = 0.10;
  double lr = 1e-4;
  int minibatch = 16;
  std::uint64_t seed = 0;
  double grad_clip = 1.0;
};

/// Number of epochs a fine-tune of `parent_epochs` runs (at least one).
int fine_tune_epochs(int parent_epochs, double epoch_fraction);

/// Continues training parent's weights on a new dataset for
/// epoch_fraction x the parent's epoch count. Adam state starts fresh.
TrainResult fine_tune(const Checkpoint& parent, const std::string& parent_sha256, const std::vector<Trajectory>& dataset,
                      const FineTuneConfig& cfg, const ProgressFn& progress = {});

/// Mean squared action error of the model over a dataset.
double dataset_loss(const Checkpoint& checkpoint, const std::vector<Trajectory>& dataset);

struct GradCheckOptions {
  ModelConfig model{.blocks = 1, .heads = 2, .dim = 8, .max_timesteps = 4, .dropout = 0.0};
  std::uint64_t seed = 0;
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t steps = 3;
  std::size_t sequences = 2;
  bool zero_input = false;
  /// Applied to the analytic gradients before comparison (negative controls).
  std::function<void(Parameters<double>&)> tamper;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  bool all_finite = true;
  bool passed = false;
};

/// Analytic gradients vs central finite differences for every parameter.
GradCheckReport grad_check(const GradCheckOptions& options);

}  // namespace fusemap::seq
