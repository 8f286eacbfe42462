#include "fusemap/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace fusemap::seq {

namespace {

constexpr std::size_t kLossTail = 100;

void zero(Parameters<double>& p) {
  for (auto& v : p.views()) std::fill(v.data.begin(), v.data.end(), 0.0);
}

double max_abs(Parameters<double>& p) {
  double m = 0;
  for (const auto& v : p.views()) {
    for (double x : v.data) m = std::max(m, std::abs(x));
  }
  return m;
}

std::vector<Sequence<double>> to_sequences(const std::vector<Trajectory>& dataset, const ModelConfig& cfg) {
  if (dataset.empty()) throw TrainingError("empty dataset");
  std::vector<Sequence<double>> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].steps.size() > static_cast<std::size_t>(cfg.max_timesteps)) {
      throw TrainingError("trajectory " + std::to_string(i) + " has " + std::to_string(dataset[i].steps.size()) +
                          " steps; model max_timesteps is " + std::to_string(cfg.max_timesteps));
    }
    out.push_back(to_sequence(dataset[i]));
  }
  return out;
}

double evaluate_loss(const Parameters<double>& params, const ModelConfig& cfg, const std::vector<Sequence<double>>& seqs,
                     std::size_t chunk) {
  Transformer<double> model(cfg);
  double sum = 0;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < seqs.size(); start += chunk) {
    const std::size_t len = std::min(chunk, seqs.size() - start);
    const std::span<const Sequence<double>> batch(seqs.data() + start, len);
    model.forward(params, batch);
    std::size_t k = 0;
    for (const auto& s : batch) k += s.steps();
    sum += model.loss(batch) * static_cast<double>(k);
    steps += k;
  }
  return sum / static_cast<double>(steps);
}

struct LoopSettings {
  int epochs;
  double lr;
  int minibatch;
  std::uint64_t seed;
  double grad_clip;
};

std::vector<double> run_epochs(Parameters<double>& params, const ModelConfig& cfg, const std::vector<Sequence<double>>& seqs,
                               const LoopSettings& s, const ProgressFn& progress) {
  if (s.epochs < 1) throw std::invalid_argument("training: epochs must be >= 1");
  if (s.minibatch < 1) throw std::invalid_argument("training: minibatch must be >= 1");
  if (!(s.lr > 0)) throw std::invalid_argument("training: lr must be > 0");

  Transformer<double> model(cfg);
  Adam<double> adam(cfg, s.lr, s.grad_clip);
  Parameters<double> grads = Parameters<double>::zeros(cfg);
  std::mt19937_64 shuffle_rng(s.seed);
  std::mt19937_64 dropout_rng(s.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64* dropout = cfg.dropout > 0 ? &dropout_rng : nullptr;

  std::vector<double> curve;
  curve.reserve(static_cast<std::size_t>(s.epochs) + 1);
  curve.push_back(evaluate_loss(params, cfg, seqs, static_cast<std::size_t>(s.minibatch)));
  if (progress) progress(0, curve.back());

  std::vector<std::size_t> order(seqs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Sequence<double>> batch;
  const std::size_t mb = static_cast<std::size_t>(s.minibatch);
  for (int epoch = 1; epoch <= s.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += mb) {
      batch.clear();
      std::size_t k = 0;
      for (std::size_t i = start; i < std::min(start + mb, order.size()); ++i) {
        batch.push_back(seqs[order[i]]);
        k += batch.back().steps();
      }
      model.forward(params, batch, dropout);
      const double loss = model.loss(batch);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", minibatch starting at " << start
            << "; max |param| = " << max_abs(params) << ", last grad norm = " << adam.last_grad_norm();
        throw TrainingError(msg.str());
      }
      zero(grads);
      model.backward(params, batch, grads);
      adam.step(params, grads);
      sum += loss * static_cast<double>(k);
      steps += k;
    }
    curve.push_back(sum / static_cast<double>(steps));
    if (progress) progress(epoch, curve.back());
  }
  return curve;
}

TrainingMetadata describe(const std::vector<Trajectory>& dataset, const std::vector<double>& curve, double final_loss,
                          const LoopSettings& s) {
  TrainingMetadata m;
  m.epochs = s.epochs;
  m.lr = s.lr;
  m.minibatch = s.minibatch;
  m.seed = s.seed;
  m.final_loss = final_loss;
  const std::size_t tail = std::min(kLossTail, curve.size());
  m.loss_tail.assign(curve.end() - static_cast<std::ptrdiff_t>(tail), curve.end());
  std::set<std::string> names;
  m.min_budget = dataset.front().meta.budget_bytes;
  m.max_budget = dataset.front().meta.budget_bytes;
  for (const auto& t : dataset) {
    names.insert(t.meta.workload);
    m.min_budget = std::min(m.min_budget, t.meta.budget_bytes);
    m.max_budget = std::max(m.max_budget, t.meta.budget_bytes);
  }
  m.workloads.assign(names.begin(), names.end());
  m.batch = dataset.front().meta.batch;
  return m;
}

}  // namespace

TrainResult train(const std::vector<Trajectory>& dataset, const TrainConfig& cfg, const StateEncoding& encoding,
                  const ProgressFn& progress) {
  cfg.model.validate();
  const auto seqs = to_sequences(dataset, cfg.model);
  const LoopSettings settings{cfg.epochs, cfg.lr, cfg.minibatch, cfg.seed, cfg.grad_clip};

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.config = cfg.model;
  ck.encoding = encoding;
  ck.params = Parameters<double>::initialize(cfg.model, cfg.seed);
  result.loss_curve = run_epochs(ck.params, cfg.model, seqs, settings, progress);
  const double final_loss = evaluate_loss(ck.params, cfg.model, seqs, static_cast<std::size_t>(cfg.minibatch));
  ck.metadata = describe(dataset, result.loss_curve, final_loss, settings);
  return result;
}

int fine_tune_epochs(int parent_epochs, double epoch_fraction) {
  if (!(epoch_fraction > 0)) throw std::invalid_argument("fine_tune: epoch_fraction must be > 0");
  return std::max(1, static_cast<int>(std::lround(epoch_fraction * parent_epochs)));
}

TrainResult fine_tune(const Checkpoint& parent, const std::string& parent_sha256, const std::vector<Trajectory>& dataset,
                      const FineTuneConfig& cfg, const ProgressFn& progress) {
  const auto seqs = to_sequences(dataset, parent.config);
  const LoopSettings settings{fine_tune_epochs(parent.metadata.epochs, cfg.epoch_fraction), cfg.lr, cfg.minibatch,
                              cfg.seed, cfg.grad_clip};

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  ck.config = parent.config;
  ck.encoding = parent.encoding;
  ck.params = parent.params;
  result.loss_curve = run_epochs(ck.params, ck.config, seqs, settings, progress);
  const double final_loss = evaluate_loss(ck.params, ck.config, seqs, static_cast<std::size_t>(cfg.minibatch));
  ck.metadata = describe(dataset, result.loss_curve, final_loss, settings);
  ck.metadata.lineage = Lineage{parent_sha256, parent.metadata.epochs, cfg.epoch_fraction};
  return result;
}

double dataset_loss(const Checkpoint& checkpoint, const std::vector<Trajectory>& dataset) {
  const auto seqs = to_sequences(dataset, checkpoint.config);
  return evaluate_loss(checkpoint.params, checkpoint.config, seqs, 16);
}

GradCheckReport grad_check(const GradCheckOptions& options) {
  const ModelConfig& cfg = options.model;
  cfg.validate();
  if (options.steps < 1 || options.steps > static_cast<std::size_t>(cfg.max_timesteps)) {
    throw std::invalid_argument("grad_check: steps must be in [1, max_timesteps]");
  }
  std::mt19937_64 rng(options.seed);
  // Seeded init plus O(1) noise so every parameter carries a non-trivial
  // gradient (gains away from 1, biases away from 0).
  Parameters<double> params = Parameters<double>::initialize(cfg, options.seed);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (auto& v : params.views()) {
    for (double& x : v.data) x += noise(rng);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Sequence<double>> seqs(options.sequences);
  for (auto& s : seqs) {
    s.states = Matrix<double>::Zero(static_cast<Eigen::Index>(options.steps), kStateDim);
    for (std::size_t t = 0; t < options.steps; ++t) {
      const bool z = options.zero_input;
      s.rewards.push_back(z ? 0.0 : unit(rng));
      for (int f = 0; f < kStateDim; ++f) s.states(static_cast<Eigen::Index>(t), f) = z ? 0.0 : unit(rng);
      s.actions.push_back(z ? 0.0 : 2.0 * unit(rng) - 1.0);
    }
  }

  Transformer<double> model(cfg);
  auto loss_at = [&](const Parameters<double>& p) {
    model.forward(p, seqs);
    return model.loss(seqs);
  };
  Parameters<double> grads = Parameters<double>::zeros(cfg);
  loss_at(params);
  model.backward(params, seqs, grads);
  if (options.tamper) options.tamper(grads);

  GradCheckReport report;
  auto pv = params.views();
  auto gv = grads.views();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    for (std::size_t j = 0; j < pv[i].data.size(); ++j) {
      double& x = pv[i].data[j];
      const double saved = x;
      x = saved + options.step;
      const double up = loss_at(params);
      x = saved - options.step;
      const double down = loss_at(params);
      x = saved;
      const double numeric = (up - down) / (2 * options.step);
      const double analytic = gv[i].data[j];
      if (!std::isfinite(analytic) || !std::isfinite(numeric)) report.all_finite = false;
      // Relative error with an absolute floor so exactly-zero gradients
      // compare on their finite-difference noise instead of 0/0.
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (!(rel <= report.max_rel_error)) {
        report.max_rel_error = rel;
        report.worst_tensor = pv[i].name;
        report.worst_index = j;
      }
    }
  }
  report.passed = report.all_finite && report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace fusemap::seq
