#pragma once

// Causal transformer over interleaved (reward, state, action) tokens with a
// hand-written backward pass. Everything is templated on the scalar type so
// gradient checks can run in double while the same code serves training.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fusemap::seq {

inline constexpr int kStateDim = 8;
inline constexpr int kTokensPerStep = 3;

struct ModelConfig {
  int blocks = 3;
  int heads = 2;
  int dim = 128;
  int max_timesteps = 64;
  double dropout = 0.0;

  int head_dim() const { return dim / heads; }
  int ff_dim() const { return 4 * dim; }
  void validate() const {
    if (blocks < 1 || heads < 1 || dim < 1 || max_timesteps < 1) {
      throw std::invalid_argument("model config: blocks, heads, dim, max_timesteps must be >= 1");
    }
    if (dim % heads != 0) throw std::invalid_argument("model config: dim must be divisible by heads");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: dropout must be in [0, 1)");
  }
  bool operator==(const ModelConfig&) const = default;
};

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Flat view of one named parameter tensor (row-major storage).
template <typename Scalar>
struct TensorView {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::span<Scalar> data;
};

template <typename Scalar>
struct BlockParameters {
  RowVector<Scalar> ln1_gain, ln1_bias;
  Matrix<Scalar> qkv_weight;  // dim x 3 dim
  RowVector<Scalar> qkv_bias;
  Matrix<Scalar> proj_weight;  // dim x dim
  RowVector<Scalar> proj_bias;
  RowVector<Scalar> ln2_gain, ln2_bias;
  Matrix<Scalar> ff1_weight;  // dim x ff
  RowVector<Scalar> ff1_bias;
  Matrix<Scalar> ff2_weight;  // ff x dim
  RowVector<Scalar> ff2_bias;
};

template <typename Scalar>
struct Parameters {
  Matrix<Scalar> reward_weight;  // 1 x dim
  RowVector<Scalar> reward_bias;
  Matrix<Scalar> state_weight;  // kStateDim x dim
  RowVector<Scalar> state_bias;
  Matrix<Scalar> action_weight;  // 1 x dim
  RowVector<Scalar> action_bias;
  Matrix<Scalar> timestep_embedding;  // max_timesteps x dim
  RowVector<Scalar> embed_ln_gain, embed_ln_bias;
  std::vector<BlockParameters<Scalar>> blocks;
  RowVector<Scalar> final_ln_gain, final_ln_bias;
  Matrix<Scalar> head_weight;  // dim x 1
  RowVector<Scalar> head_bias;  // 1

  /// All tensors zero-filled with the shapes implied by cfg.
  static Parameters zeros(const ModelConfig& cfg) {
    cfg.validate();
    const int d = cfg.dim;
    Parameters p;
    p.reward_weight = Matrix<Scalar>::Zero(1, d);
    p.reward_bias = RowVector<Scalar>::Zero(d);
    p.state_weight = Matrix<Scalar>::Zero(kStateDim, d);
    p.state_bias = RowVector<Scalar>::Zero(d);
    p.action_weight = Matrix<Scalar>::Zero(1, d);
    p.action_bias = RowVector<Scalar>::Zero(d);
    p.timestep_embedding = Matrix<Scalar>::Zero(cfg.max_timesteps, d);
    p.embed_ln_gain = RowVector<Scalar>::Zero(d);
    p.embed_ln_bias = RowVector<Scalar>::Zero(d);
    p.blocks.resize(cfg.blocks);
    for (auto& b : p.blocks) {
      b.ln1_gain = RowVector<Scalar>::Zero(d);
      b.ln1_bias = RowVector<Scalar>::Zero(d);
      b.qkv_weight = Matrix<Scalar>::Zero(d, 3 * d);
      b.qkv_bias = RowVector<Scalar>::Zero(3 * d);
      b.proj_weight = Matrix<Scalar>::Zero(d, d);
      b.proj_bias = RowVector<Scalar>::Zero(d);
      b.ln2_gain = RowVector<Scalar>::Zero(d);
      b.ln2_bias = RowVector<Scalar>::Zero(d);
      b.ff1_weight = Matrix<Scalar>::Zero(d, cfg.ff_dim());
      b.ff1_bias = RowVector<Scalar>::Zero(cfg.ff_dim());
      b.ff2_weight = Matrix<Scalar>::Zero(cfg.ff_dim(), d);
      b.ff2_bias = RowVector<Scalar>::Zero(d);
    }
    p.final_ln_gain = RowVector<Scalar>::Zero(d);
    p.final_ln_bias = RowVector<Scalar>::Zero(d);
    p.head_weight = Matrix<Scalar>::Zero(d, 1);
    p.head_bias = RowVector<Scalar>::Zero(1);
    return p;
  }

  /// Weights ~ N(0, 0.02^2), biases 0, layer-norm gains 1.
  static Parameters initialize(const ModelConfig& cfg, std::uint64_t seed) {
    Parameters p = zeros(cfg);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.02);
    for (auto& view : p.views()) {
      const bool is_gain = view.name.ends_with("gain");
      const bool is_bias = view.name.ends_with("bias");
      for (Scalar& v : view.data) v = is_gain ? Scalar(1) : is_bias ? Scalar(0) : Scalar(normal(rng));
    }
    return p;
  }

  std::vector<TensorView<Scalar>> views() {
    std::vector<TensorView<Scalar>> out;
    auto add = [&](std::string name, auto& t, bool vector) {
      std::vector<std::uint32_t> dims;
      if (vector) {
        dims = {static_cast<std::uint32_t>(t.size())};
      } else {
        dims = {static_cast<std::uint32_t>(t.rows()), static_cast<std::uint32_t>(t.cols())};
      }
      out.push_back({std::move(name), std::move(dims), std::span<Scalar>(t.data(), static_cast<std::size_t>(t.size()))});
    };
    add("embed.reward.weight", reward_weight, false);
    add("embed.reward.bias", reward_bias, true);
    add("embed.state.weight", state_weight, false);
    add("embed.state.bias", state_bias, true);
    add("embed.action.weight", action_weight, false);
    add("embed.action.bias", action_bias, true);
    add("embed.timestep", timestep_embedding, false);
    add("embed.ln_gain", embed_ln_gain, true);
    add("embed.ln_bias", embed_ln_bias, true);
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      auto& b = blocks[i];
      const std::string p = "blocks." + std::to_string(i) + ".";
      add(p + "ln1_gain", b.ln1_gain, true);
      add(p + "ln1_bias", b.ln1_bias, true);
      add(p + "attn.qkv.weight", b.qkv_weight, false);
      add(p + "attn.qkv.bias", b.qkv_bias, true);
      add(p + "attn.proj.weight", b.proj_weight, false);
      add(p + "attn.proj.bias", b.proj_bias, true);
      add(p + "ln2_gain", b.ln2_gain, true);
      add(p + "ln2_bias", b.ln2_bias, true);
      add(p + "ff1.weight", b.ff1_weight, false);
      add(p + "ff1.bias", b.ff1_bias, true);
      add(p + "ff2.weight", b.ff2_weight, false);
      add(p + "ff2.bias", b.ff2_bias, true);
    }
    add("final.ln_gain", final_ln_gain, true);
    add("final.ln_bias", final_ln_bias, true);
    add("head.weight", head_weight, false);
    add("head.bias", head_bias, true);
    return out;
  }

  std::size_t count() {
    std::size_t n = 0;
    for (const auto& v : views()) n += v.data.size();
    return n;
  }

  template <typename Other>
  Parameters<Other> cast() const {
    Parameters<Other> out;
    out.reward_weight = reward_weight.template cast<Other>();
    out.reward_bias = reward_bias.template cast<Other>();
    out.state_weight = state_weight.template cast<Other>();
    out.state_bias = state_bias.template cast<Other>();
    out.action_weight = action_weight.template cast<Other>();
    out.action_bias = action_bias.template cast<Other>();
    out.timestep_embedding = timestep_embedding.template cast<Other>();
    out.embed_ln_gain = embed_ln_gain.template cast<Other>();
    out.embed_ln_bias = embed_ln_bias.template cast<Other>();
    for (const auto& b : blocks) {
      BlockParameters<Other> o;
      o.ln1_gain = b.ln1_gain.template cast<Other>();
      o.ln1_bias = b.ln1_bias.template cast<Other>();
      o.qkv_weight = b.qkv_weight.template cast<Other>();
      o.qkv_bias = b.qkv_bias.template cast<Other>();
      o.proj_weight = b.proj_weight.template cast<Other>();
      o.proj_bias = b.proj_bias.template cast<Other>();
      o.ln2_gain = b.ln2_gain.template cast<Other>();
      o.ln2_bias = b.ln2_bias.template cast<Other>();
      o.ff1_weight = b.ff1_weight.template cast<Other>();
      o.ff1_bias = b.ff1_bias.template cast<Other>();
      o.ff2_weight = b.ff2_weight.template cast<Other>();
      o.ff2_bias = b.ff2_bias.template cast<Other>();
      out.blocks.push_back(std::move(o));
    }
    out.final_ln_gain = final_ln_gain.template cast<Other>();
    out.final_ln_bias = final_ln_bias.template cast<Other>();
    out.head_weight = head_weight.template cast<Other>();
    out.head_bias = head_bias.template cast<Other>();
    return out;
  }
};

/// One (reward, state, action) sequence. For prediction the action of the
/// last step is ignored (tokens only attend backwards).
template <typename Scalar>
struct Sequence {
  std::vector<Scalar> rewards;
  Matrix<Scalar> states;  // steps x kStateDim
  std::vector<Scalar> actions;

  std::size_t steps() const { return rewards.size(); }
};

namespace detail {

template <typename Scalar>
struct LayerNormCache {
  Matrix<Scalar> normalized;  // x_hat
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std;
};

template <typename Scalar>
inline constexpr Scalar kLayerNormEps = Scalar(1e-5);

template <typename Scalar>
Matrix<Scalar> layer_norm(const Matrix<Scalar>& x, const RowVector<Scalar>& gain, const RowVector<Scalar>& bias,
                          LayerNormCache<Scalar>* cache) {
  const Eigen::Index n = x.rows();
  const Scalar d = Scalar(x.cols());
  Matrix<Scalar> xhat(x.rows(), x.cols());
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar mean = x.row(i).sum() / d;
    const auto centered = (x.row(i).array() - mean).matrix();
    const Scalar var = centered.squaredNorm() / d;
    inv_std(i) = Scalar(1) / std::sqrt(var + kLayerNormEps<Scalar>);
    xhat.row(i) = centered * inv_std(i);
  }
  Matrix<Scalar> out = (xhat.array().rowwise() * gain.array()).rowwise() + bias.array();
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename Scalar>
Matrix<Scalar> layer_norm_backward(const Matrix<Scalar>& dy, const LayerNormCache<Scalar>& cache,
                                   const RowVector<Scalar>& gain, RowVector<Scalar>& dgain, RowVector<Scalar>& dbias) {
  dgain += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  Matrix<Scalar> dxhat = dy.array().rowwise() * gain.array();
  const Scalar d = Scalar(dy.cols());
  Matrix<Scalar> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const Scalar mean_dxhat = dxhat.row(i).sum() / d;
    const Scalar mean_dxhat_xhat = dxhat.row(i).dot(cache.normalized.row(i)) / d;
    dx.row(i) = cache.inv_std(i) *
                (dxhat.row(i).array() - mean_dxhat - cache.normalized.row(i).array() * mean_dxhat_xhat).matrix();
  }
  return dx;
}

template <typename Scalar>
Scalar gelu(Scalar x) {
  const Scalar c = Scalar(0.7978845608028654);  // sqrt(2 / pi)
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + Scalar(0.044715) * x * x * x)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar c = Scalar(0.7978845608028654);
  const Scalar t = std::tanh(c * (x + Scalar(0.044715) * x * x * x));
  return Scalar(0.5) * (Scalar(1) + t) + Scalar(0.5) * x * (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
}

/// Vectorized tanh term of the GELU approximation, t = tanh(c (x + 0.044715 x^3)),
/// written through exp so Eigen's packet math applies.
template <typename Scalar>
Matrix<Scalar> gelu_tanh(const Matrix<Scalar>& x) {
  const Scalar c = Scalar(0.7978845608028654);
  const auto u = (x.array() + Scalar(0.044715) * x.array().cube()) * (Scalar(2) * c);
  return (Scalar(1) - Scalar(2) / (u.exp() + Scalar(1))).matrix();
}

}  // namespace detail

/// Forward/backward over a minibatch of sequences. Token rows of all
/// sequences are stacked so every dense layer is a single GEMM; attention
/// runs per sequence and head with a causal mask.
template <typename Scalar>
class Transformer {
 public:
  explicit Transformer(ModelConfig cfg) : cfg_(cfg) { cfg_.validate(); }

  const ModelConfig& config() const { return cfg_; }

  /// Predicted action for every step of every sequence, in order.
  std::vector<Scalar> forward(const Parameters<Scalar>& p, std::span<const Sequence<Scalar>> batch,
                              std::mt19937_64* dropout_rng = nullptr) {
    layout(batch);
    const int d = cfg_.dim;
    const Eigen::Index m = total_tokens_;

    Matrix<Scalar> h(m, d);
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto& seq = batch[j];
      for (std::size_t t = 0; t < seq.steps(); ++t) {
        const Eigen::Index row = offsets_[j] + static_cast<Eigen::Index>(kTokensPerStep * t);
        const auto time = p.timestep_embedding.row(static_cast<Eigen::Index>(t));
        h.row(row) = seq.rewards[t] * p.reward_weight.row(0) + p.reward_bias + time;
        h.row(row + 1) = seq.states.row(static_cast<Eigen::Index>(t)) * p.state_weight + p.state_bias + time;
        h.row(row + 2) = seq.actions[t] * p.action_weight.row(0) + p.action_bias + time;
      }
    }
    h = detail::layer_norm(h, p.embed_ln_gain, p.embed_ln_bias, &embed_ln_);

    caches_.resize(p.blocks.size());
    for (std::size_t b = 0; b < p.blocks.size(); ++b) h = block_forward(p.blocks[b], h, caches_[b], dropout_rng);

    final_in_ = detail::layer_norm(h, p.final_ln_gain, p.final_ln_bias, &final_ln_);
    predictions_.resize(state_rows_.size());
    for (std::size_t i = 0; i < state_rows_.size(); ++i) {
      const Scalar pre = final_in_.row(state_rows_[i]).dot(p.head_weight.col(0)) + p.head_bias(0);
      predictions_[i] = std::tanh(pre);
    }
    return predictions_;
  }

  /// Mean squared error over all steps; call after forward().
  Scalar loss(std::span<const Sequence<Scalar>> batch) const {
    Scalar sum = 0;
    std::size_t k = 0;
    for (const auto& seq : batch) {
      for (Scalar a : seq.actions) {
        const Scalar diff = predictions_[k++] - a;
        sum += diff * diff;
      }
    }
    return sum / Scalar(k);
  }

  /// Accumulates dLoss/dParameters of the MSE loss into grads.
  void backward(const Parameters<Scalar>& p, std::span<const Sequence<Scalar>> batch, Parameters<Scalar>& grads) {
    const int d = cfg_.dim;
    const Scalar count = Scalar(predictions_.size());
    Matrix<Scalar> dfinal = Matrix<Scalar>::Zero(total_tokens_, d);
    std::size_t k = 0;
    for (const auto& seq : batch) {
      for (Scalar a : seq.actions) {
        const Scalar y = predictions_[k];
        const Scalar dpre = Scalar(2) * (y - a) / count * (Scalar(1) - y * y);
        const Eigen::Index row = state_rows_[k];
        grads.head_weight.col(0) += dpre * final_in_.row(row).transpose();
        grads.head_bias(0) += dpre;
        dfinal.row(row) = dpre * p.head_weight.col(0).transpose();
        ++k;
      }
    }
    Matrix<Scalar> dh =
        detail::layer_norm_backward(dfinal, final_ln_, p.final_ln_gain, grads.final_ln_gain, grads.final_ln_bias);
    for (std::size_t b = p.blocks.size(); b-- > 0;) dh = block_backward(p.blocks[b], grads.blocks[b], dh, caches_[b]);
    Matrix<Scalar> dembed =
        detail::layer_norm_backward(dh, embed_ln_, p.embed_ln_gain, grads.embed_ln_gain, grads.embed_ln_bias);

    for (std::size_t j = 0; j < batch.size(); ++j) {
      const auto& seq = batch[j];
      for (std::size_t t = 0; t < seq.steps(); ++t) {
        const Eigen::Index row = offsets_[j] + static_cast<Eigen::Index>(kTokensPerStep * t);
        const auto dr = dembed.row(row);
        const auto ds = dembed.row(row + 1);
        const auto da = dembed.row(row + 2);
        grads.reward_weight.row(0) += seq.rewards[t] * dr;
        grads.reward_bias += dr;
        grads.state_weight += seq.states.row(static_cast<Eigen::Index>(t)).transpose() * ds;
        grads.state_bias += ds;
        grads.action_weight.row(0) += seq.actions[t] * da;
        grads.action_bias += da;
        grads.timestep_embedding.row(static_cast<Eigen::Index>(t)) += dr + ds + da;
      }
    }
  }

 private:
  struct BlockCache {
    detail::LayerNormCache<Scalar> ln1, ln2;
    Matrix<Scalar> ln1_out, qkv, attn_concat, ln2_out, ff_pre, ff_tanh, ff_act;
    Matrix<Scalar> drop1, drop2;  // inverted-dropout masks (empty when off)
    std::vector<Matrix<Scalar>> probs;  // per (sequence, head)
  };

  void layout(std::span<const Sequence<Scalar>> batch) {
    offsets_.clear();
    state_rows_.clear();
    Eigen::Index offset = 0;
    for (const auto& seq : batch) {
      if (seq.steps() == 0) throw std::invalid_argument("transformer: empty sequence");
      if (seq.steps() > static_cast<std::size_t>(cfg_.max_timesteps)) {
        throw std::invalid_argument("transformer: sequence of " + std::to_string(seq.steps()) +
                                    " steps exceeds max_timesteps " + std::to_string(cfg_.max_timesteps));
      }
      if (seq.states.rows() != static_cast<Eigen::Index>(seq.steps()) || seq.states.cols() != kStateDim ||
          seq.actions.size() != seq.steps()) {
        throw std::invalid_argument("transformer: sequence shape mismatch");
      }
      offsets_.push_back(offset);
      for (std::size_t t = 0; t < seq.steps(); ++t) state_rows_.push_back(offset + kTokensPerStep * static_cast<Eigen::Index>(t) + 1);
      offset += kTokensPerStep * static_cast<Eigen::Index>(seq.steps());
    }
    offsets_.push_back(offset);
    total_tokens_ = offset;
  }

  Matrix<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, std::mt19937_64* rng) const {
    if (!rng || cfg_.dropout <= 0.0) return {};
    std::bernoulli_distribution keep(1.0 - cfg_.dropout);
    const Scalar scale = Scalar(1.0 / (1.0 - cfg_.dropout));
    Matrix<Scalar> mask(rows, cols);
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? scale : Scalar(0);
    return mask;
  }

  Matrix<Scalar> block_forward(const BlockParameters<Scalar>& bp, const Matrix<Scalar>& h, BlockCache& c,
                               std::mt19937_64* rng) {
    const int d = cfg_.dim;
    const int hd = cfg_.head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(hd));

    c.ln1_out = detail::layer_norm(h, bp.ln1_gain, bp.ln1_bias, &c.ln1);
    c.qkv.noalias() = c.ln1_out * bp.qkv_weight;
    c.qkv.rowwise() += bp.qkv_bias;
    c.attn_concat.setZero(h.rows(), d);
    c.probs.clear();
    for (std::size_t j = 0; j + 1 < offsets_.size(); ++j) {
      const Eigen::Index start = offsets_[j];
      const Eigen::Index len = offsets_[j + 1] - start;
      for (int head = 0; head < cfg_.heads; ++head) {
        const auto q = c.qkv.block(start, head * hd, len, hd);
        const auto k = c.qkv.block(start, d + head * hd, len, hd);
        const auto v = c.qkv.block(start, 2 * d + head * hd, len, hd);
        Matrix<Scalar> scores = (q * k.transpose()) * scale;
        for (Eigen::Index i = 0; i < len; ++i) {
          const Scalar mx = scores.row(i).head(i + 1).maxCoeff();
          Scalar sum = 0;
          for (Eigen::Index jj = 0; jj <= i; ++jj) {
            scores(i, jj) = std::exp(scores(i, jj) - mx);
            sum += scores(i, jj);
          }
          scores.row(i).head(i + 1) /= sum;
          scores.row(i).tail(len - i - 1).setZero();
        }
        c.attn_concat.block(start, head * hd, len, hd).noalias() = scores * v;
        c.probs.push_back(std::move(scores));
      }
    }
    Matrix<Scalar> attn = c.attn_concat * bp.proj_weight;
    attn.rowwise() += bp.proj_bias;
    c.drop1 = dropout_mask(attn.rows(), attn.cols(), rng);
    if (c.drop1.size()) attn.array() *= c.drop1.array();
    Matrix<Scalar> h1 = h + attn;

    c.ln2_out = detail::layer_norm(h1, bp.ln2_gain, bp.ln2_bias, &c.ln2);
    c.ff_pre.noalias() = c.ln2_out * bp.ff1_weight;
    c.ff_pre.rowwise() += bp.ff1_bias;
    c.ff_tanh = detail::gelu_tanh(c.ff_pre);
    c.ff_act = (Scalar(0.5) * c.ff_pre.array() * (Scalar(1) + c.ff_tanh.array())).matrix();
    Matrix<Scalar> ff = c.ff_act * bp.ff2_weight;
    ff.rowwise() += bp.ff2_bias;
    c.drop2 = dropout_mask(ff.rows(), ff.cols(), rng);
    if (c.drop2.size()) ff.array() *= c.drop2.array();
    return h1 + ff;
  }

  Matrix<Scalar> block_backward(const BlockParameters<Scalar>& bp, BlockParameters<Scalar>& g, const Matrix<Scalar>& dout,
                                const BlockCache& c) {
    const int d = cfg_.dim;
    const int hd = cfg_.head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(hd));

    // Feed-forward branch.
    Matrix<Scalar> dff = dout;
    if (c.drop2.size()) dff.array() *= c.drop2.array();
    g.ff2_weight.noalias() += c.ff_act.transpose() * dff;
    g.ff2_bias += dff.colwise().sum();
    Matrix<Scalar> dact = dff * bp.ff2_weight.transpose();
    {
      const Scalar k = Scalar(0.7978845608028654);
      const auto x = c.ff_pre.array();
      const auto t = c.ff_tanh.array();
      dact.array() *= Scalar(0.5) * (Scalar(1) + t) +
                      Scalar(0.5) * x * (Scalar(1) - t * t) * k * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
    }
    g.ff1_weight.noalias() += c.ln2_out.transpose() * dact;
    g.ff1_bias += dact.colwise().sum();
    Matrix<Scalar> dln2 = dact * bp.ff1_weight.transpose();
    Matrix<Scalar> dh1 = dout + detail::layer_norm_backward(dln2, c.ln2, bp.ln2_gain, g.ln2_gain, g.ln2_bias);

    // Attention branch.
    Matrix<Scalar> dattn = dh1;
    if (c.drop1.size()) dattn.array() *= c.drop1.array();
    g.proj_weight.noalias() += c.attn_concat.transpose() * dattn;
    g.proj_bias += dattn.colwise().sum();
    Matrix<Scalar> dconcat = dattn * bp.proj_weight.transpose();
    Matrix<Scalar> dqkv = Matrix<Scalar>::Zero(c.qkv.rows(), c.qkv.cols());
    std::size_t pi = 0;
    for (std::size_t j = 0; j + 1 < offsets_.size(); ++j) {
      const Eigen::Index start = offsets_[j];
      const Eigen::Index len = offsets_[j + 1] - start;
      for (int head = 0; head < cfg_.heads; ++head, ++pi) {
        const Matrix<Scalar>& probs = c.probs[pi];
        const auto q = c.qkv.block(start, head * hd, len, hd);
        const auto k = c.qkv.block(start, d + head * hd, len, hd);
        const auto v = c.qkv.block(start, 2 * d + head * hd, len, hd);
        const auto dout_h = dconcat.block(start, head * hd, len, hd);
        dqkv.block(start, 2 * d + head * hd, len, hd).noalias() = probs.transpose() * dout_h;
        Matrix<Scalar> dprobs = dout_h * v.transpose();
        const auto row_dot = (dprobs.array() * probs.array()).rowwise().sum();
        Matrix<Scalar> dscores = (probs.array() * (dprobs.array().colwise() - row_dot)).matrix() * scale;
        dqkv.block(start, head * hd, len, hd).noalias() = dscores * k;
        dqkv.block(start, d + head * hd, len, hd).noalias() = dscores.transpose() * q;
      }
    }
    g.qkv_weight.noalias() += c.ln1_out.transpose() * dqkv;
    g.qkv_bias += dqkv.colwise().sum();
    Matrix<Scalar> dln1 = dqkv * bp.qkv_weight.transpose();
    return dh1 + detail::layer_norm_backward(dln1, c.ln1, bp.ln1_gain, g.ln1_gain, g.ln1_bias);
  }

  ModelConfig cfg_;
  std::vector<Eigen::Index> offsets_;
  std::vector<Eigen::Index> state_rows_;
  Eigen::Index total_tokens_ = 0;
  detail::LayerNormCache<Scalar> embed_ln_, final_ln_;
  std::vector<BlockCache> caches_;
  Matrix<Scalar> final_in_;
  std::vector<Scalar> predictions_;
};

/// Incremental single-sequence decoder with per-block key/value caches.
/// Appending the tokens of a sequence one by one yields the same outputs as
/// Transformer::forward on the whole sequence (up to rounding).
template <typename Scalar>
class Decoder {
 public:
  Decoder(const Parameters<Scalar>& params, ModelConfig cfg) : p_(params), cfg_(cfg) {
    cfg_.validate();
    keys_.assign(p_.blocks.size(), Matrix<Scalar>(0, cfg_.dim));
    values_.assign(p_.blocks.size(), Matrix<Scalar>(0, cfg_.dim));
  }

  std::size_t steps() const { return step_; }

  /// Feeds r_t and s_t and returns the predicted action in [-1, 1].
  Scalar predict(Scalar reward, const Eigen::Ref<const RowVector<Scalar>>& state) {
    if (step_ >= static_cast<std::size_t>(cfg_.max_timesteps)) {
      throw std::invalid_argument("decoder: exceeded max_timesteps " + std::to_string(cfg_.max_timesteps));
    }
    if (state.size() != kStateDim) throw std::invalid_argument("decoder: state must have 8 features");
    const auto time = p_.timestep_embedding.row(static_cast<Eigen::Index>(step_));
    push(reward * p_.reward_weight.row(0) + p_.reward_bias + time);
    const RowVector<Scalar> out = push(state * p_.state_weight + p_.state_bias + time);
    return std::tanh(out.dot(p_.head_weight.col(0)) + p_.head_bias(0));
  }

  /// Feeds the (encoded) action actually taken at the current step.
  void commit(Scalar action) {
    const auto time = p_.timestep_embedding.row(static_cast<Eigen::Index>(step_));
    push(action * p_.action_weight.row(0) + p_.action_bias + time);
    ++step_;
  }

 private:
  RowVector<Scalar> push(const RowVector<Scalar>& embedded) {
    const int d = cfg_.dim;
    const int hd = cfg_.head_dim();
    const Scalar scale = Scalar(1) / std::sqrt(Scalar(hd));
    Matrix<Scalar> h = detail::layer_norm<Scalar>(embedded, p_.embed_ln_gain, p_.embed_ln_bias, nullptr);
    for (std::size_t b = 0; b < p_.blocks.size(); ++b) {
      const auto& bp = p_.blocks[b];
      Matrix<Scalar> u = detail::layer_norm<Scalar>(h, bp.ln1_gain, bp.ln1_bias, nullptr);
      RowVector<Scalar> qkv = u.row(0) * bp.qkv_weight + bp.qkv_bias;
      auto& keys = keys_[b];
      auto& values = values_[b];
      keys.conservativeResize(keys.rows() + 1, Eigen::NoChange);
      values.conservativeResize(values.rows() + 1, Eigen::NoChange);
      keys.row(keys.rows() - 1) = qkv.segment(d, d);
      values.row(values.rows() - 1) = qkv.segment(2 * d, d);
      RowVector<Scalar> concat(d);
      for (int head = 0; head < cfg_.heads; ++head) {
        const auto q = qkv.segment(head * hd, hd);
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> scores = keys.middleCols(head * hd, hd) * q.transpose() * scale;
        scores = (scores.array() - scores.maxCoeff()).exp();
        scores /= scores.sum();
        concat.segment(head * hd, hd) = scores.transpose() * values.middleCols(head * hd, hd);
      }
      h.row(0) += concat * bp.proj_weight + bp.proj_bias;
      Matrix<Scalar> u2 = detail::layer_norm<Scalar>(h, bp.ln2_gain, bp.ln2_bias, nullptr);
      RowVector<Scalar> pre = u2.row(0) * bp.ff1_weight + bp.ff1_bias;
      RowVector<Scalar> act = pre.unaryExpr([](Scalar x) { return detail::gelu(x); });
      h.row(0) += act * bp.ff2_weight + bp.ff2_bias;
    }
    return detail::layer_norm<Scalar>(h, p_.final_ln_gain, p_.final_ln_bias, nullptr).row(0);
  }

  const Parameters<Scalar>& p_;
  ModelConfig cfg_;
  std::vector<Matrix<Scalar>> keys_, values_;
  std::size_t step_ = 0;
};

/// Adam with global-norm gradient clipping (clip <= 0 disables it).
template <typename Scalar>
class Adam {
 public:
  Adam(const ModelConfig& cfg, double lr, double clip = 1.0, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : m_(Parameters<Scalar>::zeros(cfg)),
        v_(Parameters<Scalar>::zeros(cfg)),
        lr_(lr),
        clip_(clip),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {}

  void step(Parameters<Scalar>& params, Parameters<Scalar>& grads) {
    ++t_;
    auto pv = params.views();
    auto gv = grads.views();
    auto mv = m_.views();
    auto vv = v_.views();
    double norm2 = 0;
    for (const auto& g : gv) {
      for (Scalar x : g.data) norm2 += static_cast<double>(x) * static_cast<double>(x);
    }
    last_grad_norm_ = std::sqrt(norm2);
    const double factor = (clip_ > 0 && last_grad_norm_ > clip_) ? clip_ / last_grad_norm_ : 1.0;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < pv.size(); ++i) {
      for (std::size_t j = 0; j < pv[i].data.size(); ++j) {
        const double g = static_cast<double>(gv[i].data[j]) * factor;
        double m = beta1_ * static_cast<double>(mv[i].data[j]) + (1.0 - beta1_) * g;
        double v = beta2_ * static_cast<double>(vv[i].data[j]) + (1.0 - beta2_) * g * g;
        mv[i].data[j] = Scalar(m);
        vv[i].data[j] = Scalar(v);
        pv[i].data[j] -= Scalar(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
      }
    }
  }

  double last_grad_norm() const { return last_grad_norm_; }

 private:
  Parameters<Scalar> m_, v_;
  double lr_, clip_, beta1_, beta2_, eps_;
  long t_ = 0;
  double last_grad_norm_ = 0;
};

}  // namespace fusemap::seq
