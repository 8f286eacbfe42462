#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fusemap/workload.hpp"

namespace fusemap {

/// One entry of a fusion strategy: either a sync marker (stream the layer's
/// output off-chip and end the fused group) or an on-chip micro-batch size.
class Action {
 public:
  static constexpr Count kSyncCode = -1;

  static constexpr Action sync() { return Action(kSyncCode); }
  static constexpr Action micro_batch(Count mb) { return Action(mb); }
  /// -1 encodes Sync, anything else a micro-batch (not checked here).
  static constexpr Action from_code(Count code) { return Action(code); }

  constexpr bool is_sync() const { return value_ == kSyncCode; }
  constexpr Count micro_batch() const { return value_; }
  /// Integer code: -1 for Sync, otherwise the micro-batch.
  constexpr Count code() const { return value_; }
  /// Micro-batch used for on-chip staging: one sample for a sync stream buffer.
  constexpr Count staging() const { return is_sync() ? 1 : value_; }

  constexpr bool operator==(const Action&) const = default;
  constexpr auto operator<=>(const Action&) const = default;

 private:
  constexpr explicit Action(Count v) : value_(v) {}
  Count value_;
};

/// actions[0] is the input micro-batch; actions[i] (i >= 1) the output
/// decision of layer i (one-based).
struct Strategy {
  Count batch = 1;
  std::vector<Action> actions;

  std::size_t layers() const { return actions.empty() ? 0 : actions.size() - 1; }
  bool operator==(const Strategy&) const = default;
};

/// Inclusive, one-based layer range executed as one pipelined unit.
struct FusedGroup {
  std::size_t first_layer = 1;
  std::size_t last_layer = 1;
  std::vector<Count> staging;  // per-layer staging micro-batch, first..last

  std::size_t size() const { return last_layer - first_layer + 1; }
  bool operator==(const FusedGroup&) const = default;
};

class StrategyError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::vector<Count> divisors(Count n);

/// Sync followed by at most 63 of the largest divisors of batch, ascending.
std::vector<Action> action_space(Count batch);

/// Structural checks only: length, no Sync at index 0, divisor micro-batches.
void check_legal(const Strategy& strategy, std::size_t n_layers);

std::vector<FusedGroup> groups(const Strategy& strategy, std::size_t n_layers);

Strategy no_fusion(const Workload& workload, Count batch);

/// Real-valued action encoding used by the sequence model.
double encode_action(Action a, Count batch);
Action decode_action(double value, Count batch, bool allow_sync);
Strategy legalize(std::span<const double> raw, Count batch);
std::vector<double> encode(const Strategy& strategy);

std::string strategy_to_json(const Strategy& strategy, std::string_view workload_name);
/// Returns the strategy and the workload name recorded in the file.
std::pair<Strategy, std::string> parse_strategy(std::string_view json_text);
std::pair<Strategy, std::string> load_strategy(const std::filesystem::path& path);

std::string to_string(const Strategy& strategy);

}  // namespace fusemap
