#include "fusemap/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fusemap {

using nlohmann::json;

std::vector<Count> divisors(Count n) {
  std::vector<Count> small, large;
  for (Count d = 1; d * d <= n; ++d) {
    if (n % d != 0) continue;
    small.push_back(d);
    if (d != n / d) large.push_back(n / d);
  }
  small.insert(small.end(), large.rbegin(), large.rend());
  return small;
}

std::vector<Action> action_space(Count batch) {
  if (batch < 1) throw std::invalid_argument("action_space: batch must be >= 1");
  constexpr std::size_t kMaxMicroBatches = 63;
  std::vector<Count> divs = divisors(batch);
  if (divs.size() > kMaxMicroBatches) divs.erase(divs.begin(), divs.end() - kMaxMicroBatches);
  std::vector<Action> out{Action::sync()};
  for (Count d : divs) out.push_back(Action::micro_batch(d));
  return out;
}

void check_legal(const Strategy& s, std::size_t n_layers) {
  if (s.batch < 1) throw StrategyError("strategy batch must be >= 1");
  if (s.actions.size() != n_layers + 1) {
    throw StrategyError("strategy has " + std::to_string(s.actions.size()) + " actions, expected " +
                        std::to_string(n_layers + 1));
  }
  if (s.actions[0].is_sync()) throw StrategyError("strategy action 0 (input micro-batch) cannot be Sync");
  for (std::size_t i = 0; i < s.actions.size(); ++i) {
    const Action a = s.actions[i];
    if (a.is_sync()) continue;
    if (a.micro_batch() < 1 || a.micro_batch() > s.batch || s.batch % a.micro_batch() != 0) {
      throw StrategyError("strategy action " + std::to_string(i) + " = " + std::to_string(a.code()) +
                          " is not a divisor of batch " + std::to_string(s.batch));
    }
  }
}

std::vector<FusedGroup> groups(const Strategy& s, std::size_t n_layers) {
  check_legal(s, n_layers);
  std::vector<FusedGroup> out;
  FusedGroup current;
  current.first_layer = 1;
  for (std::size_t i = 1; i <= n_layers; ++i) {
    current.staging.push_back(s.actions[i].staging());
    if (s.actions[i].is_sync() || i == n_layers) {
      current.last_layer = i;
      out.push_back(std::move(current));
      current = FusedGroup{};
      current.first_layer = i + 1;
    }
  }
  return out;
}

Strategy no_fusion(const Workload& workload, Count batch) {
  if (batch < 1) throw std::invalid_argument("no_fusion: batch must be >= 1");
  Strategy s;
  s.batch = batch;
  s.actions.assign(workload.size() + 1, Action::sync());
  s.actions[0] = Action::micro_batch(batch);
  return s;
}

double encode_action(Action a, Count batch) {
  return a.is_sync() ? -1.0 : static_cast<double>(a.micro_batch()) / static_cast<double>(batch);
}

Action decode_action(double value, Count batch, bool allow_sync) {
  if (allow_sync && value <= -0.5) return Action::sync();
  const double target = std::clamp(value * static_cast<double>(batch), 1.0, static_cast<double>(batch));
  Count best = 1;
  double best_dist = std::abs(target - 1.0);
  // Ascending scan with strict '<' keeps the smaller divisor on ties.
  for (Count d : divisors(batch)) {
    const double dist = std::abs(target - static_cast<double>(d));
    if (dist < best_dist) {
      best = d;
      best_dist = dist;
    }
  }
  return Action::micro_batch(best);
}

Strategy legalize(std::span<const double> raw, Count batch) {
  Strategy s;
  s.batch = batch;
  s.actions.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) s.actions.push_back(decode_action(raw[i], batch, i != 0));
  return s;
}

std::vector<double> encode(const Strategy& s) {
  std::vector<double> out;
  out.reserve(s.actions.size());
  for (Action a : s.actions) out.push_back(encode_action(a, s.batch));
  return out;
}

std::string strategy_to_json(const Strategy& s, std::string_view workload_name) {
  json actions = json::array();
  for (Action a : s.actions) actions.push_back(a.code());
  json doc = {{"workload", std::string(workload_name)}, {"batch", s.batch}, {"actions", std::move(actions)}};
  return doc.dump() + "\n";
}

std::pair<Strategy, std::string> parse_strategy(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("strategy: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("strategy: top level must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "workload" && key != "batch" && key != "actions") {
      throw ParseError("strategy: unknown field '" + key + "'");
    }
  }
  if (!doc.contains("workload") || !doc["workload"].is_string()) {
    throw ParseError("strategy: field 'workload' must be a string");
  }
  if (!doc.contains("batch") || !doc["batch"].is_number_integer()) {
    throw ParseError("strategy: field 'batch' must be an integer");
  }
  if (!doc.contains("actions") || !doc["actions"].is_array()) {
    throw ParseError("strategy: field 'actions' must be an array");
  }
  Strategy s;
  s.batch = doc["batch"].get<Count>();
  for (const auto& a : doc["actions"]) {
    if (!a.is_number_integer()) throw ParseError("strategy: field 'actions' must contain integers");
    const Count code = a.get<Count>();
    if (code < 1 && code != Action::kSyncCode) {
      throw ParseError("strategy: action " + std::to_string(code) + " must be -1 or a positive micro-batch");
    }
    s.actions.push_back(Action::from_code(code));
  }
  return {std::move(s), doc["workload"].get<std::string>()};
}

std::pair<Strategy, std::string> load_strategy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open strategy file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_strategy(buf.str());
}

std::string to_string(const Strategy& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.actions.size(); ++i) {
    if (i) out += ", ";
    out += s.actions[i].is_sync() ? "S" : std::to_string(s.actions[i].micro_batch());
  }
  return out + "]";
}

}  // namespace fusemap
