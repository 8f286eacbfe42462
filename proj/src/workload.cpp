#include "fusemap/workload.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fusemap {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ParseError(where + ": unknown field '" + key + "'");
    }
  }
}

const json& require(const json& obj, const std::string& key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
  return *it;
}

Count require_count(const json& obj, const std::string& key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer()) throw ParseError(where + ": field '" + key + "' must be an integer");
  return v.get<Count>();
}

std::string require_string(const json& obj, const std::string& key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw ParseError(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

Count macs(const LayerShape& l, Count batch) {
  if (batch < 1) throw std::invalid_argument("macs: batch must be >= 1");
  return batch * l.k * l.c * l.y * l.x * l.r * l.s;
}

Bytes out_activation_bytes(const LayerShape& l, Count micro_batch, Bytes bytes_per_element) {
  if (micro_batch < 1) throw std::invalid_argument("out_activation_bytes: micro_batch must be >= 1");
  return micro_batch * l.k * l.y * l.x * bytes_per_element;
}

Bytes input_activation_bytes(const Workload& w, std::size_t index, Count micro_batch) {
  if (index == 0) return micro_batch * w.input_channels * w.input_y * w.input_x * w.bytes_per_element;
  return out_activation_bytes(w.layers[index - 1], micro_batch, w.bytes_per_element);
}

void validate(const Workload& w) {
  if (w.layers.empty()) throw ValidationError("workload '" + w.name + "': layers must be non-empty");
  if (w.input_channels < 1 || w.input_y < 1 || w.input_x < 1) {
    throw ValidationError("workload '" + w.name + "': input dims must be >= 1");
  }
  if (w.bytes_per_element < 1) throw ValidationError("workload '" + w.name + "': bytes_per_element must be >= 1");

  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const LayerShape& l = w.layers[i];
    auto fail = [&](const std::string& what) {
      std::ostringstream os;
      os << "layer " << i << " ('" << l.name << "'): " << what;
      throw ValidationError(os.str());
    };
    if (l.k < 1 || l.c < 1 || l.y < 1 || l.x < 1 || l.r < 1 || l.s < 1) fail("k, c, y, x, r, s must all be >= 1");
    if (i == 0 && l.c != w.input_channels) fail("c must equal input channels (" + std::to_string(w.input_channels) + ")");
    if (i > 0 && l.c != w.layers[i - 1].k) {
      fail("channel chaining violated: c=" + std::to_string(l.c) + " but previous layer k=" +
           std::to_string(w.layers[i - 1].k));
    }
    if (l.skip_from) {
      if (*l.skip_from >= i) fail("skip_from must point to an earlier layer");
      const LayerShape& p = w.layers[*l.skip_from];
      if (p.k != l.k || p.y != l.y || p.x != l.x) {
        fail("skip producer '" + p.name + "' output shape does not match this layer's output shape");
      }
    }
  }
}

Workload parse_workload(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("workload: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("workload: top level must be an object");
  reject_unknown(doc, {"name", "input", "bytes_per_element", "layers"}, "workload");

  Workload w;
  w.name = require_string(doc, "name", "workload");
  const json& input = require(doc, "input", "workload");
  if (!input.is_object()) throw ParseError("workload.input must be an object");
  reject_unknown(input, {"c", "y", "x"}, "workload.input");
  w.input_channels = require_count(input, "c", "workload.input");
  w.input_y = require_count(input, "y", "workload.input");
  w.input_x = require_count(input, "x", "workload.input");
  if (doc.contains("bytes_per_element")) w.bytes_per_element = require_count(doc, "bytes_per_element", "workload");

  const json& layers = require(doc, "layers", "workload");
  if (!layers.is_array()) throw ParseError("workload.layers must be an array");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const json& jl = layers[i];
    const std::string where = "workload.layers[" + std::to_string(i) + "]";
    if (!jl.is_object()) throw ParseError(where + " must be an object");
    reject_unknown(jl, {"name", "k", "c", "y", "x", "r", "s", "skip_from"}, where);
    LayerShape l;
    l.name = require_string(jl, "name", where);
    l.k = require_count(jl, "k", where);
    l.c = require_count(jl, "c", where);
    l.y = require_count(jl, "y", where);
    l.x = require_count(jl, "x", where);
    l.r = require_count(jl, "r", where);
    l.s = require_count(jl, "s", where);
    if (jl.contains("skip_from") && !jl["skip_from"].is_null()) {
      Count skip = require_count(jl, "skip_from", where);
      if (skip < 0) throw ParseError(where + ": skip_from must be non-negative");
      l.skip_from = static_cast<std::size_t>(skip);
    }
    w.layers.push_back(std::move(l));
  }
  validate(w);
  return w;
}

Workload load_workload(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open workload file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_workload(buf.str());
}

std::string workload_to_json(const Workload& w) {
  json layers = json::array();
  for (const auto& l : w.layers) {
    json jl = {{"name", l.name}, {"k", l.k}, {"c", l.c}, {"y", l.y}, {"x", l.x}, {"r", l.r}, {"s", l.s}};
    if (l.skip_from) jl["skip_from"] = *l.skip_from;
    layers.push_back(std::move(jl));
  }
  json doc = {{"name", w.name},
              {"input", {{"c", w.input_channels}, {"y", w.input_y}, {"x", w.input_x}}},
              {"bytes_per_element", w.bytes_per_element},
              {"layers", std::move(layers)}};
  return doc.dump(2) + "\n";
}

Workload resolve_workload(std::string_view spec) {
  constexpr std::string_view prefix = "builtin:";
  if (spec.substr(0, prefix.size()) == prefix) return builtin(spec.substr(prefix.size()));
  for (const auto& name : builtin_names()) {
    if (spec == name) return builtin(spec);
  }
  return load_workload(std::filesystem::path(spec));
}

}  // namespace fusemap
