#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fusemap {

using Bytes = std::int64_t;
using Count = std::int64_t;

/// Malformed input file (JSON syntax, missing or unknown field, wrong type).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Well-formed input that violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One layer in 6-loop CONV notation. FC layers use y = x = r = s = 1.
struct LayerShape {
  std::string name;
  Count k = 1;  // output channels
  Count c = 1;  // input channels
  Count y = 1;  // output activation height
  Count x = 1;  // output activation width
  Count r = 1;  // kernel height
  Count s = 1;  // kernel width
  // Residual add: the output of layers[*skip_from] is summed into this
  // layer's output, so both tensors must have the same (k, y, x).
  std::optional<std::size_t> skip_from;

  bool operator==(const LayerShape&) const = default;
};

struct Workload {
  std::string name;
  std::vector<LayerShape> layers;
  Count input_channels = 1;
  Count input_y = 1;
  Count input_x = 1;
  Bytes bytes_per_element = 2;

  std::size_t size() const { return layers.size(); }
  bool operator==(const Workload&) const = default;
};

/// Throws ValidationError naming the layer index and the violated invariant.
void validate(const Workload& workload);

Workload load_workload(const std::filesystem::path& path);
Workload parse_workload(std::string_view json_text);
std::string workload_to_json(const Workload& workload);

/// Canonical zoo: vgg16, resnet18, resnet50, mobilenet_v2, mnasnet.
Workload builtin(std::string_view name);
const std::vector<std::string>& builtin_names();

/// Resolves "builtin:<name>" or a bare zoo name, otherwise loads a file.
Workload resolve_workload(std::string_view spec);

Count macs(const LayerShape& l, Count batch);

/// Throws std::invalid_argument for micro_batch < 1.
Bytes out_activation_bytes(const LayerShape& l, Count micro_batch, Bytes bytes_per_element);

inline Bytes weight_bytes(const LayerShape& l, Bytes bytes_per_element) {
  return l.k * l.c * l.r * l.s * bytes_per_element;
}

/// Bytes of the tensor layer `index` (zero-based) reads as its main input,
/// i.e. what its predecessor wrote, or the network input for layer 0.
Bytes input_activation_bytes(const Workload& w, std::size_t index, Count micro_batch);

}  // namespace fusemap
