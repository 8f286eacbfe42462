// Canonical layer lists for the built-in workloads (224x224x3 input).
//
// Transcription rules:
//  - Pooling is folded into the (y, x) of the next layer.
//  - FC layers are 1x1 CONVs on a 1x1 activation, except VGG16's fc6 which
//    is a 7x7 CONV over the 512-channel pooled map (same MACs and weights
//    as the flattened 25088-input FC).
//  - Depthwise convs are transcribed densely (k = c = channels) since grouped
//    semantics are not modeled.
//  - skip_from marks identity shortcuts only, placed on the layer whose output
//    the shortcut is added to. Projection shortcuts (1x1 downsample) and the
//    first ResNet block (whose input is the max-pooled stem output) have no
//    edge because their shortcut tensor has no producer in the chain.

#include <algorithm>
#include <optional>

#include "fusemap/workload.hpp"

namespace fusemap {

namespace {

class ChainBuilder {
 public:
  ChainBuilder(std::string name, Count in_c) {
    w_.name = std::move(name);
    w_.input_channels = in_c;
    w_.input_y = 224;
    w_.input_x = 224;
  }

  std::size_t add(std::string name, Count k, Count y, Count r, std::optional<std::size_t> skip = std::nullopt) {
    LayerShape l;
    l.name = std::move(name);
    l.k = k;
    l.c = w_.layers.empty() ? w_.input_channels : w_.layers.back().k;
    l.y = y;
    l.x = y;
    l.r = r;
    l.s = r;
    l.skip_from = skip;
    w_.layers.push_back(std::move(l));
    return w_.layers.size() - 1;
  }

  std::size_t last() const { return w_.layers.size() - 1; }

  Workload finish() {
    validate(w_);
    return std::move(w_);
  }

 private:
  Workload w_;
};

Workload make_vgg16() {
  ChainBuilder b("vgg16", 3);
  b.add("conv1_1", 64, 224, 3);
  b.add("conv1_2", 64, 224, 3);
  b.add("conv2_1", 128, 112, 3);
  b.add("conv2_2", 128, 112, 3);
  b.add("conv3_1", 256, 56, 3);
  b.add("conv3_2", 256, 56, 3);
  b.add("conv3_3", 256, 56, 3);
  b.add("conv4_1", 512, 28, 3);
  b.add("conv4_2", 512, 28, 3);
  b.add("conv4_3", 512, 28, 3);
  b.add("conv5_1", 512, 14, 3);
  b.add("conv5_2", 512, 14, 3);
  b.add("conv5_3", 512, 14, 3);
  b.add("fc6", 4096, 1, 7);
  b.add("fc7", 4096, 1, 1);
  b.add("fc8", 1000, 1, 1);
  return b.finish();
}

Workload make_resnet18() {
  ChainBuilder b("resnet18", 3);
  b.add("conv1", 64, 112, 7);
  const Count widths[] = {64, 128, 256, 512};
  const Count sizes[] = {56, 28, 14, 7};
  for (int stage = 0; stage < 4; ++stage) {
    std::optional<std::size_t> block_out;
    for (int block = 0; block < 2; ++block) {
      const std::string p = "layer" + std::to_string(stage + 1) + "." + std::to_string(block) + ".";
      b.add(p + "conv1", widths[stage], sizes[stage], 3);
      // Only the second block of each stage has an identity shortcut.
      block_out = b.add(p + "conv2", widths[stage], sizes[stage], 3, block == 0 ? std::nullopt : block_out);
    }
  }
  b.add("fc", 1000, 1, 1);
  return b.finish();
}

Workload make_resnet50() {
  ChainBuilder b("resnet50", 3);
  b.add("conv1", 64, 112, 7);
  const Count widths[] = {64, 128, 256, 512};
  const Count sizes[] = {56, 28, 14, 7};
  const int blocks[] = {3, 4, 6, 3};
  Count in_size = 56;
  for (int stage = 0; stage < 4; ++stage) {
    std::optional<std::size_t> block_out;
    for (int block = 0; block < blocks[stage]; ++block) {
      const std::string p = "layer" + std::to_string(stage + 1) + "." + std::to_string(block) + ".";
      // Stride sits on the 3x3 conv, so conv1 of a downsampling block runs at
      // the previous stage's resolution.
      b.add(p + "conv1", widths[stage], block == 0 ? in_size : sizes[stage], 1);
      b.add(p + "conv2", widths[stage], sizes[stage], 3);
      block_out = b.add(p + "conv3", widths[stage] * 4, sizes[stage], 1, block == 0 ? std::nullopt : block_out);
    }
    in_size = sizes[stage];
  }
  b.add("fc", 1000, 1, 1);
  return b.finish();
}

struct InvertedResidualStage {
  Count expansion;
  Count out_channels;
  int repeats;
  int stride;
  Count kernel;
};

// Appends inverted-residual stages (expand 1x1, depthwise kxk, project 1x1).
void add_inverted_residuals(ChainBuilder& b, const std::vector<InvertedResidualStage>& stages, Count in_channels,
                            Count size, const std::string& prefix) {
  int index = 0;
  for (const auto& st : stages) {
    std::optional<std::size_t> block_out;
    for (int rep = 0; rep < st.repeats; ++rep, ++index) {
      const std::string p = prefix + std::to_string(index) + ".";
      const Count out_size = rep == 0 ? size / st.stride : size;
      const Count hidden = in_channels * st.expansion;
      if (st.expansion != 1) b.add(p + "expand", hidden, size, 1);
      b.add(p + "dw", hidden, out_size, st.kernel);
      const bool residual = rep > 0;
      block_out = b.add(p + "project", st.out_channels, out_size, 1, residual ? block_out : std::nullopt);
      in_channels = st.out_channels;
      size = out_size;
    }
  }
}

Workload make_mobilenet_v2() {
  ChainBuilder b("mobilenet_v2", 3);
  b.add("stem", 32, 112, 3);
  add_inverted_residuals(b,
                         {{1, 16, 1, 1, 3},
                          {6, 24, 2, 2, 3},
                          {6, 32, 3, 2, 3},
                          {6, 64, 4, 2, 3},
                          {6, 96, 3, 1, 3},
                          {6, 160, 3, 2, 3},
                          {6, 320, 1, 1, 3}},
                         32, 112, "features.");
  b.add("conv_last", 1280, 7, 1);
  b.add("fc", 1000, 1, 1);
  return b.finish();
}

Workload make_mnasnet() {
  ChainBuilder b("mnasnet", 3);
  b.add("stem", 32, 112, 3);
  b.add("stem_dw", 32, 112, 3);
  b.add("stem_project", 16, 112, 1);
  add_inverted_residuals(b,
                         {{3, 24, 3, 2, 3},
                          {3, 40, 3, 2, 5},
                          {6, 80, 3, 2, 5},
                          {6, 96, 2, 1, 3},
                          {6, 192, 4, 2, 5},
                          {6, 320, 1, 1, 3}},
                         16, 112, "layers.");
  b.add("conv_last", 1280, 7, 1);
  b.add("fc", 1000, 1, 1);
  return b.finish();
}

}  // namespace

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names = {"vgg16", "resnet18", "resnet50", "mobilenet_v2", "mnasnet"};
  return names;
}

Workload builtin(std::string_view name) {
  if (name == "vgg16") return make_vgg16();
  if (name == "resnet18") return make_resnet18();
  if (name == "resnet50") return make_resnet50();
  if (name == "mobilenet_v2") return make_mobilenet_v2();
  if (name == "mnasnet") return make_mnasnet();
  std::string valid;
  for (const auto& n : builtin_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown workload '" + std::string(name) + "' (valid: " + valid + ")");
}

}  // namespace fusemap
