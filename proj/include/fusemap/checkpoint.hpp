#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fusemap/trajectory.hpp"
#include "fusemap/transformer.hpp"

namespace fusemap::seq {

struct Lineage {
  std::string parent_sha256;
  int parent_epochs = 0;
  double epoch_fraction = 0;
};

struct TrainingMetadata {
  int epochs = 0;
  double lr = 0;
  int minibatch = 0;
  std::uint64_t seed = 0;
  double final_loss = 0;
  std::vector<double> loss_tail;  // last entries of the loss curve
  std::vector<std::string> workloads;
  Count batch = 0;
  Bytes min_budget = 0;  // conditioning range seen in training
  Bytes max_budget = 0;
  std::optional<Lineage> lineage;
};

struct Checkpoint {
  ModelConfig config;
  StateEncoding encoding;
  Parameters<double> params;
  TrainingMetadata metadata;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container: "DNFZ", u32 version, u32 tensor count, tensors
/// (u16 name length, name, u8 rank, u32 dims, little-endian f64 data),
/// then a JSON trailer and its u64 length.
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fusemap::seq
