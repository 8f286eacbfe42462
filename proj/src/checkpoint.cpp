#include "fusemap/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fusemap::seq {

namespace {

constexpr char kMagic[4] = {'D', 'N', 'F', 'Z'};

template <typename T>
void put(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint: truncated at byte " + std::to_string(pos_));
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json config_json(const ModelConfig& c) {
  return {{"blocks", c.blocks}, {"heads", c.heads}, {"dim", c.dim}, {"max_timesteps", c.max_timesteps},
          {"dropout", c.dropout}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  j.at("blocks").get_to(c.blocks);
  j.at("heads").get_to(c.heads);
  j.at("dim").get_to(c.dim);
  j.at("max_timesteps").get_to(c.max_timesteps);
  j.at("dropout").get_to(c.dropout);
  c.validate();
  return c;
}

nlohmann::json metadata_json(const TrainingMetadata& m) {
  nlohmann::json j = {{"epochs", m.epochs},       {"lr", m.lr},
                      {"minibatch", m.minibatch}, {"seed", m.seed},
                      {"final_loss", m.final_loss}, {"loss_tail", m.loss_tail},
                      {"workloads", m.workloads}, {"batch", m.batch},
                      {"min_budget", m.min_budget}, {"max_budget", m.max_budget}};
  if (m.lineage) {
    j["lineage"] = {{"parent_sha256", m.lineage->parent_sha256},
                    {"parent_epochs", m.lineage->parent_epochs},
                    {"epoch_fraction", m.lineage->epoch_fraction}};
  }
  return j;
}

TrainingMetadata metadata_from(const nlohmann::json& j) {
  TrainingMetadata m;
  j.at("epochs").get_to(m.epochs);
  j.at("lr").get_to(m.lr);
  j.at("minibatch").get_to(m.minibatch);
  j.at("seed").get_to(m.seed);
  j.at("final_loss").get_to(m.final_loss);
  j.at("loss_tail").get_to(m.loss_tail);
  j.at("workloads").get_to(m.workloads);
  j.at("batch").get_to(m.batch);
  j.at("min_budget").get_to(m.min_budget);
  j.at("max_budget").get_to(m.max_budget);
  if (j.contains("lineage")) {
    const auto& l = j.at("lineage");
    m.lineage = Lineage{l.at("parent_sha256").get<std::string>(), l.at("parent_epochs").get<int>(),
                        l.at("epoch_fraction").get<double>()};
  }
  return m;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  Checkpoint copy = checkpoint;  // views() needs mutable access
  const auto views = copy.params.views();
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(v.name.size()));
    out += v.name;
    put<std::uint8_t>(out, static_cast<std::uint8_t>(v.dims.size()));
    for (auto d : v.dims) put<std::uint32_t>(out, d);
    for (double x : v.data) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  nlohmann::json trailer = {{"config", config_json(checkpoint.config)},
                            {"normalization", checkpoint.encoding},
                            {"metadata", metadata_json(checkpoint.metadata)}};
  const std::string text = trailer.dump();
  out += text;
  put<std::uint64_t>(out, text.size());
  return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 20 || bytes.substr(0, 4) != std::string_view(kMagic, 4)) {
    throw CheckpointError("checkpoint: bad magic (not a DNFZ file)");
  }
  Reader tail(bytes.substr(bytes.size() - 8));
  const auto trailer_len = tail.get<std::uint64_t>();
  if (trailer_len > bytes.size() - 20) throw CheckpointError("checkpoint: corrupt trailer length");
  const std::size_t trailer_start = bytes.size() - 8 - trailer_len;

  Checkpoint ck;
  try {
    const auto trailer = nlohmann::json::parse(bytes.substr(trailer_start, trailer_len));
    ck.config = config_from(trailer.at("config"));
    ck.encoding = trailer.at("normalization").get<StateEncoding>();
    ck.metadata = metadata_from(trailer.at("metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: bad trailer: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }

  ck.params = Parameters<double>::zeros(ck.config);
  auto views = ck.params.views();
  Reader r(bytes.substr(0, trailer_start));
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  if (count != views.size()) {
    throw CheckpointError("checkpoint: " + std::to_string(count) + " tensors, config implies " +
                          std::to_string(views.size()));
  }
  for (auto& v : views) {
    const auto name_len = r.get<std::uint16_t>();
    const std::string name(r.take(name_len));
    if (name != v.name) throw CheckpointError("checkpoint: expected tensor " + v.name + ", found " + name);
    const auto rank = r.get<std::uint8_t>();
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.get<std::uint32_t>();
    if (dims != v.dims) throw CheckpointError("checkpoint: tensor " + name + " has a shape that does not match the config");
    for (double& x : v.data) x = std::bit_cast<double>(r.get<std::uint64_t>());
  }
  if (r.position() != trailer_start) throw CheckpointError("checkpoint: trailing bytes after tensors");
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace fusemap::seq
