#include "dahf/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "dahf/image_io.hpp"
#include "json.hpp"

namespace dahf {

namespace {

constexpr char kMagic[8] = {'D', 'A', 'H', 'F', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T take(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

Checkpoint snapshot(const Model& model, int epoch, const std::string& metrics_json) {
  Checkpoint ck;
  ck.config = model.config();
  ck.epoch = epoch;
  ck.metrics_json = metrics_json;
  ck.hierarchy_sizes = model.hierarchy().sizes();
  for (const auto& p : model.params().params()) ck.params.push_back({p.name, p.trainable, p.var.value()});
  return ck;
}

std::vector<std::uint8_t> serialize(const Checkpoint& ck) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = nlohmann::json::parse(to_json(ck.config, -1));
  header["epoch"] = ck.epoch;
  header["metrics"] = nlohmann::json::parse(ck.metrics_json);
  header["hierarchy_sizes"] = ck.hierarchy_sizes;
  nlohmann::json table = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : ck.params) {
    table.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"trainable", p.trainable}, {"offset", offset}});
    offset += p.value.size();
  }
  header["params"] = table;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.reserve(out.size() + offset * sizeof(double));
  for (const auto& p : ck.params)
    for (double v : p.value.values()) put<double>(out, v);
  return out;
}

Checkpoint deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 8) != 0) throw IoError("not a checkpoint file");
  std::size_t pos = 8;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const auto len = take<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size()) throw IoError("checkpoint header truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("checkpoint header: ") + e.what());
  }
  pos += len;
  Checkpoint ck;
  ck.config = config_from_json(header.at("config").dump());
  ck.epoch = header.at("epoch").get<int>();
  ck.metrics_json = header.at("metrics").dump();
  ck.hierarchy_sizes = header.at("hierarchy_sizes").get<std::array<int, kStageCount>>();
  for (const auto& entry : header.at("params")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    t.trainable = entry.at("trainable").get<bool>();
    t.value = Tensor(entry.at("shape").get<std::vector<int>>());
    for (double& v : t.value.values()) v = take<double>(bytes, pos);
    ck.params.push_back(std::move(t));
  }
  if (pos != bytes.size()) throw IoError("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) { atomic_write(path, serialize(ck)); }

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize(read_file(path)); }

void restore(Model& model, const Checkpoint& ck) {
  if (!same_architecture(model.config(), ck.config)) {
    throw ValidationError("checkpoint config does not match the model:\n" + config_diff(ck.config, model.config()));
  }
  if (ck.hierarchy_sizes != model.hierarchy().sizes()) throw ValidationError("checkpoint hierarchy does not match");
  auto& params = model.params().params();
  if (params.size() != ck.params.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(ck.params.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ck.params[i];
    auto& dst = params[i];
    if (src.name != dst.name || !src.value.same_shape(dst.var.value())) {
      throw ValidationError("checkpoint tensor " + src.name + " " + src.value.shape_string() + " does not match " +
                            dst.name + " " + dst.var.value().shape_string());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].var.mutable_value() = ck.params[i].value;
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck) {
  auto model = std::make_unique<Model>(ck.config);
  restore(*model, ck);
  return model;
}

}  // namespace dahf
