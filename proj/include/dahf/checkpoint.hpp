#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dahf/model.hpp"

namespace dahf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  bool trainable = true;
  Tensor value;
};

/// Self-describing snapshot: config echo, hierarchy, epoch, metric snapshot
/// (a JSON object as text) and every parameter.
struct Checkpoint {
  TrainConfig config;
  int epoch = 0;
  std::string metrics_json = "{}";
  std::array<int, kStageCount> hierarchy_sizes{};
  std::vector<NamedTensor> params;
};

Checkpoint snapshot(const Model& model, int epoch, const std::string& metrics_json = "{}");

/// Layout: "DAHFCKPT", u32 version, u64 header length, JSON header, then the
/// parameter values as little-endian doubles in header order.
std::vector<std::uint8_t> serialize(const Checkpoint& ck);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into a model built from the same config. Throws
/// ValidationError with the config diff or the first mismatching tensor.
void restore(Model& model, const Checkpoint& ck);
/// Builds a model from the checkpoint's own config and restores it.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ck);

}  // namespace dahf
