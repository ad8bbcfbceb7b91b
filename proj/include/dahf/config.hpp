#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "dahf/features.hpp"
#include "dahf/losses.hpp"

namespace dahf {

/// Every training hyperparameter. The JSON config file uses exactly these
/// field names; missing keys keep their defaults, unknown keys are rejected.
struct TrainConfig {
  int image_size = 64;
  double lr0 = 2e-4;
  double lr_floor = 1e-8;
  double lr_decay = 0.5;
  int lr_decay_every = 5;
  int epochs = 50;
  int batch_size = 8;
  int s = 2;
  int C = 16;
  int exchange_stages = 2;
  double w = 1.0;
  losses::EdgeMode edge_mode = losses::EdgeMode::Absolute;
  bool edge_loss = true;
  bool rgb = true;
  bool noise = true;
  bool srm = false;
  bool frequency = true;
  bool dam = true;
  bool allow_noise_with_srm = false;
  bool detach_prior = false;
  bool augment = true;
  double grad_clip = 5.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int denoiser_width = 16;
  int denoiser_layers = 5;
  int ca_reduction = 4;
  double tau_init = 0.05;
  int attention_max_keys = 256;
  std::uint64_t seed = 0;
  bool deterministic = true;
  int threads = 0;  // 0 = OpenMP default; ignored in deterministic mode
  int checkpoint_every = 0;  // epochs; 0 = final only

  void validate() const;

  features::FeatureConfig feature_config() const;
  losses::LossConfig loss_config() const;
};

std::string to_json(const TrainConfig& cfg, int indent = 2);
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Lines "key: a -> b" for every field that differs; empty when equal.
std::string config_diff(const TrainConfig& a, const TrainConfig& b);

/// Only the fields that determine parameter shapes.
bool same_architecture(const TrainConfig& a, const TrainConfig& b);

}  // namespace dahf
