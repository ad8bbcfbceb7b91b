#include "dahf/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dahf {

namespace losses {
NLOHMANN_JSON_SERIALIZE_ENUM(EdgeMode, {{EdgeMode::Absolute, "absolute"}, {EdgeMode::Literal, "literal"}})
}  // namespace losses

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, image_size, lr0, lr_floor, lr_decay, lr_decay_every,
                                                epochs, batch_size, s, C, exchange_stages, w, edge_mode, edge_loss, rgb,
                                                noise, srm, frequency, dam, allow_noise_with_srm, detach_prior, augment,
                                                grad_clip, adam_beta1, adam_beta2, adam_eps, denoiser_width,
                                                denoiser_layers, ca_reduction, tau_init, attention_max_keys, seed,
                                                deterministic, threads, checkpoint_every)

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (!(lr0 > lr_floor && lr_floor > 0.0)) fail("need lr0 > lr_floor > 0");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay must lie in (0, 1]");
  if (lr_decay_every < 1) fail("lr_decay_every must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (s < 1 || C < 1 || exchange_stages < 0) fail("s, C >= 1 and exchange_stages >= 0 required");
  const int s3 = s * s * s;
  if (image_size < 8 || image_size % 8 || image_size % s3) {
    fail("image_size must be a multiple of 8 and of s^3 = " + std::to_string(s3));
  }
  if (!(w >= 0.0)) fail("w must be >= 0");
  if (noise && srm && !allow_noise_with_srm) fail("noise and srm streams are exclusive unless allow_noise_with_srm");
  if (!(grad_clip > 0.0)) fail("grad_clip must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0)) {
    fail("adam moments must lie in [0,1) and eps > 0");
  }
  if (threads < 0 || checkpoint_every < 0) fail("threads and checkpoint_every must be >= 0");
  feature_config().validate();
  loss_config().validate();
}

features::FeatureConfig TrainConfig::feature_config() const {
  features::FeatureConfig f;
  f.width = C;
  f.denoiser_width = denoiser_width;
  f.denoiser_layers = denoiser_layers;
  f.ca_reduction = ca_reduction;
  f.attention_max_keys = attention_max_keys;
  f.tau_init = tau_init;
  f.toggles = {rgb, noise, srm, frequency, dam};
  return f;
}

losses::LossConfig TrainConfig::loss_config() const {
  losses::LossConfig l;
  l.edge_weight = w;
  l.edge_mode = edge_mode;
  l.use_edge = edge_loss;
  return l;
}

std::string to_json(const TrainConfig& cfg, int indent) { return nlohmann::json(cfg).dump(indent); }

TrainConfig config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  const nlohmann::json known = TrainConfig{};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ValidationError("config: unknown key '" + key + "'");
  }
  TrainConfig cfg;
  try {
    cfg = j.get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_diff(const TrainConfig& a, const TrainConfig& b) {
  const nlohmann::json ja = a, jb = b;
  std::string out;
  for (const auto& [key, va] : ja.items()) {
    const auto& vb = jb.at(key);
    if (va != vb) out += key + ": " + va.dump() + " -> " + vb.dump() + "\n";
  }
  return out;
}

bool same_architecture(const TrainConfig& a, const TrainConfig& b) {
  return a.s == b.s && a.C == b.C && a.exchange_stages == b.exchange_stages && a.rgb == b.rgb && a.noise == b.noise &&
         a.srm == b.srm && a.frequency == b.frequency && a.dam == b.dam && a.denoiser_width == b.denoiser_width &&
         a.denoiser_layers == b.denoiser_layers && a.ca_reduction == b.ca_reduction;
}

}  // namespace dahf
