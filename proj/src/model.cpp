#include "dahf/model.hpp"

#include <algorithm>

namespace dahf {

Model::Model(const TrainConfig& cfg, const ClassHierarchy& hierarchy)
    : cfg_(cfg), hierarchy_(hierarchy), store_(std::make_unique<ParamStore>()) {
  cfg_.validate();
  Rng rng(cfg_.seed);
  features_ = std::make_unique<features::FeatureExtractor>(*store_, cfg_.feature_config(), rng);
  const backbone::BackboneConfig bcfg{cfg_.C, cfg_.s, cfg_.exchange_stages};
  backbone_ = std::make_unique<backbone::Backbone>(*store_, bcfg, rng);
  heads_ = std::make_unique<heads::ProgressiveHeads>(
      *store_, bcfg, heads::HeadsConfig{cfg_.attention_max_keys, cfg_.detach_prior}, hierarchy_, rng);
}

ModelOutput Model::forward(const Var& image) const {
  const Var fused = (*features_)(image);
  const auto branches = (*backbone_)(fused);
  auto [masks, classes] = (*heads_)(branches);
  return {masks, classes};
}

ModelOutput Model::forward(const Tensor& image) const { return forward(constant(image)); }

Prediction to_prediction(const ModelOutput& out) {
  Prediction p;
  for (int t = 0; t < kStageCount; ++t) {
    const auto& probs = out.classes.probs[t].value().values();
    const auto it = std::max_element(probs.begin(), probs.end());
    p.labels[t] = static_cast<int>(it - probs.begin());
    p.confidence[t] = *it;
    const Tensor& m = out.masks[t].value();
    p.forged[t] = Tensor::chw(1, m.height(), m.width());
    std::copy(m.channel(heads::kForgedChannel).begin(), m.channel(heads::kForgedChannel).end(),
              p.forged[t].values().begin());
  }
  return p;
}

Prediction Model::predict(const Tensor& image) const {
  NoGradGuard guard;
  return to_prediction(forward(image));
}

void Model::project_constraints() {
  for (auto& p : store_->params()) {
    if (p.name.size() < 4 || p.name.compare(p.name.size() - 4, 4, ".tau") != 0) continue;
    for (double& v : p.var.mutable_value().values()) v = std::clamp(v, 0.0, 0.99);
  }
}

}  // namespace dahf
