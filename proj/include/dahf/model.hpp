#pragma once

#include <memory>

#include "dahf/backbone.hpp"
#include "dahf/config.hpp"
#include "dahf/features.hpp"
#include "dahf/heads.hpp"

namespace dahf {

struct ModelOutput {
  heads::MaskPyramid masks;
  heads::ClassProbPyramid classes;
};

/// Per-stage argmax labels plus the finest forged-probability map.
struct Prediction {
  LabelPath labels{};
  std::array<double, kStageCount> confidence{};
  std::array<Tensor, kStageCount> forged;  // (1,h,w) per stage
};

/// Features -> backbone -> progressive heads, with one parameter store.
class Model {
 public:
  explicit Model(const TrainConfig& cfg, const ClassHierarchy& hierarchy = ClassHierarchy::standard());

  ModelOutput forward(const Tensor& image) const;
  ModelOutput forward(const Var& image) const;
  Prediction predict(const Tensor& image) const;

  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }
  const TrainConfig& config() const { return cfg_; }
  const ClassHierarchy& hierarchy() const { return hierarchy_; }
  const features::FeatureExtractor& features() const { return *features_; }
  const backbone::Backbone& backbone() const { return *backbone_; }
  backbone::Backbone& backbone() { return *backbone_; }
  const heads::ProgressiveHeads& heads() const { return *heads_; }

  /// Keeps every channel threshold inside [0, 0.99] after an update.
  void project_constraints();

 private:
  TrainConfig cfg_;
  ClassHierarchy hierarchy_;
  std::unique_ptr<ParamStore> store_;
  std::unique_ptr<features::FeatureExtractor> features_;
  std::unique_ptr<backbone::Backbone> backbone_;
  std::unique_ptr<heads::ProgressiveHeads> heads_;
};

Prediction to_prediction(const ModelOutput& out);

}  // namespace dahf
