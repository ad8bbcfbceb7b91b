#pragma once

#include <array>

#include "dahf/backbone.hpp"
#include "dahf/features.hpp"
#include "dahf/taxonomy.hpp"

namespace dahf::heads {

/// Per-stage 2-channel (real, forged) probability maps, coarse to fine.
using MaskPyramid = std::array<Var, kStageCount>;

struct ClassProbPyramid {
  std::array<Var, kStageCount> logits;
  std::array<Var, kStageCount> probs;
};

inline constexpr int kForgedChannel = 1;

/// Self-attention block, 1x1 projection to two channels, per-pixel softmax.
struct LocalizationHead {
  features::PositionAttention attention;
  layers::Conv project;  // width -> 2
};

LocalizationHead make_localization_head(ParamStore& store, const std::string& name, int width, int max_keys,
                                        Rng& rng);

/// softmax_c(project(F + PA(F))).
Var localize_stage(const LocalizationHead& head, const Var& f);

/// Conditions F on the upsampled forged channel of the coarser mask:
/// G = F + up(mask_prev[forged]) * F / 2, then localize_stage(G).
Var refine_mask(const LocalizationHead& head, const Var& mask_prev, const Var& f);
/// The conditioned features G alone.
Var condition_features(const Var& mask_prev, const Var& f);

struct ClassifierHead {
  layers::Linear fc;
};

ClassifierHead make_classifier_head(ParamStore& store, const std::string& name, int width, int classes, Rng& rng);

struct StageLogits {
  Var logits;
  Var probs;
};

/// Global average pool, linear layer, softmax.
StageLogits classify_stage(const ClassifierHead& head, const Var& f);

/// softmax(logits_next * (1 + E * probs_prev)) with E the parent-indicator
/// expansion from stage `stage` to stage+1 (0-based).
Var condition_logits(const Var& logits_next, const Var& probs_prev, const ClassHierarchy& h, int stage,
                     bool detach_prior = false);

struct HeadsConfig {
  int attention_max_keys = 256;
  bool detach_prior = false;
};

/// Stage t (0-based) reads branch 3 - t: coarse to fine.
inline constexpr int stage_branch(int t) { return backbone::kBranches - 1 - t; }

class ProgressiveHeads {
 public:
  ProgressiveHeads(ParamStore& store, const backbone::BackboneConfig& bcfg, const HeadsConfig& cfg,
                   const ClassHierarchy& hierarchy, Rng& rng);

  std::pair<MaskPyramid, ClassProbPyramid> operator()(const backbone::BranchFeatureSet& b) const;

  const LocalizationHead& localizer(int t) const { return loc_[t]; }
  const ClassifierHead& classifier(int t) const { return cls_[t]; }
  const ClassHierarchy& hierarchy() const { return hierarchy_; }
  const HeadsConfig& config() const { return cfg_; }

 private:
  HeadsConfig cfg_;
  ClassHierarchy hierarchy_;
  std::array<LocalizationHead, kStageCount> loc_;
  std::array<ClassifierHead, kStageCount> cls_;
};

/// Free-function form of the progressive pass over explicit heads.
std::pair<MaskPyramid, ClassProbPyramid> run_progressive(const backbone::BranchFeatureSet& b,
                                                         const std::array<LocalizationHead, kStageCount>& loc,
                                                         const std::array<ClassifierHead, kStageCount>& cls,
                                                         const ClassHierarchy& hierarchy, bool detach_prior = false);

}  // namespace dahf::heads
