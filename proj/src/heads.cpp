#include "dahf/heads.hpp"

namespace dahf::heads {

LocalizationHead make_localization_head(ParamStore& store, const std::string& name, int width, int max_keys,
                                        Rng& rng) {
  LocalizationHead h;
  h.attention = features::make_position_attention(store, name + ".pa", width, max_keys, rng);
  h.project = layers::make_conv_same(store, name + ".project", width, 2, 1, rng, layers::Init::Small);
  return h;
}

Var localize_stage(const LocalizationHead& head, const Var& f) {
  const Var g = ops::add(f, head.attention(f));
  return ops::softmax_channels(head.project(g));
}

Var condition_features(const Var& mask_prev, const Var& f) {
  const Tensor& m = mask_prev.value();
  const Tensor& x = f.value();
  if (m.rank() != 3 || m.channels() != 2) throw ValidationError("refine_mask: previous mask must be (2,h,w)");
  if (m.height() > x.height() || m.width() > x.width()) {
    throw ValidationError("refine_mask: previous mask " + m.shape_string() + " is finer than features " +
                          x.shape_string());
  }
  const Var prior = ops::bilinear_resize(ops::select_channel(mask_prev, kForgedChannel), x.height(), x.width());
  return ops::add(f, ops::scale(ops::mul_plane(f, prior), 0.5));
}

Var refine_mask(const LocalizationHead& head, const Var& mask_prev, const Var& f) {
  return localize_stage(head, condition_features(mask_prev, f));
}

ClassifierHead make_classifier_head(ParamStore& store, const std::string& name, int width, int classes, Rng& rng) {
  ClassifierHead h;
  h.fc = layers::make_linear(store, name, width, classes, rng);
  return h;
}

StageLogits classify_stage(const ClassifierHead& head, const Var& f) {
  StageLogits out;
  out.logits = head.fc(ops::global_avg_pool(f));
  out.probs = ops::softmax(out.logits);
  return out;
}

Var condition_logits(const Var& logits_next, const Var& probs_prev, const ClassHierarchy& h, int stage,
                     bool detach_prior) {
  if (stage < 0 || stage + 1 >= kStageCount) throw ValidationError("condition_logits: stage out of range");
  if (logits_next.value().rank() != 1 || logits_next.value().size() != static_cast<std::size_t>(h.size(stage + 1))) {
    throw ValidationError("condition_logits: expected " + std::to_string(h.size(stage + 1)) + " logits, got " +
                          logits_next.value().shape_string());
  }
  if (probs_prev.value().rank() != 1 || probs_prev.value().size() != static_cast<std::size_t>(h.size(stage))) {
    throw ValidationError("condition_logits: expected " + std::to_string(h.size(stage)) + " prior probs, got " +
                          probs_prev.value().shape_string());
  }
  const Var prior = detach_prior ? detach(probs_prev) : probs_prev;
  const Var lifted = ops::linear(prior, constant(h.expansion(stage)), Var());
  return ops::softmax(ops::mul(logits_next, ops::add_scalar(lifted, 1.0)));
}

std::pair<MaskPyramid, ClassProbPyramid> run_progressive(const backbone::BranchFeatureSet& b,
                                                         const std::array<LocalizationHead, kStageCount>& loc,
                                                         const std::array<ClassifierHead, kStageCount>& cls,
                                                         const ClassHierarchy& hierarchy, bool detach_prior) {
  MaskPyramid masks;
  ClassProbPyramid classes;
  for (int t = 0; t < kStageCount; ++t) {
    const Var& f = b[stage_branch(t)];
    const StageLogits s = classify_stage(cls[t], f);
    if (s.logits.value().size() != static_cast<std::size_t>(hierarchy.size(t))) {
      throw ValidationError("run_progressive: classifier size does not match the hierarchy at stage " +
                            std::to_string(t + 1));
    }
    classes.logits[t] = s.logits;
    if (t == 0) {
      masks[t] = localize_stage(loc[t], f);
      classes.probs[t] = s.probs;
    } else {
      masks[t] = refine_mask(loc[t], masks[t - 1], f);
      classes.probs[t] = condition_logits(s.logits, classes.probs[t - 1], hierarchy, t - 1, detach_prior);
    }
  }
  return {masks, classes};
}

ProgressiveHeads::ProgressiveHeads(ParamStore& store, const backbone::BackboneConfig& bcfg, const HeadsConfig& cfg,
                                   const ClassHierarchy& hierarchy, Rng& rng)
    : cfg_(cfg), hierarchy_(hierarchy) {
  for (int t = 0; t < kStageCount; ++t) {
    const int width = bcfg.branch_width(stage_branch(t));
    const std::string prefix = "heads.stage" + std::to_string(t + 1);
    loc_[t] = make_localization_head(store, prefix + ".loc", width, cfg_.attention_max_keys, rng);
    cls_[t] = make_classifier_head(store, prefix + ".cls", width, hierarchy_.size(t), rng);
  }
}

std::pair<MaskPyramid, ClassProbPyramid> ProgressiveHeads::operator()(const backbone::BranchFeatureSet& b) const {
  return run_progressive(b, loc_, cls_, hierarchy_, cfg_.detach_prior);
}

}  // namespace dahf::heads
