#include "dahf/backbone.hpp"

namespace dahf::backbone {

namespace {

int ipow(int base, int e) {
  int r = 1;
  while (e-- > 0) r *= base;
  return r;
}

}  // namespace

void BackboneConfig::validate(int h, int w) const {
  if (width < 1 || factor < 1 || exchange_stages < 0) throw ValidationError("backbone: width, s >= 1 required");
  const int s3 = ipow(factor, 3);
  if (h % s3 || w % s3) {
    throw ValidationError("backbone: input " + std::to_string(h) + "x" + std::to_string(w) +
                          " not divisible by s^3 = " + std::to_string(s3));
  }
}

int BackboneConfig::branch_width(int b) const { return width * ipow(factor, b); }
int BackboneConfig::scale(int b) const { return ipow(factor, b); }

Var resample(const Var& f, int target_h, int target_w, const Var& weight) {
  const int h = f.value().height(), w = f.value().width();
  if (target_h == h && target_w == w) {
    if (!weight) return f;
    return ops::conv2d(f, weight, Var(), 1, 0);
  }
  if (target_h < h) {
    if (h % target_h || w % target_w || h / target_h != w / target_w) {
      throw ValidationError("resample: non-integer downsampling ratio");
    }
    const int r = h / target_h;
    if (!weight || weight.value().dim(2) != r) throw ValidationError("resample: down path needs a " +
                                                                    std::to_string(r) + "x" + std::to_string(r) +
                                                                    " strided kernel");
    return ops::conv2d(f, weight, Var(), r, 0);
  }
  if (target_h % h || target_w % w || target_h / h != target_w / w) {
    throw ValidationError("resample: non-integer upsampling ratio");
  }
  const Var projected = weight ? ops::conv2d(f, weight, Var(), 1, 0) : f;
  return ops::bilinear_resize(projected, target_h, target_w);
}

Var Resampler::operator()(const Var& f, int out_h, int out_w) const {
  return resample(f, out_h, out_w, conv.weight);
}

Resampler make_resampler(ParamStore& store, const std::string& name, const BackboneConfig& cfg, int from, int to,
                         Rng& rng) {
  Resampler r;
  r.from = from;
  r.to = to;
  const int in = cfg.branch_width(from), out = cfg.branch_width(to);
  if (to > from) {
    const int k = cfg.scale(to - from);
    r.conv = layers::make_conv(store, name, in, out, k, k, 0, false, rng, layers::Init::Small);
  } else {
    r.conv = layers::make_conv(store, name, in, out, 1, 1, 0, false, rng, layers::Init::Small);
  }
  return r;
}

Backbone::Backbone(ParamStore& store, const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.width < 1 || cfg_.factor < 1 || cfg_.exchange_stages < 0) throw ValidationError("backbone: bad config");
  for (int b = 0; b + 1 < kBranches; ++b) {
    down_[b] = layers::make_conv_block(store, "backbone.down." + std::to_string(b + 1), cfg_.branch_width(b),
                                       cfg_.branch_width(b + 1), 3, cfg_.factor, rng);
  }
  for (int s = 0; s < cfg_.exchange_stages; ++s) {
    ExchangeStage st;
    const std::string prefix = "backbone.exchange." + std::to_string(s);
    for (int b = 0; b < kBranches; ++b) {
      const int wb = cfg_.branch_width(b);
      st.own[b] = layers::make_conv_block(store, prefix + ".own." + std::to_string(b + 1), wb, wb, 3, 1, rng);
    }
    for (int b = 0; b < kBranches; ++b)
      for (int a = 0; a < kBranches; ++a) {
        if (a == b) continue;
        st.cross.push_back(make_resampler(
            store, prefix + ".cross." + std::to_string(a + 1) + "to" + std::to_string(b + 1), cfg_, a, b, rng));
      }
    stages_.push_back(std::move(st));
  }
}

BranchFeatureSet Backbone::build_branches(const Var& fused) const {
  const Tensor& f = fused.value();
  if (f.rank() != 3 || f.channels() != cfg_.width) {
    throw ValidationError("build_branches: expected width " + std::to_string(cfg_.width) + ", got " + f.shape_string());
  }
  cfg_.validate(f.height(), f.width());
  BranchFeatureSet out;
  out[0] = fused;
  for (int b = 1; b < kBranches; ++b) out[b] = down_[b - 1](out[b - 1], linear_);
  return out;
}

BranchFeatureSet Backbone::exchange(const BranchFeatureSet& in, int stage) const {
  const ExchangeStage& st = stages_.at(static_cast<std::size_t>(stage));
  BranchFeatureSet out;
  for (int b = 0; b < kBranches; ++b) {
    std::vector<Var> terms{in[b], st.own[b](in[b], linear_)};
    const int h = in[b].value().height(), w = in[b].value().width();
    for (const Resampler& r : st.cross)
      if (r.to == b) terms.push_back(r(in[r.from], h, w));
    out[b] = ops::sum(terms);
  }
  return out;
}

BranchFeatureSet Backbone::operator()(const Var& fused) const {
  BranchFeatureSet b = build_branches(fused);
  for (int s = 0; s < cfg_.exchange_stages; ++s) b = exchange(b, s);
  return b;
}

void check_shape_law(const BranchFeatureSet& b, const BackboneConfig& cfg, int h, int w) {
  for (int i = 0; i < kBranches; ++i) {
    const std::vector<int> want{cfg.branch_width(i), h / cfg.scale(i), w / cfg.scale(i)};
    if (b[i].value().shape() != want) {
      throw ValidationError("branch " + std::to_string(i + 1) + " has shape " + b[i].value().shape_string() +
                            ", expected " + shape_string(want));
    }
    if (!b[i].value().all_finite()) throw ValidationError("branch " + std::to_string(i + 1) + " is not finite");
  }
}

}  // namespace dahf::backbone
