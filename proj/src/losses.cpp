#include "dahf/losses.hpp"

#include <atomic>
#include <cmath>

namespace dahf::losses {

namespace {

std::atomic<std::uint64_t> g_clamps{0};

Node& input(Node& self, int i) { return *self.inputs[static_cast<std::size_t>(i)]; }

}  // namespace

std::string_view edge_mode_name(EdgeMode m) { return m == EdgeMode::Absolute ? "absolute" : "literal"; }

EdgeMode parse_edge_mode(std::string_view name) {
  if (name == "absolute") return EdgeMode::Absolute;
  if (name == "literal") return EdgeMode::Literal;
  throw ValidationError("edge_mode must be absolute or literal, got " + std::string(name));
}

void LossConfig::validate() const {
  if (!(edge_weight >= 0.0) || !std::isfinite(edge_weight)) throw ValidationError("edge weight w must be >= 0");
}

std::uint64_t clamp_events() { return g_clamps.load(); }
void reset_clamp_events() { g_clamps = 0; }

Var stage_detection_loss(const Var& probs, int label) {
  const Tensor& p = probs.value();
  if (p.rank() != 1 || label < 0 || label >= static_cast<int>(p.size())) {
    throw ValidationError("detection_loss: label " + std::to_string(label) + " outside " + p.shape_string());
  }
  const double v = p[static_cast<std::size_t>(label)];
  record_branches(std::span<const double>(&v, 1), kLogEps);
  if (!(v > kLogEps)) ++g_clamps;
  return make_result(Tensor::scalar(-std::log(std::max(v, kLogEps))), {probs}, [label, v](Node& self) {
    if (!(v > kLogEps)) return;
    input(self, 0).grad_ref()[static_cast<std::size_t>(label)] -= self.grad[0] / v;
  });
}

Var detection_loss(const heads::ClassProbPyramid& probs, const LabelPath& labels) {
  std::vector<Var> terms;
  for (int t = 0; t < kStageCount; ++t) terms.push_back(stage_detection_loss(probs.probs[t], labels[t]));
  return ops::sum(terms);
}

Tensor downsample_mask(const Tensor& gt, int h, int w) {
  if (gt.rank() != 3 || gt.channels() != 1) throw ValidationError("ground-truth mask must be (1,H,W)");
  if (h < 1 || w < 1 || gt.height() % h || gt.width() % w) {
    throw ValidationError("mask " + gt.shape_string() + " cannot be area-averaged to " + std::to_string(h) + "x" +
                          std::to_string(w));
  }
  const int fy = gt.height() / h, fx = gt.width() / w;
  Tensor out = Tensor::chw(1, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < fy; ++dy)
        for (int dx = 0; dx < fx; ++dx) acc += gt.at(0, y * fy + dy, x * fx + dx);
      out.at(0, y, x) = acc / (fy * fx) >= 0.5 ? 1.0 : 0.0;
    }
  return out;
}

Var mask_bce(const Var& mask2, const Tensor& target) {
  const Tensor& m = mask2.value();
  if (m.rank() != 3 || m.channels() != 2 || target.rank() != 3 || target.channels() != 1 ||
      m.height() != target.height() || m.width() != target.width()) {
    throw ValidationError("localization_loss: mask " + m.shape_string() + " vs target " + target.shape_string());
  }
  const int n = m.plane();
  const auto p0 = m.channel(0), p1 = m.channel(1);
  const auto y = target.channel(0);
  // The clamp side that matters for each pixel is the probability of its true class.
  std::vector<double> picked(static_cast<std::size_t>(n));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    picked[i] = y[i] > 0.5 ? p1[i] : p0[i];
    if (!(picked[i] > kLogEps)) ++g_clamps;
    acc -= std::log(std::max(picked[i], kLogEps));
  }
  record_branches(picked, kLogEps);
  auto tgt = std::make_shared<Tensor>(target);
  return make_result(Tensor::scalar(acc / n), {mask2}, [n, tgt](Node& self) {
    Node& nm = input(self, 0);
    Tensor& g = nm.grad_ref();
    const double d = self.grad[0] / n;
    for (int i = 0; i < n; ++i) {
      const int c = (*tgt)[static_cast<std::size_t>(i)] > 0.5 ? 1 : 0;
      const double p = nm.value[static_cast<std::size_t>(c) * n + i];
      if (p > kLogEps) g[static_cast<std::size_t>(c) * n + i] -= d / p;
    }
  });
}

Var localization_loss(const heads::MaskPyramid& masks, const Tensor& gt_mask) {
  std::vector<Var> terms;
  for (const Var& m : masks) {
    terms.push_back(mask_bce(m, downsample_mask(gt_mask, m.value().height(), m.value().width())));
  }
  return ops::sum(terms);
}

Tensor sobel_kernel(bool x_direction) {
  static constexpr double kx[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  Tensor k({1, 1, 3, 3});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) k[r * 3 + c] = x_direction ? kx[r * 3 + c] : kx[c * 3 + r];
  return k;
}

Var sobel(const Var& map, bool x_direction) {
  if (map.value().rank() != 3 || map.value().channels() != 1) throw ValidationError("sobel: expects a (1,H,W) map");
  return ops::conv2d(map, constant(sobel_kernel(x_direction)), Var(), 1, 1);
}

Var edge_loss(const Var& m, const Tensor& gt, const LossConfig& cfg) {
  if (!m.value().same_shape(gt) || gt.rank() != 3 || gt.channels() != 1) {
    throw ValidationError("edge_loss: prediction " + m.value().shape_string() + " vs ground truth " +
                          gt.shape_string());
  }
  const Var big_m = constant(gt);
  Var dx = ops::sub(sobel(big_m, true), sobel(m, true));
  Var dy = ops::sub(sobel(big_m, false), sobel(m, false));
  if (cfg.edge_mode == EdgeMode::Absolute) {
    dx = ops::abs(dx);
    dy = ops::abs(dy);
  }
  return ops::scale(ops::add(ops::mean_all(dx), ops::mean_all(dy)), cfg.edge_weight);
}

Var total_loss(const Var& det, const Var& loc, const Var& edge) {
  const std::pair<const char*, const Var*> parts[] = {{"detection", &det}, {"localization", &loc}, {"edge", &edge}};
  for (const auto& [name, v] : parts) {
    if (!*v || v->value().size() != 1) throw ValidationError(std::string("total_loss: ") + name + " is not a scalar");
    if (!std::isfinite(v->item())) {
      throw NonFiniteLoss(std::string("non-finite ") + name + " loss: " + std::to_string(v->item()));
    }
  }
  return ops::sum({det, loc, edge});
}

LossTerms sample_loss(const heads::MaskPyramid& masks, const heads::ClassProbPyramid& probs, const LabelPath& labels,
                      const Tensor& gt_mask, const LossConfig& cfg) {
  LossTerms t;
  t.det = detection_loss(probs, labels);
  t.loc = localization_loss(masks, gt_mask);
  if (cfg.use_edge) {
    t.edge = edge_loss(ops::select_channel(masks.back(), heads::kForgedChannel), gt_mask, cfg);
  } else {
    t.edge = constant(Tensor::scalar(0.0));
  }
  t.total = total_loss(t.det, t.loc, t.edge);
  return t;
}

}  // namespace dahf::losses
