#include "doctest.h"

#include <cmath>
#include <limits>

#include "dahf/losses.hpp"
#include "dahf/model.hpp"
#include "support/gradcheck.hpp"

using namespace dahf;
using namespace dahf::losses;
using dahf::testing::gradcheck;
using dahf::testing::random_tensor;

namespace {

const std::array<int, kStageCount> kSizes = {2, 3, 5, 8};
const std::array<int, kStageCount> kSides = {2, 4, 8, 16};

heads::ClassProbPyramid probs_from(const std::array<Tensor, kStageCount>& p) {
  heads::ClassProbPyramid out;
  for (int t = 0; t < kStageCount; ++t) out.probs[t] = out.logits[t] = constant(p[t]);
  return out;
}

Tensor random_simplex(int n, std::mt19937_64& r) {
  Tensor p = random_tensor({n}, r, 0.05, 1.0);
  double s = 0.0;
  for (double v : p.values()) s += v;
  for (double& v : p.values()) v /= s;
  return p;
}

// Two-channel map whose forged channel is `forged`.
Tensor two_channel(const Tensor& forged) {
  Tensor m = Tensor::chw(2, forged.height(), forged.width());
  for (int p = 0; p < forged.plane(); ++p) {
    m.channel(1)[p] = forged.channel(0)[p];
    m.channel(0)[p] = 1.0 - forged.channel(0)[p];
  }
  return m;
}

Tensor binary_map(int h, int w, unsigned bits) {
  Tensor m = Tensor::chw(1, h, w);
  for (int i = 0; i < h * w; ++i) m[i] = (bits >> i) & 1u ? 1.0 : 0.0;
  return m;
}

Tensor embed(const Tensor& m, int margin) {
  Tensor out = Tensor::chw(1, m.height() + 2 * margin, m.width() + 2 * margin);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) out.at(0, y + margin, x + margin) = m.at(0, y, x);
  return out;
}

double edge(const Tensor& m, const Tensor& gt, EdgeMode mode = EdgeMode::Absolute) {
  NoGradGuard ng;
  return edge_loss(constant(m), gt, LossConfig{.edge_weight = 1.0, .edge_mode = mode}).item();
}

Tensor transpose(const Tensor& m) {
  Tensor t = Tensor::chw(m.channels(), m.width(), m.height());
  for (int c = 0; c < m.channels(); ++c)
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) t.at(c, x, y) = m.at(c, y, x);
  return t;
}

}  // namespace

TEST_CASE("uniform class predictions cost ln2 + ln3 + ln5 + ln8") {
  std::array<Tensor, kStageCount> p;
  for (int t = 0; t < kStageCount; ++t) p[t] = Tensor({kSizes[t]}, 1.0 / kSizes[t]);
  const double expect = std::log(2.0) + std::log(3.0) + std::log(5.0) + std::log(8.0);
  const ClassHierarchy h = ClassHierarchy::standard();
  for (MethodTag tag : kAllMethods)
    CHECK(std::abs(detection_loss(probs_from(p), h.label_path(tag)).item() - expect) < 1e-9);
  CHECK(expect == doctest::Approx(std::log(240.0)).epsilon(1e-15));
}

TEST_CASE("perfect predictions cost nothing") {
  const ClassHierarchy h = ClassHierarchy::standard();
  const LabelPath labels = h.label_path(MethodTag::DmPartImg);
  std::array<Tensor, kStageCount> p;
  for (int t = 0; t < kStageCount; ++t) {
    p[t] = Tensor({kSizes[t]}, 0.0);
    p[t][labels[t]] = 1.0;
  }
  CHECK(detection_loss(probs_from(p), labels).item() == 0.0);

  Tensor gt = Tensor::chw(1, 16, 16);
  for (int y = 4; y < 12; ++y)
    for (int x = 0; x < 8; ++x) gt.at(0, y, x) = 1.0;
  heads::MaskPyramid masks;
  for (int t = 0; t < kStageCount; ++t) masks[t] = constant(two_channel(downsample_mask(gt, kSides[t], kSides[t])));
  CHECK(localization_loss(masks, gt).item() == 0.0);
  for (EdgeMode mode : {EdgeMode::Absolute, EdgeMode::Literal}) CHECK(edge(gt, gt, mode) == 0.0);
}

TEST_CASE("detection loss matches a scalar cross-entropy oracle and decomposes by stage") {
  std::mt19937_64 r(1);
  const ClassHierarchy h = ClassHierarchy::standard();
  for (int trial = 0; trial < 50; ++trial) {
    std::array<Tensor, kStageCount> p;
    for (int t = 0; t < kStageCount; ++t) p[t] = random_simplex(kSizes[t], r);
    const LabelPath labels = h.label_path(static_cast<int>(r() % kMethodCount));
    double oracle = 0.0, parts = 0.0;
    for (int t = 0; t < kStageCount; ++t) {
      oracle -= std::log(p[t][labels[t]]);
      parts += stage_detection_loss(constant(p[t]), labels[t]).item();
    }
    const double got = detection_loss(probs_from(p), labels).item();
    CHECK(std::abs(got - oracle) < 1e-9);
    CHECK(std::abs(got - parts) < 1e-12);
  }
}

TEST_CASE("a zero true-class probability is clamped and counted") {
  reset_clamp_events();
  const Var p = constant(Tensor({3}, std::vector<double>{0.0, 0.5, 0.5}));
  CHECK(stage_detection_loss(p, 0).item() == doctest::Approx(-std::log(kLogEps)));
  CHECK(clamp_events() == 1);
  stage_detection_loss(p, 1);
  CHECK(clamp_events() == 1);
  CHECK_THROWS_AS(stage_detection_loss(p, 3), ValidationError);
  reset_clamp_events();
  CHECK(clamp_events() == 0);
}

TEST_CASE("half-probability masks cost ln2 per stage") {
  heads::MaskPyramid masks;
  for (int t = 0; t < kStageCount; ++t) masks[t] = constant(Tensor::chw(2, kSides[t], kSides[t], 0.5));
  std::mt19937_64 r(2);
  Tensor gt = random_tensor({1, 16, 16}, r, 0.0, 1.0);
  for (double& v : gt.values()) v = v > 0.6 ? 1.0 : 0.0;
  CHECK(localization_loss(masks, gt).item() == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-14));
  CHECK(mask_bce(masks[2], downsample_mask(gt, 8, 8)).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("mask cross-entropy matches a double-loop oracle") {
  std::mt19937_64 r(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = random_tensor({1, 8, 8}, r, 0.01, 0.99);
    Tensor y = random_tensor({1, 8, 8}, r, 0.0, 1.0);
    for (double& v : y.values()) v = v > 0.5 ? 1.0 : 0.0;
    double oracle = 0.0;
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j) {
        const double pi = p.at(0, i, j), yi = y.at(0, i, j);
        oracle -= yi * std::log(pi) + (1.0 - yi) * std::log(1.0 - pi);
      }
    oracle /= 64.0;
    CHECK(std::abs(mask_bce(constant(two_channel(p)), y).item() - oracle) < 1e-9);
  }
}

TEST_CASE("ground truth is area-averaged then thresholded at one half") {
  Tensor gt = Tensor::chw(1, 4, 4);
  gt.at(0, 0, 0) = gt.at(0, 0, 1) = 1.0;  // top-left block: 2 of 4
  gt.at(0, 0, 2) = 1.0;                    // top-right block: 1 of 4
  gt.at(0, 2, 0) = gt.at(0, 2, 1) = gt.at(0, 3, 0) = 1.0;
  const Tensor d = downsample_mask(gt, 2, 2);
  CHECK(d.at(0, 0, 0) == 1.0);
  CHECK(d.at(0, 0, 1) == 0.0);
  CHECK(d.at(0, 1, 0) == 1.0);
  CHECK(d.at(0, 1, 1) == 0.0);
  CHECK(max_abs_diff(downsample_mask(gt, 4, 4), gt) == 0.0);
  CHECK_THROWS_AS(downsample_mask(gt, 3, 3), ValidationError);
  CHECK_THROWS_AS(mask_bce(constant(Tensor::chw(2, 4, 4, 0.5)), Tensor::chw(1, 2, 2)), ValidationError);
  CHECK_THROWS_AS(edge_loss(constant(Tensor::chw(1, 4, 4)), Tensor::chw(1, 4, 2), LossConfig{}), ValidationError);
}

TEST_CASE("sobel kernels and constant maps") {
  const Tensor kx = sobel_kernel(true), ky = sobel_kernel(false);
  const double expect_x[9] = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < 9; ++i) {
    CHECK(kx[i] == expect_x[i]);
    CHECK(ky[i] == expect_x[(i % 3) * 3 + i / 3]);
    sx += kx[i];
    sy += ky[i];
  }
  CHECK(sx == 0.0);
  CHECK(sy == 0.0);
  // Zero padding: a constant map only responds on the outer ring.
  const Var flat = constant(Tensor::chw(1, 7, 7, 0.8));
  for (bool dir : {true, false}) {
    const Tensor g = sobel(flat, dir).value();
    for (int y = 1; y < 6; ++y)
      for (int x = 1; x < 6; ++x) CHECK(std::abs(g.at(0, y, x)) < 1e-15);
    // The frame sees the zero padding: 0.8 * (1 + 2 + 1) on the facing edge.
    CHECK(std::abs(dir ? g.at(0, 3, 0) : g.at(0, 0, 3)) == doctest::Approx(3.2).epsilon(1e-14));
  }
  const Tensor zero = sobel(constant(Tensor::chw(1, 5, 5)), true).value();
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("vertical step edge gives a response of 4 along the edge") {
  Tensor step = Tensor::chw(1, 6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 3; x < 6; ++x) step.at(0, y, x) = 1.0;
  const Tensor gx = sobel(constant(step), true).value();
  const Tensor gy = sobel(constant(step), false).value();
  for (int y = 1; y < 5; ++y) {
    CHECK(gx.at(0, y, 2) == 4.0);
    CHECK(gx.at(0, y, 3) == 4.0);
    CHECK(gx.at(0, y, 1) == 0.0);
    CHECK(gx.at(0, y, 4) == 0.0);
    for (int x = 0; x < 6; ++x) CHECK(gy.at(0, y, x) == 0.0);
  }
  Tensor down = Tensor::chw(1, 6, 6);
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 3; ++x) down.at(0, y, x) = 1.0;
  const Tensor gd = sobel(constant(down), true).value();
  for (int y = 1; y < 5; ++y) CHECK(gd.at(0, y, 2) == -4.0);
}

TEST_CASE("sobel x on a transposed map is the transpose of sobel y") {
  std::mt19937_64 r(4);
  const Tensor m = random_tensor({1, 5, 7}, r);
  const Tensor a = sobel(constant(transpose(m)), true).value();
  const Tensor b = transpose(sobel(constant(m), false).value());
  CHECK(max_abs_diff(a, b) < 1e-14);
}

TEST_CASE("literal edge mode cancels on a mirrored boundary shift") {
  // A square shifted one pixel sideways, away from the canvas border: every
  // signed Sobel response sums to zero, so the literal objective is blind.
  Tensor gt = Tensor::chw(1, 8, 8), shifted = Tensor::chw(1, 8, 8);
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) {
      gt.at(0, y, x) = 1.0;
      shifted.at(0, y, x + 1) = 1.0;
    }
  CHECK(max_abs_diff(gt, shifted) == 1.0);
  CHECK(edge(shifted, gt, EdgeMode::Literal) == 0.0);
  CHECK(edge(shifted, gt, EdgeMode::Absolute) > 0.0);
  // Mirrored: grow on the left, shrink on the right.
  Tensor mirrored = gt;
  for (int y = 2; y < 6; ++y) {
    mirrored.at(0, y, 1) = 1.0;
    mirrored.at(0, y, 5) = 0.0;
  }
  CHECK(edge(mirrored, gt, EdgeMode::Literal) == 0.0);
  CHECK(edge(mirrored, gt, EdgeMode::Absolute) > 0.0);
}

TEST_CASE("absolute edge loss over every pair of 3x3 binary masks") {
  // With zero padding on a 3x3 canvas, a difference of +-1 on all four corners
  // has zero Sobel response everywhere, so those pairs score 0 although the
  // masks differ. Every other differing pair is strictly positive.
  const unsigned corners = (1u << 0) | (1u << 2) | (1u << 6) | (1u << 8);
  int zero_pairs = 0, positive_pairs = 0, unexpected = 0;
  for (unsigned a = 0; a < 512; ++a)
    for (unsigned b = 0; b < 512; ++b) {
      if (a == b) continue;
      const double l = edge(binary_map(3, 3, a), binary_map(3, 3, b));
      if (l > 0.0) {
        ++positive_pairs;
        continue;
      }
      ++zero_pairs;
      const bool corner_flip = (a ^ b) == corners && ((a & corners) == 0 || (b & corners) == 0);
      if (!corner_flip) ++unexpected;
    }
  CHECK(zero_pairs == 64);
  CHECK(unexpected == 0);
  CHECK(positive_pairs == 512 * 511 - 64);
}

TEST_CASE("a zero margin makes the absolute edge loss positive for every differing 3x3 pair") {
  std::vector<Tensor> maps;
  for (unsigned a = 0; a < 512; ++a) maps.push_back(embed(binary_map(3, 3, a), 1));
  int non_positive = 0;
  for (unsigned a = 0; a < 512; ++a)
    for (unsigned b = 0; b < 512; ++b)
      if (a != b && !(edge(maps[a], maps[b]) > 0.0)) ++non_positive;
  CHECK(non_positive == 0);
}

TEST_CASE("absolute edge loss is symmetric and scales with w") {
  std::mt19937_64 r(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor({1, 6, 6}, r, 0.0, 1.0), b = random_tensor({1, 6, 6}, r, 0.0, 1.0);
    CHECK(edge(a, b) == doctest::Approx(edge(b, a)).epsilon(1e-14));
    CHECK(edge(a, b) >= 0.0);
    NoGradGuard ng;
    const double w3 = edge_loss(constant(a), b, LossConfig{.edge_weight = 3.0}).item();
    CHECK(w3 == doctest::Approx(3.0 * edge(a, b)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(LossConfig{.edge_weight = -1.0}.validate(), ValidationError);
  CHECK(parse_edge_mode("literal") == EdgeMode::Literal);
  CHECK(edge_mode_name(EdgeMode::Absolute) == "absolute");
  CHECK_THROWS_AS(parse_edge_mode("signed"), ValidationError);
}

TEST_CASE("edge loss gradient matches finite differences") {
  std::mt19937_64 r(6);
  Tensor gt = random_tensor({1, 8, 8}, r, 0.0, 1.0);
  for (double& v : gt.values()) v = v > 0.5 ? 1.0 : 0.0;
  const Var m(random_tensor({1, 8, 8}, r, 0.0, 1.0), true);
  for (EdgeMode mode : {EdgeMode::Absolute, EdgeMode::Literal}) {
    const auto rep = gradcheck([&] { return edge_loss(m, gt, LossConfig{.edge_weight = 0.7, .edge_mode = mode}); }, {m});
    INFO(rep.first_failure);
    CHECK(rep.ok());
  }
}

TEST_CASE("total loss sums its components and rejects non-finite ones") {
  auto s = [](double v) { return constant(Tensor::scalar(v)); };
  CHECK(total_loss(s(0), s(0), s(0)).item() == 0.0);
  CHECK(total_loss(s(1.0), s(2.0), s(0.5)).item() == 3.5);
  const double nan = std::numeric_limits<double>::quiet_NaN(), inf = std::numeric_limits<double>::infinity();
  auto message = [&](const Var& d, const Var& l, const Var& e) {
    try {
      total_loss(d, l, e);
    } catch (const NonFiniteLoss& ex) {
      return std::string(ex.what());
    }
    return std::string();
  };
  CHECK(message(s(nan), s(1), s(1)).find("detection") != std::string::npos);
  CHECK(message(s(1), s(inf), s(1)).find("localization") != std::string::npos);
  CHECK(message(s(1), s(1), s(-inf)).find("edge") != std::string::npos);
}

TEST_CASE("sample loss equals its recomputed components") {
  TrainConfig cfg;
  cfg.image_size = 16;
  cfg.C = 4;
  cfg.denoiser_width = 4;
  const Model model(cfg);
  std::mt19937_64 r(7);
  const ClassHierarchy& h = model.hierarchy();
  for (int trial = 0; trial < 3; ++trial) {
    const Tensor img = random_tensor({3, 16, 16}, r, 0.0, 1.0);
    Tensor gt = random_tensor({1, 16, 16}, r, 0.0, 1.0);
    for (double& v : gt.values()) v = v > 0.7 ? 1.0 : 0.0;
    const LabelPath labels = h.label_path(static_cast<int>(r() % kMethodCount));
    const ModelOutput out = model.forward(img);
    const LossTerms t = sample_loss(out.masks, out.classes, labels, gt, cfg.loss_config());
    const double det = detection_loss(out.classes, labels).item();
    const double loc = localization_loss(out.masks, gt).item();
    const double e = edge_loss(ops::select_channel(out.masks[3], 1), gt, cfg.loss_config()).item();
    CHECK(std::abs(t.total.item() - (det + loc + e)) < 1e-12);
    CHECK(t.det.item() == det);
    CHECK(t.loc.item() == loc);
    CHECK(t.edge.item() == e);
    LossConfig off = cfg.loss_config();
    off.use_edge = false;
    const LossTerms no_edge = sample_loss(out.masks, out.classes, labels, gt, off);
    CHECK(no_edge.edge.item() == 0.0);
    CHECK(std::abs(no_edge.total.item() - (det + loc)) < 1e-12);
  }
}

TEST_CASE("total loss gradient over every parameter on a 16x16 batch of two") {
  TrainConfig cfg;
  cfg.image_size = 16;
  cfg.C = 4;
  cfg.denoiser_width = 4;
  cfg.attention_max_keys = 64;
  Model model(cfg);
  std::mt19937_64 r(8);
  // Give the zero-initialised denoiser head some weight so its inputs get gradient.
  Var head = model.params().get("features.denoiser.4.weight");
  head.mutable_value() = random_tensor(head.shape(), r, -0.2, 0.2);
  const ClassHierarchy& h = model.hierarchy();
  std::vector<Tensor> images, masks;
  std::vector<LabelPath> labels;
  for (MethodTag tag : {MethodTag::GanPartTxt, MethodTag::Real}) {
    images.push_back(random_tensor({3, 16, 16}, r, 0.0, 1.0));
    Tensor gt = Tensor::chw(1, 16, 16);
    if (tag != MethodTag::Real)
      for (int y = 3; y < 11; ++y)
        for (int x = 5; x < 14; ++x) gt.at(0, y, x) = 1.0;
    masks.push_back(gt);
    labels.push_back(h.label_path(tag));
  }
  auto loss = [&] {
    std::vector<Var> terms;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const ModelOutput out = model.forward(images[i]);
      terms.push_back(sample_loss(out.masks, out.classes, labels[i], masks[i], cfg.loss_config()).total);
    }
    return ops::scale(ops::sum(terms), 1.0 / static_cast<double>(terms.size()));
  };
  std::vector<Var> wrt;
  for (const auto& p : model.params().params())
    if (p.trainable) wrt.push_back(p.var);
  const auto rep = gradcheck(loss, wrt, {.max_per_tensor = 4});
  INFO(rep.first_failure);
  CHECK(rep.failed == 0);
  CHECK(rep.checked > 200);
}
