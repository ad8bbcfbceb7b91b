#include "doctest.h"

#include <cmath>

#include "dahf/backbone.hpp"
#include "support/gradcheck.hpp"

using namespace dahf;
using namespace dahf::backbone;
using dahf::testing::gradcheck;
using dahf::testing::random_tensor;

namespace {

Var probe_sum(const Var& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return ops::sum_all(ops::mul(y, constant(random_tensor(y.shape(), rng))));
}

BranchFeatureSet random_set(const BackboneConfig& cfg, int h, int w, std::mt19937_64& r) {
  BranchFeatureSet s;
  for (int b = 0; b < kBranches; ++b)
    s[b] = constant(random_tensor({cfg.branch_width(b), h / cfg.scale(b), w / cfg.scale(b)}, r));
  return s;
}

// Half-pixel bilinear interpolation written out directly.
Tensor bilinear_oracle(const Tensor& f, int oh, int ow) {
  const int h = f.height(), w = f.width();
  Tensor out = Tensor::chw(f.channels(), oh, ow);
  auto coord = [](int o, int in, int out_n, int& i0, int& i1, double& t) {
    double s = (o + 0.5) * in / out_n - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    t = s - i0;
  };
  for (int c = 0; c < f.channels(); ++c)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        int y0, y1, x0, x1;
        double ty, tx;
        coord(y, h, oh, y0, y1, ty);
        coord(x, w, ow, x0, x1, tx);
        out.at(c, y, x) = (1 - ty) * ((1 - tx) * f.at(c, y0, x0) + tx * f.at(c, y0, x1)) +
                          ty * ((1 - tx) * f.at(c, y1, x0) + tx * f.at(c, y1, x1));
      }
  return out;
}

// Channel-mean then box-average down by r, or channel-mean then bilinear up.
Tensor averaging_resample_oracle(const Tensor& f, int out_c, int oh, int ow) {
  const int h = f.height(), w = f.width();
  Tensor mean = Tensor::chw(1, h, w);
  for (int c = 0; c < f.channels(); ++c)
    for (int p = 0; p < h * w; ++p) mean.channel(0)[p] += f.channel(c)[p] / f.channels();
  Tensor single;
  if (oh <= h) {
    const int r = h / oh;
    single = Tensor::chw(1, oh, ow);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j) acc += mean.at(0, y * r + i, x * r + j);
        single.at(0, y, x) = acc / (r * r);
      }
  } else {
    single = bilinear_oracle(mean, oh, ow);
  }
  Tensor out = Tensor::chw(out_c, oh, ow);
  for (int c = 0; c < out_c; ++c)
    for (int p = 0; p < oh * ow; ++p) out.channel(c)[p] = single.channel(0)[p];
  return out;
}

// Per-channel 3x3 box filter with zero padding.
Tensor box3_oracle(const Tensor& f) {
  Tensor out = Tensor::chw(f.channels(), f.height(), f.width());
  for (int c = 0; c < f.channels(); ++c)
    for (int y = 0; y < f.height(); ++y)
      for (int x = 0; x < f.width(); ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy >= 0 && yy < f.height() && xx >= 0 && xx < f.width()) acc += f.at(c, yy, xx);
          }
        out.at(c, y, x) = acc / 9.0;
      }
  return out;
}

void freeze_to_averaging(Backbone& bb) {
  for (ExchangeStage& st : bb.stages()) {
    for (layers::ConvBlock& own : st.own) {
      Tensor& w = own.conv.weight.mutable_value();
      w.fill(0.0);
      const int c = w.dim(0);
      for (int o = 0; o < c; ++o)
        for (int k = 0; k < 9; ++k) w[(static_cast<std::size_t>(o) * c + o) * 9 + k] = 1.0 / 9.0;
    }
    for (Resampler& r : st.cross) {
      Tensor& w = r.conv.weight.mutable_value();
      const int k = w.dim(2);
      w.fill(1.0 / (static_cast<double>(w.dim(1)) * k * k));
    }
  }
}

Tensor axpy(double a, const Tensor& x, double b, const Tensor& y) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

}  // namespace

TEST_CASE("branch shapes follow the scaling law") {
  ParamStore store;
  Rng rng(1);
  BackboneConfig cfg;
  Backbone bb(store, cfg, rng);
  std::mt19937_64 r(2);
  const BranchFeatureSet b = bb.build_branches(constant(random_tensor({16, 64, 64}, r)));
  CHECK(b[0].shape() == std::vector<int>{16, 64, 64});
  CHECK(b[1].shape() == std::vector<int>{32, 32, 32});
  CHECK(b[2].shape() == std::vector<int>{64, 16, 16});
  CHECK(b[3].shape() == std::vector<int>{128, 8, 8});
  CHECK_NOTHROW(check_shape_law(b, cfg, 64, 64));
}

TEST_CASE("shape law holds after any number of exchange stages") {
  std::mt19937_64 r(3);
  for (int factor : {1, 2, 3})
    for (int stages : {0, 1, 3}) {
      ParamStore store;
      Rng rng(4);
      BackboneConfig cfg{.width = 4, .factor = factor, .exchange_stages = stages};
      Backbone bb(store, cfg, rng);
      const int side = 2 * cfg.scale(3);
      BranchFeatureSet b = bb.build_branches(constant(random_tensor({4, side, side * 2}, r)));
      CHECK_NOTHROW(check_shape_law(b, cfg, side, side * 2));
      for (int s = 0; s < stages; ++s) {
        b = bb.exchange(b, s);
        CHECK_NOTHROW(check_shape_law(b, cfg, side, side * 2));
      }
    }
}

TEST_CASE("factor one gives four equal-resolution branches") {
  ParamStore store;
  Rng rng(1);
  BackboneConfig cfg{.width = 8, .factor = 1, .exchange_stages = 2};
  Backbone bb(store, cfg, rng);
  std::mt19937_64 r(2);
  const BranchFeatureSet b = bb(constant(random_tensor({8, 12, 12}, r)));
  for (int i = 0; i < kBranches; ++i) CHECK(b[i].shape() == std::vector<int>{8, 12, 12});
}

TEST_CASE("indivisible input sizes are rejected") {
  ParamStore store;
  Rng rng(1);
  BackboneConfig cfg;
  Backbone bb(store, cfg, rng);
  CHECK_THROWS_AS(bb.build_branches(constant(Tensor::chw(16, 60, 64))), ValidationError);
  CHECK_THROWS_AS(bb.build_branches(constant(Tensor::chw(8, 64, 64))), ValidationError);
  CHECK_THROWS_AS(cfg.validate(64, 60), ValidationError);
  CHECK_NOTHROW(cfg.validate(64, 56));
}

TEST_CASE("with zeroed inputs and cross paths a branch keeps only its own path") {
  ParamStore store;
  Rng rng(5);
  BackboneConfig cfg{.width = 4, .factor = 2, .exchange_stages = 1};
  Backbone bb(store, cfg, rng);
  for (Resampler& rs : bb.stages()[0].cross) rs.conv.weight.mutable_value().fill(0.0);
  std::mt19937_64 r(6);
  BranchFeatureSet in = random_set(cfg, 16, 16, r);
  for (int b : {0, 1, 3}) in[b] = constant(Tensor(in[b].shape(), 0.0));
  const BranchFeatureSet out = bb.exchange(in, 0);
  const Tensor expect = ops::add(in[2], bb.stages()[0].own[2](in[2])).value();
  CHECK(max_abs_diff(out[2].value(), expect) == 0.0);
}

TEST_CASE("frozen averaging resamplers match a per-path oracle") {
  ParamStore store;
  Rng rng(7);
  BackboneConfig cfg{.width = 3, .factor = 2, .exchange_stages = 1};
  Backbone bb(store, cfg, rng);
  bb.set_linear(true);
  freeze_to_averaging(bb);
  std::mt19937_64 r(8);
  const BranchFeatureSet in = random_set(cfg, 16, 24, r);
  const BranchFeatureSet out = bb.exchange(in, 0);
  for (int b = 0; b < kBranches; ++b) {
    const int c = cfg.branch_width(b), h = 16 / cfg.scale(b), w = 24 / cfg.scale(b);
    Tensor expect = in[b].value();
    const Tensor own = box3_oracle(in[b].value());
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += own[i];
    for (int a = 0; a < kBranches; ++a) {
      if (a == b) continue;
      const Tensor path = averaging_resample_oracle(in[a].value(), c, h, w);
      for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += path[i];
    }
    CHECK(max_abs_diff(out[b].value(), expect) < 1e-6);
  }
}

TEST_CASE("exchange is linear when nonlinearities are disabled") {
  ParamStore store;
  Rng rng(9);
  BackboneConfig cfg{.width = 4, .factor = 2, .exchange_stages = 2};
  Backbone bb(store, cfg, rng);
  bb.set_linear(true);
  std::mt19937_64 r(10);
  const BranchFeatureSet x = random_set(cfg, 16, 16, r), y = random_set(cfg, 16, 16, r);
  const double a = 0.7, b = -1.9;
  BranchFeatureSet mix;
  for (int i = 0; i < kBranches; ++i) mix[i] = constant(axpy(a, x[i].value(), b, y[i].value()));
  for (int s = 0; s < 2; ++s) {
    const BranchFeatureSet ex = bb.exchange(x, s), ey = bb.exchange(y, s), em = bb.exchange(mix, s);
    for (int i = 0; i < kBranches; ++i)
      CHECK(max_abs_diff(em[i].value(), axpy(a, ex[i].value(), b, ey[i].value())) < 1e-6);
  }
}

TEST_CASE("outputs do not depend on the order samples are processed in") {
  ParamStore store;
  Rng rng(11);
  BackboneConfig cfg{.width = 4, .factor = 2, .exchange_stages = 2};
  Backbone bb(store, cfg, rng);
  std::mt19937_64 r(12);
  const Tensor s0 = random_tensor({4, 16, 16}, r), s1 = random_tensor({4, 16, 16}, r);
  const BranchFeatureSet a0 = bb(constant(s0)), a1 = bb(constant(s1));
  const BranchFeatureSet b1 = bb(constant(s1)), b0 = bb(constant(s0));
  for (int i = 0; i < kBranches; ++i) {
    CHECK(max_abs_diff(a0[i].value(), b0[i].value()) == 0.0);
    CHECK(max_abs_diff(a1[i].value(), b1[i].value()) == 0.0);
  }
}

TEST_CASE("resample identity and constant maps") {
  std::mt19937_64 r(13);
  const Var f = constant(random_tensor({3, 4, 4}, r));
  CHECK(resample(f, 4, 4, Var()).node() == f.node());
  Tensor eye({3, 3, 1, 1}, 0.0);
  for (int c = 0; c < 3; ++c) eye[static_cast<std::size_t>(c) * 3 + c] = 1.0;
  CHECK(max_abs_diff(resample(f, 4, 4, constant(eye)).value(), f.value()) == 0.0);

  const Var flat = constant(Tensor::chw(2, 3, 5, -0.8));
  const Tensor up = resample(flat, 12, 20, Var()).value();
  for (double v : up.values()) CHECK(v == doctest::Approx(-0.8).epsilon(1e-15));
}

TEST_CASE("resample upsampling of a 2x2 ramp matches the interpolation grid") {
  const Var ramp = constant(Tensor({1, 2, 2}, std::vector<double>{1.0, 2.0, 3.0, 4.0}));
  const Tensor up = resample(ramp, 4, 4, Var()).value();
  const double grid[4][4] = {{1.0, 1.25, 1.75, 2.0},
                             {1.5, 1.75, 2.25, 2.5},
                             {2.5, 2.75, 3.25, 3.5},
                             {3.0, 3.25, 3.75, 4.0}};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(up.at(0, y, x) == doctest::Approx(grid[y][x]).epsilon(1e-15));
}

TEST_CASE("resample rejects non-integer ratios") {
  const Var f = constant(Tensor::chw(2, 6, 6));
  const Var k2 = constant(Tensor({2, 2, 2, 2}, 0.25));
  CHECK_THROWS_AS(resample(f, 4, 4, k2), ValidationError);
  CHECK_THROWS_AS(resample(constant(Tensor::chw(2, 4, 4)), 6, 6, Var()), ValidationError);
  CHECK_THROWS_AS(resample(f, 3, 2, k2), ValidationError);
  CHECK_THROWS_AS(resample(f, 3, 3, constant(Tensor({2, 2, 3, 3}, 0.1))), ValidationError);
  CHECK(resample(f, 3, 3, k2).shape() == std::vector<int>{2, 3, 3});
}

TEST_CASE("backbone gradients match finite differences") {
  ParamStore store;
  Rng rng(14);
  BackboneConfig cfg{.width = 2, .factor = 2, .exchange_stages = 1};
  Backbone bb(store, cfg, rng);
  std::mt19937_64 r(15);
  const Var f(random_tensor({2, 8, 8}, r), true);
  std::vector<Var> wrt{f};
  for (const auto& p : store.params()) wrt.push_back(p.var);
  auto loss = [&] {
    const BranchFeatureSet b = bb(f);
    return ops::sum({probe_sum(b[0], 1), probe_sum(b[1], 2), probe_sum(b[2], 3), probe_sum(b[3], 4)});
  };
  const auto rep = gradcheck(loss, wrt, {.max_per_tensor = 8});
  INFO(rep.first_failure);
  CHECK(rep.failed == 0);
  CHECK(rep.checked > 100);
}
