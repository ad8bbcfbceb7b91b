#pragma once

#include <array>
#include <vector>

#include "dahf/layers.hpp"

namespace dahf::backbone {

inline constexpr int kBranches = 4;

/// F_1..F_4 at scales 1, 1/s, 1/s^2, 1/s^3 with widths C, sC, s^2C, s^3C.
using BranchFeatureSet = std::array<Var, kBranches>;

struct BackboneConfig {
  int width = 16;  // C
  int factor = 2;  // s
  int exchange_stages = 2;

  /// Throws unless h and w are divisible by s^3.
  void validate(int h, int w) const;
  int branch_width(int b) const;  // b = 0..3
  int scale(int b) const;         // s^b
};

/// Resampling path from branch a to branch b.
struct Resampler {
  int from = 0, to = 0;
  layers::Conv conv;  // strided (down) or 1x1 projection (up)

  /// Down: conv with kernel = stride = s^(to-from). Up: 1x1 projection, then
  /// bilinear upsampling to (out_h, out_w).
  Var operator()(const Var& f, int out_h, int out_w) const;
};

Resampler make_resampler(ParamStore& store, const std::string& name, const BackboneConfig& cfg, int from, int to,
                         Rng& rng);

/// Stand-alone resample to a target grid/width: identity when nothing
/// changes, strided averaging conv when shrinking, bilinear + 1x1 projection
/// when enlarging. `weight` supplies the conv or projection kernel.
Var resample(const Var& f, int target_h, int target_w, const Var& weight);

struct ExchangeStage {
  std::array<layers::ConvBlock, kBranches> own;
  std::vector<Resampler> cross;  // every (a, b) pair with a != b
};

class Backbone {
 public:
  Backbone(ParamStore& store, const BackboneConfig& cfg, Rng& rng);

  const BackboneConfig& config() const { return cfg_; }

  /// Strided conv stacks from the fused full-resolution map.
  BranchFeatureSet build_branches(const Var& fused) const;
  /// out_b = F_b + own_b(F_b) + sum_{a != b} resample_{a->b}(F_a).
  BranchFeatureSet exchange(const BranchFeatureSet& in, int stage) const;
  BranchFeatureSet operator()(const Var& fused) const;

  const std::vector<ExchangeStage>& stages() const { return stages_; }
  std::vector<ExchangeStage>& stages() { return stages_; }

  /// Disables normalization and rectifiers (for linearity checks).
  void set_linear(bool on) { linear_ = on; }

 private:
  BackboneConfig cfg_;
  std::array<layers::ConvBlock, kBranches - 1> down_;
  std::vector<ExchangeStage> stages_;
  bool linear_ = false;
};

/// Validates the scaling law of a branch set for input (h, w).
void check_shape_law(const BranchFeatureSet& b, const BackboneConfig& cfg, int h, int w);

}  // namespace dahf::backbone
