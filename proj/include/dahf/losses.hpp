#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "dahf/heads.hpp"

namespace dahf::losses {

inline constexpr double kLogEps = 1e-12;

/// Raised when a loss component is NaN or infinite.
class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EdgeMode { Absolute, Literal };

std::string_view edge_mode_name(EdgeMode m);
EdgeMode parse_edge_mode(std::string_view name);

struct LossConfig {
  double edge_weight = 1.0;  // w
  EdgeMode edge_mode = EdgeMode::Absolute;
  bool use_edge = true;

  void validate() const;
};

/// Number of times a probability was clamped at kLogEps since the last reset.
std::uint64_t clamp_events();
void reset_clamp_events();

/// -log(max(p, eps)) summed over stages for one sample.
Var detection_loss(const heads::ClassProbPyramid& probs, const LabelPath& labels);
/// Single-stage term -log(max(p[label], eps)).
Var stage_detection_loss(const Var& probs, int label);

/// Area-average to (h, w) then threshold at 0.5.
Tensor downsample_mask(const Tensor& gt, int h, int w);

/// Mean binary cross-entropy of the forged channel against a binary target
/// at the map's resolution.
Var mask_bce(const Var& mask2, const Tensor& target);
/// Sum over stages of mask_bce against the downsampled ground truth.
Var localization_loss(const heads::MaskPyramid& masks, const Tensor& gt_mask);

/// Sobel correlation with zero padding; dx uses [[-1,0,1],[-2,0,2],[-1,0,1]].
Var sobel(const Var& map, bool x_direction);
Tensor sobel_kernel(bool x_direction);

/// Edge term on the finest forged-probability map m (1,H,W) against M (1,H,W).
Var edge_loss(const Var& m, const Tensor& gt, const LossConfig& cfg);

struct LossTerms {
  Var det, loc, edge, total;
};

/// det + loc + edge; throws naming the first non-finite component.
Var total_loss(const Var& det, const Var& loc, const Var& edge);

/// Every term for one sample given the head outputs.
LossTerms sample_loss(const heads::MaskPyramid& masks, const heads::ClassProbPyramid& probs, const LabelPath& labels,
                      const Tensor& gt_mask, const LossConfig& cfg);

}  // namespace dahf::losses
