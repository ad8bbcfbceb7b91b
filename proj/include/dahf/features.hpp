#pragma once

#include <array>
#include <vector>

#include "dahf/layers.hpp"

namespace dahf::features {

/// Which input streams feed the fused feature map.
struct FeatureToggles {
  bool rgb = true;
  bool noise = true;  // learned denoiser residual
  bool srm = false;   // fixed high-pass residual
  bool frequency = true;
  bool dam = true;    // dual attention (CA + PA); off = projection only
};

struct FeatureConfig {
  int width = 16;             // C, the common width of every fused stream
  int denoiser_width = 16;
  int denoiser_layers = 5;
  int ca_reduction = 4;       // channel-attention bottleneck ratio
  int attention_max_keys = 256;
  double tau_init = 0.05;
  FeatureToggles toggles;

  void validate() const;
};

/// Spatial self-attention with its own query/key/value projections.
/// Query/key width max(1, C/8); value width C.
struct PositionAttention {
  layers::Conv query, key, value;
  int max_keys = 256;

  /// Aggregated values (C,H,W); when H*W exceeds max_keys, keys and values
  /// are average-pooled by the smallest integer factor that fits.
  Var operator()(const Var& f, Tensor* probs_out = nullptr) const;
};

PositionAttention make_position_attention(ParamStore& store, const std::string& name, int width, int max_keys,
                                          Rng& rng);

/// Pooling factor applied to keys/values for an h x w map under `max_keys`.
int key_pool_factor(int h, int w, int max_keys);

struct ChannelAttention {
  layers::Linear squeeze, excite;
  Var tau;  // per-channel threshold, kept in [0, 0.99]
};

struct ChannelAttentionOut {
  Var features;
  Var weights;  // sigmoid weights before gating, in [0,1]
  Var gated;
};

ChannelAttention make_channel_attention(ParamStore& store, const std::string& name, int width, int reduction,
                                        double tau_init, Rng& rng);
ChannelAttentionOut channel_attention(const ChannelAttention& ca, const Var& f);

struct DualAttention {
  layers::Conv project;  // concatenated streams -> C
  ChannelAttention ca;
  PositionAttention pa;
  Var lambda_ca, lambda_pa, lambda_res;
  bool enabled = true;
};

/// Concatenates the spatial streams, projects to C and fuses
/// lambda_ca * CA + lambda_pa * PA + lambda_res * F_in.
Var dual_attention_fuse(const DualAttention& dam, const std::vector<Var>& streams);

/// softmax(alpha, beta) weighted sum of the spatial and frequency maps.
Var combine_spatial_frequency(const Var& spatial, const Var& freq, const Var& alpha, const Var& beta);

/// Blockwise 8x8 DCT magnitudes of the luma channel, laid out (64, H/8, W/8)
/// with channel u*8+v holding coefficient (u, v).
Tensor dct_magnitudes(const Tensor& image);

/// The three fixed 5x5 high-pass kernels (first-order, second-order, 5x5 square).
const std::array<std::array<double, 25>, 3>& srm_kernels();
/// (9, 3, 5, 5) weights applying each kernel to each input channel separately.
Tensor srm_weight();

class FeatureExtractor {
 public:
  FeatureExtractor(ParamStore& store, const FeatureConfig& cfg, Rng& rng);

  const FeatureConfig& config() const { return cfg_; }

  /// image - denoise(image): the denoiser output itself (3,H,W).
  Var noise_residual(const Var& image) const;
  /// Noise residual lifted to width C.
  Var extract_noise(const Var& image) const;
  /// 9-channel fixed high-pass residual.
  Var extract_srm(const Var& image) const;
  /// DCT magnitude map projected to C and upsampled to full resolution.
  /// The magnitudes are a constant of the pixels: no gradient reaches the image.
  Var extract_frequency(const Var& image) const;
  Var extract_rgb(const Var& image) const;

  /// Full feature enhancement: the fused (C,H,W) map.
  Var operator()(const Var& image) const;

  const DualAttention& dual_attention() const { return dam_; }
  Var alpha() const { return alpha_; }
  Var beta() const { return beta_; }

 private:
  FeatureConfig cfg_;
  layers::ConvBlock rgb_stem_;
  std::vector<layers::Conv> denoiser_;
  layers::ConvBlock noise_stem_;
  Var srm_weight_;
  layers::ConvBlock srm_stem_;
  layers::Conv freq_project_;
  DualAttention dam_;
  Var alpha_, beta_;
};

/// Validates that an image is a finite (3,H,W) tensor.
void require_image(const Tensor& image, const char* op);

}  // namespace dahf::features
