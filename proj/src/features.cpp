#include "dahf/features.hpp"

#include <cmath>

#include "dahf/dct.hpp"

namespace dahf::features {

void require_image(const Tensor& image, const char* op) {
  if (image.rank() != 3 || image.channels() != 3) {
    throw ValidationError(std::string(op) + ": expected a (3,H,W) image, got " + image.shape_string());
  }
  if (!image.all_finite()) throw ValidationError(std::string(op) + ": non-finite input");
}

void FeatureConfig::validate() const {
  if (width < 1 || denoiser_width < 1 || ca_reduction < 1 || attention_max_keys < 1) {
    throw ValidationError("feature widths and ratios must be >= 1");
  }
  if (denoiser_layers < 2) throw ValidationError("denoiser needs at least 2 layers");
  if (!(tau_init >= 0.0 && tau_init < 1.0)) throw ValidationError("tau_init must lie in [0, 1)");
  if (!toggles.rgb && !toggles.noise && !toggles.srm) {
    throw ValidationError("at least one spatial stream (rgb, noise, srm) must be enabled");
  }
}

int key_pool_factor(int h, int w, int max_keys) {
  for (int p = 1; p <= std::max(h, w); ++p) {
    if (h % p || w % p) continue;
    if ((h / p) * (w / p) <= max_keys) return p;
  }
  throw ValidationError("attention: no pooling factor divides " + std::to_string(h) + "x" + std::to_string(w) +
                        " within the key budget");
}

PositionAttention make_position_attention(ParamStore& store, const std::string& name, int width, int max_keys,
                                          Rng& rng) {
  const int d = std::max(1, width / 8);
  PositionAttention pa;
  pa.query = layers::make_conv_same(store, name + ".query", width, d, 1, rng);
  pa.key = layers::make_conv_same(store, name + ".key", width, d, 1, rng);
  pa.value = layers::make_conv_same(store, name + ".value", width, width, 1, rng, layers::Init::Small);
  pa.max_keys = max_keys;
  return pa;
}

Var PositionAttention::operator()(const Var& f, Tensor* probs_out) const {
  const int p = key_pool_factor(f.value().height(), f.value().width(), max_keys);
  const Var q = query(f);
  Var k = key(f), v = value(f);
  if (p > 1) {
    k = ops::avg_pool(k, p);
    v = ops::avg_pool(v, p);
  }
  return ops::attention(q, k, v, probs_out);
}

ChannelAttention make_channel_attention(ParamStore& store, const std::string& name, int width, int reduction,
                                        double tau_init, Rng& rng) {
  const int hidden = std::max(1, width / reduction);
  ChannelAttention ca;
  ca.squeeze = layers::make_linear(store, name + ".squeeze", width, hidden, rng);
  ca.excite = layers::make_linear(store, name + ".excite", hidden, width, rng);
  ca.tau = store.add(name + ".tau", Tensor({width}, tau_init));
  return ca;
}

ChannelAttentionOut channel_attention(const ChannelAttention& ca, const Var& f) {
  ChannelAttentionOut out;
  out.weights = ops::sigmoid(ca.excite(ops::relu(ca.squeeze(ops::global_avg_pool(f)))));
  out.gated = ops::threshold_gate(out.weights, ca.tau);
  out.features = ops::mul_channels(f, out.gated);
  return out;
}

Var dual_attention_fuse(const DualAttention& dam, const std::vector<Var>& streams) {
  if (streams.empty()) throw ValidationError("dual_attention_fuse: no input streams");
  for (const Var& s : streams) {
    if (s.value().rank() != 3 || s.value().height() != streams[0].value().height() ||
        s.value().width() != streams[0].value().width()) {
      throw ValidationError("dual_attention_fuse: spatial size mismatch between streams");
    }
  }
  const Var f_in = dam.project(streams.size() == 1 ? streams[0] : ops::concat_channels(streams));
  if (!dam.enabled) return f_in;
  const Var ca = channel_attention(dam.ca, f_in).features;
  const Var pa = dam.pa(f_in);
  return ops::sum({ops::scale_by(ca, dam.lambda_ca), ops::scale_by(pa, dam.lambda_pa),
                   ops::scale_by(f_in, dam.lambda_res)});
}

Var combine_spatial_frequency(const Var& spatial, const Var& freq, const Var& alpha, const Var& beta) {
  if (!spatial.value().same_shape(freq.value())) {
    throw ValidationError("combine_spatial_frequency: " + spatial.value().shape_string() + " vs " +
                          freq.value().shape_string());
  }
  const Var w = ops::softmax(ops::stack({alpha, beta}));
  return ops::add(ops::scale_by(spatial, ops::index(w, 0)), ops::scale_by(freq, ops::index(w, 1)));
}

Tensor dct_magnitudes(const Tensor& image) {
  require_image(image, "extract_frequency");
  const int h = image.height(), w = image.width();
  if (h % kDctBlock || w % kDctBlock) {
    throw ValidationError("extract_frequency: size " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not a multiple of 8");
  }
  std::vector<double> luma(static_cast<std::size_t>(h) * w);
  for (int p = 0; p < h * w; ++p) {
    luma[p] = 0.299 * image.channel(0)[p] + 0.587 * image.channel(1)[p] + 0.114 * image.channel(2)[p];
  }
  block_dct_forward(luma, h, w);
  const int bh = h / kDctBlock, bw = w / kDctBlock;
  Tensor out = Tensor::chw(kDctBlock * kDctBlock, bh, bw);
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx)
      for (int u = 0; u < kDctBlock; ++u)
        for (int v = 0; v < kDctBlock; ++v) {
          out.at(u * kDctBlock + v, by, bx) = std::abs(luma[(by * kDctBlock + u) * w + bx * kDctBlock + v]);
        }
  return out;
}

const std::array<std::array<double, 25>, 3>& srm_kernels() {
  static const std::array<std::array<double, 25>, 3> k = {{
      {0, 0, 0, 0, 0,  //
       0, 0, 0, 0, 0,  //
       0, 0, -1, 1, 0,  //
       0, 0, 0, 0, 0,  //
       0, 0, 0, 0, 0},
      {0, 0, 0, 0, 0,  //
       0, 0, 0, 0, 0,  //
       0, 0.5, -1, 0.5, 0,  //
       0, 0, 0, 0, 0,  //
       0, 0, 0, 0, 0},
      {-1 / 12.0, 2 / 12.0, -2 / 12.0, 2 / 12.0, -1 / 12.0,  //
       2 / 12.0, -6 / 12.0, 8 / 12.0, -6 / 12.0, 2 / 12.0,  //
       -2 / 12.0, 8 / 12.0, -12 / 12.0, 8 / 12.0, -2 / 12.0,  //
       2 / 12.0, -6 / 12.0, 8 / 12.0, -6 / 12.0, 2 / 12.0,  //
       -1 / 12.0, 2 / 12.0, -2 / 12.0, 2 / 12.0, -1 / 12.0},
  }};
  return k;
}

Tensor srm_weight() {
  Tensor w({9, 3, 5, 5}, 0.0);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) {
      const int o = c * 3 + k;
      for (int i = 0; i < 25; ++i) w[(static_cast<std::size_t>(o) * 3 + c) * 25 + i] = srm_kernels()[k][i];
    }
  return w;
}

FeatureExtractor::FeatureExtractor(ParamStore& store, const FeatureConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.width;
  const auto& t = cfg_.toggles;
  int streams = 0;
  if (t.rgb) {
    rgb_stem_ = layers::make_conv_block(store, "features.rgb", 3, c, 3, 1, rng);
    ++streams;
  }
  if (t.noise) {
    const int d = cfg_.denoiser_width;
    denoiser_.push_back(layers::make_conv_same(store, "features.denoiser.0", 3, d, 3, rng));
    for (int l = 1; l + 1 < cfg_.denoiser_layers; ++l) {
      denoiser_.push_back(layers::make_conv_same(store, "features.denoiser." + std::to_string(l), d, d, 3, rng));
    }
    denoiser_.push_back(layers::make_conv_same(store, "features.denoiser." + std::to_string(cfg_.denoiser_layers - 1),
                                               d, 3, 3, rng, layers::Init::Zero));
    noise_stem_ = layers::make_conv_block(store, "features.noise", 3, c, 3, 1, rng);
    ++streams;
  }
  if (t.srm) {
    srm_weight_ = store.add("features.srm.weight", srm_weight(), false);
    srm_stem_ = layers::make_conv_block(store, "features.srm", 9, c, 3, 1, rng);
    ++streams;
  }
  if (t.frequency) {
    freq_project_ = layers::make_conv_same(store, "features.frequency", kDctBlock * kDctBlock, c, 1, rng);
    alpha_ = store.add("features.alpha", Tensor::scalar(0.0));
    beta_ = store.add("features.beta", Tensor::scalar(0.0));
  }
  dam_.project = layers::make_conv_same(store, "features.dam.project", streams * c, c, 1, rng);
  dam_.enabled = t.dam;
  if (t.dam) {
    dam_.ca = make_channel_attention(store, "features.dam.ca", c, cfg_.ca_reduction, cfg_.tau_init, rng);
    dam_.pa = make_position_attention(store, "features.dam.pa", c, cfg_.attention_max_keys, rng);
    dam_.lambda_ca = store.add("features.dam.lambda_ca", Tensor::scalar(0.5));
    dam_.lambda_pa = store.add("features.dam.lambda_pa", Tensor::scalar(0.5));
    dam_.lambda_res = store.add("features.dam.lambda_res", Tensor::scalar(1.0));
  }
}

Var FeatureExtractor::noise_residual(const Var& image) const {
  require_image(image.value(), "extract_noise");
  if (denoiser_.empty()) throw ValidationError("extract_noise: noise stream is disabled");
  Var x = image;
  for (std::size_t l = 0; l + 1 < denoiser_.size(); ++l) x = ops::relu(denoiser_[l](x));
  return denoiser_.back()(x);
}

Var FeatureExtractor::extract_noise(const Var& image) const { return noise_stem_(noise_residual(image)); }

Var FeatureExtractor::extract_srm(const Var& image) const {
  require_image(image.value(), "extract_srm");
  const Var w = srm_weight_ ? srm_weight_ : constant(srm_weight());
  return ops::conv2d(ops::pad_replicate(image, 2), w, Var(), 1, 0);
}

Var FeatureExtractor::extract_frequency(const Var& image) const {
  if (!cfg_.toggles.frequency) throw ValidationError("extract_frequency: frequency stream is disabled");
  const Var coeffs = constant(dct_magnitudes(image.value()));
  return ops::bilinear_resize(freq_project_(coeffs), image.value().height(), image.value().width());
}

Var FeatureExtractor::extract_rgb(const Var& image) const {
  require_image(image.value(), "extract_rgb");
  return rgb_stem_(image);
}

Var FeatureExtractor::operator()(const Var& image) const {
  require_image(image.value(), "features");
  std::vector<Var> streams;
  if (cfg_.toggles.rgb) streams.push_back(extract_rgb(image));
  if (cfg_.toggles.noise) streams.push_back(extract_noise(image));
  if (cfg_.toggles.srm) streams.push_back(srm_stem_(extract_srm(image)));
  const Var spatial = dual_attention_fuse(dam_, streams);
  if (!cfg_.toggles.frequency) return spatial;
  return combine_spatial_frequency(spatial, extract_frequency(image), alpha_, beta_);
}

}  // namespace dahf::features
