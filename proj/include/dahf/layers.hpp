#pragma once

#include <string>

#include "dahf/ops.hpp"
#include "dahf/params.hpp"

// Parameterised building blocks shared by the feature, backbone and head
// modules. Each block registers its tensors in a ParamStore under a prefix.
namespace dahf::layers {

struct Conv {
  Var weight;  // (out, in, k, k)
  Var bias;    // (out) or empty
  int stride = 1;
  int pad = 0;

  Var operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }
  int out_channels() const { return weight.value().dim(0); }
};

enum class Init { He, Zero, Small };

Conv make_conv(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride, int pad,
               bool bias, Rng& rng, Init init = Init::He);

/// Conv with "same" padding for odd kernels.
inline Conv make_conv_same(ParamStore& store, const std::string& name, int in, int out, int kernel, Rng& rng,
                           Init init = Init::He) {
  return make_conv(store, name, in, out, kernel, 1, kernel / 2, true, rng, init);
}

struct GroupNorm {
  Var gamma;
  Var beta;
  int groups = 1;

  Var operator()(const Var& x) const { return ops::group_norm(x, gamma, beta, groups); }
};

/// Group count used for a width: gcd(width, 8).
int norm_groups(int width);
GroupNorm make_group_norm(ParamStore& store, const std::string& name, int width);

/// conv -> group norm -> ReLU. In linear mode only the convolution runs.
struct ConvBlock {
  Conv conv;
  GroupNorm norm;

  Var operator()(const Var& x, bool linear = false) const;
};

ConvBlock make_conv_block(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride,
                          Rng& rng);

struct Linear {
  Var weight;  // (out, in)
  Var bias;    // (out)

  Var operator()(const Var& x) const { return ops::linear(x, weight, bias); }
};

Linear make_linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, double bias_init = 0.0);

}  // namespace dahf::layers
