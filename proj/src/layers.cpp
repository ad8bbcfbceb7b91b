#include "dahf/layers.hpp"

#include <numeric>

namespace dahf::layers {

Conv make_conv(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride, int pad,
               bool bias, Rng& rng, Init init) {
  std::vector<int> shape{out, in, kernel, kernel};
  Tensor w;
  switch (init) {
    case Init::He:
      w = he_normal(shape, in * kernel * kernel, rng);
      break;
    case Init::Small:
      w = he_normal(shape, in * kernel * kernel, rng, 0.25);
      break;
    case Init::Zero:
      w = Tensor(shape, 0.0);
      break;
  }
  Conv c;
  c.weight = store.add(name + ".weight", std::move(w));
  if (bias) c.bias = store.add(name + ".bias", Tensor({out}, 0.0));
  c.stride = stride;
  c.pad = pad;
  return c;
}

int norm_groups(int width) { return std::gcd(width, 8); }

GroupNorm make_group_norm(ParamStore& store, const std::string& name, int width) {
  GroupNorm n;
  n.gamma = store.add(name + ".gamma", Tensor({width}, 1.0));
  n.beta = store.add(name + ".beta", Tensor({width}, 0.0));
  n.groups = norm_groups(width);
  return n;
}

Var ConvBlock::operator()(const Var& x, bool linear) const {
  Var y = conv(x);
  if (linear) return y;
  return ops::relu(norm(y));
}

ConvBlock make_conv_block(ParamStore& store, const std::string& name, int in, int out, int kernel, int stride,
                          Rng& rng) {
  ConvBlock b;
  b.conv = make_conv(store, name + ".conv", in, out, kernel, stride, kernel / 2, false, rng);
  b.norm = make_group_norm(store, name + ".norm", out);
  return b;
}

Linear make_linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng, double bias_init) {
  Linear l;
  l.weight = store.add(name + ".weight", he_normal({out, in}, in, rng, 1.0));
  l.bias = store.add(name + ".bias", Tensor({out}, bias_init));
  return l;
}

}  // namespace dahf::layers
