#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dahf/autograd.hpp"

namespace dahf {

using Rng = std::mt19937_64;

struct Parameter {
  std::string name;
  Var var;
  bool trainable = true;
};

/// Owns every parameter of a model in registration order. Frozen
/// parameters (e.g. SRM kernels) are stored and serialized but never
/// receive gradients.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init, bool trainable = true);

  const std::vector<Parameter>& params() const { return params_; }
  std::vector<Parameter>& params() { return params_; }
  const Parameter* find(const std::string& name) const;
  Var get(const std::string& name) const;

  void zero_grad();
  std::size_t scalar_count(bool trainable_only = false) const;

 private:
  std::vector<Parameter> params_;
};

Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng, double gain = 1.4142135623730951);
Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng);

double global_grad_norm(const ParamStore& store);
/// Rescales all trainable gradients so their joint L2 norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(ParamStore& store, double max_norm);

/// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  explicit Adam(const ParamStore& store, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamStore& store, double lr);
  long steps() const { return t_; }

 private:
  double beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace dahf
