#include "dahf/params.hpp"

#include <cmath>

namespace dahf {

Var ParamStore::add(const std::string& name, Tensor init, bool trainable) {
  if (find(name)) throw ValidationError("duplicate parameter name: " + name);
  Var v(std::move(init), trainable);
  params_.push_back({name, v, trainable});
  return v;
}

const Parameter* ParamStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Var ParamStore::get(const std::string& name) const {
  const Parameter* p = find(name);
  if (!p) throw ValidationError("unknown parameter: " + name);
  return p->var;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!trainable_only || p.trainable) n += p.var.value().size();
  return n;
}

Tensor he_normal(std::vector<int> shape, int fan_in, Rng& rng, double gain) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> nd(0.0, gain / std::sqrt(static_cast<double>(std::max(fan_in, 1))));
  for (double& v : t.values()) v = nd(rng);
  return t;
}

Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> ud(lo, hi);
  for (double& v : t.values()) v = ud(rng);
  return t;
}

double global_grad_norm(const ParamStore& store) {
  double sq = 0.0;
  for (const auto& p : store.params()) {
    if (!p.trainable || !p.var.has_grad()) continue;
    for (double g : p.var.grad().values()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = global_grad_norm(store);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : store.params()) {
      if (!p.trainable || !p.var.has_grad()) continue;
      for (double& g : p.var.grad_ref().values()) g *= s;
    }
  }
  return norm;
}

Adam::Adam(const ParamStore& store, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : store.params()) {
    m_.emplace_back(p.var.shape(), 0.0);
    v_.emplace_back(p.var.shape(), 0.0);
  }
}

void Adam::step(ParamStore& store, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto& params = store.params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.trainable || !p.var.has_grad()) continue;
    Tensor& w = p.var.mutable_value();
    const Tensor& g = p.var.grad();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

}  // namespace dahf
