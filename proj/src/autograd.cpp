#include "dahf/autograd.hpp"

#include <algorithm>
#include <unordered_set>

namespace dahf {

namespace {
thread_local bool t_grad_enabled = true;
thread_local KinkProbe* t_probe = nullptr;
}  // namespace

Tensor& Node::grad_ref() {
  if (grad.empty() && !value.empty()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

void Node::accumulate(const Tensor& g) { accumulate(g.span()); }

void Node::accumulate(std::span<const double> g) {
  Tensor& dst = grad_ref();
  if (g.size() != dst.size()) throw ValidationError("gradient size mismatch");
  double* d = dst.data();
  const std::size_t n = g.size();
  for (std::size_t i = 0; i < n; ++i) d[i] += g[i];
}

Var::Var(Tensor value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

void Var::zero_grad() {
  if (node_ && !node_->grad.empty()) node_->grad.fill(0.0);
}

double Var::item() const {
  if (value().size() != 1) throw ValidationError("item() on non-scalar " + value().shape_string());
  return value()[0];
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Var make_result(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  if (t_grad_enabled) {
    const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (const Var& v : inputs) node->inputs.push_back(v.node());
      node->backward = std::move(backward);
    }
  }
  return Var(std::move(node));
}

Var constant(Tensor value) { return Var(std::move(value), false); }

Var detach(const Var& v) { return Var(v.value(), false); }

void backward(const Var& root, double seed) {
  if (!root.requires_grad()) return;
  if (root.value().size() != 1) throw ValidationError("backward() requires a scalar root");

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_ref()[0] += seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

KinkProbe::KinkProbe() : previous_(t_probe) { t_probe = this; }
KinkProbe::~KinkProbe() { t_probe = previous_; }

void KinkProbe::mix(std::uint64_t v) {
  hash_ ^= v;
  hash_ *= 1099511628211ULL;
}

void record_branches(std::span<const double> values, double threshold) {
  if (!t_probe) return;
  std::uint64_t word = 0;
  std::size_t bit = 0;
  for (double v : values) {
    word = (word << 1) | (v > threshold ? 1u : 0u);
    if (++bit == 64) {
      t_probe->mix(word);
      word = 0;
      bit = 0;
    }
  }
  t_probe->mix(word ^ (bit << 57));
}

void record_branches(std::span<const double> values, std::span<const double> thresholds) {
  if (!t_probe) return;
  std::uint64_t word = 0;
  std::size_t bit = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    word = (word << 1) | (values[i] > thresholds[i % thresholds.size()] ? 1u : 0u);
    if (++bit == 64) {
      t_probe->mix(word);
      word = 0;
      bit = 0;
    }
  }
  t_probe->mix(word ^ (bit << 57));
}

}  // namespace dahf
