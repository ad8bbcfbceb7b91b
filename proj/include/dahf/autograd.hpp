#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dahf/tensor.hpp"

namespace dahf {

/// One value in the recorded computation. Gradients are allocated lazily.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor& grad_ref();
  void accumulate(const Tensor& g);
  void accumulate(std::span<const double> g);
};

/// Handle to a node. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const std::vector<int>& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  Tensor& grad_ref() { return node_->grad_ref(); }
  void zero_grad();
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

/// Disables graph recording for the current thread while in scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds the result of an op. Inputs and the backward closure are only kept
/// when recording is enabled and some input requires a gradient.
Var make_result(Tensor value, const std::vector<Var>& inputs, std::function<void(Node&)> backward);

Var constant(Tensor value);
Var detach(const Var& v);

/// Reverse sweep from a scalar root, seeding d(root)/d(root) = seed.
void backward(const Var& root, double seed = 1.0);

/// Records which side of each non-differentiable point (ReLU hinge, |x| at 0,
/// shrinkage threshold, log clamp) every element fell on during a forward
/// pass. Finite-difference checks compare the fingerprints of the two
/// perturbed passes to detect when a perturbation straddles a kink.
class KinkProbe {
 public:
  KinkProbe();
  ~KinkProbe();
  KinkProbe(const KinkProbe&) = delete;
  KinkProbe& operator=(const KinkProbe&) = delete;

  std::uint64_t fingerprint() const { return hash_; }
  void reset() { hash_ = 1469598103934665603ULL; }
  void mix(std::uint64_t v);

 private:
  std::uint64_t hash_ = 1469598103934665603ULL;
  KinkProbe* previous_;
};

/// Hashes the branch taken by each element (value > threshold) into the active probe, if any.
void record_branches(std::span<const double> values, double threshold = 0.0);
void record_branches(std::span<const double> values, std::span<const double> thresholds);

}  // namespace dahf
