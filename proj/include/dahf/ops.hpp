#pragma once

#include <vector>

#include "dahf/autograd.hpp"

// Differentiable ops over single-sample tensors. Feature maps are CHW,
// vectors rank-1, learnable scalars shape {1}.
namespace dahf::ops {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
/// a * s where s is a learnable scalar of shape {1}.
Var scale_by(const Var& a, const Var& s);
Var sum(const std::vector<Var>& terms);

/// F (C,H,W) scaled per channel by w (C).
Var mul_channels(const Var& f, const Var& w);
/// F (C,H,W) multiplied by a single plane m (1,H,W) broadcast over channels.
Var mul_plane(const Var& f, const Var& m);
Var concat_channels(const std::vector<Var>& parts);
/// Border replication by `pad` pixels on every side.
Var pad_replicate(const Var& f, int pad);
Var select_channel(const Var& f, int c);
/// Element i of a rank-1 tensor, as shape {1}.
Var index(const Var& v, int i);
/// Concatenation of shape-{1} scalars into a vector.
Var stack(const std::vector<Var>& scalars);

Var relu(const Var& x);
Var sigmoid(const Var& x);
Var abs(const Var& x);

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, double eps = 1e-5);

Var global_avg_pool(const Var& f);
Var avg_pool(const Var& f, int factor);
/// Bilinear resampling with half-pixel centres (align_corners = false).
Var bilinear_resize(const Var& f, int out_h, int out_w);

/// y = W x + b for W (k,n), x (n); bias may be empty.
Var linear(const Var& x, const Var& weight, const Var& bias);
Var softmax(const Var& logits);
/// Per-pixel softmax over the channel axis.
Var softmax_channels(const Var& f);

/// Core of position attention: q (d,H,W) queries against k (d,h,w) keys,
/// aggregating v (C,h,w). Returns (C,H,W). `probs_out`, when given,
/// receives the (H*W, h*w) affinity matrix.
Var attention(const Var& q, const Var& k, const Var& v, Tensor* probs_out = nullptr);

/// Soft shrinkage of channel weights: max(w - tau, 0) / (1 - tau), clipped to [0,1].
Var threshold_gate(const Var& weights, const Var& tau);

Var mean_all(const Var& x);
Var sum_all(const Var& x);

}  // namespace dahf::ops
