#pragma once

#include <span>

namespace dahf::kernels {

/// Shape of a 2-D correlation over a CHW input with square kernels.
struct ConvGeometry {
  int in_channels = 0;
  int in_height = 0;
  int in_width = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_height() const { return (in_height + 2 * pad - kernel) / stride + 1; }
  int out_width() const { return (in_width + 2 * pad - kernel) / stride + 1; }
  int patch() const { return in_channels * kernel * kernel; }
};

/// Attention over n queries and m keys: scores = q^T k (d-dim), probs =
/// row softmax(scores) (n x m), out = v probs^T (c x n). All operands are
/// row-major: q is d x n, k is d x m, v is c x m.
struct AttentionGeometry {
  int dim = 0;
  int queries = 0;
  int keys = 0;
  int channels = 0;
};

// Forward kernels overwrite their outputs; backward kernels accumulate (+=)
// into every non-empty gradient span.

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias);

void attention_forward(const AttentionGeometry& g, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs);
void attention_backward(const AttentionGeometry& g, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<const double> grad_out, std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v);

}  // namespace reference

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out);
void conv2d_backward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias);

void attention_forward(const AttentionGeometry& g, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs);
void attention_backward(const AttentionGeometry& g, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<const double> grad_out, std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v);

}  // namespace parallel

/// Thread count used by the parallel kernels. 1 gives bit-reproducible runs.
void set_num_threads(int n);
int num_threads();

}  // namespace dahf::kernels
