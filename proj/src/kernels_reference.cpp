// Plain loop kernels. Slow; kept as the ground truth for the parallel path.
#include <algorithm>
#include <cmath>
#include <vector>

#include "dahf/kernels.hpp"

namespace dahf::kernels::reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const int oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (int o = 0; o < g.out_channels; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = bias.empty() ? 0.0 : bias[o];
        for (int i = 0; i < g.in_channels; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            const int sy = y * g.stride + ky - g.pad;
            if (sy < 0 || sy >= g.in_height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int sx = x * g.stride + kx - g.pad;
              if (sx < 0 || sx >= g.in_width) continue;
              acc += weight[((o * g.in_channels + i) * k + ky) * k + kx] *
                     in[(static_cast<std::size_t>(i) * g.in_height + sy) * g.in_width + sx];
            }
          }
        }
        out[(static_cast<std::size_t>(o) * oh + y) * ow + x] = acc;
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const int oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  for (int o = 0; o < g.out_channels; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const double go = grad_out[(static_cast<std::size_t>(o) * oh + y) * ow + x];
        if (!grad_bias.empty()) grad_bias[o] += go;
        for (int i = 0; i < g.in_channels; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            const int sy = y * g.stride + ky - g.pad;
            if (sy < 0 || sy >= g.in_height) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int sx = x * g.stride + kx - g.pad;
              if (sx < 0 || sx >= g.in_width) continue;
              const std::size_t wi = ((static_cast<std::size_t>(o) * g.in_channels + i) * k + ky) * k + kx;
              const std::size_t xi = (static_cast<std::size_t>(i) * g.in_height + sy) * g.in_width + sx;
              if (!grad_weight.empty()) grad_weight[wi] += go * in[xi];
              if (!grad_in.empty()) grad_in[xi] += go * weight[wi];
            }
          }
        }
      }
    }
  }
}

void attention_forward(const AttentionGeometry& g, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs) {
  const int n = g.queries, m = g.keys;
  std::vector<double> row(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int d = 0; d < g.dim; ++d) s += q[static_cast<std::size_t>(d) * n + i] * k[static_cast<std::size_t>(d) * m + j];
      row[j] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (int j = 0; j < m; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (int j = 0; j < m; ++j) probs[static_cast<std::size_t>(i) * m + j] = row[j] / z;
    for (int c = 0; c < g.channels; ++c) {
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += v[static_cast<std::size_t>(c) * m + j] * probs[static_cast<std::size_t>(i) * m + j];
      out[static_cast<std::size_t>(c) * n + i] = acc;
    }
  }
}

void attention_backward(const AttentionGeometry& g, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<const double> grad_out, std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v) {
  const int n = g.queries, m = g.keys;
  std::vector<double> dp(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i) {
    const double* p = probs.data() + static_cast<std::size_t>(i) * m;
    double dot = 0.0;
    for (int j = 0; j < m; ++j) {
      double s = 0.0;
      for (int c = 0; c < g.channels; ++c) s += grad_out[static_cast<std::size_t>(c) * n + i] * v[static_cast<std::size_t>(c) * m + j];
      dp[j] = s;
      dot += p[j] * s;
      if (!grad_v.empty()) {
        for (int c = 0; c < g.channels; ++c) grad_v[static_cast<std::size_t>(c) * m + j] += grad_out[static_cast<std::size_t>(c) * n + i] * p[j];
      }
    }
    for (int j = 0; j < m; ++j) {
      const double ds = p[j] * (dp[j] - dot);
      for (int d = 0; d < g.dim; ++d) {
        if (!grad_q.empty()) grad_q[static_cast<std::size_t>(d) * n + i] += ds * k[static_cast<std::size_t>(d) * m + j];
        if (!grad_k.empty()) grad_k[static_cast<std::size_t>(d) * m + j] += ds * q[static_cast<std::size_t>(d) * n + i];
      }
    }
  }
}

}  // namespace dahf::kernels::reference
