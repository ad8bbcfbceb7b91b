// OpenMP kernels. Work is split into contiguous blocks of independent output
// rows/columns, each owned by one thread, so a fixed thread count always
// produces the same bits. Dense products inside a block go through Eigen;
// row reductions are plain loops because Eigen's depend on buffer alignment.
#include <omp.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dahf/kernels.hpp"

namespace dahf::kernels {

namespace {

int g_threads = 0;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
using MutMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;

ConstMap cmap(const double* p, int rows, int cols, int ld) { return ConstMap(p, rows, cols, Eigen::OuterStride<>(ld)); }
MutMap mmap(double* p, int rows, int cols, int ld) { return MutMap(p, rows, cols, Eigen::OuterStride<>(ld)); }

int block_count(int extent, int min_block) {
  return std::clamp(extent / std::max(min_block, 1), 1, num_threads());
}

std::pair<int, int> block_range(int extent, int blocks, int b) {
  const int base = extent / blocks, rem = extent % blocks;
  const int begin = b * base + std::min(b, rem);
  return {begin, begin + base + (b < rem ? 1 : 0)};
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

// Fills rows [row0,row1) of the (patch x pixels) column matrix for pixels [p0,p1).
void im2col_rows(const ConvGeometry& g, const double* in, int row0, int row1, int p0, int p1, double* col,
                 int ld) {
  const int k = g.kernel, ow = g.out_width();
  for (int r = row0; r < row1; ++r) {
    const int i = r / (k * k), ky = (r / k) % k, kx = r % k;
    const double* plane = in + static_cast<std::size_t>(i) * g.in_height * g.in_width;
    double* dst = col + static_cast<std::size_t>(r) * ld;
    for (int p = p0; p < p1; ++p) {
      const int y = p / ow, x = p % ow;
      const int sy = y * g.stride + ky - g.pad, sx = x * g.stride + kx - g.pad;
      dst[p - p0] = (sy < 0 || sy >= g.in_height || sx < 0 || sx >= g.in_width)
                        ? 0.0
                        : plane[static_cast<std::size_t>(sy) * g.in_width + sx];
    }
  }
}

void col2im_channel(const ConvGeometry& g, const double* col, int i, double* grad_in) {
  const int k = g.kernel, ow = g.out_width(), pixels = g.out_height() * g.out_width();
  double* plane = grad_in + static_cast<std::size_t>(i) * g.in_height * g.in_width;
  for (int ky = 0; ky < k; ++ky) {
    for (int kx = 0; kx < k; ++kx) {
      const double* src = col + static_cast<std::size_t>((i * k + ky) * k + kx) * pixels;
      for (int p = 0; p < pixels; ++p) {
        const int y = p / ow, x = p % ow;
        const int sy = y * g.stride + ky - g.pad, sx = x * g.stride + kx - g.pad;
        if (sy < 0 || sy >= g.in_height || sx < 0 || sx >= g.in_width) continue;
        plane[static_cast<std::size_t>(sy) * g.in_width + sx] += src[p];
      }
    }
  }
}

}  // namespace

void set_num_threads(int n) { g_threads = std::max(1, n); }

int num_threads() { return g_threads > 0 ? g_threads : omp_get_max_threads(); }

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> out) {
  const int pixels = g.out_height() * g.out_width();
  const int patch = g.patch();
  const int blocks = block_count(pixels, 256);
  const auto w = cmap(weight.data(), g.out_channels, patch, patch);

#pragma omp parallel for num_threads(num_threads()) schedule(static)
  for (int b = 0; b < blocks; ++b) {
    const auto [p0, p1] = block_range(pixels, blocks, b);
    const int len = p1 - p0;
    auto y = mmap(out.data() + p0, g.out_channels, len, pixels);
    if (is_pointwise(g)) {
      y.noalias() = w * cmap(in.data() + p0, g.in_channels, len, pixels);
    } else {
      std::vector<double> col(static_cast<std::size_t>(patch) * len);
      im2col_rows(g, in.data(), 0, patch, p0, p1, col.data(), len);
      y.noalias() = w * cmap(col.data(), patch, len, len);
    }
    if (!bias.empty()) {
      for (int o = 0; o < g.out_channels; ++o) y.row(o).array() += bias[o];
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> in, std::span<const double> weight,
                     std::span<const double> grad_out, std::span<double> grad_in,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const int pixels = g.out_height() * g.out_width();
  const int patch = g.patch();
  const int threads = num_threads();
  const auto dy = cmap(grad_out.data(), g.out_channels, pixels, pixels);

  if (!grad_bias.empty()) {
    for (int o = 0; o < g.out_channels; ++o) {
      const double* row = grad_out.data() + static_cast<std::size_t>(o) * pixels;
      grad_bias[o] += std::accumulate(row, row + pixels, 0.0);
    }
  }

  std::vector<double> col;
  const double* x = in.data();
  if (!is_pointwise(g) && !grad_weight.empty()) {
    col.resize(static_cast<std::size_t>(patch) * pixels);
    const int rb = block_count(patch, 1);
#pragma omp parallel for num_threads(threads) schedule(static)
    for (int b = 0; b < rb; ++b) {
      const auto [r0, r1] = block_range(patch, rb, b);
      im2col_rows(g, in.data(), r0, r1, 0, pixels, col.data(), pixels);
    }
    x = col.data();
  }

  if (!grad_weight.empty()) {
    const auto xm = cmap(x, patch, pixels, pixels);
    const int ob = block_count(g.out_channels, 1);
#pragma omp parallel for num_threads(threads) schedule(static)
    for (int b = 0; b < ob; ++b) {
      const auto [o0, o1] = block_range(g.out_channels, ob, b);
      auto dw = mmap(grad_weight.data() + static_cast<std::size_t>(o0) * patch, o1 - o0, patch, patch);
      dw.noalias() += dy.middleRows(o0, o1 - o0) * xm.transpose();
    }
  }

  if (!grad_in.empty()) {
    const auto w = cmap(weight.data(), g.out_channels, patch, patch);
    if (is_pointwise(g)) {
      const int pb = block_count(pixels, 256);
#pragma omp parallel for num_threads(threads) schedule(static)
      for (int b = 0; b < pb; ++b) {
        const auto [p0, p1] = block_range(pixels, pb, b);
        auto dx = mmap(grad_in.data() + p0, g.in_channels, p1 - p0, pixels);
        dx.noalias() += w.transpose() * dy.middleCols(p0, p1 - p0);
      }
    } else {
      std::vector<double> dcol(static_cast<std::size_t>(patch) * pixels);
      const int pb = block_count(pixels, 256);
#pragma omp parallel for num_threads(threads) schedule(static)
      for (int b = 0; b < pb; ++b) {
        const auto [p0, p1] = block_range(pixels, pb, b);
        auto dc = mmap(dcol.data() + p0, patch, p1 - p0, pixels);
        dc.noalias() = w.transpose() * dy.middleCols(p0, p1 - p0);
      }
#pragma omp parallel for num_threads(threads) schedule(static)
      for (int i = 0; i < g.in_channels; ++i) col2im_channel(g, dcol.data(), i, grad_in.data());
    }
  }
}

void attention_forward(const AttentionGeometry& g, std::span<const double> q, std::span<const double> k,
                       std::span<const double> v, std::span<double> out, std::span<double> probs) {
  const int n = g.queries, m = g.keys;
  const auto km = cmap(k.data(), g.dim, m, m);
  const auto vm = cmap(v.data(), g.channels, m, m);
  const int blocks = block_count(n, 64);

#pragma omp parallel for num_threads(num_threads()) schedule(static)
  for (int b = 0; b < blocks; ++b) {
    const auto [i0, i1] = block_range(n, blocks, b);
    const int len = i1 - i0;
    auto p = mmap(probs.data() + static_cast<std::size_t>(i0) * m, len, m, m);
    p.noalias() = cmap(q.data() + i0, g.dim, len, n).transpose() * km;
    for (int r = 0; r < len; ++r) {
      double* row = p.row(r).data();
      const double mx = *std::max_element(row, row + m);
      double z = 0.0;
      for (int j = 0; j < m; ++j) {
        row[j] = std::exp(row[j] - mx);
        z += row[j];
      }
      const double inv = 1.0 / z;
      for (int j = 0; j < m; ++j) row[j] *= inv;
    }
    mmap(out.data() + i0, g.channels, len, n).noalias() = vm * p.transpose();
  }
}

void attention_backward(const AttentionGeometry& g, std::span<const double> q, std::span<const double> k,
                        std::span<const double> v, std::span<const double> probs,
                        std::span<const double> grad_out, std::span<double> grad_q, std::span<double> grad_k,
                        std::span<double> grad_v) {
  const int n = g.queries, m = g.keys;
  const int threads = num_threads();
  const auto km = cmap(k.data(), g.dim, m, m);
  const auto vm = cmap(v.data(), g.channels, m, m);
  const auto pm = cmap(probs.data(), n, m, m);
  const auto dout = cmap(grad_out.data(), g.channels, n, n);

  std::vector<double> ds(static_cast<std::size_t>(n) * m);
  const int qb = block_count(n, 64);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (int b = 0; b < qb; ++b) {
    const auto [i0, i1] = block_range(n, qb, b);
    const int len = i1 - i0;
    auto dsb = mmap(ds.data() + static_cast<std::size_t>(i0) * m, len, m, m);
    dsb.noalias() = dout.middleCols(i0, len).transpose() * vm;
    const auto pb = pm.middleRows(i0, len);
    for (int r = 0; r < len; ++r) {
      const double* pr = probs.data() + static_cast<std::size_t>(i0 + r) * m;
      const double dot = std::inner_product(pr, pr + m, &dsb(r, 0), 0.0);
      dsb.row(r) = (pb.row(r).array() * (dsb.row(r).array() - dot)).matrix();
    }
    if (!grad_q.empty()) {
      mmap(grad_q.data() + i0, g.dim, len, n).noalias() += km * dsb.transpose();
    }
  }

  if (grad_k.empty() && grad_v.empty()) return;
  const auto dsm = cmap(ds.data(), n, m, m);
  const auto qm = cmap(q.data(), g.dim, n, n);
  const int kb = block_count(m, 16);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (int b = 0; b < kb; ++b) {
    const auto [j0, j1] = block_range(m, kb, b);
    if (!grad_k.empty()) mmap(grad_k.data() + j0, g.dim, j1 - j0, m).noalias() += qm * dsm.middleCols(j0, j1 - j0);
    if (!grad_v.empty()) mmap(grad_v.data() + j0, g.channels, j1 - j0, m).noalias() += dout * pm.middleCols(j0, j1 - j0);
  }
}

}  // namespace parallel
}  // namespace dahf::kernels
