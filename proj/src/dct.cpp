#include "dahf/dct.hpp"

#include <cmath>
#include <numbers>

#include "dahf/tensor.hpp"

namespace dahf {

const std::array<std::array<double, kDctBlock>, kDctBlock>& dct8_basis() {
  static const auto basis = [] {
    std::array<std::array<double, kDctBlock>, kDctBlock> b{};
    for (int u = 0; u < kDctBlock; ++u) {
      const double c = u == 0 ? std::sqrt(1.0 / kDctBlock) : std::sqrt(2.0 / kDctBlock);
      for (int x = 0; x < kDctBlock; ++x) b[u][x] = c * std::cos((2 * x + 1) * u * std::numbers::pi / (2 * kDctBlock));
    }
    return b;
  }();
  return basis;
}

namespace {

// out = B * in * B^T (forward) or B^T * in * B (inverse) on one block.
void transform_block(double* plane, int w, bool inverse) {
  const auto& b = dct8_basis();
  double tmp[kDctBlock][kDctBlock];
  double blk[kDctBlock][kDctBlock];
  for (int y = 0; y < kDctBlock; ++y)
    for (int x = 0; x < kDctBlock; ++x) blk[y][x] = plane[y * w + x];
  for (int u = 0; u < kDctBlock; ++u)
    for (int x = 0; x < kDctBlock; ++x) {
      double acc = 0.0;
      for (int y = 0; y < kDctBlock; ++y) acc += (inverse ? b[y][u] : b[u][y]) * blk[y][x];
      tmp[u][x] = acc;
    }
  for (int u = 0; u < kDctBlock; ++u)
    for (int v = 0; v < kDctBlock; ++v) {
      double acc = 0.0;
      for (int x = 0; x < kDctBlock; ++x) acc += tmp[u][x] * (inverse ? b[x][v] : b[v][x]);
      plane[u * w + v] = acc;
    }
}

void for_each_block(std::span<double> plane, int h, int w, bool inverse) {
  if (h % kDctBlock || w % kDctBlock) throw ValidationError("block DCT needs sizes that are multiples of 8");
  if (plane.size() != static_cast<std::size_t>(h) * w) throw ValidationError("block DCT: plane size mismatch");
  for (int by = 0; by < h; by += kDctBlock)
    for (int bx = 0; bx < w; bx += kDctBlock) transform_block(plane.data() + by * w + bx, w, inverse);
}

}  // namespace

void block_dct_forward(std::span<double> plane, int h, int w) { for_each_block(plane, h, w, false); }
void block_dct_inverse(std::span<double> plane, int h, int w) { for_each_block(plane, h, w, true); }

}  // namespace dahf
