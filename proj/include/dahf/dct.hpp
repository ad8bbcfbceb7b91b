#pragma once

#include <array>
#include <span>

namespace dahf {

inline constexpr int kDctBlock = 8;

/// Orthonormal 8-point DCT-II basis: basis[u][x] = c(u) cos((2x+1) u pi / 16).
const std::array<std::array<double, kDctBlock>, kDctBlock>& dct8_basis();

/// In-place 2-D orthonormal DCT-II of every 8x8 block of an h x w plane
/// (row-major, h and w multiples of 8). Coefficient (u, v) of a block lands at
/// block-local row u (vertical frequency), column v (horizontal frequency).
void block_dct_forward(std::span<double> plane, int h, int w);
void block_dct_inverse(std::span<double> plane, int h, int w);

}  // namespace dahf
