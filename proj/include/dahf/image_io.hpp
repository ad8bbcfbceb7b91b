#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dahf/tensor.hpp"

namespace dahf {

/// 8-bit interleaved image (1 or 3 channels).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};

std::vector<std::uint8_t> encode_png(const Image8& img);
Image8 decode_png(const std::vector<std::uint8_t>& bytes);

void write_png(const std::filesystem::path& path, const Image8& img);
Image8 read_png(const std::filesystem::path& path);

/// CHW tensor in [0,1] from an 8-bit image, and the rounding inverse.
Tensor image_to_tensor(const Image8& img);
Image8 tensor_to_image(const Tensor& chw);

/// Writes to a sibling temp file, then renames over the target.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);
void atomic_write(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace dahf
