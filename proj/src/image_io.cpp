#include "dahf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dahf {

namespace {

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

void png_read_from_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes->size()) png_error(png, "truncated PNG stream");
  std::memcpy(data, cur->bytes->data() + cur->offset, length);
  cur->offset += length;
}

[[noreturn]] void png_error_throw(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void png_warning_ignore(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw ValidationError("encode_png: 1 or 3 channels required");
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw ValidationError("encode_png: pixel buffer size mismatch");
  }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::vector<std::uint8_t> out;
  try {
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_compression_level(png, 6);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y) {
      png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image8 decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IoError("not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_throw, png_warning_ignore);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  Image8 img;
  ReadCursor cur{&bytes, 0};
  try {
    png_set_read_fn(png, &cur, png_read_from_vector);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = png_get_channels(png, info);
    if (img.channels != 1 && img.channels != 3) throw IoError("unsupported PNG channel layout");
    const std::size_t stride = png_get_rowbytes(png, info);
    img.pixels.resize(stride * img.height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_png(const std::filesystem::path& path, const Image8& img) { atomic_write(path, encode_png(img)); }

Image8 read_png(const std::filesystem::path& path) { return decode_png(read_file(path)); }

Tensor image_to_tensor(const Image8& img) {
  Tensor t = Tensor::chw(img.channels, img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        t.at(c, y, x) = img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] / 255.0;
  return t;
}

Image8 tensor_to_image(const Tensor& chw) {
  if (chw.rank() != 3 || (chw.channels() != 1 && chw.channels() != 3)) {
    throw ValidationError("tensor_to_image: expected (1|3, H, W), got " + chw.shape_string());
  }
  Image8 img{chw.width(), chw.height(), chw.channels(), {}};
  img.pixels.resize(chw.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) {
        const double v = std::clamp(chw.at(c, y, x), 0.0, 1.0);
        img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c] =
            static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

void atomic_write(const std::filesystem::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

void atomic_write(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  atomic_write(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace dahf
