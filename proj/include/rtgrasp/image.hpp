#pragma once

// Minimal interleaved raster type, PNG I/O (libpng) and bilinear affine resampling.
// Pixel (i, j) covers [i, i+1) x [j, j+1); its center is (i + 0.5, j + 0.5).

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "rtgrasp/errors.hpp"
#include "rtgrasp/geometry.hpp"

namespace rtgrasp {

template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{}) : width(w), height(h), channels(c), data(std::size_t(w) * h * c, fill) {}

  T& at(int x, int y, int c = 0) { return data[(std::size_t(y) * width + x) * channels + c]; }
  const T& at(int x, int y, int c = 0) const { return data[(std::size_t(y) * width + x) * channels + c]; }
  bool empty() const { return data.empty(); }
};

using Image8 = Image<std::uint8_t>;

struct ImageSize {
  int width = 0;
  int height = 0;
};

// 2x3 affine map q = A p + b.
struct Affine2 {
  double a11 = 1, a12 = 0, b1 = 0;
  double a21 = 0, a22 = 1, b2 = 0;

  Vec2 apply(Vec2 p) const { return {a11 * p.x + a12 * p.y + b1, a21 * p.x + a22 * p.y + b2}; }

  Affine2 inverse() const {
    const double det = a11 * a22 - a12 * a21;
    if (det == 0.0) throw ContractError("Affine2::inverse: singular map");
    Affine2 inv;
    inv.a11 = a22 / det;
    inv.a12 = -a12 / det;
    inv.a21 = -a21 / det;
    inv.a22 = a11 / det;
    inv.b1 = -(inv.a11 * b1 + inv.a12 * b2);
    inv.b2 = -(inv.a21 * b1 + inv.a22 * b2);
    return inv;
  }
};

// Resamples `src` into an out_w x out_h image where output point q shows source point
// forward.inverse()(q). Bilinear; samples outside the source are `fill`.
template <typename T>
Image<T> warp_affine(const Image<T>& src, const Affine2& forward, int out_w, int out_h, T fill = T{}) {
  const Affine2 inv = forward.inverse();
  Image<T> out(out_w, out_h, src.channels, fill);
  std::vector<double> acc(static_cast<std::size_t>(src.channels));
  for (int j = 0; j < out_h; ++j) {
    for (int i = 0; i < out_w; ++i) {
      const Vec2 p = inv.apply({i + 0.5, j + 0.5});
      const double sx = p.x - 0.5, sy = p.y - 0.5;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
      const double tx = sx - fx, ty = sy - fy;
      if (x0 < -1 || y0 < -1 || x0 >= src.width || y0 >= src.height) continue;
      std::fill(acc.begin(), acc.end(), 0.0);
      double weight = 0.0;
      const int xs[2] = {x0, x0 + 1};
      const int ys[2] = {y0, y0 + 1};
      const double wx[2] = {1.0 - tx, tx};
      const double wy[2] = {1.0 - ty, ty};
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const double w = wx[a] * wy[b];
          if (w == 0.0) continue;
          const bool inside = xs[a] >= 0 && ys[b] >= 0 && xs[a] < src.width && ys[b] < src.height;
          for (int c = 0; c < src.channels; ++c) {
            acc[c] += w * static_cast<double>(inside ? src.at(xs[a], ys[b], c) : fill);
          }
          weight += w;
        }
      }
      if (weight == 0.0) continue;
      for (int c = 0; c < src.channels; ++c) {
        if constexpr (std::is_integral_v<T>) {
          const double v = std::clamp(std::round(acc[c]), double(std::numeric_limits<T>::min()),
                                      double(std::numeric_limits<T>::max()));
          out.at(i, j, c) = static_cast<T>(v);
        } else {
          out.at(i, j, c) = static_cast<T>(acc[c]);
        }
      }
    }
  }
  return out;
}

namespace detail {

struct PngReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadState() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteState() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_error_fn(png_structp, png_const_charp msg) { throw IngestError(std::string("png: ") + msg); }
inline void png_warning_fn(png_structp, png_const_charp) {}

struct MemoryReader {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

inline void png_memory_read(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemoryReader*>(png_get_io_ptr(png));
  if (r->offset + n > r->bytes.size()) png_error(png, "unexpected end of data");
  std::memcpy(out, r->bytes.data() + r->offset, n);
  r->offset += n;
}

inline void png_memory_write(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}
inline void png_memory_flush(png_structp) {}

// Decodes to 8-bit gray / gray+alpha / RGB / RGBA.
inline Image8 decode_png_impl(png_structp png, png_infop info) {
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_packing(png);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  Image8 img(static_cast<int>(png_get_image_width(png, info)), static_cast<int>(png_get_image_height(png, info)),
             static_cast<int>(png_get_channels(png, info)));
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[y] = img.data.data() + std::size_t(y) * img.width * img.channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  return img;
}

inline void encode_png_impl(png_structp png, png_infop info, const Image8& img) {
  int color = PNG_COLOR_TYPE_GRAY;
  switch (img.channels) {
    case 1: color = PNG_COLOR_TYPE_GRAY; break;
    case 2: color = PNG_COLOR_TYPE_GRAY_ALPHA; break;
    case 3: color = PNG_COLOR_TYPE_RGB; break;
    case 4: color = PNG_COLOR_TYPE_RGBA; break;
    default: throw ContractError("encode_png: unsupported channel count");
  }
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (int y = 0; y < img.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(img.data.data() + std::size_t(y) * img.width * img.channels));
  }
  png_write_end(png, nullptr);
}

}  // namespace detail

inline Image8 decode_png(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) throw IngestError("decode_png: not a PNG stream");
  detail::PngReadState st;
  st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn, detail::png_warning_fn);
  st.info = png_create_info_struct(st.png);
  detail::MemoryReader reader{bytes, 0};
  png_set_read_fn(st.png, &reader, detail::png_memory_read);
  return detail::decode_png_impl(st.png, st.info);
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

inline Image8 read_png(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes);
  } catch (const IngestError& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
}

// Width/height from the IHDR chunk without decoding pixels.
inline ImageSize png_size(std::span<const std::uint8_t> bytes) {
  static constexpr std::uint8_t kSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() < 24 || std::memcmp(bytes.data(), kSig, 8) != 0 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0) {
    throw IngestError("not a PNG header");
  }
  auto be32 = [&](std::size_t o) {
    return (std::uint32_t(bytes[o]) << 24) | (std::uint32_t(bytes[o + 1]) << 16) | (std::uint32_t(bytes[o + 2]) << 8) |
           std::uint32_t(bytes[o + 3]);
  };
  const ImageSize s{static_cast<int>(be32(16)), static_cast<int>(be32(20))};
  if (s.width <= 0 || s.height <= 0) throw IngestError("PNG header with zero dimension");
  return s;
}

inline ImageSize read_png_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open " + path.string());
  std::vector<std::uint8_t> head(24);
  in.read(reinterpret_cast<char*>(head.data()), 24);
  head.resize(static_cast<std::size_t>(in.gcount()));
  try {
    return png_size(head);
  } catch (const IngestError& e) {
    throw IngestError(path.string() + ": " + e.what());
  }
}

inline std::vector<std::uint8_t> encode_png(const Image8& img) {
  std::vector<std::uint8_t> out;
  detail::PngWriteState st;
  st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, detail::png_error_fn, detail::png_warning_fn);
  st.info = png_create_info_struct(st.png);
  png_set_write_fn(st.png, &out, detail::png_memory_write, detail::png_memory_flush);
  detail::encode_png_impl(st.png, st.info, img);
  return out;
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void write_png(const std::filesystem::path& path, const Image8& img) { write_file_bytes(path, encode_png(img)); }

}  // namespace rtgrasp
