#pragma once

// PNG, base64 and SHA-256 helpers used by the wire protocol, logs and hashes.

#include <png.h>
#include <openssl/evp.h>

#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gazeforge/image.hpp"

namespace gazeforge {

class CodecError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

namespace detail {

inline void png_append(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

inline void png_error_throw(png_structp png, png_const_charp msg) {
  auto* message = static_cast<std::string*>(png_get_error_ptr(png));
  if (message) *message = msg ? msg : "png error";
  png_longjmp(png, 1);
}

inline void png_warning_ignore(png_structp, png_const_charp) {}

// Channels: 3 for RGB, 1 for gray. Output depends only on the buffer and the
// compression level, so identical inputs give identical bytes.
inline std::vector<std::uint8_t> encode_png(int width, int height, int channels,
                                            const std::uint8_t* data, int level) {
  std::vector<std::uint8_t> out;
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_throw,
                                            png_warning_ignore);
  if (!png) throw CodecError("png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw CodecError("png: cannot allocate info");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw CodecError("png encode: " + message);
  }
  png_set_write_fn(png, &out, png_append, nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, level);
  png_set_filter(png, PNG_FILTER_TYPE_BASE, PNG_FILTER_SUB);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(data + static_cast<std::size_t>(y) * width * channels);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline std::vector<std::uint8_t> decode_png(std::string_view bytes, std::uint32_t format,
                                            int& width, int& height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw CodecError("png decode: " + msg);
  }
  image.format = format;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw CodecError("png decode: " + msg);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  png_image_free(&image);
  return buf;
}

}  // namespace detail

inline constexpr int kPngDefaultLevel = 6;

inline std::vector<std::uint8_t> encode_png(const Image& img, int level = kPngDefaultLevel) {
  return detail::encode_png(img.width, img.height, 3, img.pixels.data(), level);
}

inline std::vector<std::uint8_t> encode_png_gray(const GrayImage& img,
                                                 int level = kPngDefaultLevel) {
  return detail::encode_png(img.width, img.height, 1, img.pixels.data(), level);
}

/// Any PNG the library understands, converted to 8-bit RGB.
inline Image decode_png_rgb(std::string_view bytes) {
  int w = 0;
  int h = 0;
  auto buf = detail::decode_png(bytes, PNG_FORMAT_RGB, w, h);
  return Image(w, h, std::move(buf));
}

inline GrayImage decode_png_gray(std::string_view bytes) {
  GrayImage g;
  g.pixels = detail::decode_png(bytes, PNG_FORMAT_GRAY, g.width, g.height);
  return g;
}

inline std::string base64_encode(const std::uint8_t* data, std::size_t len) {
  std::string out(4 * ((len + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), data,
                                static_cast<int>(len));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::string base64_encode(const std::vector<std::uint8_t>& data) {
  return base64_encode(data.data(), data.size());
}

/// Strict standard-alphabet, padded base64.
inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw CodecError("base64: length not a multiple of 4");
  std::size_t pad = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    const bool alnum = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
    if (alnum || c == '+' || c == '/') {
      if (pad) throw CodecError("base64: data after padding");
    } else if (c == '=') {
      if (i + 2 < text.size()) throw CodecError("base64: misplaced padding");
      ++pad;
    } else {
      throw CodecError("base64: invalid character");
    }
  }
  std::vector<std::uint8_t> out(text.size() / 4 * 3);
  if (text.empty()) return out;
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                static_cast<int>(text.size()));
  if (n < 0) throw CodecError("base64: decode failed");
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string sha256_hex(const std::uint8_t* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  if (!EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr))
    throw CodecError("sha256 failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  hex.reserve(dlen * 2);
  for (unsigned i = 0; i < dlen; ++i) {
    hex.push_back(kHex[digest[i] >> 4]);
    hex.push_back(kHex[digest[i] & 0xF]);
  }
  return hex;
}

namespace detail {

inline std::vector<std::uint8_t> dimension_header(int w, int h, std::size_t payload) {
  std::vector<std::uint8_t> buf;
  buf.reserve(8 + payload);
  for (std::uint32_t v : {static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h)})
    for (int shift = 24; shift >= 0; shift -= 8) buf.push_back(static_cast<std::uint8_t>(v >> shift));
  return buf;
}

}  // namespace detail

/// SHA-256 of width (u32 BE) || height (u32 BE) || raw RGB rows.
inline std::string image_hash(const Image& img) {
  auto buf = detail::dimension_header(img.width, img.height, img.pixels.size());
  buf.insert(buf.end(), img.pixels.begin(), img.pixels.end());
  return sha256_hex(buf.data(), buf.size());
}

/// Same layout as image_hash over the 8-bit grayscale mask.
inline std::string gray_hash(int w, int h, const std::vector<std::uint8_t>& gray) {
  auto buf = detail::dimension_header(w, h, gray.size());
  buf.insert(buf.end(), gray.begin(), gray.end());
  return sha256_hex(buf.data(), buf.size());
}

}  // namespace gazeforge
