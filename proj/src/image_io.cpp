#include "layerforge/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace layerforge::io {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<png_bytep> rows;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("failed to read PNG " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  png_uint_32 width = png_get_image_width(png, info);
  png_uint_32 height = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  bit_depth = png_get_bit_depth(png, info);
  color_type = png_get_color_type(png, info);
  int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": unsupported channel count " + std::to_string(channels));
  }

  std::size_t row_bytes = png_get_rowbytes(png, info);
  pixels.resize(row_bytes * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out({static_cast<int>(height), static_cast<int>(width), channels});
  std::size_t i = 0;
  if (bit_depth == 16) {
    // PNG 16-bit samples are big-endian in the byte stream
    for (std::size_t b = 0; b + 1 < pixels.size() && i < out.size(); b += 2) {
      unsigned v = (static_cast<unsigned>(pixels[b]) << 8) | pixels[b + 1];
      out[i++] = static_cast<real>(v) / real(65535);
    }
  } else {
    for (std::size_t b = 0; b < pixels.size() && i < out.size(); ++b) {
      out[i++] = static_cast<real>(pixels[b]) / real(255);
    }
  }
  return out;
}

void write_png16(const std::string& path, const Tensor& image) {
  require_rank(image, 3, "write_png16");
  int c = image.extent(2);
  if (c != 1 && c != 3) throw DimensionError("write_png16: channels must be 1 or 3");
  int h = image.extent(0), w = image.extent(1);

  std::vector<png_byte> bytes(static_cast<std::size_t>(h) * w * c * 2);
  for (std::size_t i = 0; i < image.size(); ++i) {
    real v = image[i];
    if (v < 0) v = 0;
    if (v > 1) v = 1;
    unsigned q = static_cast<unsigned>(v * real(65535) + real(0.5));
    bytes[2 * i] = static_cast<png_byte>(q >> 8);
    bytes[2 * i + 1] = static_cast<png_byte>(q & 0xFF);
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] = bytes.data() + static_cast<std::size_t>(y) * w * c * 2;

  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot open " + path + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed to write PNG " + path);
  }
  png_init_io(png, fp.get());
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
               c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

namespace {

constexpr char kRawMagic[4] = {'L', 'R', 'F', '1'};

void put_u32(std::ofstream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
               static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_rawf(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kRawMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<std::uint32_t>(t.extent(i)));
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = static_cast<double>(t[i]);
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    char b[8];
    for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
    os.write(b, 8);
  }
  if (!os) throw IoError("failed writing " + path);
}

Tensor read_rawf(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kRawMagic, 4) != 0) throw IoError(path + ": not a rawf file");
  std::uint32_t rank = get_u32(is);
  if (rank > 8) throw IoError(path + ": implausible rank");
  std::vector<int> shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<int>(get_u32(is)));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    double v;
    std::memcpy(&v, &bits, 8);
    t[i] = static_cast<real>(v);
  }
  if (!is) throw IoError(path + ": truncated payload");
  return t;
}

}  // namespace layerforge::io
