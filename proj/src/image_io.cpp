#include "kneeloc/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "kneeloc/errors.hpp"

namespace kneeloc {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

// libpng reports errors through longjmp; keep this function free of objects
// with non-trivial destructors between setjmp and the reads.
bool read_png_raw(std::FILE* fp, std::vector<float>& out, int& height, int& width,
                  std::string& error) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    error = "libpng initialization failed";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  png_bytep* rows = nullptr;
  if (!info || setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    delete[] rows;
    error = "malformed PNG";
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color & PNG_COLOR_MASK_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if ((color & PNG_COLOR_MASK_COLOR) || (color & PNG_COLOR_MASK_PALETTE)) {
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  }
  if (depth == 16) png_set_swap(png);  // native little-endian 16-bit samples
  png_read_update_info(png, info);

  height = static_cast<int>(png_get_image_height(png, info));
  width = static_cast<int>(png_get_image_width(png, info));
  depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buffer(rowbytes * static_cast<std::size_t>(height));
  rows = new png_bytep[height];
  for (int r = 0; r < height; ++r) rows[r] = buffer.data() + rowbytes * r;
  png_read_image(png, rows);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  delete[] rows;

  out.resize(static_cast<std::size_t>(height) * width);
  for (int r = 0; r < height; ++r) {
    const png_byte* row = buffer.data() + rowbytes * r;
    for (int c = 0; c < width; ++c) {
      float v;
      if (depth == 16) {
        std::uint16_t s;
        std::memcpy(&s, row + 2 * c, 2);
        v = s / 65535.0f;
      } else {
        v = row[c] / 255.0f;
      }
      out[static_cast<std::size_t>(r) * width + c] = v;
    }
  }
  return true;
}

Image read_png(const std::filesystem::path& path) {
  FilePtr fp = open_file(path, "rb");
  std::vector<float> data;
  int h = 0, w = 0;
  std::string error;
  if (!read_png_raw(fp.get(), data, h, w, error)) {
    throw IoError("'" + path.string() + "': " + error);
  }
  return Image(h, w, std::move(data));
}

// Skips whitespace and '#' comments in a PNM header.
int read_pnm_int(std::istream& in) {
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return value;
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  const int w = read_pnm_int(in);
  const int h = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (!in || w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
    throw IoError("'" + path.string() + "': malformed PGM header");
  }
  std::vector<float> data(static_cast<std::size_t>(w) * h);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    const bool wide = maxval > 255;
    std::vector<unsigned char> raw(data.size() * (wide ? 2 : 1));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) throw IoError("'" + path.string() + "': truncated PGM data");
    for (std::size_t i = 0; i < data.size(); ++i) {
      const int v = wide ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
      data[i] = static_cast<float>(v) / maxval;
    }
  } else if (magic == "P2") {
    for (float& v : data) {
      const int x = read_pnm_int(in);
      if (!in) throw IoError("'" + path.string() + "': truncated PGM data");
      v = static_cast<float>(x) / maxval;
    }
  } else {
    throw IoError("'" + path.string() + "': not a PGM file");
  }
  return Image(h, w, std::move(data));
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open '" + path.string() + "'");
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  if (probe.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0) return read_png(path);
  if (sig[0] == 'P' && (sig[1] == '2' || sig[1] == '5')) return read_pgm(path);
  throw IoError("'" + path.string() + "': unsupported image format (expected PNG or PGM)");
}

void write_png(const Image& img, const std::filesystem::path& path) {
  const float lo = img.min_value();
  const float hi = img.max_value();
  std::vector<png_byte> bytes(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = img.data()[i];
    const double unit = hi > lo ? (v - lo) / (hi - lo) : std::clamp(v, 0.0f, 1.0f);
    bytes[i] = static_cast<png_byte>(std::lround(unit * 255.0));
  }

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write '" + path.string() + "': " + msg);
  }
}

void write_pgm16(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P5\n" << img.width() << " " << img.height() << "\n65535\n";
  for (float v : img.data()) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0));
    out.put(static_cast<char>(q >> 8));
    out.put(static_cast<char>(q & 0xff));
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_png16(const Image& img, const std::filesystem::path& path) {
  std::vector<png_uint_16> words(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    words[i] = static_cast<png_uint_16>(std::lround(std::clamp(img.data()[i], 0.0f, 1.0f) * 65535.0));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width());
  image.height = static_cast<png_uint_32>(img.height());
  image.format = PNG_FORMAT_LINEAR_Y;
  if (!png_image_write_to_file(&image, path.c_str(), 0, words.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write '" + path.string() + "': " + msg);
  }
}

RgbImage to_rgb(const Image& img) {
  RgbImage out{img.height(), img.width(), std::vector<std::uint8_t>(img.size() * 3)};
  const float lo = img.min_value();
  const float hi = img.max_value();
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = img.data()[i];
    const double unit = hi > lo ? (v - lo) / (hi - lo) : std::clamp(v, 0.0f, 1.0f);
    const auto b = static_cast<std::uint8_t>(std::lround(unit * 255.0));
    out.rgb[3 * i] = out.rgb[3 * i + 1] = out.rgb[3 * i + 2] = b;
  }
  return out;
}

void draw_line(RgbImage& img, double x0, double y0, double x1, double y1, Rgb color) {
  const double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  for (int k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) / steps;
    const long c = std::lround(x0 + t * (x1 - x0));
    const long r = std::lround(y0 + t * (y1 - y0));
    if (r < 0 || c < 0 || r >= img.height || c >= img.width) continue;
    const std::size_t at = (static_cast<std::size_t>(r) * img.width + c) * 3;
    for (int ch = 0; ch < 3; ++ch) img.rgb[at + ch] = color[ch];
  }
}

void write_png(const RgbImage& img, const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, img.rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot write '" + path.string() + "': " + msg);
  }
}

}  // namespace kneeloc
