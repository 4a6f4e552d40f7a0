#include "gamver/image.hpp"

#include <png.h>

#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "gamver/errors.hpp"

namespace gamver {

namespace {

// Skips PGM whitespace and '#' comments, then parses a non-negative integer.
long pgmToken(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw ValidationError("loadImage: malformed PGM header in " + path);
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

Image loadPgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("loadImage: cannot open " + path.string());
  char m0 = 0, m1 = 0;
  f.get(m0);
  f.get(m1);
  if (m0 != 'P' || m1 != '5') throw ValidationError("loadImage: not a binary PGM (P5): " + path.string());
  const long w = pgmToken(f, path.string());
  const long h = pgmToken(f, path.string());
  const long maxval = pgmToken(f, path.string());
  if (w <= 0 || h <= 0) throw ValidationError("loadImage: zero-sized image " + path.string());
  if (maxval <= 0 || maxval > 65535) throw ValidationError("loadImage: bad maxval in " + path.string());
  // pgmToken consumed the single whitespace after maxval; the stream is now
  // positioned at the raster.
  const bool wide = maxval > 255;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<unsigned char> raw(n * (wide ? 2 : 1));
  f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(f.gcount()) != raw.size())
    throw ValidationError("loadImage: truncated PGM raster in " + path.string());
  Image img;
  img.pixels.resize(h, w);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (long i = 0; i < h; ++i) {
    for (long j = 0; j < w; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * static_cast<std::size_t>(w) + static_cast<std::size_t>(j);
      const unsigned v = wide ? (static_cast<unsigned>(raw[2 * k]) << 8 | raw[2 * k + 1])  // big-endian per PGM
                              : raw[k];
      img.pixels(i, j) = static_cast<double>(v) * scale;
    }
  }
  return img;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};

Image loadPng(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw ValidationError("loadImage: cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw ValidationError("loadImage: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw ValidationError("loadImage: libpng init failed");
  }
  std::vector<png_bytep> rows;
  std::vector<unsigned char> data;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("loadImage: corrupt PNG " + path.string());
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("loadImage: PNG is not grayscale (color inputs are rejected): " + path.string());
  }
  if (depth != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("loadImage: only 8-bit grayscale PNG is supported: " + path.string());
  }
  if (w == 0 || h == 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ValidationError("loadImage: zero-sized image " + path.string());
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);
  data.resize(static_cast<std::size_t>(w) * h);
  rows.resize(h);
  for (png_uint_32 i = 0; i < h; ++i) rows[i] = data.data() + static_cast<std::size_t>(i) * w;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  Image img;
  img.pixels.resize(h, w);
  for (png_uint_32 i = 0; i < h; ++i)
    for (png_uint_32 j = 0; j < w; ++j)
      img.pixels(i, j) = static_cast<double>(data[static_cast<std::size_t>(i) * w + j]) / 255.0;
  return img;
}

}  // namespace

Image loadImage(const std::filesystem::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw ValidationError("loadImage: cannot open " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (sig[0] == 'P' && sig[1] == '5') return loadPgm(path);
  static const unsigned char pngSig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (std::equal(std::begin(pngSig), std::end(pngSig), sig)) return loadPng(path);
  throw ValidationError("loadImage: unsupported format (expect P5 PGM or grayscale PNG): " + path.string());
}

void savePgm(const std::filesystem::path& path, const Image& img) {
  if (img.pixels.size() == 0) throw ValidationError("savePgm: empty image");
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("savePgm: cannot open " + path.string());
  f << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(img.pixels.size()));
  for (Eigen::Index i = 0; i < img.height(); ++i) {
    for (Eigen::Index j = 0; j < img.width(); ++j) {
      const double v = std::clamp(img.pixels(i, j), 0.0, 1.0);
      raw.push_back(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  }
  f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!f) throw ValidationError("savePgm: write failed for " + path.string());
}

void saveRgbPng(const std::filesystem::path& path, int height, int width,
                const std::vector<unsigned char>& rgb) {
  if (height <= 0 || width <= 0) throw ValidationError("saveRgbPng: empty image");
  if (rgb.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * 3)
    throw ValidationError("saveRgbPng: buffer size mismatch");
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw ValidationError("saveRgbPng: cannot open " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw ValidationError("saveRgbPng: libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw ValidationError("saveRgbPng: libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ValidationError("saveRgbPng: write failed for " + path.string());
  }
  png_init_io(png, fp.get());
  // Fixed compression settings keep identical inputs byte-identical.
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int i = 0; i < height; ++i)
    rows[static_cast<std::size_t>(i)] =
        const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(width) * 3);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace gamver
