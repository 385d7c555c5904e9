#include "blockpd/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace blockpd {

namespace {

struct FileCloser {
  void operator()(std::FILE *f) const {
    if (f) { std::fclose(f); }
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

Image load_png(std::string const &path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) { throw std::runtime_error("cannot open " + path); }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) { throw std::runtime_error("libpng init failed"); }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("unreadable PNG " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_read_update_info(png, info);
  auto const w = png_get_image_width(png, info);
  auto const h = png_get_image_height(png, info);
  auto const channels = png_get_channels(png, info);
  auto const rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> buf(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 i = 0; i < h; ++i) { rows[i] = buf.data() + i * rowbytes; }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img{{w, h}, std::vector<double>(static_cast<std::size_t>(w) * h)};
  for (png_uint_32 i = 0; i < h; ++i) {
    for (png_uint_32 j = 0; j < w; ++j) {
      png_bytep px = rows[i] + j * channels;
      double v;
      if (channels >= 3) {
        v = luma(px[0], px[1], px[2]);
      } else {
        v = px[0];
      }
      img.data[static_cast<std::size_t>(i) * w + j] = v;
    }
  }
  return img;
}

Image load_pgm(std::string const &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) { throw std::runtime_error("cannot open " + path); }
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") { throw std::runtime_error("not a PGM file: " + path); }
  auto next_int = [&]() {
    while (true) {
      in >> std::ws;
      if (in.peek() == '#') {
        std::string line;
        std::getline(in, line);
        continue;
      }
      long v;
      if (!(in >> v)) { throw std::runtime_error("malformed PGM header: " + path); }
      return v;
    }
  };
  long const w = next_int(), h = next_int(), maxval = next_int();
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) { throw std::runtime_error("bad PGM header: " + path); }
  Image img{{static_cast<std::size_t>(w), static_cast<std::size_t>(h)},
            std::vector<double>(static_cast<std::size_t>(w * h))};
  double const scale = 255.0 / static_cast<double>(maxval);
  if (magic == "P2") {
    for (auto &v : img.data) { v = scale * static_cast<double>(next_int()); }
    return img;
  }
  in.get();
  std::size_t const bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(img.data.size() * bytes);
  if (!in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw std::runtime_error("truncated PGM: " + path);
  }
  for (std::size_t k = 0; k < img.data.size(); ++k) {
    double const v = bytes == 2 ? raw[2 * k] * 256.0 + raw[2 * k + 1] : raw[k];
    img.data[k] = scale * v;
  }
  return img;
}

}  // namespace

Image load_image(std::string const &path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) { throw std::runtime_error("cannot open " + path); }
  unsigned char sig[8] = {};
  auto const n = std::fread(sig, 1, 8, fp.get());
  fp.reset();
  if (n == 8 && png_sig_cmp(sig, 0, 8) == 0) { return load_png(path); }
  if (n >= 2 && sig[0] == 'P' && (sig[1] == '5' || sig[1] == '2')) { return load_pgm(path); }
  throw std::runtime_error("unsupported image format: " + path);
}

void save_png(Image const &img, std::string const &path) {
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) { throw std::runtime_error("cannot write " + path); }
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) { throw std::runtime_error("libpng init failed"); }
  auto const w = img.grid.width, h = img.grid.height;
  std::vector<png_byte> buf(w * h);
  for (std::size_t k = 0; k < buf.size(); ++k) {
    buf[k] = static_cast<png_byte>(std::clamp(std::lround(img.data[k]), 0L, 255L));
  }
  std::vector<png_bytep> rows(h);
  for (std::size_t i = 0; i < h; ++i) { rows[i] = buf.data() + i * w; }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG write failed: " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image downscale(Image const &img, std::size_t factor) {
  if (factor == 0 || img.grid.width % factor || img.grid.height % factor) {
    throw DimensionError("downscale factor must divide the image size");
  }
  Grid2D const g{img.grid.width / factor, img.grid.height / factor};
  Image out{g, std::vector<double>(g.pixels(), 0.0)};
  double const inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t i = 0; i < img.grid.height; ++i) {
    for (std::size_t j = 0; j < img.grid.width; ++j) {
      out.data[(i / factor) * g.width + j / factor] += inv * img.data[i * img.grid.width + j];
    }
  }
  return out;
}

Image synthetic_test_image(std::size_t width, std::size_t height) {
  Grid2D const g{width, height};
  check_grid(g);
  Image img{g, std::vector<double>(g.pixels())};
  double const W = static_cast<double>(width), H = static_cast<double>(height);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      double const x = (static_cast<double>(j) + 0.5) / W;  // [0,1)
      double const y = (static_cast<double>(i) + 0.5) / H;
      // sky-to-ground shading with a horizon
      double v = y < 0.55 ? 185.0 - 60.0 * y : 95.0 + 40.0 * (y - 0.55);
      // sun disk
      if ((x - 0.78) * (x - 0.78) + (y - 0.2) * (y - 0.2) < 0.09 * 0.09) { v = 240.0; }
      // house body, roof and door
      if (x > 0.12 && x < 0.42 && y > 0.45 && y < 0.85) { v = 150.0 + 30.0 * (x - 0.12); }
      if (y <= 0.45 && y > 0.25 && std::abs(x - 0.27) < (y - 0.25) * 0.85) { v = 70.0; }
      if (x > 0.24 && x < 0.30 && y > 0.65 && y < 0.85) { v = 45.0; }
      // window with a fine grid texture
      if (x > 0.15 && x < 0.22 && y > 0.52 && y < 0.62) {
        v = 200.0 + 25.0 * std::sin(2.0 * std::numbers::pi * j / 6.0) * std::sin(2.0 * std::numbers::pi * i / 6.0);
      }
      // tree: smooth radial shading on a trunk
      double const rt = std::hypot((x - 0.62) / 0.11, (y - 0.45) / 0.17);
      if (rt < 1.0) { v = 60.0 + 50.0 * rt; }
      if (x > 0.605 && x < 0.635 && y >= 0.6 && y < 0.82) { v = 80.0; }
      // field stripes in the foreground
      if (y > 0.86) { v += 18.0 * std::sin(2.0 * std::numbers::pi * (x * 9.0 + y * 3.0)); }
      img.data[i * width + j] = std::clamp(v, 0.0, 255.0);
    }
  }
  return img;
}

}  // namespace blockpd
