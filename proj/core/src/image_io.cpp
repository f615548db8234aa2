#include "saliq/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>
#include <vector>

namespace saliq {

namespace {

struct FileCloser {
  void operator()(FILE* fp) const {
    if (fp) std::fclose(fp);
  }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("ppm '" + path + "': " + what);
}

// Next whitespace-delimited non-negative integer, skipping '#' comments.
int read_header_int(FILE* fp, const std::string& path) {
  int ch;
  for (;;) {
    ch = std::fgetc(fp);
    if (ch == EOF) fail(path, "truncated header");
    if (ch == '#') {
      while (ch != '\n' && ch != EOF) ch = std::fgetc(fp);
      continue;
    }
    if (!std::isspace(ch)) break;
  }
  if (!std::isdigit(ch)) fail(path, "expected integer in header");
  long value = 0;
  while (std::isdigit(ch)) {
    value = value * 10 + (ch - '0');
    if (value > 1 << 30) fail(path, "header value out of range");
    ch = std::fgetc(fp);
  }
  if (ch == EOF) fail(path, "truncated header");
  return static_cast<int>(value);
}

}  // namespace

Tensor read_ppm(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(path, "cannot open");
  char magic[2];
  if (std::fread(magic, 1, 2, fp.get()) != 2 || magic[0] != 'P' || magic[1] != '6') {
    fail(path, "not a binary PPM (P6)");
  }
  const int w = read_header_int(fp.get(), path);
  const int h = read_header_int(fp.get(), path);
  const int maxval = read_header_int(fp.get(), path);
  if (w <= 0 || h <= 0) fail(path, "bad dimensions");
  if (maxval <= 0 || maxval > 65535) fail(path, "bad maxval");

  const int bytes_per_sample = maxval > 255 ? 2 : 1;
  const size_t count = static_cast<size_t>(w) * h * 3 * bytes_per_sample;
  std::vector<uint8_t> raw(count);
  if (std::fread(raw.data(), 1, count, fp.get()) != count) fail(path, "truncated pixel data");

  Tensor out({3, h, w});
  const double scale = 1.0 / maxval;
  for (int64_t i = 0; i < static_cast<int64_t>(w) * h; ++i) {
    for (int c = 0; c < 3; ++c) {
      const size_t off = static_cast<size_t>(i * 3 + c) * bytes_per_sample;
      int v = raw[off];
      if (bytes_per_sample == 2) v = (v << 8) | raw[off + 1];  // network byte order
      out[static_cast<int64_t>(c) * h * w + i] = static_cast<float>(v * scale);
    }
  }
  return out;
}

void write_ppm(const Tensor& image, const std::string& path) {
  if (image.ndim() != 3 || image.dim(0) != 3) {
    throw std::invalid_argument("write_ppm: expected [3,H,W] tensor, got " + image.shape_str());
  }
  const int h = image.dim(1), w = image.dim(2);
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(path, "cannot open for writing");
  std::fprintf(fp.get(), "P6\n%d %d\n255\n", w, h);
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
  for (int64_t i = 0; i < static_cast<int64_t>(w) * h; ++i) {
    for (int c = 0; c < 3; ++c) {
      float v = image[static_cast<int64_t>(c) * h * w + i];
      v = std::min(std::max(v, 0.0f), 1.0f);
      raw[static_cast<size_t>(i * 3 + c)] = static_cast<uint8_t>(std::lround(255.0 * v));
    }
  }
  if (std::fwrite(raw.data(), 1, raw.size(), fp.get()) != raw.size()) fail(path, "short write");
}

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
  if (image.ndim() != 3) throw std::invalid_argument("resize_bilinear: expected [C,H,W], got " + image.shape_str());
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: bad output size");
  const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == out_h && w == out_w) return image;

  Tensor out({c, out_h, out_w});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int ch = 0; ch < c; ++ch) {
    const float* in_plane = image.data() + static_cast<int64_t>(ch) * h * w;
    float* out_plane = out.data() + static_cast<int64_t>(ch) * out_h * out_w;
    for (int i = 0; i < out_h; ++i) {
      double fy = (i + 0.5) * sy - 0.5;
      fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int j = 0; j < out_w; ++j) {
        double fx = (j + 0.5) * sx - 0.5;
        fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double top = (1.0 - wx) * in_plane[y0 * w + x0] + wx * in_plane[y0 * w + x1];
        const double bot = (1.0 - wx) * in_plane[y1 * w + x0] + wx * in_plane[y1 * w + x1];
        out_plane[static_cast<int64_t>(i) * out_w + j] = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

}  // namespace saliq
