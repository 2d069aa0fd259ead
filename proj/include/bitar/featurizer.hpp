#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "bitar/bytes.hpp"
#include "bitar/error.hpp"
#include "bitar/grid.hpp"
#include "bitar/random.hpp"
#include "bitar/toy_data.hpp"

namespace bitar {

// RGB image with values nominally in [0, 1], row-major, channel innermost.
struct ToyImage {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  ToyImage() = default;
  ToyImage(int h, int w, double fill = 0.0) : height(h), width(w) {
    if (h < 1 || w < 1) throw RangeError("image shape must be positive");
    pixels.assign(static_cast<std::size_t>(h) * w * 3, fill);
  }

  double& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  bool operator==(const ToyImage&) const = default;
};

inline double pixel_rmse(const ToyImage& a, const ToyImage& b) {
  if (a.height != b.height || a.width != b.width) throw ContractError("image shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double e = a.pixels[i] - b.pixels[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(a.pixels.size()));
}

// Mean of each s x s patch, broadcast back over the patch.
inline ToyImage patch_average(const ToyImage& img, int stride) {
  if (stride < 1 || img.height % stride != 0 || img.width % stride != 0)
    throw ContractError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                        " is not divisible by stride " + std::to_string(stride));
  ToyImage out(img.height, img.width);
  const double inv = 1.0 / (stride * stride);
  for (int m = 0; m < img.height / stride; ++m)
    for (int n = 0; n < img.width / stride; ++n)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int y = 0; y < stride; ++y)
          for (int x = 0; x < stride; ++x) s += img.at(m * stride + y, n * stride + x, c);
        for (int y = 0; y < stride; ++y)
          for (int x = 0; x < stride; ++x) out.at(m * stride + y, n * stride + x, c) = s * inv;
      }
  return out;
}

inline constexpr std::uint64_t kLiftSeed = 0xB17F3A7u;  // fixed by container version 1
inline constexpr double kPixelCenter = 0.5;

// Analytic tokenizer stand-in: patch average, subtract 0.5, lift RGB into d
// channels with an orthonormal 3-frame. render() projects back.
class Featurizer {
 public:
  Featurizer(int d, int stride, std::uint64_t seed = kLiftSeed) : d_(d), stride_(stride) {
    if (d < 3) throw ContractError("featurizer needs d >= 3");
    if (stride < 1) throw ContractError("stride must be positive");
    // Gram-Schmidt on Gaussian columns.
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(d)));
    lift_.assign(static_cast<std::size_t>(d) * 3, 0.0);
    for (int c = 0; c < 3; ++c) {
      std::vector<double> v(static_cast<std::size_t>(d));
      for (double& x : v) x = rng.normal();
      for (int pass = 0; pass < 2; ++pass)
        for (int j = 0; j < c; ++j) {
          double dot = 0.0;
          for (int p = 0; p < d; ++p) dot += v[static_cast<std::size_t>(p)] * lift(p, j);
          for (int p = 0; p < d; ++p) v[static_cast<std::size_t>(p)] -= dot * lift(p, j);
        }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      for (int p = 0; p < d; ++p) lift_[static_cast<std::size_t>(p) * 3 + c] = v[static_cast<std::size_t>(p)] / norm;
    }
  }

  int depth() const noexcept { return d_; }
  int stride() const noexcept { return stride_; }
  double lift(int p, int c) const { return lift_[static_cast<std::size_t>(p) * 3 + c]; }

  FeatureMap featurize(const ToyImage& img) const {
    if (img.height % stride_ != 0 || img.width % stride_ != 0)
      throw ContractError("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                          " is not divisible by stride " + std::to_string(stride_));
    const int h = img.height / stride_, w = img.width / stride_;
    FeatureMap f(h, w, d_);
    const double inv = 1.0 / (stride_ * stride_);
    for (int m = 0; m < h; ++m)
      for (int n = 0; n < w; ++n) {
        double rgb[3];
        for (int c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int y = 0; y < stride_; ++y)
            for (int x = 0; x < stride_; ++x) s += img.at(m * stride_ + y, n * stride_ + x, c);
          rgb[c] = s * inv - kPixelCenter;
        }
        for (int p = 0; p < d_; ++p)
          f.at(m, n, p) = lift(p, 0) * rgb[0] + lift(p, 1) * rgb[1] + lift(p, 2) * rgb[2];
      }
    return f;
  }

  ToyImage render(const FeatureMap& f) const {
    if (f.depth() != d_) throw ContractError("feature depth does not match the featurizer");
    ToyImage img(f.height() * stride_, f.width() * stride_);
    for (int m = 0; m < f.height(); ++m)
      for (int n = 0; n < f.width(); ++n)
        for (int c = 0; c < 3; ++c) {
          double s = 0.0;
          for (int p = 0; p < d_; ++p) s += lift(p, c) * f.at(m, n, p);
          s += kPixelCenter;
          for (int y = 0; y < stride_; ++y)
            for (int x = 0; x < stride_; ++x) img.at(m * stride_ + y, n * stride_ + x, c) = s;
        }
    return img;
  }

 private:
  int d_, stride_;
  std::vector<double> lift_;  // d x 3, orthonormal columns
};

// Smooth procedural test image in [0, 1].
inline ToyImage smooth_toy_image(int h, int w, std::uint64_t seed, double sigma = 6.0) {
  Rng rng(derive_seed(seed, 0x1A6E));
  const FeatureMap field = smooth_random_field(h, w, 3, rng, 0.18, sigma);
  ToyImage img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(0.5 + field.at(y, x, c), 0.0, 1.0);
  return img;
}

// Binary PPM (P6), 16-bit samples on write; 8- or 16-bit on read.
inline Bytes encode_ppm(const ToyImage& img) {
  std::ostringstream head;
  head << "P6\n" << img.width << " " << img.height << "\n65535\n";
  ByteWriter out;
  out.str(head.str());
  for (double v : img.pixels) {
    const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    out.u8(static_cast<std::uint8_t>(q >> 8));
    out.u8(static_cast<std::uint8_t>(q & 0xFF));
  }
  return out.take();
}

inline ToyImage decode_ppm(const Bytes& b) {
  std::size_t pos = 0;
  auto token = [&]() {
    std::string t;
    while (pos < b.size()) {
      const char ch = static_cast<char>(b[pos]);
      if (ch == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        if (!t.empty()) break;
        ++pos;
      } else {
        t += ch;
        ++pos;
      }
    }
    if (t.empty()) throw FormatError("PPM header is incomplete");
    return t;
  };
  if (token() != "P6") throw FormatError("only binary PPM (P6) images are supported");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(token());
    h = std::stoi(token());
    maxval = std::stoi(token());
  } catch (const std::logic_error&) {
    throw FormatError("PPM header has a non-numeric field");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw FormatError("PPM header out of range");
  ++pos;  // single whitespace before the raster
  const std::size_t bps = maxval > 255 ? 2 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * h * 3 * bps;
  if (b.size() < pos + need) throw TruncatedError("PPM raster is truncated");
  ToyImage img(h, w);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const std::size_t o = pos + i * bps;
    const unsigned v = bps == 2 ? (static_cast<unsigned>(b[o]) << 8) | b[o + 1] : b[o];
    img.pixels[i] = static_cast<double>(v) / maxval;
  }
  return img;
}

inline ToyImage read_ppm(const std::filesystem::path& p) { return decode_ppm(read_file(p)); }

inline void write_ppm(const std::filesystem::path& p, const ToyImage& img) {
  write_file_atomic(p, encode_ppm(img));
}

}  // namespace bitar
