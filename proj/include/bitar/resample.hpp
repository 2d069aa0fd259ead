#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "bitar/error.hpp"
#include "bitar/grid.hpp"

namespace bitar {

namespace detail {

struct Tap {
  int lo = 0;
  int hi = 0;
  double frac = 0.0;
};

// Half-pixel-center sampling positions: src = (i + 0.5) * in / out - 0.5,
// clamped to [0, in - 1].
inline std::vector<Tap> bilinear_taps(int in, int out) {
  std::vector<Tap> taps(static_cast<std::size_t>(out));
  const double step = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * step - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    Tap t;
    t.lo = static_cast<int>(std::floor(src));
    t.hi = std::min(t.lo + 1, in - 1);
    t.frac = src - t.lo;
    taps[static_cast<std::size_t>(i)] = t;
  }
  return taps;
}

}  // namespace detail

// Separable bilinear resize (rows first, then columns). Used for both up- and
// downsampling; an identity resize returns the input bit-for-bit.
inline FeatureMap resize_bilinear(const FeatureMap& f, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw RangeError("resize target must be at least 1x1");
  if (out_h == f.height() && out_w == f.width()) return f;

  const auto row_taps = detail::bilinear_taps(f.height(), out_h);
  const auto col_taps = detail::bilinear_taps(f.width(), out_w);
  const int d = f.depth();

  FeatureMap tmp(out_h, f.width(), d);
  for (int i = 0; i < out_h; ++i) {
    const auto& t = row_taps[static_cast<std::size_t>(i)];
    for (int n = 0; n < f.width(); ++n)
      for (int p = 0; p < d; ++p) {
        const double a = f.at(t.lo, n, p);
        const double b = f.at(t.hi, n, p);
        tmp.at(i, n, p) = a + t.frac * (b - a);
      }
  }
  FeatureMap out(out_h, out_w, d);
  for (int i = 0; i < out_h; ++i)
    for (int j = 0; j < out_w; ++j) {
      const auto& t = col_taps[static_cast<std::size_t>(j)];
      for (int p = 0; p < d; ++p) {
        const double a = tmp.at(i, t.lo, p);
        const double b = tmp.at(i, t.hi, p);
        out.at(i, j, p) = a + t.frac * (b - a);
      }
    }
  return out;
}

}  // namespace bitar
