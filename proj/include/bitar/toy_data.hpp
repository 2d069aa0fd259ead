#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bitar/error.hpp"
#include "bitar/grid.hpp"
#include "bitar/random.hpp"

namespace bitar {

// Gaussian blur of white noise, independently per channel, with edge
// clamping; rescaled so the whole map has the requested RMS.
inline FeatureMap smooth_random_field(int h, int w, int d, Rng& rng, double rms = 1.0,
                                      double sigma = 2.0) {
  FeatureMap noise(h, w, d);
  for (double& v : noise.values()) v = rng.normal();

  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double ksum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    ksum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= ksum;

  auto clamp_idx = [](int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); };
  FeatureMap rows(h, w, d);
  for (int m = 0; m < h; ++m)
    for (int n = 0; n < w; ++n)
      for (int p = 0; p < d; ++p) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += kernel[static_cast<std::size_t>(i + radius)] * noise.at(clamp_idx(m + i, h), n, p);
        rows.at(m, n, p) = s;
      }
  FeatureMap out(h, w, d);
  for (int m = 0; m < h; ++m)
    for (int n = 0; n < w; ++n)
      for (int p = 0; p < d; ++p) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i)
          s += kernel[static_cast<std::size_t>(i + radius)] * rows.at(m, clamp_idx(n + i, w), p);
        out.at(m, n, p) = s;
      }
  const double current = std::sqrt(out.squared_norm() / static_cast<double>(out.size()));
  if (current > 0.0)
    for (double& v : out.values()) v *= rms / current;
  return out;
}

// Enumerated toy prompts: a position word and a color word per class.
// Class ids are 1..kNumClasses; id 0 is the null (unconditional) prompt.
struct ToyPrompts {
  static constexpr int kNullClass = 0;
  static constexpr int kNumClasses = 8;
  static constexpr int kNullToken = 0;
  static constexpr int kVocabSize = 7;  // null, 4 positions, 2 colors

  static int quadrant(int cls) { return (cls - 1) % 4; }
  static int color(int cls) { return (cls - 1) / 4; }

  static void check(int cls) {
    if (cls < 0 || cls > kNumClasses)
      throw LookupError("unknown condition id " + std::to_string(cls) + " (valid: 0.." +
                        std::to_string(kNumClasses) + ")");
  }

  static std::vector<int> tokens(int cls) {
    check(cls);
    if (cls == kNullClass) return {kNullToken};
    return {1 + quadrant(cls), 5 + color(cls)};
  }

  static std::string describe(int cls) {
    check(cls);
    if (cls == kNullClass) return "<null>";
    static const char* pos[] = {"top-left", "top-right", "bottom-left", "bottom-right"};
    static const char* col[] = {"warm", "cool"};
    return std::string(col[color(cls)]) + " blob " + pos[quadrant(cls)];
  }
};

struct ToyDataConfig {
  int height = 16;
  int width = 16;
  int d = 16;
  double blob_amplitude = 1.5;
  double blob_sigma = 3.0;
  double noise_rms = 0.2;
  double noise_sigma = 2.0;
  std::uint64_t seed = 7;
};

// Class-conditional procedural feature maps: a Gaussian blob in one quadrant
// carrying a class color direction, plus low-pass noise.
class ToyDataset {
 public:
  struct Example {
    FeatureMap features;
    int class_id = 1;
  };

  explicit ToyDataset(ToyDataConfig cfg = {}) : cfg_(cfg) {
    Rng rng(derive_seed(cfg_.seed, 0xC0102));
    color_.assign(static_cast<std::size_t>(cfg_.d), 0.0);
    for (double& c : color_) c = rng.bernoulli(0.5) ? 1.0 : -1.0;
  }

  const ToyDataConfig& config() const noexcept { return cfg_; }

  // Noise-free field of a class; the "generator manifold" center.
  FeatureMap class_field(int cls) const {
    ToyPrompts::check(cls);
    if (cls == ToyPrompts::kNullClass) throw LookupError("the null class has no field");
    FeatureMap f(cfg_.height, cfg_.width, cfg_.d);
    const int q = ToyPrompts::quadrant(cls);
    const double sign = ToyPrompts::color(cls) == 0 ? 1.0 : -1.0;
    const double cy = (q / 2 == 0 ? 0.25 : 0.75) * cfg_.height;
    const double cx = (q % 2 == 0 ? 0.25 : 0.75) * cfg_.width;
    for (int m = 0; m < cfg_.height; ++m)
      for (int n = 0; n < cfg_.width; ++n) {
        const double dy = m + 0.5 - cy;
        const double dx = n + 0.5 - cx;
        const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * cfg_.blob_sigma * cfg_.blob_sigma));
        for (int p = 0; p < cfg_.d; ++p)
          f.at(m, n, p) = sign * cfg_.blob_amplitude * g * color_[static_cast<std::size_t>(p)];
      }
    return f;
  }

  // Deterministic example; `held_out` draws from a disjoint stream.
  Example example(std::uint64_t index, bool held_out = false) const {
    Rng rng(derive_seed(cfg_.seed, held_out ? 2 : 1, index));
    Example e;
    e.class_id = 1 + static_cast<int>(rng.below(ToyPrompts::kNumClasses));
    e.features = class_field(e.class_id);
    e.features += smooth_random_field(cfg_.height, cfg_.width, cfg_.d, rng, cfg_.noise_rms,
                                      cfg_.noise_sigma);
    return e;
  }

  // Class whose noise-free field is nearest (MSE) to f.
  int nearest_class(const FeatureMap& f) const {
    int best = 1;
    double best_mse = 0.0;
    for (int c = 1; c <= ToyPrompts::kNumClasses; ++c) {
      const double mse = mean_squared_error(f, class_field(c));
      if (c == 1 || mse < best_mse) {
        best = c;
        best_mse = mse;
      }
    }
    return best;
  }

 private:
  ToyDataConfig cfg_;
  std::vector<double> color_;
};

}  // namespace bitar
