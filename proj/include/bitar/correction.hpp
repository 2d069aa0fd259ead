#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bitar/error.hpp"
#include "bitar/pyramid.hpp"
#include "bitar/random.hpp"

namespace bitar {

struct BscConfig {
  double max_flip_ratio = 0.0;  // p; each scale flips with a ratio drawn from U[0, p]
  std::uint64_t seed = 0;

  void validate() const {
    if (!(max_flip_ratio >= 0.0 && max_flip_ratio <= 1.0))
      throw RangeError("flip ratio must lie in [0, 1]");
  }
};

// Flips each bit independently with probability `ratio`. Returns the mask of
// flipped bits; `r` is updated in place.
inline BitResidual random_flip_inplace(BitResidual& r, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw RangeError("flip ratio must lie in [0, 1]");
  BitResidual mask(r.height(), r.width(), r.depth());
  const std::size_t n = r.bit_count();
  for (std::size_t i = 0; i < n; ++i) {
    if (rng.bernoulli(ratio)) {
      mask.set_flat(i, true);
      r.set_flat(i, !r.get_flat(i));
    }
  }
  return mask;
}

inline BitResidual random_flip(const BitResidual& r, double ratio, Rng& rng) {
  BitResidual out = r;
  random_flip_inplace(out, ratio, rng);
  return out;
}

struct FlipTrace {
  std::vector<double> ratios;       // one per scale
  std::vector<BitResidual> masks;   // flipped-bit masks, shaped like the labels

  bool empty() const noexcept { return ratios.empty(); }
  bool operator==(const FlipTrace&) const = default;
};

struct BscEncodeResult {
  TokenPyramid labels;             // re-quantized targets R_k
  std::vector<FeatureMap> inputs;  // inputs built from the flipped stream
  FlipTrace trace;
};

// Stream seed for one (sample, scale) pair; independent of processing order.
inline std::uint64_t flip_stream_seed(std::uint64_t seed, std::uint64_t sample, int scale) {
  return derive_seed(seed, sample, static_cast<std::uint64_t>(scale));
}

// Encoding with bitwise self-correction. Labels are quantized against the
// running sum of *flipped* residuals, so every later scale learns to undo the
// injected errors. With p = 0 this is identical to encode().
inline BscEncodeResult encode_with_bsc(const FeatureMap& f, const ScaleSchedule& schedule,
                                       const QuantizerConfig& cfg, const BscConfig& bsc,
                                       std::uint64_t sample_index = 0) {
  bsc.validate();
  detail::require_encodable(f, schedule, cfg);
  BscEncodeResult out;
  out.labels.quantizer = cfg;
  out.labels.schedule = schedule;
  ResidualAccumulator acc(schedule.final_scale(), cfg);
  const int K = schedule.size();
  for (int k = 0; k < K; ++k) {
    const FeatureMap residual = f - acc.value();
    BitResidual label = quantize_map(resize_bilinear(residual, schedule[k].h, schedule[k].w), cfg);
    Rng rng(flip_stream_seed(bsc.seed, sample_index, k));
    const double ratio = bsc.max_flip_ratio * rng.uniform();
    BitResidual flipped = label;
    out.trace.masks.push_back(random_flip_inplace(flipped, ratio, rng));
    out.trace.ratios.push_back(ratio);
    out.labels.residuals.push_back(std::move(label));
    acc.add(flipped);
    if (k + 1 < K) out.inputs.push_back(resize_bilinear(acc.value(), schedule[k + 1].h, schedule[k + 1].w));
  }
  return out;
}

// Two-arm self-correction experiment on one feature map: the flipped prefix
// is continued either by re-quantized residuals or by the original ones.
struct CompensationTrial {
  double baseline = 0.0;     // unflipped relative error at scale K
  double requantized = 0.0;  // flipped prefix + re-quantized continuation
  double naive = 0.0;        // flipped prefix + original continuation
  std::size_t flipped_bits = 0;

  bool compensates(double tolerance = 1.2) const noexcept {
    return requantized <= tolerance * baseline && requantized < naive;
  }
};

// Flips scales first_flip..last_flip (1-based, inclusive) at a fixed ratio.
inline CompensationTrial compensation_trial(const FeatureMap& f, const ScaleSchedule& schedule,
                                            const QuantizerConfig& cfg, int first_flip,
                                            int last_flip, double ratio, std::uint64_t seed) {
  if (first_flip < 1 || last_flip < first_flip || last_flip >= schedule.size())
    throw RangeError("flipped scales must satisfy 1 <= first <= last < K");
  const auto clean = encode(f, schedule, cfg).pyramid;
  CompensationTrial t;
  t.baseline = relative_error(reconstruct(clean), f);

  ResidualAccumulator requant(schedule.final_scale(), cfg);
  ResidualAccumulator naive(schedule.final_scale(), cfg);
  const int K = schedule.size();
  for (int k = 0; k < K; ++k) {
    const int scale = k + 1;
    if (scale < first_flip) {
      requant.add(clean.residuals[static_cast<std::size_t>(k)]);
      naive.add(clean.residuals[static_cast<std::size_t>(k)]);
      continue;
    }
    // Re-quantize against the corrupted running sum.
    BitResidual r = quantize_map(
        resize_bilinear(f - requant.value(), schedule[k].h, schedule[k].w), cfg);
    if (scale <= last_flip) {
      Rng rng(flip_stream_seed(seed, 0, k));
      t.flipped_bits += random_flip_inplace(r, ratio, rng).popcount();
      // The naive arm sees the same flipped prefix.
      naive.add(r);
    } else {
      naive.add(clean.residuals[static_cast<std::size_t>(k)]);
    }
    requant.add(r);
  }
  t.requantized = relative_error(requant.value(), f);
  t.naive = relative_error(naive.value(), f);
  return t;
}

}  // namespace bitar
