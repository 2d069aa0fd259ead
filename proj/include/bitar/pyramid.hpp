#pragma once

#include <string>
#include <vector>

#include "bitar/error.hpp"
#include "bitar/grid.hpp"
#include "bitar/quantizer.hpp"
#include "bitar/resample.hpp"
#include "bitar/schedule.hpp"

namespace bitar {

// Multi-scale bit residuals R_1..R_K of one feature map.
struct TokenPyramid {
  QuantizerConfig quantizer;
  ScaleSchedule schedule;
  std::vector<BitResidual> residuals;

  int size() const noexcept { return static_cast<int>(residuals.size()); }
  Scale target() const { return schedule.final_scale(); }
  std::size_t total_bits() const noexcept {
    std::size_t b = 0;
    for (const auto& r : residuals) b += r.bit_count();
    return b;
  }

  void validate() const {
    quantizer.validate();
    if (residuals.size() != schedule.scales.size())
      throw ContractError("pyramid has " + std::to_string(residuals.size()) +
                          " residuals for a " + std::to_string(schedule.size()) + "-scale schedule");
    for (int k = 0; k < size(); ++k) {
      const auto& r = residuals[static_cast<std::size_t>(k)];
      if (r.height() != schedule[k].h || r.width() != schedule[k].w || r.depth() != quantizer.d)
        throw ContractError("residual " + std::to_string(k + 1) + " does not match its schedule entry");
    }
  }

  // Equality covers everything the container format carries.
  friend bool operator==(const TokenPyramid& a, const TokenPyramid& b) {
    return a.quantizer.kind == b.quantizer.kind && a.quantizer.d == b.quantizer.d &&
           a.schedule.id == b.schedule.id && a.schedule.scales == b.schedule.scales &&
           a.residuals == b.residuals;
  }
};

// Running F_k = sum_{i<=k} up(dequantize(R_i), (h, w)). Every code path that
// accumulates residuals goes through this type so that they agree bit-for-bit.
class ResidualAccumulator {
 public:
  ResidualAccumulator(Scale target, const QuantizerConfig& cfg)
      : cfg_(cfg), sum_(target.h, target.w, cfg.d) {}

  const FeatureMap& add(const BitResidual& r) {
    sum_ += upsampled(r);
    ++count_;
    return sum_;
  }

  FeatureMap upsampled(const BitResidual& r) const {
    return resize_bilinear(dequantize_map(r, cfg_), sum_.height(), sum_.width());
  }

  const FeatureMap& value() const noexcept { return sum_; }
  int count() const noexcept { return count_; }

 private:
  QuantizerConfig cfg_;
  FeatureMap sum_;
  int count_ = 0;
};

struct EncodeResult {
  TokenPyramid pyramid;
  std::vector<FeatureMap> inputs;  // transformer inputs for scales 2..K
};

namespace detail {
inline void require_encodable(const FeatureMap& f, const ScaleSchedule& s, const QuantizerConfig& cfg) {
  cfg.validate();
  if (s.scales.empty()) throw ContractError("empty scale schedule");
  if (f.height() != s.final_scale().h || f.width() != s.final_scale().w)
    throw ContractError("feature map is " + std::to_string(f.height()) + "x" +
                        std::to_string(f.width()) + " but the schedule ends at " +
                        format_scale(s.final_scale()));
  if (f.depth() != cfg.d) throw ContractError("feature depth does not match quantizer d");
  if (!f.all_finite()) throw InvalidInput("feature map contains a non-finite value");
}
}  // namespace detail

// Visual tokenizer encoding: for k = 1..K, quantize the downsampled residual
// against the running reconstruction, accumulate, and emit the next-scale
// transformer input for k < K.
inline EncodeResult encode(const FeatureMap& f, const ScaleSchedule& schedule,
                           const QuantizerConfig& cfg) {
  detail::require_encodable(f, schedule, cfg);
  EncodeResult out;
  out.pyramid.quantizer = cfg;
  out.pyramid.schedule = schedule;
  ResidualAccumulator acc(schedule.final_scale(), cfg);
  const int K = schedule.size();
  for (int k = 0; k < K; ++k) {
    const FeatureMap residual = f - acc.value();
    out.pyramid.residuals.push_back(
        quantize_map(resize_bilinear(residual, schedule[k].h, schedule[k].w), cfg));
    acc.add(out.pyramid.residuals.back());
    if (k + 1 < K) out.inputs.push_back(resize_bilinear(acc.value(), schedule[k + 1].h, schedule[k + 1].w));
  }
  return out;
}

// F_upto at full resolution, 1 <= upto <= K.
inline FeatureMap reconstruct(const TokenPyramid& p, int upto) {
  p.validate();
  if (upto < 1 || upto > p.size())
    throw RangeError("reconstruct: scale " + std::to_string(upto) + " outside [1, " +
                     std::to_string(p.size()) + "]");
  ResidualAccumulator acc(p.target(), p.quantizer);
  for (int k = 0; k < upto; ++k) acc.add(p.residuals[static_cast<std::size_t>(k)]);
  return acc.value();
}

inline FeatureMap reconstruct(const TokenPyramid& p) { return reconstruct(p, p.size()); }

// F~_{k-1} = down(F_{k-1}, (h_k, w_k)) for k = 2..K.
inline std::vector<FeatureMap> transformer_inputs(const TokenPyramid& p) {
  p.validate();
  std::vector<FeatureMap> inputs;
  ResidualAccumulator acc(p.target(), p.quantizer);
  for (int k = 0; k + 1 < p.size(); ++k) {
    acc.add(p.residuals[static_cast<std::size_t>(k)]);
    inputs.push_back(resize_bilinear(acc.value(), p.schedule[k + 1].h, p.schedule[k + 1].w));
  }
  return inputs;
}

// Relative error ||F - F_k|| / ||F|| for k = 1..K.
inline std::vector<double> error_curve(const FeatureMap& f, const TokenPyramid& p) {
  p.validate();
  std::vector<double> curve;
  ResidualAccumulator acc(p.target(), p.quantizer);
  for (const auto& r : p.residuals) curve.push_back(relative_error(acc.add(r), f));
  return curve;
}

}  // namespace bitar
