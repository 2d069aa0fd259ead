#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bitar/error.hpp"
#include "bitar/grid.hpp"
#include "bitar/numeric.hpp"

namespace bitar {

enum class QuantizerKind : std::uint8_t { LFQ = 0, BSQ = 1 };

inline const char* to_string(QuantizerKind k) { return k == QuantizerKind::LFQ ? "lfq" : "bsq"; }

inline QuantizerKind parse_quantizer_kind(const std::string& s) {
  if (s == "lfq" || s == "LFQ") return QuantizerKind::LFQ;
  if (s == "bsq" || s == "BSQ") return QuantizerKind::BSQ;
  throw InvalidInput("unknown quantizer kind '" + s + "' (expected lfq or bsq)");
}

// Largest bit dimension accepted by the exact (2^d) entropy path.
inline constexpr int kMaxExactEntropyDim = 16;
// Largest bit dimension with a native integer index label.
inline constexpr int kMaxIndexDim = 62;

struct QuantizerConfig {
  QuantizerKind kind = QuantizerKind::BSQ;
  int d = 16;
  double entropy_temperature = 1.0;

  // Magnitude of every component of a dequantized code.
  double amplitude() const noexcept {
    return kind == QuantizerKind::LFQ ? 1.0 : 1.0 / std::sqrt(static_cast<double>(d));
  }

  void validate() const {
    if (d < 1) throw RangeError("quantizer bit dimension must be >= 1");
    if (!(entropy_temperature > 0.0) || !std::isfinite(entropy_temperature))
      throw RangeError("entropy temperature must be a positive finite number");
  }

  bool operator==(const QuantizerConfig&) const = default;
};

struct BitVector {
  std::vector<std::uint8_t> bits;  // one entry per dimension, each 0 or 1
  double amplitude = 1.0;

  int dim() const noexcept { return static_cast<int>(bits.size()); }

  std::vector<double> dequantize() const {
    std::vector<double> v(bits.size());
    for (std::size_t p = 0; p < bits.size(); ++p) v[p] = bits[p] ? amplitude : -amplitude;
    return v;
  }

  bool operator==(const BitVector&) const = default;
};

namespace detail {
inline void require_finite(std::span<const double> z) {
  for (double v : z)
    if (!std::isfinite(v)) throw InvalidInput("quantizer input contains a non-finite value");
}
inline void require_dim(std::span<const double> z, const QuantizerConfig& cfg) {
  if (static_cast<int>(z.size()) != cfg.d)
    throw ContractError("vector length " + std::to_string(z.size()) +
                        " does not match quantizer d=" + std::to_string(cfg.d));
}
}  // namespace detail

// Sign quantization. Bit p is set iff z_p > 0; zero maps to bit 0, which is
// the same rule the index label uses. LFQ and BSQ share the bit pattern.
inline BitVector quantize(std::span<const double> z, const QuantizerConfig& cfg) {
  cfg.validate();
  detail::require_dim(z, cfg);
  detail::require_finite(z);
  BitVector out;
  out.amplitude = cfg.amplitude();
  out.bits.resize(z.size());
  for (std::size_t p = 0; p < z.size(); ++p) out.bits[p] = z[p] > 0.0 ? 1 : 0;
  return out;
}

// y = sum_p bit_p * 2^p (dimension 0 is the least significant bit).
inline std::uint64_t bits_to_index(const BitVector& b) {
  if (b.dim() < 1 || b.dim() > kMaxIndexDim)
    throw UnsupportedError("index labels support 1 <= d <= " + std::to_string(kMaxIndexDim) +
                           ", got d=" + std::to_string(b.dim()));
  std::uint64_t y = 0;
  for (int p = 0; p < b.dim(); ++p)
    if (b.bits[p]) y |= std::uint64_t{1} << p;
  return y;
}

inline BitVector index_to_bits(std::uint64_t y, int d, double amplitude = 1.0) {
  if (d < 1 || d > kMaxIndexDim)
    throw UnsupportedError("index labels support 1 <= d <= " + std::to_string(kMaxIndexDim));
  if (y >> d)
    throw RangeError("index " + std::to_string(y) + " out of range for d=" + std::to_string(d));
  BitVector b;
  b.amplitude = amplitude;
  b.bits.resize(d);
  for (int p = 0; p < d; ++p) b.bits[p] = (y >> p) & 1u;
  return b;
}

inline BitVector index_to_bits(std::uint64_t y, const QuantizerConfig& cfg) {
  return index_to_bits(y, cfg.d, cfg.amplitude());
}

// Per-dimension P(bit_p = 1) under softmax(z.c / tau) over all codes c.
// The joint factorizes, so each marginal is logistic(2 a z_p / tau).
inline std::vector<double> soft_assignment(std::span<const double> z, const QuantizerConfig& cfg) {
  cfg.validate();
  detail::require_dim(z, cfg);
  detail::require_finite(z);
  const double scale = 2.0 * cfg.amplitude() / cfg.entropy_temperature;
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = logistic(scale * z[i]);
  return p;
}

struct EntropyTerms {
  double mean_code_entropy = 0.0;  // E[H(q(z))]
  double marginal_entropy = 0.0;   // H[E(q(z))], exact or factorized bound
  double penalty = 0.0;            // mean_code_entropy - marginal_entropy
};

namespace detail {
inline std::size_t batch_size(std::span<const double> batch, const QuantizerConfig& cfg) {
  cfg.validate();
  if (batch.empty() || batch.size() % static_cast<std::size_t>(cfg.d) != 0)
    throw ContractError("batch length must be a positive multiple of d");
  return batch.size() / static_cast<std::size_t>(cfg.d);
}
}  // namespace detail

// Exact entropy penalty. Materializes the 2^d-way code distribution, so it
// refuses d > kMaxExactEntropyDim. Nats throughout.
inline EntropyTerms entropy_penalty_exact(std::span<const double> batch, const QuantizerConfig& cfg) {
  if (cfg.d > kMaxExactEntropyDim)
    throw CapacityError("exact entropy needs a 2^" + std::to_string(cfg.d) +
                        "-entry code distribution; limit is d=" +
                        std::to_string(kMaxExactEntropyDim));
  const std::size_t n = detail::batch_size(batch, cfg);
  const std::size_t codes = std::size_t{1} << cfg.d;

  std::vector<CompensatedSum> marginal(codes);
  std::vector<double> joint(codes);
  CompensatedSum mean_entropy;
  for (std::size_t s = 0; s < n; ++s) {
    const auto z = batch.subspan(s * cfg.d, cfg.d);
    const auto probs = soft_assignment(z, cfg);
    double h = 0.0;
    for (double p : probs) h += binary_entropy(p);
    mean_entropy.add(h);

    // Expand the product distribution; code index uses bit p = 2^p.
    joint[0] = 1.0;
    std::size_t filled = 1;
    for (int p = 0; p < cfg.d; ++p) {
      for (std::size_t c = 0; c < filled; ++c) {
        joint[c + filled] = joint[c] * probs[p];
        joint[c] *= 1.0 - probs[p];
      }
      filled <<= 1;
    }
    for (std::size_t c = 0; c < codes; ++c) marginal[c].add(joint[c]);
  }

  CompensatedSum h_marginal;
  for (std::size_t c = 0; c < codes; ++c) {
    const double m = marginal[c].value() / static_cast<double>(n);
    if (m > 0.0) h_marginal.add(-m * std::log(m));
  }
  EntropyTerms t;
  t.mean_code_entropy = mean_entropy.value() / static_cast<double>(n);
  t.marginal_entropy = h_marginal.value();
  t.penalty = t.mean_code_entropy - t.marginal_entropy;
  return t;
}

// O(d) path: the marginal code entropy is replaced by the sum of per-bit
// entropies of the batch-mean Bernoullis, an upper bound by subadditivity.
// Allocates O(d) memory regardless of d.
inline EntropyTerms entropy_penalty_factorized(std::span<const double> batch,
                                               const QuantizerConfig& cfg) {
  const std::size_t n = detail::batch_size(batch, cfg);
  std::vector<CompensatedSum> mean_p(cfg.d);
  CompensatedSum mean_entropy;
  const double scale = 2.0 * cfg.amplitude() / cfg.entropy_temperature;
  for (std::size_t s = 0; s < n; ++s) {
    const auto z = batch.subspan(s * cfg.d, cfg.d);
    detail::require_finite(z);
    double h = 0.0;
    for (int p = 0; p < cfg.d; ++p) {
      const double prob = logistic(scale * z[p]);
      h += binary_entropy(prob);
      mean_p[p].add(prob);
    }
    mean_entropy.add(h);
  }
  CompensatedSum bound;
  for (int p = 0; p < cfg.d; ++p)
    bound.add(binary_entropy(mean_p[p].value() / static_cast<double>(n)));
  EntropyTerms t;
  t.mean_code_entropy = mean_entropy.value() / static_cast<double>(n);
  t.marginal_entropy = bound.value();
  t.penalty = t.mean_code_entropy - t.marginal_entropy;
  return t;
}

// Quantizes every cell of a feature map.
inline BitResidual quantize_map(const FeatureMap& f, const QuantizerConfig& cfg) {
  cfg.validate();
  if (f.depth() != cfg.d) throw ContractError("feature depth does not match quantizer d");
  if (!f.all_finite()) throw InvalidInput("feature map contains a non-finite value");
  BitResidual r(f.height(), f.width(), f.depth());
  for (int m = 0; m < f.height(); ++m)
    for (int n = 0; n < f.width(); ++n)
      for (int p = 0; p < f.depth(); ++p) r.set(m, n, p, f.at(m, n, p) > 0.0);
  return r;
}

// Maps bits to {-a, +a} at the residual's own resolution.
inline FeatureMap dequantize_map(const BitResidual& r, const QuantizerConfig& cfg) {
  if (r.depth() != cfg.d) throw ContractError("residual depth does not match quantizer d");
  const double a = cfg.amplitude();
  FeatureMap f(r.height(), r.width(), r.depth());
  for (int m = 0; m < r.height(); ++m)
    for (int n = 0; n < r.width(); ++n)
      for (int p = 0; p < r.depth(); ++p) f.at(m, n, p) = r.get(m, n, p) ? a : -a;
  return f;
}

}  // namespace bitar
