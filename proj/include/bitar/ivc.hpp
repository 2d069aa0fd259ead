#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "bitar/error.hpp"
#include "bitar/grid.hpp"
#include "bitar/numeric.hpp"
#include "bitar/random.hpp"
#include "bitar/tensor.hpp"

namespace bitar {

using BigInt = boost::multiprecision::cpp_int;

// Infinite-vocabulary classifier head: d independent two-way classifiers over
// a hidden state. Column 2p is the "negative" logit of bit p, 2p+1 the
// "positive" one.
struct IvcHead {
  Mat weight;  // hidden x 2d
  Mat bias;    // 1 x 2d

  IvcHead() = default;
  IvcHead(int hidden, int bits) : weight(Mat::Zero(hidden, 2 * bits)), bias(Mat::Zero(1, 2 * bits)) {
    if (hidden < 1 || bits < 1) throw RangeError("IVC head needs hidden >= 1 and d >= 1");
  }

  int hidden() const noexcept { return static_cast<int>(weight.rows()); }
  int bits() const noexcept { return static_cast<int>(weight.cols() / 2); }
  std::int64_t weight_count() const noexcept { return weight.size(); }
  std::int64_t bias_count() const noexcept { return bias.size(); }
};

// Per-cell, per-bit logits of one scale.
struct BitLogits {
  int h = 0;
  int w = 0;
  int d = 0;
  Mat values;  // (h*w) x 2d

  BitLogits() = default;
  BitLogits(int h_, int w_, int d_) : h(h_), w(w_), d(d_), values(Mat::Zero(h_ * w_, 2 * d_)) {}

  double& at(int m, int n, int p, int c) { return values(m * w + n, 2 * p + c); }
  double at(int m, int n, int p, int c) const { return values(m * w + n, 2 * p + c); }
  // positive minus negative logit
  double margin(std::size_t cell, int p) const {
    return values(static_cast<Eigen::Index>(cell), 2 * p + 1) - values(static_cast<Eigen::Index>(cell), 2 * p);
  }
  bool same_shape(const BitLogits& o) const noexcept { return h == o.h && w == o.w && d == o.d; }
};

// Applies the head to a (cells x hidden) block of hidden states.
inline Mat apply_head(const Mat& hidden, const IvcHead& head) {
  if (hidden.cols() != head.hidden())
    throw ContractError("hidden width " + std::to_string(hidden.cols()) +
                        " does not match IVC head input " + std::to_string(head.hidden()));
  Mat out = hidden * head.weight;
  out.rowwise() += head.bias.row(0);
  return out;
}

inline BitLogits bit_logits(const FeatureMap& hidden, const IvcHead& head) {
  if (hidden.depth() != head.hidden())
    throw ContractError("hidden grid depth does not match IVC head input");
  if (!hidden.all_finite()) throw InvalidInput("hidden grid contains a non-finite value");
  const Eigen::Map<const Mat> h(hidden.values().data(), static_cast<Eigen::Index>(hidden.cells()),
                                hidden.depth());
  BitLogits out(hidden.height(), hidden.width(), head.bits());
  out.values = apply_head(h, head);
  return out;
}

struct BitLoss {
  double loss = 0.0;
  BitLogits grad;
  std::size_t correct_bits = 0;  // argmax agreement with the target
  std::size_t total_bits = 0;
};

// Mean over (cell, bit) of the two-way cross-entropy between
// softmax(logits[cell, p, :]) and the target bit, with its gradient.
inline BitLoss bitwise_ce_loss(const BitLogits& logits, const BitResidual& target) {
  if (logits.h != target.height() || logits.w != target.width() || logits.d != target.depth())
    throw ContractError("logits and target shapes differ");
  BitLoss out;
  out.grad = BitLogits(logits.h, logits.w, logits.d);
  const std::size_t cells = static_cast<std::size_t>(logits.h) * logits.w;
  const double norm = 1.0 / static_cast<double>(cells * logits.d);
  CompensatedSum total;
  for (std::size_t c = 0; c < cells; ++c) {
    const int m = static_cast<int>(c / logits.w), n = static_cast<int>(c % logits.w);
    for (int p = 0; p < logits.d; ++p) {
      const bool bit = target.get(m, n, p);
      const double z = logits.margin(c, p);
      // CE = softplus(-z) for bit 1, softplus(z) for bit 0.
      const double s = bit ? -z : z;
      const double ce = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
      total.add(ce);
      const double p_pos = logistic(z);
      const double dz = (p_pos - (bit ? 1.0 : 0.0)) * norm;
      out.grad.values(static_cast<Eigen::Index>(c), 2 * p + 1) = dz;
      out.grad.values(static_cast<Eigen::Index>(c), 2 * p) = -dz;
      out.correct_bits += (z > 0.0) == bit;
    }
  }
  out.total_bits = cells * static_cast<std::size_t>(logits.d);
  out.loss = total.value() * norm;
  return out;
}

// Headline parameter counts (biases excluded).
inline BigInt ivc_param_count(std::int64_t hidden, int d) {
  if (hidden < 1 || d < 1) throw RangeError("hidden and d must be >= 1");
  return BigInt(2) * hidden * d;
}

inline BigInt conventional_param_count(std::int64_t hidden, int d) {
  if (hidden < 1 || d < 1) throw RangeError("hidden and d must be >= 1");
  return BigInt(hidden) << d;
}

// 1 - ivc / conventional.
inline double param_savings(std::int64_t hidden, int d) {
  using boost::multiprecision::cpp_rational;
  const cpp_rational ratio(ivc_param_count(hidden, d), conventional_param_count(hidden, d));
  return 1.0 - static_cast<double>(ratio);
}

// Thousands-separated decimal rendering.
inline std::string group_digits(const BigInt& v) {
  const std::string s = v.str();
  std::string out;
  const std::size_t lead = s.size() % 3;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i != 0 && (i + 3 - lead) % 3 == 0) out += ',';
    out += s[i];
  }
  return out;
}

struct BitSampling {
  bool greedy = false;
  double temperature = 1.0;
};

// Greedy: argmax per bit (ties resolve to 0). Sampled: per-bit categorical
// over softmax(logits / tau), one uniform draw per bit in cell-major order.
inline BitResidual predict_bits(const BitLogits& logits, const BitSampling& mode, Rng& rng) {
  if (!mode.greedy && !(mode.temperature > 0.0))
    throw RangeError("sampling temperature must be positive");
  BitResidual out(logits.h, logits.w, logits.d);
  const std::size_t cells = static_cast<std::size_t>(logits.h) * logits.w;
  for (std::size_t c = 0; c < cells; ++c)
    for (int p = 0; p < logits.d; ++p) {
      const double z = logits.margin(c, p);
      const bool bit = mode.greedy ? z > 0.0 : rng.uniform() < logistic(z / mode.temperature);
      out.set(static_cast<int>(c / logits.w), static_cast<int>(c % logits.w), p, bit);
    }
  return out;
}

}  // namespace bitar
