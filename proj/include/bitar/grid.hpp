#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bitar/error.hpp"

namespace bitar {

// Real-valued (h, w, d) grid, row-major with the channel axis innermost.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int h, int w, int d, double fill = 0.0) : h_(h), w_(w), d_(d) {
    if (h < 1 || w < 1 || d < 1) {
      throw RangeError("FeatureMap shape must be positive, got (" + std::to_string(h) +
                       "," + std::to_string(w) + "," + std::to_string(d) + ")");
    }
    data_.assign(static_cast<std::size_t>(h) * w * d, fill);
  }

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int depth() const noexcept { return d_; }
  std::size_t cells() const noexcept { return static_cast<std::size_t>(h_) * w_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(int m, int n, int p) { return data_[offset(m, n, p)]; }
  double at(int m, int n, int p) const { return data_[offset(m, n, p)]; }

  std::span<double> cell(int m, int n) {
    return {data_.data() + offset(m, n, 0), static_cast<std::size_t>(d_)};
  }
  std::span<const double> cell(int m, int n) const {
    return {data_.data() + offset(m, n, 0), static_cast<std::size_t>(d_)};
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const FeatureMap& o) const noexcept {
    return h_ == o.h_ && w_ == o.w_ && d_ == o.d_;
  }

  FeatureMap& operator+=(const FeatureMap& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  FeatureMap& operator-=(const FeatureMap& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  friend FeatureMap operator+(FeatureMap a, const FeatureMap& b) { return a += b; }
  friend FeatureMap operator-(FeatureMap a, const FeatureMap& b) { return a -= b; }

  bool operator==(const FeatureMap&) const = default;

  double squared_norm() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }
  double norm() const noexcept { return std::sqrt(squared_norm()); }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  std::size_t offset(int m, int n, int p) const noexcept {
    return (static_cast<std::size_t>(m) * w_ + n) * d_ + p;
  }
  void require_same_shape(const FeatureMap& o) const {
    if (!same_shape(o)) throw ContractError("FeatureMap shape mismatch");
  }

  int h_ = 0, w_ = 0, d_ = 0;
  std::vector<double> data_;
};

// ||a - b|| / ||b||; zero reference maps give the absolute error.
inline double relative_error(const FeatureMap& approx, const FeatureMap& reference) {
  const double ref = reference.norm();
  const double err = (reference - approx).norm();
  return ref > 0.0 ? err / ref : err;
}

inline double mean_squared_error(const FeatureMap& a, const FeatureMap& b) {
  return (a - b).squared_norm() / static_cast<double>(a.size());
}

// Packed binary (h, w, d) grid. Each cell occupies ceil(d/8) bytes with bit p
// at byte p/8, bit position p%8 (LSB first). Padding bits are always zero.
class BitResidual {
 public:
  BitResidual() = default;
  BitResidual(int h, int w, int d) : h_(h), w_(w), d_(d) {
    if (h < 1 || w < 1 || d < 1) throw RangeError("BitResidual shape must be positive");
    bytes_.assign(static_cast<std::size_t>(h) * w * bytes_per_cell(), 0);
  }

  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  int depth() const noexcept { return d_; }
  std::size_t cells() const noexcept { return static_cast<std::size_t>(h_) * w_; }
  std::size_t bit_count() const noexcept { return cells() * d_; }
  int bytes_per_cell() const noexcept { return (d_ + 7) / 8; }

  bool get(int m, int n, int p) const noexcept {
    const std::size_t byte = cell_offset(m, n) + p / 8;
    return (bytes_[byte] >> (p % 8)) & 1u;
  }
  void set(int m, int n, int p, bool v) noexcept {
    const std::size_t byte = cell_offset(m, n) + p / 8;
    const auto mask = static_cast<std::uint8_t>(1u << (p % 8));
    if (v) {
      bytes_[byte] |= mask;
    } else {
      bytes_[byte] &= static_cast<std::uint8_t>(~mask);
    }
  }
  // Flat accessors over (cell, bit) in row-major cell order.
  bool get_flat(std::size_t i) const noexcept {
    const std::size_t c = i / d_;
    const int p = static_cast<int>(i % d_);
    return (bytes_[c * bytes_per_cell() + p / 8] >> (p % 8)) & 1u;
  }
  void set_flat(std::size_t i, bool v) noexcept {
    const std::size_t c = i / d_;
    const int p = static_cast<int>(i % d_);
    set(static_cast<int>(c / w_), static_cast<int>(c % w_), p, v);
  }

  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }
  std::span<std::uint8_t> mutable_bytes() noexcept { return bytes_; }

  std::size_t popcount() const noexcept {
    std::size_t c = 0;
    for (auto b : bytes_) c += static_cast<std::size_t>(__builtin_popcount(b));
    return c;
  }

  BitResidual operator^(const BitResidual& o) const {
    if (h_ != o.h_ || w_ != o.w_ || d_ != o.d_) throw ContractError("BitResidual shape mismatch");
    BitResidual r = *this;
    for (std::size_t i = 0; i < bytes_.size(); ++i) r.bytes_[i] ^= o.bytes_[i];
    return r;
  }

  bool operator==(const BitResidual&) const = default;

 private:
  std::size_t cell_offset(int m, int n) const noexcept {
    return (static_cast<std::size_t>(m) * w_ + n) * bytes_per_cell();
  }

  int h_ = 0, w_ = 0, d_ = 0;
  std::vector<std::uint8_t> bytes_;
};

}  // namespace bitar
