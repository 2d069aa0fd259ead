#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "bitar/error.hpp"
#include "bitar/tensor.hpp"

namespace bitar {

// 2D rotary embedding for one head. The first half of the head dimensions is
// rotated by the row index m, the second half by the column index n; within a
// half, adjacent pairs (2i, 2i+1) turn by pos * base^(-i / (head_dim / 4)).
class Rope2d {
 public:
  Rope2d(int head_dim, double base) : head_dim_(head_dim), base_(base) {
    if (head_dim < 4 || head_dim % 4 != 0)
      throw ContractError("RoPE2d needs a head width divisible by 4");
    const int quarter = head_dim / 4;
    freqs_.resize(static_cast<std::size_t>(quarter));
    for (int i = 0; i < quarter; ++i)
      freqs_[static_cast<std::size_t>(i)] = std::pow(base, -static_cast<double>(i) / quarter);
  }

  int head_dim() const noexcept { return head_dim_; }

  // Rotates x (length head_dim) in place; `inverse` applies the transpose.
  void rotate(double* x, int m, int n, bool inverse = false) const {
    const int quarter = head_dim_ / 4;
    const double sign = inverse ? -1.0 : 1.0;
    for (int axis = 0; axis < 2; ++axis) {
      const double pos = axis == 0 ? m : n;
      double* half = x + axis * (head_dim_ / 2);
      for (int i = 0; i < quarter; ++i) {
        const double angle = pos * freqs_[static_cast<std::size_t>(i)];
        const double c = std::cos(angle), s = sign * std::sin(angle);
        const double a = half[2 * i], b = half[2 * i + 1];
        half[2 * i] = a * c - b * s;
        half[2 * i + 1] = a * s + b * c;
      }
    }
  }

  void rotate(std::span<double> x, int m, int n, bool inverse = false) const {
    if (static_cast<int>(x.size()) != head_dim_) throw ContractError("RoPE2d vector width mismatch");
    rotate(x.data(), m, n, inverse);
  }

  // Rotates every head of every row of a (tokens x heads*head_dim) block.
  void rotate_rows(Mat& x, std::span<const int> rows_m, std::span<const int> cols_n,
                   bool inverse = false) const {
    const auto heads = x.cols() / head_dim_;
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index hd = 0; hd < heads; ++hd)
        rotate(x.row(r).data() + hd * head_dim_, rows_m[static_cast<std::size_t>(r)],
               cols_n[static_cast<std::size_t>(r)], inverse);
  }

 private:
  int head_dim_;
  double base_;
  std::vector<double> freqs_;
};

}  // namespace bitar
