#pragma once

#include <cmath>
#include <vector>

#include "bitar/tensor.hpp"

// Dense layers with hand-written backward passes. Row-wise reductions use
// plain loops so a row's result never depends on the shape of the batch it
// was computed in.

namespace bitar::nn {

struct Linear {
  Mat weight;  // in x out
  Mat bias;    // 1 x out

  Linear() = default;
  Linear(int in, int out) : weight(Mat::Zero(in, out)), bias(Mat::Zero(1, out)) {}
};

inline Mat linear(const Mat& x, const Linear& l) {
  Mat y = x * l.weight;
  y.rowwise() += l.bias.row(0);
  return y;
}

// Accumulates parameter gradients into `grad` and returns dL/dx.
inline Mat linear_backward(const Mat& x, const Mat& dy, const Linear& l, Linear& grad) {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias.noalias() += dy.colwise().sum();
  return dy * l.weight.transpose();
}

struct LayerNorm {
  Mat gain;  // 1 x h
  Mat bias;  // 1 x h

  LayerNorm() = default;
  explicit LayerNorm(int h) : gain(Mat::Ones(1, h)), bias(Mat::Zero(1, h)) {}
};

struct LayerNormCache {
  Mat xhat;
  std::vector<double> rstd;
};

inline constexpr double kLayerNormEps = 1e-5;

inline Mat layer_norm(const Mat& x, const LayerNorm& ln, LayerNormCache* cache) {
  const Eigen::Index rows = x.rows(), h = x.cols();
  Mat y(rows, h);
  if (cache) {
    cache->xhat.resize(rows, h);
    cache->rstd.resize(static_cast<std::size_t>(rows));
  }
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double* in = x.row(r).data();
    double mean = 0.0;
    for (Eigen::Index c = 0; c < h; ++c) mean += in[c];
    mean /= static_cast<double>(h);
    double var = 0.0;
    for (Eigen::Index c = 0; c < h; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<double>(h);
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    for (Eigen::Index c = 0; c < h; ++c) {
      const double xh = (in[c] - mean) * rstd;
      y(r, c) = xh * ln.gain(0, c) + ln.bias(0, c);
      if (cache) cache->xhat(r, c) = xh;
    }
    if (cache) cache->rstd[static_cast<std::size_t>(r)] = rstd;
  }
  return y;
}

inline Mat layer_norm_backward(const Mat& dy, const LayerNorm& ln, const LayerNormCache& cache,
                               LayerNorm& grad) {
  const Eigen::Index rows = dy.rows(), h = dy.cols();
  Mat dx(rows, h);
  std::vector<double> dxhat(static_cast<std::size_t>(h));
  for (Eigen::Index r = 0; r < rows; ++r) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (Eigen::Index c = 0; c < h; ++c) {
      const double xh = cache.xhat(r, c);
      grad.gain(0, c) += dy(r, c) * xh;
      grad.bias(0, c) += dy(r, c);
      dxhat[static_cast<std::size_t>(c)] = dy(r, c) * ln.gain(0, c);
      mean_d += dxhat[static_cast<std::size_t>(c)];
      mean_dx += dxhat[static_cast<std::size_t>(c)] * xh;
    }
    mean_d /= static_cast<double>(h);
    mean_dx /= static_cast<double>(h);
    const double rstd = cache.rstd[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < h; ++c)
      dx(r, c) = rstd * (dxhat[static_cast<std::size_t>(c)] - mean_d - cache.xhat(r, c) * mean_dx);
  }
  return dx;
}

// tanh approximation of GELU
inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
inline constexpr double kGeluA = 0.044715;

inline Mat gelu(const Mat& u) {
  Mat g(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double x = u.data()[i];
    g.data()[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  return g;
}

inline Mat gelu_backward(const Mat& u, const Mat& dg) {
  Mat du(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double x = u.data()[i];
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    du.data()[i] = dg.data()[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
  }
  return du;
}

// In-place row softmax.
inline void softmax_rows(Mat& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    double* row = s.row(r).data();
    double mx = row[0];
    for (Eigen::Index c = 1; c < s.cols(); ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      row[c] = std::exp(row[c] - mx);
      sum += row[c];
    }
    const double inv = 1.0 / sum;
    for (Eigen::Index c = 0; c < s.cols(); ++c) row[c] *= inv;
  }
}

// dS = P o (dP - rowsum(P o dP))
inline Mat softmax_rows_backward(const Mat& p, const Mat& dp) {
  Mat ds(p.rows(), p.cols());
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    double dot = 0.0;
    for (Eigen::Index c = 0; c < p.cols(); ++c) dot += p(r, c) * dp(r, c);
    for (Eigen::Index c = 0; c < p.cols(); ++c) ds(r, c) = p(r, c) * (dp(r, c) - dot);
  }
  return ds;
}

}  // namespace bitar::nn
