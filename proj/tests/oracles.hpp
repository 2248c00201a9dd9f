// Independent reference implementations used as test oracles. Everything in
// this header is deliberately written the slow, obvious way and must not
// call into the library code paths it is used to check.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mcl/tensor.hpp"

namespace oracle {

using mcl::ad::Tensor;

// Naive triple-loop product.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

// Direct exp/sum softmax, optionally masked, without max subtraction.
inline Tensor softmax(const Tensor& x, const Tensor* mask = nullptr) {
  Tensor out(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i) {
    double sum = 0.0;
    bool any = false;
    for (int j = 0; j < x.cols; ++j) {
      if (mask && mask->at(i, j) == 0.0) continue;
      sum += std::exp(x.at(i, j));
      any = true;
    }
    if (!any) continue;
    for (int j = 0; j < x.cols; ++j) {
      if (mask && mask->at(i, j) == 0.0) continue;
      out.at(i, j) = std::exp(x.at(i, j)) / sum;
    }
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
  return m;
}

// Central finite differences against an analytic gradient, elementwise over
// one parameter tensor. Relative error uses an absolute floor so that
// near-zero gradients are compared in the absolute regime.
inline double fd_max_rel_error(Tensor& param, const Tensor& analytic,
                               const std::function<double()>& loss, double h = 1e-5,
                               double floor = 1e-3) {
  double worst = 0.0;
  for (size_t i = 0; i < param.size(); ++i) {
    const double keep = param.data[i];
    param.data[i] = keep + h;
    const double up = loss();
    param.data[i] = keep - h;
    const double down = loss();
    param.data[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double an = analytic.data[i];
    const double denom = std::max({std::fabs(fd), std::fabs(an), floor});
    worst = std::max(worst, std::fabs(fd - an) / denom);
  }
  return worst;
}

// Scalar Adam simulation for trajectory comparison.
struct ScalarAdam {
  double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0;
  long t = 0;

  explicit ScalarAdam(double lr_) : lr(lr_) {}

  double step(double x, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace oracle
