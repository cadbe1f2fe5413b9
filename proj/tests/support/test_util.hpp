#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rigid/types.hpp"

namespace rigid::testing {

/// Draws rows from N(mean, cov).
class GaussianSampler {
 public:
  GaussianSampler(Vector mean, const Matrix& cov)
      : mean_(std::move(mean)), chol_(Eigen::LLT<Matrix>(cov).matrixL()) {}

  template <class Rng>
  Vector draw(Rng& rng) {
    Vector z(mean_.size());
    for (Index k = 0; k < z.size(); ++k) z(k) = normal_(rng);
    return mean_ + chol_ * z;
  }

  template <class Rng>
  Matrix draw_rows(Rng& rng, Index n) {
    Matrix out(n, mean_.size());
    for (Index i = 0; i < n; ++i) out.row(i) = draw(rng).transpose();
    return out;
  }

 private:
  Vector mean_;
  Matrix chol_;
  std::normal_distribution<double> normal_;
};

/// Random SPD matrix with entries of order one.
template <class Rng>
Matrix random_spd(Rng& rng, Index p, double ridge = 0.5) {
  std::normal_distribution<double> normal;
  Matrix a(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) a(i, j) = normal(rng);
  Matrix s = a * a.transpose() / static_cast<double>(p);
  s.diagonal().array() += ridge;
  return s;
}

template <class Rng>
Vector random_vector(Rng& rng, Index p, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(p);
  for (Index i = 0; i < p; ++i) v(i) = normal(rng);
  return v;
}

template <class Rng>
Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

struct RunningStats {
  double sum = 0.0;
  double sum_sq = 0.0;
  long count = 0;

  void add(double x) {
    sum += x;
    sum_sq += x * x;
    ++count;
  }
  double mean() const { return sum / static_cast<double>(count); }
  double variance() const {
    const double m = mean();
    return std::max(0.0, sum_sq / static_cast<double>(count) - m * m) * static_cast<double>(count) /
           static_cast<double>(count - 1);
  }
  double std_error() const { return std::sqrt(variance() / static_cast<double>(count)); }
};

}  // namespace rigid::testing
