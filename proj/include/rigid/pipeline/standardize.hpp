#pragma once

// Per-column centering and scaling computed from observed entries only.
// The scale is the population standard deviation (divisor n_obs). The
// response is left on its original scale.

#include <cmath>
#include <string>
#include <vector>

#include "rigid/types.hpp"

namespace rigid {

struct Standardization {
  Vector center;
  Vector scale;  // all > 0

  Index dim() const { return center.size(); }

  static Standardization identity(Index p) { return {Vector::Zero(p), Vector::Ones(p)}; }
};

inline Standardization fit_standardization(const IncompleteMatrix& data) {
  data.validate();
  const Index p = data.cols();
  Standardization s{Vector(p), Vector(p)};
  for (Index j = 0; j < p; ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < data.rows(); ++i) {
      if (!data.mask(i, j)) continue;
      sum += data.values(i, j);
      ++count;
    }
    require(count >= 2, ErrorCode::ZeroVarianceColumn,
            "column " + std::to_string(j) + " has fewer than 2 observed entries");
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Index i = 0; i < data.rows(); ++i) {
      if (!data.mask(i, j)) continue;
      const double d = data.values(i, j) - mean;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    require(sd > 1e-12 * (1.0 + std::abs(mean)), ErrorCode::ZeroVarianceColumn,
            "column " + std::to_string(j) + " has zero variance");
    s.center(j) = mean;
    s.scale(j) = sd;
  }
  return s;
}

/// Transforms every slot; masked slots are never read downstream.
inline Matrix apply_standardization(const Standardization& s, const Matrix& values) {
  require(values.cols() == s.dim(), ErrorCode::DimensionMismatch, "standardization width mismatch");
  Matrix out = values;
  for (Index j = 0; j < values.cols(); ++j)
    out.col(j) = ((values.col(j).array() - s.center(j)) / s.scale(j)).matrix();
  return out;
}

inline IncompleteMatrix apply_standardization(const Standardization& s, const IncompleteMatrix& data) {
  IncompleteMatrix out = data;
  out.values = apply_standardization(s, data.values);
  return out;
}

inline Matrix destandardize(const Standardization& s, const Matrix& values) {
  require(values.cols() == s.dim(), ErrorCode::DimensionMismatch, "standardization width mismatch");
  Matrix out = values;
  for (Index j = 0; j < values.cols(); ++j)
    out.col(j) = (values.col(j).array() * s.scale(j) + s.center(j)).matrix();
  return out;
}

}  // namespace rigid
