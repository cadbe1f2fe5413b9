#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>

#include "rigid/error.hpp"

namespace rigid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

/// Feature matrix with an observation mask and a fully observed response.
///
/// The mask is authoritative: value slots where the mask is false are never
/// read by any estimator, so they may hold anything (NaN included).
struct IncompleteMatrix {
  Matrix values;
  Mask mask;  // true = observed
  Vector response;

  IncompleteMatrix() = default;
  IncompleteMatrix(Matrix v, Mask m, Vector y)
      : values(std::move(v)), mask(std::move(m)), response(std::move(y)) {
    validate();
  }

  /// Complete data: every entry observed.
  static IncompleteMatrix complete(Matrix v, Vector y) {
    Mask m = Mask::Constant(v.rows(), v.cols(), true);
    return IncompleteMatrix(std::move(v), std::move(m), std::move(y));
  }

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  void validate() const {
    require(mask.rows() == values.rows() && mask.cols() == values.cols(),
            ErrorCode::DimensionMismatch, "mask and values differ in shape");
    require(response.size() == values.rows(), ErrorCode::DimensionMismatch,
            "response length " + std::to_string(response.size()) + " != rows " +
                std::to_string(values.rows()));
  }

  double missing_rate() const {
    if (mask.size() == 0) return 0.0;
    return 1.0 - static_cast<double>(mask.count()) / static_cast<double>(mask.size());
  }
};

}  // namespace rigid
