#pragma once

// Mean and covariance estimation from incomplete observations.
//
// Every estimate normalizes by the number of rows in which the entries
// involved are jointly observed. The covariance estimate is symmetric but not
// necessarily PSD; project_psd turns it into a well-conditioned positive
// definite matrix with a single identity shift.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "rigid/detail/linalg.hpp"
#include "rigid/types.hpp"

namespace rigid {

struct ProjectionOptions {
  /// Eigenvalue floor. Unset means 1e-8 * trace(cov) / p.
  std::optional<double> theta;
  /// Upper bound on the condition number; infinity disables the cap.
  double cond_cap = 3e3;
};

struct MomentEstimate {
  Vector mean;
  Matrix cov;           // projected covariance
  Matrix availability;  // pairwise joint-observation ratios
  double theta_floor = 0.0;
  double cond_cap = 3e3;
  Index n_samples = 0;

  Index dim() const { return mean.size(); }
};

inline Matrix availability_ratios(const IncompleteMatrix& data) {
  data.validate();
  const Index n = data.rows();
  const Index p = data.cols();
  require(n >= 1, ErrorCode::InvalidArgument, "availability_ratios needs at least one row");
  Matrix counts = Matrix::Zero(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index k = j; k < p; ++k) {
      Index c = 0;
      for (Index i = 0; i < n; ++i) c += (data.mask(i, j) && data.mask(i, k)) ? 1 : 0;
      counts(j, k) = counts(k, j) = static_cast<double>(c);
    }
  }
  return counts / static_cast<double>(n);
}

inline Vector estimate_mean(const IncompleteMatrix& data) {
  data.validate();
  const Index n = data.rows();
  const Index p = data.cols();
  Vector mean(p);
  for (Index j = 0; j < p; ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < n; ++i) {
      if (!data.mask(i, j)) continue;
      sum += data.values(i, j);
      ++count;
    }
    require(count > 0, ErrorCode::ColumnNeverObserved,
            "column " + std::to_string(j) + " has no observed entries");
    mean(j) = sum / static_cast<double>(count);
  }
  return mean;
}

/// Pairwise-available covariance. Entry (j,k) is an independent sum over rows
/// in index order, normalized by the joint-observation count.
inline Matrix estimate_cov(const IncompleteMatrix& data, const Vector& mean) {
  data.validate();
  const Index n = data.rows();
  const Index p = data.cols();
  require(mean.size() == p, ErrorCode::DimensionMismatch, "mean length must equal column count");
  Matrix cov(p, p);
  for (Index j = 0; j < p; ++j) {
    for (Index k = j; k < p; ++k) {
      double sum = 0.0;
      Index count = 0;
      for (Index i = 0; i < n; ++i) {
        if (!(data.mask(i, j) && data.mask(i, k))) continue;
        sum += (data.values(i, j) - mean(j)) * (data.values(i, k) - mean(k));
        ++count;
      }
      require(count > 0, ErrorCode::PairNeverJointlyObserved,
              "columns " + std::to_string(j) + " and " + std::to_string(k) +
                  " are never observed together");
      cov(j, k) = cov(k, j) = sum / static_cast<double>(count);
    }
  }
  return cov;
}

inline double default_theta(const Matrix& cov) {
  if (cov.rows() == 0) return 0.0;
  const double avg = cov.trace() / static_cast<double>(cov.rows());
  return avg > 0.0 ? 1e-8 * avg : 1e-8;
}

/// Identity shift of a symmetric matrix. Adds delta * I with the smallest
/// delta >= 0 such that lambda_min >= theta and cond <= cond_cap. With theta = 0
/// and no cap this is the Frobenius projection onto the PSD cone.
inline Matrix project_psd(const Matrix& cov, double theta,
                          double cond_cap = std::numeric_limits<double>::infinity()) {
  require(cov.rows() == cov.cols(), ErrorCode::DimensionMismatch, "covariance must be square");
  require(detail::is_symmetric(cov), ErrorCode::NotSymmetric,
          "asymmetry " + std::to_string(cov.size() ? detail::max_asymmetry(cov) : 0.0));
  require(theta >= 0.0, ErrorCode::InvalidArgument, "theta must be nonnegative");
  require(cond_cap > 1.0, ErrorCode::InvalidArgument, "cond_cap must exceed 1");
  if (cov.size() == 0) return cov;

  const Vector eig = detail::symmetric_eigenvalues(cov);
  const double lmin = eig.minCoeff();
  const double lmax = eig.maxCoeff();
  double delta = std::max(0.0, theta - lmin);
  if (std::isfinite(cond_cap)) delta = std::max(delta, (lmax - cond_cap * lmin) / (cond_cap - 1.0));
  Matrix out = cov;
  out.diagonal().array() += delta;
  return out;
}

inline Matrix project_psd(const Matrix& cov, const ProjectionOptions& opts) {
  return project_psd(cov, opts.theta.value_or(default_theta(cov)), opts.cond_cap);
}

inline double min_availability(const Matrix& availability) {
  return availability.size() ? availability.minCoeff() : 0.0;
}

/// Block size K = round((n p_min)^(1/(2 alpha + 1))), clamped to [1, p].
inline Index blockwise_block_size(double effective_n, double alpha, Index p) {
  require(alpha > 0.0, ErrorCode::InvalidArgument, "alpha must be positive");
  require(p >= 1, ErrorCode::InvalidArgument, "dimension must be positive");
  const double k = std::floor(std::pow(std::max(effective_n, 0.0), 1.0 / (2.0 * alpha + 1.0)) + 0.5);
  return std::clamp<Index>(static_cast<Index>(k), 1, p);
}

/// Zeroes every K-block pair (b, b') with |b - b'| > 1; the last block may be short.
inline Matrix blockwise_truncate(const Matrix& cov, Index block_size) {
  require(block_size >= 1, ErrorCode::InvalidArgument, "block size must be positive");
  Matrix out = cov;
  for (Index j = 0; j < cov.rows(); ++j)
    for (Index k = 0; k < cov.cols(); ++k)
      if (std::abs(j / block_size - k / block_size) > 1) out(j, k) = 0.0;
  return out;
}

/// Blockwise tridiagonal covariance for large p relative to n, followed by
/// the same projection as the full estimator.
inline Matrix estimate_cov_blockwise(const IncompleteMatrix& data, double alpha,
                                     const ProjectionOptions& opts = {}) {
  require(alpha > 0.0, ErrorCode::InvalidArgument, "alpha must be positive");
  const Matrix avail = availability_ratios(data);
  const Vector mean = estimate_mean(data);
  const Matrix raw = estimate_cov(data, mean);
  const double eff_n = static_cast<double>(data.rows()) * min_availability(avail);
  const Index k = blockwise_block_size(eff_n, alpha, data.cols());
  return project_psd(blockwise_truncate(raw, k), opts);
}

inline MomentEstimate estimate_moments(const IncompleteMatrix& data,
                                       const ProjectionOptions& opts = {}) {
  MomentEstimate est;
  est.availability = availability_ratios(data);
  est.mean = estimate_mean(data);
  const Matrix raw = estimate_cov(data, est.mean);
  est.theta_floor = opts.theta.value_or(default_theta(raw));
  est.cond_cap = opts.cond_cap;
  est.cov = project_psd(raw, est.theta_floor, opts.cond_cap);
  est.n_samples = data.rows();
  return est;
}

}  // namespace rigid
