#pragma once

// Gaussian conditioning on observed coordinates.
//
// For x ~ N(mu, Sigma) with missing set M and observed set A,
//   x_M | x_A ~ N(mu_M + Sigma_MA Sigma_AA^{-1} (x_A - mu_A), Sigma / Sigma_AA).
// Statistics are computed once per distinct pattern and shared by all rows
// carrying it.

#include <algorithm>
#include <compare>
#include <map>
#include <string>
#include <vector>

#include "rigid/detail/linalg.hpp"
#include "rigid/types.hpp"

namespace rigid {

class MissingPattern {
 public:
  MissingPattern() = default;

  MissingPattern(Index dim, std::vector<Index> missing) : dim_(dim), missing_(std::move(missing)) {
    require(dim >= 0, ErrorCode::InvalidArgument, "negative pattern dimension");
    for (std::size_t i = 0; i < missing_.size(); ++i) {
      require(missing_[i] >= 0 && missing_[i] < dim_, ErrorCode::InvalidArgument,
              "missing index " + std::to_string(missing_[i]) + " out of range");
      require(i == 0 || missing_[i - 1] < missing_[i], ErrorCode::InvalidArgument,
              "missing indices must be strictly increasing");
    }
    observed_.reserve(static_cast<std::size_t>(dim_) - missing_.size());
    std::size_t m = 0;
    for (Index j = 0; j < dim_; ++j) {
      if (m < missing_.size() && missing_[m] == j) {
        ++m;
      } else {
        observed_.push_back(j);
      }
    }
  }

  /// Pattern of row `row` of an observation mask (true = observed).
  static MissingPattern from_mask_row(const Mask& mask, Index row) {
    std::vector<Index> missing;
    for (Index j = 0; j < mask.cols(); ++j)
      if (!mask(row, j)) missing.push_back(j);
    return MissingPattern(mask.cols(), std::move(missing));
  }

  static MissingPattern none(Index dim) { return MissingPattern(dim, {}); }

  static MissingPattern all(Index dim) {
    std::vector<Index> missing(static_cast<std::size_t>(dim));
    for (Index j = 0; j < dim; ++j) missing[static_cast<std::size_t>(j)] = j;
    return MissingPattern(dim, std::move(missing));
  }

  Index dim() const { return dim_; }
  const std::vector<Index>& missing() const { return missing_; }
  const std::vector<Index>& observed() const { return observed_; }
  Index n_missing() const { return static_cast<Index>(missing_.size()); }
  Index n_observed() const { return static_cast<Index>(observed_.size()); }
  bool empty() const { return missing_.empty(); }

  friend bool operator==(const MissingPattern& a, const MissingPattern& b) {
    return a.dim_ == b.dim_ && a.missing_ == b.missing_;
  }
  friend std::strong_ordering operator<=>(const MissingPattern& a, const MissingPattern& b) {
    if (auto c = a.dim_ <=> b.dim_; c != 0) return c;
    return a.missing_ <=> b.missing_;
  }

 private:
  Index dim_ = 0;
  std::vector<Index> missing_;
  std::vector<Index> observed_;
};

/// Conditional law of the missing block for one pattern.
struct PatternStats {
  MissingPattern pattern;
  Matrix cond_cov;         // |M| x |M| Schur complement
  Matrix cond_cov_factor;  // lower triangular, cond_cov = L L^T
  Matrix regression_map;   // |M| x |A|, Sigma_MA Sigma_AA^{-1}
  Index count = 0;         // training rows sharing this pattern
};

inline PatternStats pattern_stats(const Matrix& cov, const Vector& mean,
                                  const MissingPattern& pattern) {
  const Index p = cov.rows();
  require(cov.cols() == p && mean.size() == p && pattern.dim() == p, ErrorCode::DimensionMismatch,
          "pattern_stats: covariance, mean and pattern dimensions disagree");
  PatternStats stats;
  stats.pattern = pattern;
  const auto& mis = pattern.missing();
  const auto& obs = pattern.observed();
  const Index nm = pattern.n_missing();
  const Index na = pattern.n_observed();
  stats.regression_map = Matrix::Zero(nm, na);
  if (nm == 0) {
    stats.cond_cov = Matrix(0, 0);
    stats.cond_cov_factor = Matrix(0, 0);
    return stats;
  }

  const Matrix s_mm = detail::submatrix(cov, mis, mis);
  if (na == 0) {
    stats.cond_cov = s_mm;
  } else {
    const Matrix s_aa = detail::submatrix(cov, obs, obs);
    const Matrix s_am = detail::submatrix(cov, obs, mis);
    Eigen::LLT<Matrix> llt_aa(s_aa);
    require(llt_aa.info() == Eigen::Success, ErrorCode::FactorizationFailure,
            "observed block is not positive definite");
    const Matrix solved = llt_aa.solve(s_am);  // Sigma_AA^{-1} Sigma_AM
    stats.regression_map = solved.transpose();
    stats.cond_cov = detail::symmetrize(s_mm - s_am.transpose() * solved);
  }

  Eigen::LLT<Matrix> llt(stats.cond_cov);
  require(llt.info() == Eigen::Success, ErrorCode::FactorizationFailure,
          "conditional covariance is not numerically positive definite; re-project with a larger theta");
  stats.cond_cov_factor = llt.matrixL();
  require((stats.cond_cov_factor.diagonal().array() > 0.0).all(), ErrorCode::FactorizationFailure,
          "conditional covariance factor has a non-positive pivot");
  return stats;
}

inline Vector conditional_mean(const PatternStats& stats, const Vector& mean,
                               const Vector& observed_values) {
  const auto& pat = stats.pattern;
  require(mean.size() == pat.dim() && observed_values.size() == pat.n_observed(),
          ErrorCode::DimensionMismatch, "conditional_mean: inconsistent lengths");
  const Vector mu_m = detail::subvector(mean, pat.missing());
  if (pat.n_observed() == 0 || pat.n_missing() == 0) return mu_m;
  const Vector centered = observed_values - detail::subvector(mean, pat.observed());
  return mu_m + stats.regression_map * centered;
}

/// Row with observed entries kept and missing entries replaced by their
/// conditional mean.
inline Vector complete_row(const PatternStats& stats, const Vector& mean, const Vector& row) {
  const auto& pat = stats.pattern;
  require(row.size() == pat.dim(), ErrorCode::DimensionMismatch, "complete_row: row length");
  Vector out = row;
  if (pat.empty()) return out;
  const Vector filled = conditional_mean(stats, mean, detail::subvector(row, pat.observed()));
  for (Index m = 0; m < pat.n_missing(); ++m) out(pat.missing()[static_cast<std::size_t>(m)]) = filled(m);
  return out;
}

/// Distinct missing patterns of a data set, sorted lexicographically, plus
/// the pattern index of every row.
struct PatternRegistry {
  std::vector<PatternStats> patterns;
  std::vector<std::size_t> row_pattern;

  std::size_t size() const { return patterns.size(); }

  const PatternStats& for_row(Index i) const {
    return patterns[row_pattern[static_cast<std::size_t>(i)]];
  }

  /// Index of `pattern`, or size() if absent.
  std::size_t find(const MissingPattern& pattern) const {
    auto it = std::lower_bound(patterns.begin(), patterns.end(), pattern,
                               [](const PatternStats& s, const MissingPattern& m) { return s.pattern < m; });
    if (it == patterns.end() || !(it->pattern == pattern)) return patterns.size();
    return static_cast<std::size_t>(it - patterns.begin());
  }
};

inline PatternRegistry build_registry(const IncompleteMatrix& data, const Matrix& cov,
                                      const Vector& mean) {
  data.validate();
  require(cov.rows() == data.cols() && mean.size() == data.cols(), ErrorCode::DimensionMismatch,
          "build_registry: moments do not match data width");
  std::map<MissingPattern, Index> counts;
  std::vector<MissingPattern> row_patterns;
  row_patterns.reserve(static_cast<std::size_t>(data.rows()));
  for (Index i = 0; i < data.rows(); ++i) {
    row_patterns.push_back(MissingPattern::from_mask_row(data.mask, i));
    ++counts[row_patterns.back()];
  }
  PatternRegistry reg;
  reg.patterns.reserve(counts.size());
  for (const auto& [pattern, count] : counts) {
    reg.patterns.push_back(pattern_stats(cov, mean, pattern));
    reg.patterns.back().count = count;
  }
  reg.row_pattern.reserve(row_patterns.size());
  for (const auto& pat : row_patterns) reg.row_pattern.push_back(reg.find(pat));
  return reg;
}

/// Conditional-mean completion of every row of `data`, one factorization per pattern.
inline Matrix complete_rows(const IncompleteMatrix& data, const PatternRegistry& registry,
                            const Vector& mean) {
  Matrix out(data.rows(), data.cols());
  for (Index i = 0; i < data.rows(); ++i)
    out.row(i) = complete_row(registry.for_row(i), mean, data.values.row(i).transpose()).transpose();
  return out;
}

}  // namespace rigid
