#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rigid/types.hpp"

namespace rigid::detail {

inline double max_asymmetry(const Matrix& s) { return (s - s.transpose()).cwiseAbs().maxCoeff(); }

/// Tolerance rule: max |S - S^T| <= 1e-10 * (1 + max |S|).
inline bool is_symmetric(const Matrix& s) {
  if (s.rows() != s.cols()) return false;
  if (s.size() == 0) return true;
  return max_asymmetry(s) <= 1e-10 * (1.0 + s.cwiseAbs().maxCoeff());
}

inline Vector symmetric_eigenvalues(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

inline double min_eigenvalue(const Matrix& s) {
  if (s.size() == 0) return 0.0;
  return symmetric_eigenvalues(s).minCoeff();
}

inline Matrix submatrix(const Matrix& m, const std::vector<Index>& rows,
                        const std::vector<Index>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j)
      out(static_cast<Index>(i), static_cast<Index>(j)) = m(rows[i], cols[j]);
  return out;
}

inline Vector subvector(const Vector& v, const std::vector<Index>& idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Index>(i)) = v(idx[i]);
  return out;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace rigid::detail
