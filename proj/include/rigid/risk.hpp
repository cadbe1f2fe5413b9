#pragma once

// Population analytics of the robust loss for centered Gaussian features with
// data-independent missing patterns drawn from a finite list.
//
// Notation used below: E_j is the p x p zero-padded conditional covariance of
// pattern j, A_j = Sigma - E_j, and for a candidate beta
//   v_j(beta) = sigma^2 + ||beta - beta0||^2_{A_j} + ||beta0||^2_{E_j}
//   s_j(beta) = ||beta||_{E_j}.
// The robust risk is sum_j pi_j (v_j + gamma^2 s_j^2 + gamma sqrt(8/pi) s_j sqrt(v_j)) .

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "rigid/conditional.hpp"
#include "rigid/detail/linalg.hpp"
#include "rigid/types.hpp"

namespace rigid {

struct RiskSpec {
  Vector beta0;
  double sigma = 0.0;
  Matrix cov;
  std::vector<MissingPattern> patterns;
  Vector probs;

  Index dim() const { return beta0.size(); }

  void validate() const {
    const Index p = beta0.size();
    require(p >= 1, ErrorCode::InvalidArgument, "beta0 must be non-empty");
    require(cov.rows() == p && cov.cols() == p, ErrorCode::DimensionMismatch, "cov must be p x p");
    require(sigma >= 0.0, ErrorCode::InvalidArgument, "sigma must be nonnegative");
    require(!patterns.empty() && probs.size() == static_cast<Index>(patterns.size()),
            ErrorCode::DimensionMismatch, "one probability per pattern required");
    require((probs.array() > 0.0).all(), ErrorCode::InvalidArgument, "pattern probabilities must be positive");
    require(std::abs(probs.sum() - 1.0) <= 1e-12, ErrorCode::InvalidArgument,
            "pattern probabilities must sum to 1");
    std::set<MissingPattern> seen;
    for (const auto& pat : patterns) {
      require(pat.dim() == p, ErrorCode::DimensionMismatch, "pattern dimension differs from p");
      require(seen.insert(pat).second, ErrorCode::InvalidArgument, "patterns must be distinct");
    }
    require(detail::is_symmetric(cov), ErrorCode::NotSymmetric, "cov must be symmetric");
    Eigen::LLT<Matrix> llt(cov);
    require(llt.info() == Eigen::Success, ErrorCode::InvalidArgument, "cov must be positive definite");
  }
};

/// S^T Sigmabar_M S: the conditional covariance of M placed in the M x M block.
inline Matrix sigma_bar_embedded(const Matrix& cov, const MissingPattern& pattern) {
  require(cov.rows() == cov.cols() && pattern.dim() == cov.rows(), ErrorCode::DimensionMismatch,
          "sigma_bar_embedded: dimension mismatch");
  Matrix out = Matrix::Zero(cov.rows(), cov.cols());
  if (pattern.empty()) return out;
  const PatternStats st = pattern_stats(cov, Vector::Zero(cov.rows()), pattern);
  const auto& mis = pattern.missing();
  for (std::size_t r = 0; r < mis.size(); ++r)
    for (std::size_t q = 0; q < mis.size(); ++q)
      out(mis[r], mis[q]) = st.cond_cov(static_cast<Index>(r), static_cast<Index>(q));
  return out;
}

namespace detail {

struct RiskTerms {
  std::vector<Matrix> embedded;    // E_j
  std::vector<Matrix> remainder;   // A_j = Sigma - E_j
  std::vector<double> beta0_e;     // ||beta0||^2_{E_j}
};

inline RiskTerms risk_terms(const RiskSpec& spec) {
  spec.validate();
  RiskTerms t;
  for (const auto& pat : spec.patterns) {
    Matrix e = sigma_bar_embedded(spec.cov, pat);
    t.remainder.push_back(spec.cov - e);
    t.beta0_e.push_back(spec.beta0.dot(e * spec.beta0));
    t.embedded.push_back(std::move(e));
  }
  return t;
}

inline double quad(const Matrix& m, const Vector& x) { return std::max(0.0, x.dot(m * x)); }

}  // namespace detail

inline double robust_risk(const RiskSpec& spec, const Vector& beta, double gamma) {
  require(beta.size() == spec.dim(), ErrorCode::DimensionMismatch, "beta length differs from p");
  require(gamma >= 0.0, ErrorCode::InvalidArgument, "gamma must be nonnegative");
  const auto t = detail::risk_terms(spec);
  const double s2 = spec.sigma * spec.sigma;
  const Vector d = beta - spec.beta0;
  double quad_part = 0.0;
  double cross_part = 0.0;
  for (std::size_t j = 0; j < spec.patterns.size(); ++j) {
    const double pj = spec.probs(static_cast<Index>(j));
    const double v = s2 + detail::quad(t.remainder[j], d) + t.beta0_e[j];
    const double se2 = detail::quad(t.embedded[j], beta);
    quad_part += pj * (v - s2 + gamma * gamma * se2);
    cross_part += pj * std::sqrt(se2) * std::sqrt(v);
  }
  return s2 + quad_part + gamma * std::sqrt(8.0 / std::numbers::pi) * cross_part;
}

/// E (y - x^T beta)^2 for x ~ N(mean, cov) and y = x^T beta0 + N(0, sigma^2).
inline double empirical_risk(const Vector& beta, const Vector& beta0, const Vector& mean,
                             const Matrix& cov, double sigma) {
  const Index p = beta.size();
  require(beta0.size() == p && mean.size() == p && cov.rows() == p && cov.cols() == p,
          ErrorCode::DimensionMismatch, "empirical_risk: dimension mismatch");
  const Vector d = beta0 - beta;
  const double m = mean.dot(d);
  return d.dot(cov * d) + m * m + sigma * sigma;
}

struct UniquenessCheck {
  Matrix matrix;  // sum_j pi_j (Sigma - E_j)
  double min_eigenvalue = 0.0;
};

inline UniquenessCheck gamma0_uniqueness_matrix(const RiskSpec& spec) {
  const auto t = detail::risk_terms(spec);
  Matrix u = Matrix::Zero(spec.dim(), spec.dim());
  for (std::size_t j = 0; j < spec.patterns.size(); ++j) u += spec.probs(static_cast<Index>(j)) * t.remainder[j];
  u = detail::symmetrize(u);
  return {u, detail::min_eigenvalue(u)};
}

/// A gamma beyond which the population minimizer is exactly zero, when the
/// patterns with sigma + ||beta0_M|| > 0 cover every feature. Patterns with an
/// empty missing set carry no Sigmabar and are left out of kappa_min.
inline double gamma0_threshold(const RiskSpec& spec) {
  spec.validate();
  const Index p = spec.dim();
  std::vector<bool> covered(static_cast<std::size_t>(p), false);
  double kappa_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < spec.patterns.size(); ++j) {
    const auto& pat = spec.patterns[j];
    if (pat.empty()) continue;
    const double b0m = detail::subvector(spec.beta0, pat.missing()).norm();
    if (!(spec.sigma + b0m > 1e-300)) continue;
    for (Index m : pat.missing()) covered[static_cast<std::size_t>(m)] = true;
    const PatternStats st = pattern_stats(spec.cov, Vector::Zero(p), pat);
    const double lam = detail::min_eigenvalue(st.cond_cov);
    kappa_min = std::min(kappa_min, spec.probs(static_cast<Index>(j)) * lam * (spec.sigma + lam * b0m));
  }
  const bool all_covered = std::all_of(covered.begin(), covered.end(), [](bool c) { return c; });
  require(all_covered, ErrorCode::PatternsDoNotCoverFeatures,
          "missing patterns in J do not cover every feature");
  const Vector grad0 = gamma0_uniqueness_matrix(spec).matrix * spec.beta0;
  return (std::sqrt(std::numbers::pi) / kappa_min * grad0).norm();
}

struct SinglePatternThreshold {
  double gamma = 0.0;
  Vector beta;  // limiting coefficients once gamma exceeds the threshold
};

/// Two-pattern case: complete rows with probability pi0, one missing set M otherwise.
inline SinglePatternThreshold single_pattern_threshold(const RiskSpec& spec) {
  spec.validate();
  require(spec.patterns.size() == 2, ErrorCode::InvalidPatternStructure, "exactly two patterns required");
  const int empty_idx = spec.patterns[0].empty() ? 0 : (spec.patterns[1].empty() ? 1 : -1);
  require(empty_idx >= 0, ErrorCode::InvalidPatternStructure, "one pattern must be empty");
  const MissingPattern& pat = spec.patterns[static_cast<std::size_t>(1 - empty_idx)];
  require(!pat.empty(), ErrorCode::InvalidPatternStructure, "the other pattern must be non-empty");
  const double pi0 = spec.probs(empty_idx);
  require(pi0 > 0.0 && pi0 < 1.0, ErrorCode::InvalidPatternStructure, "pi0 must lie in (0, 1)");

  const Index p = spec.dim();
  const PatternStats st = pattern_stats(spec.cov, Vector::Zero(p), pat);
  const Vector b0m = detail::subvector(spec.beta0, pat.missing());
  const double schur_norm2 = std::max(0.0, b0m.dot(st.cond_cov * b0m));

  SinglePatternThreshold out;
  out.gamma = std::sqrt(std::numbers::pi / 2.0) * pi0 * std::sqrt(schur_norm2) /
              ((1.0 - pi0) * std::sqrt(spec.sigma * spec.sigma + schur_norm2));
  out.beta = Vector::Zero(p);
  // beta_A = beta0_A + Sigma_AA^{-1} Sigma_AM beta0_M, beta_M = 0
  Vector beta_a = detail::subvector(spec.beta0, pat.observed());
  if (pat.n_observed() > 0) beta_a += st.regression_map.transpose() * b0m;
  for (Index k = 0; k < pat.n_observed(); ++k) out.beta(pat.observed()[static_cast<std::size_t>(k)]) = beta_a(k);
  return out;
}

struct RiskMinimum {
  Vector beta;
  /// Norm of a subgradient of the risk at beta (see subgradient_certificate).
  double certificate = 0.0;
  int newton_steps = 0;
};

namespace detail {

struct SmoothedEval {
  double value = 0.0;
  Vector grad;
  Matrix hess;
};

/// Risk with s_j replaced by sqrt(s_j^2 + h^2) for non-empty patterns. This is
/// itself the robust risk of a problem with one extra unit-variance missing
/// coordinate scaled by h, hence convex.
inline SmoothedEval smoothed_risk(const RiskSpec& spec, const RiskTerms& t, const Vector& beta,
                                  double gamma, double h) {
  const Index p = spec.dim();
  const double c = gamma * std::sqrt(8.0 / std::numbers::pi);
  const double s2 = spec.sigma * spec.sigma;
  SmoothedEval ev{0.0, Vector::Zero(p), Matrix::Zero(p, p)};
  const Vector d = beta - spec.beta0;
  for (std::size_t j = 0; j < spec.patterns.size(); ++j) {
    const double pj = spec.probs(static_cast<Index>(j));
    const Matrix& a = t.remainder[j];
    const Matrix& e = t.embedded[j];
    const Vector ad = a * d;
    const double v = std::max(s2 + std::max(0.0, d.dot(ad)) + t.beta0_e[j], 1e-300);
    const double g = std::sqrt(v);
    ev.value += pj * v;
    ev.grad += pj * 2.0 * ad;
    ev.hess += pj * 2.0 * a;
    if (spec.patterns[j].empty() || gamma == 0.0) continue;

    const Vector eb = e * beta;
    const double se2 = std::max(0.0, beta.dot(eb));
    const double tt = std::sqrt(se2 + h * h);
    ev.value += pj * (gamma * gamma * (se2 + h * h) + c * tt * g);
    ev.grad += pj * (2.0 * gamma * gamma * eb);
    ev.hess += pj * (2.0 * gamma * gamma * e);

    const Vector grad_t = eb / tt;
    const Vector grad_g = ad / g;
    ev.grad += pj * c * (g * grad_t + tt * grad_g);
    const Matrix hess_t = e / tt - eb * eb.transpose() / (tt * tt * tt);
    const Matrix hess_g = a / g - ad * ad.transpose() / (g * g * g);
    ev.hess += pj * c *
               (g * hess_t + tt * hess_g + grad_t * grad_g.transpose() + grad_g * grad_t.transpose());
  }
  return ev;
}

/// Norm of an explicit subgradient of the risk at beta. Patterns with
/// s_j <= kink_tol are treated as sitting on their kink, where the subdifferential
/// of s_j is {C_j v : ||v|| <= 1} with E_j = C_j C_j^T; the multipliers v_j are
/// chosen by accelerated projected gradient to shrink the subgradient norm.
inline double subgradient_certificate(const RiskSpec& spec, const RiskTerms& t, const Vector& beta,
                                      double gamma, double kink_tol = 1e-9) {
  const Index p = spec.dim();
  const double c = gamma * std::sqrt(8.0 / std::numbers::pi);
  const double s2 = spec.sigma * spec.sigma;
  const Vector d = beta - spec.beta0;
  Vector g = Vector::Zero(p);
  std::vector<Matrix> blocks;
  for (std::size_t j = 0; j < spec.patterns.size(); ++j) {
    const double pj = spec.probs(static_cast<Index>(j));
    const Vector ad = t.remainder[j] * d;
    const double v = std::max(s2 + std::max(0.0, d.dot(ad)) + t.beta0_e[j], 1e-300);
    const double gj = std::sqrt(v);
    g += pj * 2.0 * ad;
    if (spec.patterns[j].empty() || gamma == 0.0) continue;
    const Vector eb = t.embedded[j] * beta;
    const double sj = std::sqrt(std::max(0.0, beta.dot(eb)));
    if (sj > kink_tol * std::max(1.0, beta.norm())) {
      g += pj * (2.0 * gamma * gamma * eb + c * (gj * eb / sj + sj * ad / gj));
      continue;
    }
    const PatternStats st = pattern_stats(spec.cov, Vector::Zero(p), spec.patterns[j]);
    Matrix block = Matrix::Zero(p, st.pattern.n_missing());
    const auto& mis = st.pattern.missing();
    for (std::size_t r = 0; r < mis.size(); ++r) block.row(mis[r]) = st.cond_cov_factor.row(static_cast<Index>(r));
    blocks.push_back(pj * c * gj * block);
  }
  if (blocks.empty()) return g.norm();

  Index cols = 0;
  for (const auto& b : blocks) cols += b.cols();
  Matrix m(p, cols);
  Index off = 0;
  for (const auto& b : blocks) {
    m.middleCols(off, b.cols()) = b;
    off += b.cols();
  }
  const double lip = std::max(symmetric_eigenvalues(m.transpose() * m).maxCoeff(), 1e-300);
  auto project = [&](Vector& v) {
    Index o = 0;
    for (const auto& b : blocks) {
      auto seg = v.segment(o, b.cols());
      const double nrm = seg.norm();
      if (nrm > 1.0) seg /= nrm;
      o += b.cols();
    }
  };
  Vector v = Vector::Zero(cols), y = v, prev = v;
  double best = g.norm();
  for (int it = 0; it < 20000; ++it) {
    v = y - m.transpose() * (g + m * y) / lip;
    project(v);
    best = std::min(best, (g + m * v).norm());
    y = v + (static_cast<double>(it) / (it + 3.0)) * (v - prev);
    prev = v;
    if (best <= 1e-14) break;
  }
  return best;
}

}  // namespace detail

/// Population minimizer by damped Newton on a smoothed risk with the
/// smoothing width driven to 1e-12. Starts from beta0; no randomness.
inline RiskMinimum minimize_robust_risk(const RiskSpec& spec, double gamma, double tolerance = 1e-9) {
  require(gamma >= 0.0, ErrorCode::InvalidArgument, "gamma must be nonnegative");
  if (gamma == 0.0) {
    const auto uc = gamma0_uniqueness_matrix(spec);
    require(uc.min_eigenvalue > 1e-12 * std::max(1.0, uc.matrix.trace()), ErrorCode::NotStrictlyConvex,
            "risk at gamma = 0 has a singular quadratic part");
  }
  const auto t = detail::risk_terms(spec);
  RiskMinimum out;
  Vector beta = spec.beta0;
  double cert = 0.0;
  for (double h = 1e-2; h >= 0.99e-12; h *= 1e-2) {
    for (int it = 0; it < 200; ++it) {
      auto ev = detail::smoothed_risk(spec, t, beta, gamma, h);
      cert = ev.grad.norm();
      if (cert <= tolerance * std::max(1.0, ev.value)) break;
      Eigen::LDLT<Matrix> ldlt(detail::symmetrize(ev.hess));
      Vector step = -ldlt.solve(ev.grad);
      if (ldlt.info() != Eigen::Success || !step.allFinite() || step.dot(ev.grad) >= 0.0) step = -ev.grad;
      double alpha = 1.0;
      const double slope = step.dot(ev.grad);
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls) {
        const Vector trial = beta + alpha * step;
        const double val = detail::smoothed_risk(spec, t, trial, gamma, h).value;
        if (val <= ev.value + 1e-4 * alpha * slope) {
          beta = trial;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      ++out.newton_steps;
      if (!moved) break;
    }
  }
  out.beta = beta;
  out.certificate = detail::subgradient_certificate(spec, t, beta, gamma);
  return out;
}

}  // namespace rigid
