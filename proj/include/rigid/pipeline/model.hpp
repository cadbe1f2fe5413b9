#pragma once

// Model fitting with cross-validated gamma, prediction on incomplete rows,
// and the two imputation baselines.
//
// All fitting happens on standardized features. The intercept is a constant
// column appended after completion: never masked, never standardized.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rigid/conditional.hpp"
#include "rigid/detail/parallel.hpp"
#include "rigid/moments.hpp"
#include "rigid/pipeline/standardize.hpp"
#include "rigid/solver.hpp"
#include "rigid/types.hpp"

namespace rigid {

/// 0 followed by 20 log-spaced points in [1e-3, 10].
inline std::vector<double> default_gamma_grid() {
  std::vector<double> g{0.0};
  for (int k = 0; k < 20; ++k) g.push_back(std::pow(10.0, -3.0 + 4.0 * k / 19.0));
  return g;
}

struct FitConfig {
  std::optional<double> gamma;  // unset: cross-validate over gamma_grid
  std::vector<double> gamma_grid = default_gamma_grid();
  int folds = 5;
  SolverConfig solver;
  ProjectionOptions projection;
  std::uint64_t seed = 0;
  bool intercept = true;

  void validate() const {
    if (gamma) {
      require(std::isfinite(*gamma) && *gamma >= 0.0, ErrorCode::InvalidArgument, "gamma must be >= 0");
    } else {
      require(!gamma_grid.empty(), ErrorCode::InvalidArgument, "gamma grid is empty");
      for (double g : gamma_grid)
        require(std::isfinite(g) && g >= 0.0, ErrorCode::InvalidArgument, "gamma grid entries must be >= 0");
      require(folds >= 2, ErrorCode::InvalidArgument, "at least 2 folds required");
    }
    solver.validate();
  }
};

struct FitSummary {
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
  double final_rho = 0.0;
};

struct CvTable {
  std::vector<double> grid;
  Matrix fold_mse;  // grid x folds
  Vector mean_mse;
  std::size_t best = 0;
  /// Fold solves that stopped at max_iter.
  int unconverged = 0;
};

struct RigidModel {
  std::vector<std::string> feature_names;
  std::string target;
  Vector beta;  // standardized feature scale
  double intercept = 0.0;
  double gamma = 0.0;
  MomentEstimate moments;  // standardized feature scale
  Standardization standardization;
  FitSummary summary;

  Index dim() const { return beta.size(); }

  void validate() const {
    require(moments.dim() == beta.size() && standardization.dim() == beta.size(), ErrorCode::DimensionMismatch,
            "model parts disagree in dimension");
    require((standardization.scale.array() > 0.0).all(), ErrorCode::InvalidArgument,
            "standardization scales must be positive");
  }
};

struct FitResult {
  RigidModel model;
  std::optional<CvTable> cv;
};

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
};

inline Metrics compute_metrics(const Vector& pred, const Vector& truth) {
  require(pred.size() == truth.size() && pred.size() > 0, ErrorCode::DimensionMismatch,
          "metrics need equal, non-empty vectors");
  const Eigen::ArrayXd e = (pred - truth).array();
  return {std::sqrt(e.square().mean()), e.abs().mean()};
}

inline IncompleteMatrix select_rows(const IncompleteMatrix& d, const std::vector<Index>& rows) {
  const Index r = static_cast<Index>(rows.size());
  Matrix v(r, d.cols());
  Mask m(r, d.cols());
  Vector y(r);
  for (Index k = 0; k < r; ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    v.row(k) = d.values.row(i);
    m.row(k) = d.mask.row(i);
    y(k) = d.response(i);
  }
  return IncompleteMatrix(std::move(v), std::move(m), std::move(y));
}

namespace detail {

/// Conditional-mean completion with one factorization per distinct pattern.
inline Matrix complete_with(const Matrix& values, const Mask& mask, const MomentEstimate& mom) {
  require(values.cols() == mom.dim() && mask.rows() == values.rows() && mask.cols() == values.cols(),
          ErrorCode::DimensionMismatch, "rows do not match model width " + std::to_string(mom.dim()));
  std::map<MissingPattern, PatternStats> cache;
  Matrix out(values.rows(), values.cols());
  for (Index i = 0; i < values.rows(); ++i) {
    const MissingPattern pat = MissingPattern::from_mask_row(mask, i);
    auto it = cache.find(pat);
    if (it == cache.end()) it = cache.emplace(pat, pattern_stats(mom.cov, mom.mean, pat)).first;
    out.row(i) = complete_row(it->second, mom.mean, values.row(i).transpose()).transpose();
  }
  return out;
}

inline Vector linear_predict(const Matrix& x, const Vector& beta, double intercept) {
  return (x * beta).array() + intercept;
}

struct Coefficients {
  Vector beta;
  double intercept = 0.0;
  FitSummary summary;
};

inline Coefficients split_intercept(const SolveReport& rep, bool intercept) {
  Coefficients c;
  const Index p = rep.beta.size() - (intercept ? 1 : 0);
  c.beta = rep.beta.head(p);
  c.intercept = intercept ? rep.beta(p) : 0.0;
  c.summary = {rep.iterations, rep.converged, rep.objective, rep.final_rho};
  return c;
}

/// Fold labels from a seeded permutation: row perm[k] goes to fold k mod K.
inline std::vector<int> fold_labels(Index n, int folds, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(derive_seed(seed, 0xF01D));
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> label(static_cast<std::size_t>(n));
  for (std::size_t k = 0; k < perm.size(); ++k) label[static_cast<std::size_t>(perm[k])] = static_cast<int>(k % folds);
  return label;
}

}  // namespace detail

/// Predictions for rows in original units; masked slots may hold anything.
inline Vector predict(const RigidModel& model, const Matrix& values, const Mask& mask) {
  model.validate();
  require(values.cols() == model.dim(), ErrorCode::DimensionMismatch,
          "expected " + std::to_string(model.dim()) + " feature columns, got " + std::to_string(values.cols()));
  const Matrix z = apply_standardization(model.standardization, values);
  const Matrix completed = detail::complete_with(z, mask, model.moments);
  return detail::linear_predict(completed, model.beta, model.intercept);
}

inline Vector predict(const RigidModel& model, const IncompleteMatrix& data) {
  return predict(model, data.values, data.mask);
}

/// Solves the RIGID program at each gamma on the given standardized data.
/// The problem is assembled once and shared across the grid.
inline std::vector<detail::Coefficients> fit_path(const IncompleteMatrix& z, const MomentEstimate& mom,
                                                  const std::vector<double>& grid, const FitConfig& cfg) {
  auto registry = std::make_shared<const PatternRegistry>(build_registry(z, mom.cov, mom.mean));
  const RigidProblem base = assemble(z, mom, registry, grid.front(), cfg.intercept);
  std::vector<detail::Coefficients> out;
  out.reserve(grid.size());
  for (double g : grid) out.push_back(detail::split_intercept(solve_auto(base.with_gamma(g), cfg.solver), cfg.intercept));
  return out;
}

/// k-fold CV over the grid. Each fold re-estimates moments on its training
/// part and scores the held-out rows after conditional-mean completion with
/// those moments. Ties go to the first grid entry.
inline CvTable cross_validate(const IncompleteMatrix& z, const FitConfig& cfg) {
  const auto labels = detail::fold_labels(z.rows(), cfg.folds, cfg.seed);
  CvTable cv;
  cv.grid = cfg.gamma_grid;
  const Index g = static_cast<Index>(cv.grid.size());
  cv.fold_mse = Matrix::Zero(g, cfg.folds);
  std::vector<int> unconverged(static_cast<std::size_t>(cfg.folds), 0);
  detail::parallel_for(static_cast<std::size_t>(cfg.folds), [&](std::size_t f) {
    std::vector<Index> train, valid;
    for (Index i = 0; i < z.rows(); ++i) (labels[static_cast<std::size_t>(i)] == static_cast<int>(f) ? valid : train).push_back(i);
    require(!valid.empty() && !train.empty(), ErrorCode::InvalidArgument, "too many folds for the sample size");
    const IncompleteMatrix tr = select_rows(z, train);
    const IncompleteMatrix va = select_rows(z, valid);
    const MomentEstimate mom = estimate_moments(tr, cfg.projection);
    const Matrix completed = detail::complete_with(va.values, va.mask, mom);
    const auto path = fit_path(tr, mom, cv.grid, cfg);
    for (Index k = 0; k < g; ++k) {
      const auto& c = path[static_cast<std::size_t>(k)];
      const Vector pred = detail::linear_predict(completed, c.beta, c.intercept);
      cv.fold_mse(k, static_cast<Index>(f)) = (pred - va.response).squaredNorm() / static_cast<double>(va.rows());
      unconverged[f] += c.summary.converged ? 0 : 1;
    }
  });
  cv.mean_mse = cv.fold_mse.rowwise().mean();
  cv.best = 0;
  for (Index k = 1; k < g; ++k)
    if (cv.mean_mse(k) < cv.mean_mse(static_cast<Index>(cv.best))) cv.best = static_cast<std::size_t>(k);
  cv.unconverged = std::accumulate(unconverged.begin(), unconverged.end(), 0);
  return cv;
}

/// Standardizes, estimates moments on all rows, picks gamma (fixed or CV),
/// and refits on all rows.
inline FitResult fit(const IncompleteMatrix& data, const FitConfig& cfg = {},
                     std::vector<std::string> feature_names = {}, std::string target = "y") {
  cfg.validate();
  data.validate();
  FitResult res;
  RigidModel& m = res.model;
  m.standardization = fit_standardization(data);
  const IncompleteMatrix z = apply_standardization(m.standardization, data);
  m.moments = estimate_moments(z, cfg.projection);
  if (cfg.gamma) {
    m.gamma = *cfg.gamma;
  } else {
    res.cv = cross_validate(z, cfg);
    m.gamma = res.cv->grid[res.cv->best];
  }
  const auto coef = fit_path(z, m.moments, {m.gamma}, cfg).front();
  m.beta = coef.beta;
  m.intercept = coef.intercept;
  m.summary = coef.summary;
  if (feature_names.empty())
    for (Index j = 0; j < data.cols(); ++j) feature_names.push_back("x" + std::to_string(j + 1));
  require(static_cast<Index>(feature_names.size()) == data.cols(), ErrorCode::DimensionMismatch,
          "feature name count differs from column count");
  m.feature_names = std::move(feature_names);
  m.target = std::move(target);
  return res;
}

/// Least squares with intercept; minimum-norm solution when rank deficient.
struct OlsFit {
  Vector beta;
  double intercept = 0.0;

  Vector predict(const Matrix& x) const { return detail::linear_predict(x, beta, intercept); }
};

inline OlsFit ols(const Matrix& x, const Vector& y) {
  require(x.rows() == y.size(), ErrorCode::DimensionMismatch, "ols: rows differ from response length");
  Matrix a(x.rows(), x.cols() + 1);
  a.leftCols(x.cols()) = x;
  a.col(x.cols()).setOnes();
  const Vector c = a.completeOrthogonalDecomposition().solve(y);
  return {c.head(x.cols()), c(x.cols())};
}

/// Column-mean imputation followed by OLS; test rows use training means.
inline Vector mean_impute_ols(const IncompleteMatrix& train, const IncompleteMatrix& test) {
  const Vector mu = estimate_mean(train);
  auto impute = [&](const IncompleteMatrix& d) {
    Matrix x = d.values;
    for (Index i = 0; i < x.rows(); ++i)
      for (Index j = 0; j < x.cols(); ++j)
        if (!d.mask(i, j)) x(i, j) = mu(j);
    return x;
  };
  return ols(impute(train), train.response).predict(impute(test));
}

/// Conditional-mean imputation with training moments followed by OLS.
inline Vector cond_mean_ols(const IncompleteMatrix& train, const IncompleteMatrix& test,
                            const ProjectionOptions& projection = {}) {
  const Standardization s = fit_standardization(train);
  const IncompleteMatrix ztr = apply_standardization(s, train);
  const MomentEstimate mom = estimate_moments(ztr, projection);
  const Matrix xtr = detail::complete_with(ztr.values, ztr.mask, mom);
  const Matrix xte = detail::complete_with(apply_standardization(s, test.values), test.mask, mom);
  return ols(xtr, train.response).predict(xte);
}

}  // namespace rigid
