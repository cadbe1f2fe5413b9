#pragma once

// Seeded synthetic benchmark: Gaussian features with a factor covariance,
// linear response with a fraction of heavy-noise outlier rows, masking on
// the training split only, and RIGID against the two imputation baselines.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rigid/detail/parallel.hpp"
#include "rigid/missingness.hpp"
#include "rigid/pipeline/model.hpp"

namespace rigid {

struct GeneratorSpec {
  Index n = 400;
  Index p = 20;
  Index factors = 3;
  double ridge = 0.3;  // idiosyncratic variance added to the factor part
  double noise_sd = 1.0;
  double outlier_fraction = 0.1;
  double outlier_sd = 10.0;

  void validate() const {
    require(n >= 10 && p >= 1, ErrorCode::InvalidArgument, "generator needs n >= 10 and p >= 1");
    require(factors >= 0 && ridge > 0.0, ErrorCode::InvalidArgument, "factors >= 0 and ridge > 0 required");
    require(noise_sd >= 0.0 && outlier_sd >= 0.0, ErrorCode::InvalidArgument, "noise levels must be >= 0");
    require(outlier_fraction >= 0.0 && outlier_fraction < 1.0, ErrorCode::InvalidArgument,
            "outlier_fraction must lie in [0, 1)");
  }
};

struct ExperimentSpec {
  GeneratorSpec generator;
  MaskSpec mask;
  FitConfig fit;
  double train_fraction = 0.8;
  int n_trials = 20;
  std::uint64_t seed = 0;
  /// Explicit per-trial seeds; otherwise derived from `seed`.
  std::vector<std::uint64_t> trial_seeds;
  /// Minimum fraction of trials that must succeed.
  double min_success = 0.8;

  void validate() const {
    generator.validate();
    mask.validate();
    fit.validate();
    require(train_fraction > 0.0 && train_fraction < 1.0, ErrorCode::InvalidArgument,
            "train_fraction must lie in (0, 1)");
    require(n_trials >= 1, ErrorCode::InvalidArgument, "n_trials must be positive");
    require(trial_seeds.empty() || static_cast<int>(trial_seeds.size()) == n_trials,
            ErrorCode::InvalidArgument, "trial_seeds must have n_trials entries");
  }

  std::uint64_t trial_seed(int t) const {
    return trial_seeds.empty() ? detail::derive_seed(seed, static_cast<std::uint64_t>(t))
                               : trial_seeds[static_cast<std::size_t>(t)];
  }
};

struct SyntheticData {
  IncompleteMatrix train;  // masked
  IncompleteMatrix test;   // complete
  Vector beta0;
  Matrix cov;
};

/// Unit-diagonal covariance W W^T + ridge I, rescaled to a correlation matrix.
inline Matrix factor_covariance(std::mt19937_64& rng, Index p, Index factors, double ridge) {
  std::normal_distribution<double> normal;
  Matrix w(p, factors);
  for (Index i = 0; i < p; ++i)
    for (Index k = 0; k < factors; ++k) w(i, k) = normal(rng);
  Matrix s = w * w.transpose();
  s.diagonal().array() += ridge;
  const Vector d = s.diagonal().cwiseSqrt().cwiseInverse();
  return d.asDiagonal() * s * d.asDiagonal();
}

inline SyntheticData generate_synthetic(const GeneratorSpec& g, const MaskSpec& mask, double train_fraction,
                                        std::uint64_t seed) {
  g.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  SyntheticData out;
  out.cov = factor_covariance(rng, g.p, g.factors, g.ridge);
  out.beta0.resize(g.p);
  for (Index j = 0; j < g.p; ++j) out.beta0(j) = normal(rng);

  const Matrix chol = Eigen::LLT<Matrix>(out.cov).matrixL();
  Matrix x(g.n, g.p);
  for (Index i = 0; i < g.n; ++i) {
    Vector e(g.p);
    for (Index j = 0; j < g.p; ++j) e(j) = normal(rng);
    x.row(i) = (chol * e).transpose();
  }
  std::vector<Index> order(static_cast<std::size_t>(g.n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_out = static_cast<Index>(std::llround(g.outlier_fraction * static_cast<double>(g.n)));
  std::vector<bool> outlier(static_cast<std::size_t>(g.n), false);
  for (Index k = 0; k < n_out; ++k) outlier[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] = true;
  Vector y = x * out.beta0;
  for (Index i = 0; i < g.n; ++i) y(i) += (outlier[static_cast<std::size_t>(i)] ? g.outlier_sd : g.noise_sd) * normal(rng);

  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<Index>(std::llround(train_fraction * static_cast<double>(g.n)));
  require(n_train >= 2 && n_train < g.n, ErrorCode::InvalidArgument, "split leaves an empty side");
  const std::vector<Index> tr(order.begin(), order.begin() + n_train), te(order.begin() + n_train, order.end());
  const IncompleteMatrix full = IncompleteMatrix::complete(x, y);
  out.train = select_rows(full, tr);
  out.test = select_rows(full, te);
  MaskSpec ms = mask;
  ms.seed = detail::derive_seed(seed, 0x3A5C);
  out.train.mask = generate_mask(out.train.values, ms);
  for (Index i = 0; i < out.train.rows(); ++i)
    for (Index j = 0; j < g.p; ++j)
      if (!out.train.mask(i, j)) out.train.values(i, j) = std::numeric_limits<double>::quiet_NaN();
  return out;
}

struct TrialResult {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double missing_rate = 0.0;
  double gamma = 0.0;
  bool converged = false;
  Metrics rigid, mean_ols, cond_mean_ols;
};

struct MethodSummary {
  double rmse_mean = 0.0, rmse_std = 0.0, mae_mean = 0.0, mae_std = 0.0;
};

struct ExperimentReport {
  std::vector<TrialResult> trials;
  int succeeded = 0;
  MethodSummary rigid, mean_ols, cond_mean_ols;
  /// Fraction of successful trials where RIGID RMSE <= mean-imputation RMSE.
  double win_rate = 0.0;
  /// 1 - mean RIGID RMSE / mean mean-imputation RMSE.
  double rmse_improvement = 0.0;
};

inline TrialResult run_trial(const ExperimentSpec& spec, std::uint64_t seed) {
  TrialResult r;
  r.seed = seed;
  const SyntheticData d = generate_synthetic(spec.generator, spec.mask, spec.train_fraction, seed);
  r.missing_rate = d.train.missing_rate();
  FitConfig fc = spec.fit;
  fc.seed = detail::derive_seed(seed, 0xC5);
  const FitResult fr = fit(d.train, fc);
  r.gamma = fr.model.gamma;
  r.converged = fr.model.summary.converged;
  r.rigid = compute_metrics(predict(fr.model, d.test), d.test.response);
  r.mean_ols = compute_metrics(mean_impute_ols(d.train, d.test), d.test.response);
  r.cond_mean_ols = compute_metrics(cond_mean_ols(d.train, d.test, fc.projection), d.test.response);
  r.ok = true;
  return r;
}

namespace detail {

inline MethodSummary summarize(const std::vector<TrialResult>& trials, Metrics TrialResult::*field) {
  std::vector<double> rmse, mae;
  for (const auto& t : trials)
    if (t.ok) {
      rmse.push_back((t.*field).rmse);
      mae.push_back((t.*field).mae);
    }
  // shifted by the first value, so identical inputs give exactly zero spread
  auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
    double shift = 0.0;
    for (double x : v) shift += x - v.front();
    shift /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - v.front() - shift) * (x - v.front() - shift);
    mean = v.front() + shift;
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  MethodSummary s;
  mean_sd(rmse, s.rmse_mean, s.rmse_std);
  mean_sd(mae, s.mae_mean, s.mae_std);
  return s;
}

}  // namespace detail

/// Runs all trials; a failed trial is recorded with its message. Throws the
/// first failure when fewer than min_success of the trials succeed.
inline ExperimentReport simulate_experiment(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentReport rep;
  rep.trials.resize(static_cast<std::size_t>(spec.n_trials));
  std::vector<std::optional<Error>> errors(rep.trials.size());
  detail::parallel_for(rep.trials.size(), [&](std::size_t t) {
    const std::uint64_t seed = spec.trial_seed(static_cast<int>(t));
    try {
      rep.trials[t] = run_trial(spec, seed);
    } catch (const Error& e) {
      rep.trials[t].seed = seed;
      rep.trials[t].error = e.what();
      errors[t] = e;
    }
  });
  for (const auto& t : rep.trials) rep.succeeded += t.ok ? 1 : 0;
  if (static_cast<double>(rep.succeeded) < spec.min_success * spec.n_trials || rep.succeeded == 0)
    for (const auto& e : errors)
      if (e) throw *e;
  rep.rigid = detail::summarize(rep.trials, &TrialResult::rigid);
  rep.mean_ols = detail::summarize(rep.trials, &TrialResult::mean_ols);
  rep.cond_mean_ols = detail::summarize(rep.trials, &TrialResult::cond_mean_ols);
  int wins = 0;
  for (const auto& t : rep.trials) wins += (t.ok && t.rigid.rmse <= t.mean_ols.rmse) ? 1 : 0;
  rep.win_rate = static_cast<double>(wins) / rep.succeeded;
  rep.rmse_improvement = 1.0 - rep.rigid.rmse_mean / rep.mean_ols.rmse_mean;
  return rep;
}

}  // namespace rigid
