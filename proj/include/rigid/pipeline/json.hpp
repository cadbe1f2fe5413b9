#pragma once

// JSON documents: fitted models, fit/bench/mask/risk reports, risk specs and
// bench configs. Every document carries "schema_version". Non-finite numbers
// are written as null.

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rigid/pipeline/model.hpp"
#include "rigid/pipeline/simulate.hpp"
#include "rigid/risk.hpp"

namespace rigid {

inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

namespace detail {

inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double number_or(const Json& j, double fallback) { return j.is_null() ? fallback : j.get<double>(); }

inline Json to_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

inline Json to_json(const Matrix& m) {
  Json a = Json::array();
  for (Index i = 0; i < m.rows(); ++i) a.push_back(to_json(Vector(m.row(i).transpose())));
  return a;
}

inline Vector vector_from(const Json& j) {
  require(j.is_array(), ErrorCode::ParseError, "expected a number array");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = j[i].get<double>();
  return v;
}

inline Matrix matrix_from(const Json& j) {
  require(j.is_array(), ErrorCode::ParseError, "expected an array of rows");
  const auto r = static_cast<Index>(j.size());
  const Index c = r > 0 ? static_cast<Index>(j[0].size()) : 0;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    const Vector row = vector_from(j[static_cast<std::size_t>(i)]);
    require(row.size() == c, ErrorCode::ParseError, "ragged matrix rows");
    m.row(i) = row.transpose();
  }
  return m;
}

inline Json to_json(const Metrics& m) { return {{"rmse", number(m.rmse)}, {"mae", number(m.mae)}}; }

inline Json to_json(const FitSummary& s) {
  return {{"iterations", s.iterations},
          {"converged", s.converged},
          {"objective", number(s.objective)},
          {"final_rho", number(s.final_rho)}};
}

inline Json to_json(const MethodSummary& s) {
  return {{"rmse_mean", number(s.rmse_mean)},
          {"rmse_std", number(s.rmse_std)},
          {"mae_mean", number(s.mae_mean)},
          {"mae_std", number(s.mae_std)}};
}

/// Parses a document, turning library exceptions into ParseError.
template <class Fn>
auto parse_guard(const std::string& what, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ParseError, what + ": " + e.what());
  }
}

inline void check_schema(const Json& j, const std::string& what) {
  require(j.is_object() && j.contains("schema_version"), ErrorCode::ParseError, what + ": missing schema_version");
  require(j["schema_version"].get<int>() == kSchemaVersion, ErrorCode::ParseError,
          what + ": unsupported schema_version");
}

}  // namespace detail

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::IoError, "cannot open '" + path + "'");
  return detail::parse_guard("'" + path + "'", [&] { return Json::parse(in); });
}

/// Two-space indent and a trailing newline.
inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::IoError, "cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  require(out.good(), ErrorCode::IoError, "write to '" + path + "' failed");
}

// ---- model -----------------------------------------------------------------

inline Json model_to_json(const RigidModel& m) {
  return {{"schema_version", kSchemaVersion},
          {"kind", "rigid-model"},
          {"features", m.feature_names},
          {"target", m.target},
          {"gamma", detail::number(m.gamma)},
          {"intercept", detail::number(m.intercept)},
          {"beta", detail::to_json(m.beta)},
          {"standardization",
           {{"center", detail::to_json(m.standardization.center)},
            {"scale", detail::to_json(m.standardization.scale)}}},
          {"moments",
           {{"mean", detail::to_json(m.moments.mean)},
            {"cov", detail::to_json(m.moments.cov)},
            {"theta", detail::number(m.moments.theta_floor)},
            {"cond_cap", detail::number(m.moments.cond_cap)},
            {"n_samples", m.moments.n_samples}}},
          {"fit", detail::to_json(m.summary)}};
}

inline RigidModel model_from_json(const Json& j) {
  return detail::parse_guard("model", [&] {
    detail::check_schema(j, "model");
    RigidModel m;
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    m.target = j.at("target").get<std::string>();
    m.gamma = j.at("gamma").get<double>();
    m.intercept = j.at("intercept").get<double>();
    m.beta = detail::vector_from(j.at("beta"));
    m.standardization.center = detail::vector_from(j.at("standardization").at("center"));
    m.standardization.scale = detail::vector_from(j.at("standardization").at("scale"));
    const Json& mo = j.at("moments");
    m.moments.mean = detail::vector_from(mo.at("mean"));
    m.moments.cov = detail::matrix_from(mo.at("cov"));
    m.moments.theta_floor = detail::number_or(mo.at("theta"), 0.0);
    m.moments.cond_cap = detail::number_or(mo.at("cond_cap"), std::numeric_limits<double>::infinity());
    m.moments.n_samples = mo.at("n_samples").get<Index>();
    const Json& f = j.at("fit");
    m.summary = {f.at("iterations").get<int>(), f.at("converged").get<bool>(),
                 detail::number_or(f.at("objective"), 0.0), detail::number_or(f.at("final_rho"), 0.0)};
    require(m.moments.cov.rows() == m.beta.size() && m.moments.cov.cols() == m.beta.size() &&
                static_cast<Index>(m.feature_names.size()) == m.beta.size(),
            ErrorCode::ParseError, "model: inconsistent dimensions");
    m.validate();
    return m;
  });
}

// ---- fit report --------------------------------------------------------------

inline Json cv_to_json(const CvTable& cv) {
  Json folds = Json::array();
  for (Index k = 0; k < cv.fold_mse.rows(); ++k) folds.push_back(detail::to_json(Vector(cv.fold_mse.row(k).transpose())));
  return {{"grid", cv.grid},
          {"fold_mse", folds},
          {"mean_mse", detail::to_json(cv.mean_mse)},
          {"best_gamma", cv.grid[cv.best]},
          {"unconverged_solves", cv.unconverged}};
}

inline Json fit_report_to_json(const FitResult& r, const IncompleteMatrix& train, const FitConfig& cfg) {
  const RigidModel& m = r.model;
  Json j = {{"schema_version", kSchemaVersion},
            {"kind", "fit-report"},
            {"rows", train.rows()},
            {"features", train.cols()},
            {"missing_rate", detail::number(train.missing_rate())},
            {"seed", cfg.seed},
            {"gamma_mode", cfg.gamma ? "fixed" : "cv"},
            {"gamma", detail::number(m.gamma)},
            {"converged", m.summary.converged},
            {"solver", detail::to_json(m.summary)},
            {"train_metrics", detail::to_json(compute_metrics(predict(m, train), train.response))}};
  if (r.cv) j["cv"] = cv_to_json(*r.cv);
  return j;
}

// ---- risk --------------------------------------------------------------------

/// Risk spec plus an optional evaluation point.
struct RiskDocument {
  RiskSpec spec;
  std::optional<Vector> beta;
};

inline RiskDocument risk_spec_from_json(const Json& j) {
  return detail::parse_guard("risk spec", [&] {
    require(j.is_object(), ErrorCode::ParseError, "risk spec must be an object");
    RiskDocument d;
    d.spec.beta0 = detail::vector_from(j.at("beta0"));
    d.spec.sigma = j.at("sigma").get<double>();
    d.spec.cov = detail::matrix_from(j.at("cov"));
    const Index p = d.spec.beta0.size();
    for (const auto& pat : j.at("patterns")) {
      auto idx = pat.get<std::vector<Index>>();
      std::sort(idx.begin(), idx.end());
      d.spec.patterns.emplace_back(p, std::move(idx));
    }
    d.spec.probs = detail::vector_from(j.at("probs"));
    if (j.contains("beta")) d.beta = detail::vector_from(j.at("beta"));
    d.spec.validate();
    return d;
  });
}

inline Json risk_report_to_json(const RiskDocument& d, double gamma, const std::optional<RiskMinimum>& minimum) {
  const Vector beta = d.beta.value_or(d.spec.beta0);
  Json j = {{"schema_version", kSchemaVersion},
            {"kind", "risk-report"},
            {"gamma", detail::number(gamma)},
            {"beta", detail::to_json(beta)},
            {"risk", detail::number(robust_risk(d.spec, beta, gamma))}};
  try {
    j["gamma0_threshold"] = detail::number(gamma0_threshold(d.spec));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::PatternsDoNotCoverFeatures) throw;
    j["gamma0_threshold"] = nullptr;
  }
  if (minimum)
    j["minimum"] = {{"beta", detail::to_json(minimum->beta)},
                    {"risk", detail::number(robust_risk(d.spec, minimum->beta, gamma))},
                    {"certificate", detail::number(minimum->certificate)},
                    {"newton_steps", minimum->newton_steps}};
  return j;
}

// ---- masking -----------------------------------------------------------------

inline Json mask_report_to_json(const MaskSpec& spec, const Mask& mask) {
  return {{"schema_version", kSchemaVersion},
          {"kind", "mask-report"},
          {"mechanism", std::string(to_string(spec.mechanism))},
          {"rate", spec.rate},
          {"seed", spec.seed},
          {"rows", mask.rows()},
          {"features", mask.cols()},
          {"realized_rate", detail::number(realized_missing_rate(mask))}};
}

// ---- bench -------------------------------------------------------------------

/// Every key is optional; absent keys keep the ExperimentSpec defaults.
inline ExperimentSpec experiment_from_json(const Json& j) {
  return detail::parse_guard("bench config", [&] {
    require(j.is_object(), ErrorCode::ParseError, "bench config must be an object");
    ExperimentSpec s;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("n", s.generator.n);
    get("p", s.generator.p);
    get("factors", s.generator.factors);
    get("ridge", s.generator.ridge);
    get("noise_sd", s.generator.noise_sd);
    get("outlier_fraction", s.generator.outlier_fraction);
    get("outlier_sd", s.generator.outlier_sd);
    if (j.contains("mechanism")) s.mask.mechanism = parse_mechanism(j.at("mechanism").get<std::string>());
    get("rate", s.mask.rate);
    get("train_fraction", s.train_fraction);
    get("n_trials", s.n_trials);
    get("seed", s.seed);
    get("trial_seeds", s.trial_seeds);
    get("folds", s.fit.folds);
    get("gamma_grid", s.fit.gamma_grid);
    get("max_iter", s.fit.solver.max_iter);
    if (j.contains("gamma") && !(j.at("gamma").is_string() && j.at("gamma").get<std::string>() == "auto"))
      s.fit.gamma = j.at("gamma").get<double>();
    s.validate();
    return s;
  });
}

inline Json experiment_report_to_json(const ExperimentSpec& spec, const ExperimentReport& r) {
  Json trials = Json::array();
  for (const auto& t : r.trials) {
    Json tj = {{"seed", t.seed}, {"ok", t.ok}};
    if (t.ok) {
      tj["missing_rate"] = detail::number(t.missing_rate);
      tj["gamma"] = detail::number(t.gamma);
      tj["converged"] = t.converged;
      tj["rigid"] = detail::to_json(t.rigid);
      tj["mean_impute_ols"] = detail::to_json(t.mean_ols);
      tj["cond_mean_ols"] = detail::to_json(t.cond_mean_ols);
    } else {
      tj["error"] = t.error;
    }
    trials.push_back(std::move(tj));
  }
  return {{"schema_version", kSchemaVersion},
          {"kind", "bench-report"},
          {"config",
           {{"n", spec.generator.n},
            {"p", spec.generator.p},
            {"mechanism", std::string(to_string(spec.mask.mechanism))},
            {"rate", spec.mask.rate},
            {"outlier_fraction", spec.generator.outlier_fraction},
            {"outlier_sd", spec.generator.outlier_sd},
            {"n_trials", spec.n_trials},
            {"seed", spec.seed}}},
          {"succeeded", r.succeeded},
          {"methods",
           {{"rigid", detail::to_json(r.rigid)},
            {"mean_impute_ols", detail::to_json(r.mean_ols)},
            {"cond_mean_ols", detail::to_json(r.cond_mean_ols)}}},
          {"win_rate", detail::number(r.win_rate)},
          {"rmse_improvement", detail::number(r.rmse_improvement)},
          {"trials", trials}};
}

}  // namespace rigid
