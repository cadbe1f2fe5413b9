// rigid: fit, predict, mask simulation, benchmarks and risk analytics.
//
// Exit codes: 0 success, 2 input error, 3 numerical failure.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rigid/pipeline/csv.hpp"
#include "rigid/pipeline/json.hpp"
#include "rigid/pipeline/model.hpp"
#include "rigid/pipeline/simulate.hpp"
#include "rigid/missingness.hpp"
#include "rigid/risk.hpp"

namespace {

using namespace rigid;

constexpr int kInputError = 2;
constexpr int kNumericalError = 3;

void emit(const Json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(path, j);
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct FitArgs {
  std::string train, target, gamma = "auto", out, report;
  int folds = 5;
  std::optional<double> theta;
  double cond_cap = 3e3;
  std::uint64_t seed = 0;
  int max_iter = 5000;
  bool timings = false;
};

int run_fit(const FitArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = load_csv(a.train, a.target);
  FitConfig cfg;
  cfg.folds = a.folds;
  cfg.seed = a.seed;
  cfg.projection.theta = a.theta;
  cfg.projection.cond_cap = a.cond_cap;
  cfg.solver.max_iter = a.max_iter;
  if (a.gamma != "auto") {
    try {
      cfg.gamma = std::stod(a.gamma);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "--gamma expects 'auto' or a number, got '" + a.gamma + "'");
    }
  }
  const FitResult r = fit(d.data, cfg, d.feature_names, d.target);
  write_json(a.out, model_to_json(r.model));
  if (!a.report.empty()) {
    Json rep = fit_report_to_json(r, d.data, cfg);
    if (a.timings) rep["timings"] = {{"total_seconds", seconds_since(t0)}};
    write_json(a.report, rep);
  }
  if (!r.model.summary.converged) std::cerr << "warning: solver stopped at max_iter; see report\n";
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data_path, const std::string& out_path) {
  const RigidModel m = model_from_json(read_json(model_path));
  const CsvTable t = read_csv(data_path);
  Matrix x(t.rows(), m.dim());
  Mask mask(t.rows(), m.dim());
  for (Index j = 0; j < m.dim(); ++j) {
    const std::string& name = m.feature_names[static_cast<std::size_t>(j)];
    const Index c = t.column(name);
    require(c >= 0, ErrorCode::DimensionMismatch, "feature column '" + name + "' missing from " + data_path);
    x.col(j) = t.values.col(c);
    mask.col(j) = t.mask.col(c);
  }
  const Vector pred = predict(m, x, mask);
  write_csv(out_path, {"prediction"}, pred, Mask::Constant(pred.size(), 1, true));
  return 0;
}

struct MaskArgs {
  std::string data, mechanism = "mcar", out, report, target;
  double rate = 0.3;
  std::uint64_t seed = 0;
};

int run_simulate_missing(const MaskArgs& a) {
  const CsvTable t = read_csv(a.data);
  require(t.mask.all(), ErrorCode::InvalidArgument, "simulate-missing needs a fully observed input");
  const Index skip = a.target.empty() ? -1 : t.column(a.target);
  require(a.target.empty() || skip >= 0, ErrorCode::InvalidArgument, "target column '" + a.target + "' not found");
  Matrix features(t.rows(), t.cols() - (skip >= 0 ? 1 : 0));
  for (Index j = 0, k = 0; j < t.cols(); ++j)
    if (j != skip) features.col(k++) = t.values.col(j);
  MaskSpec spec;
  spec.mechanism = parse_mechanism(a.mechanism);
  spec.rate = a.rate;
  spec.seed = a.seed;
  const Mask fm = generate_mask(features, spec);
  Mask full = Mask::Constant(t.rows(), t.cols(), true);
  for (Index j = 0, k = 0; j < t.cols(); ++j)
    if (j != skip) full.col(j) = fm.col(k++);
  write_csv(a.out, t.header, t.values, full);
  if (!a.report.empty()) write_json(a.report, mask_report_to_json(spec, fm));
  return 0;
}

int run_bench(const std::string& config, const std::string& out, bool timings) {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentSpec spec = experiment_from_json(read_json(config));
  const ExperimentReport rep = simulate_experiment(spec);
  Json j = experiment_report_to_json(spec, rep);
  if (timings) j["timings"] = {{"total_seconds", seconds_since(t0)}};
  emit(j, out);
  return 0;
}

int run_risk(const std::string& spec_path, double gamma, bool minimize, const std::string& out) {
  const RiskDocument d = risk_spec_from_json(read_json(spec_path));
  std::optional<RiskMinimum> minimum;
  if (minimize) minimum = minimize_robust_risk(d.spec, gamma);
  emit(risk_report_to_json(d, gamma, minimum), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust linear regression on incomplete data"};
  app.require_subcommand(1);

  FitArgs fa;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model with cross-validated or fixed gamma");
  fit_cmd->add_option("--train", fa.train, "Training CSV")->required();
  fit_cmd->add_option("--target", fa.target, "Response column")->required();
  fit_cmd->add_option("--gamma", fa.gamma, "'auto' or a fixed value")->capture_default_str();
  fit_cmd->add_option("--folds", fa.folds, "Cross-validation folds")->capture_default_str();
  fit_cmd->add_option("--theta", fa.theta, "Covariance eigenvalue floor");
  fit_cmd->add_option("--cond-cap", fa.cond_cap, "Covariance condition-number cap")->capture_default_str();
  fit_cmd->add_option("--seed", fa.seed, "Seed for fold assignment")->capture_default_str();
  fit_cmd->add_option("--max-iter", fa.max_iter, "Solver iteration limit")->capture_default_str();
  fit_cmd->add_option("--out", fa.out, "Model JSON")->required();
  fit_cmd->add_option("--report", fa.report, "Fit report JSON");
  fit_cmd->add_flag("--timings", fa.timings, "Include wall-clock timings in the report");

  std::string model_path, data_path, pred_out;
  auto* predict_cmd = app.add_subcommand("predict", "Predict with a fitted model");
  predict_cmd->add_option("--model", model_path, "Model JSON")->required();
  predict_cmd->add_option("--data", data_path, "Feature CSV, cells may be missing")->required();
  predict_cmd->add_option("--out", pred_out, "Prediction CSV")->required();

  MaskArgs ma;
  auto* mask_cmd = app.add_subcommand("simulate-missing", "Mask a complete CSV");
  mask_cmd->add_option("--data", ma.data, "Complete CSV")->required();
  mask_cmd->add_option("--mechanism", ma.mechanism, "mcar|mar|mnar|mnar-q")->capture_default_str();
  mask_cmd->add_option("--rate", ma.rate, "Target missing rate")->capture_default_str();
  mask_cmd->add_option("--seed", ma.seed, "Mask seed")->capture_default_str();
  mask_cmd->add_option("--target", ma.target, "Column left unmasked");
  mask_cmd->add_option("--out", ma.out, "Masked CSV")->required();
  mask_cmd->add_option("--report", ma.report, "Mask report JSON");

  std::string bench_config, bench_out;
  bool bench_timings = false;
  auto* bench_cmd = app.add_subcommand("bench", "Run a seeded synthetic benchmark");
  bench_cmd->add_option("--config", bench_config, "Benchmark config JSON")->required();
  bench_cmd->add_option("--out", bench_out, "Report JSON (default: stdout)");
  bench_cmd->add_flag("--timings", bench_timings, "Include wall-clock timings in the report");

  std::string risk_spec, risk_out;
  double risk_gamma = 0.0;
  bool risk_minimize = false;
  auto* risk_cmd = app.add_subcommand("risk", "Evaluate the population robust risk");
  risk_cmd->add_option("--spec", risk_spec, "Risk spec JSON")->required();
  risk_cmd->add_option("--gamma", risk_gamma, "Robustness level")->required();
  risk_cmd->add_flag("--minimize", risk_minimize, "Also compute the risk minimizer");
  risk_cmd->add_option("--out", risk_out, "Report JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInputError;
  }

  try {
    if (*fit_cmd) return run_fit(fa);
    if (*predict_cmd) return run_predict(model_path, data_path, pred_out);
    if (*mask_cmd) return run_simulate_missing(ma);
    if (*bench_cmd) return run_bench(bench_config, bench_out, bench_timings);
    if (*risk_cmd) return run_risk(risk_spec, risk_gamma, risk_minimize, risk_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_numerical(e.code()) ? kNumericalError : kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
