#pragma once

// Missing-mask generators for simulation: MCAR, MAR (logistic on always-observed
// columns), MNAR with a logistic model on MCAR-masked inputs, and MNAR on the
// outer quantile bands of each column.
//
// Every cell is decided by comparing a per-cell masking probability with a
// counter-based uniform keyed on (seed, row, column, attempt), so the mask does
// not depend on evaluation order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "rigid/detail/parallel.hpp"
#include "rigid/types.hpp"

namespace rigid {

enum class Mechanism { MCAR, MAR, MNARLogistic, MNARQuantile };

inline std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::MCAR: return "mcar";
    case Mechanism::MAR: return "mar";
    case Mechanism::MNARLogistic: return "mnar";
    case Mechanism::MNARQuantile: return "mnar-q";
  }
  return "unknown";
}

inline Mechanism parse_mechanism(std::string_view s) {
  if (s == "mcar") return Mechanism::MCAR;
  if (s == "mar") return Mechanism::MAR;
  if (s == "mnar") return Mechanism::MNARLogistic;
  if (s == "mnar-q") return Mechanism::MNARQuantile;
  fail(ErrorCode::InvalidArgument, "unknown mechanism '" + std::string(s) + "'");
}

struct MaskSpec {
  Mechanism mechanism = Mechanism::MCAR;
  double rate = 0.3;
  std::uint64_t seed = 0;
  double observed_fraction = 0.3;  // MAR: columns that stay fully observed
  double input_fraction = 0.3;     // MNAR logistic: columns feeding the model
  double affected_fraction = 0.7;  // MNAR quantile: columns that can be masked
  double quantile_width = 0.25;    // MNAR quantile: mass of each tail band

  void validate() const {
    require(rate > 0.0 && rate < 1.0, ErrorCode::InvalidArgument, "rate must lie in (0, 1)");
    for (double f : {observed_fraction, input_fraction, affected_fraction})
      require(f > 0.0 && f <= 1.0, ErrorCode::InvalidArgument, "column fractions must lie in (0, 1]");
    require(quantile_width > 0.0 && quantile_width <= 0.5, ErrorCode::InvalidArgument,
            "quantile_width must lie in (0, 0.5]");
  }
};

namespace detail {

inline std::vector<Index> pick_columns(Index p, double fraction, std::uint64_t seed, Index max_count) {
  std::mt19937_64 rng(seed);
  std::vector<Index> cols(static_cast<std::size_t>(p));
  for (Index j = 0; j < p; ++j) cols[static_cast<std::size_t>(j)] = j;
  std::shuffle(cols.begin(), cols.end(), rng);
  Index k = static_cast<Index>(std::lround(fraction * static_cast<double>(p)));
  k = std::clamp<Index>(k, 1, std::max<Index>(1, max_count));
  cols.resize(static_cast<std::size_t>(k));
  std::sort(cols.begin(), cols.end());
  return cols;
}

inline std::vector<Index> complement(Index p, const std::vector<Index>& cols) {
  std::vector<Index> out;
  for (Index j = 0; j < p; ++j)
    if (!std::binary_search(cols.begin(), cols.end(), j)) out.push_back(j);
  return out;
}

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Linear-interpolation empirical quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Fills `prob` columns `targets` with sigmoid(x_inputs W + b_t), b_t chosen by
/// bisection so each column's mean probability is `target`.
inline void logistic_probabilities(const Matrix& data, const std::vector<Index>& inputs,
                                   const std::vector<Index>& targets, double target, std::uint64_t seed,
                                   Matrix& prob) {
  const Index n = data.rows();
  require(target < 1.0, ErrorCode::RateUnreachable,
          "per-column masking rate " + std::to_string(target) + " is not below 1");
  Matrix x(n, static_cast<Index>(inputs.size()));
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto col = data.col(inputs[k]);
    const double mu = col.mean();
    const double sd = std::sqrt((col.array() - mu).square().mean());
    x.col(static_cast<Index>(k)) = sd > 0 ? Vector((col.array() - mu) / sd) : Vector::Zero(n);
  }

  for (int attempt = 0; attempt < 5; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, 100 + static_cast<std::uint64_t>(attempt)));
    std::normal_distribution<double> normal;
    Matrix w(static_cast<Index>(inputs.size()), static_cast<Index>(targets.size()));
    for (Index c = 0; c < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = normal(rng);
    w /= std::sqrt(static_cast<double>(std::max<std::size_t>(1, inputs.size())));
    const Matrix logits = x * w;

    bool ok = true;
    for (std::size_t t = 0; t < targets.size() && ok; ++t) {
      const auto lg = logits.col(static_cast<Index>(t));
      auto mean_prob = [&](double b) {
        double s = 0.0;
        for (Index i = 0; i < n; ++i) s += sigmoid(lg(i) + b);
        return s / static_cast<double>(n);
      };
      double lo = -60.0, hi = 60.0, b = 0.0, m = mean_prob(0.0);
      for (int it = 0; it < 200 && std::abs(m - target) > 0.002; ++it) {
        b = 0.5 * (lo + hi);
        m = mean_prob(b);
        (m < target ? lo : hi) = b;
      }
      if (std::abs(m - target) > 0.01) {
        ok = false;
        break;
      }
      for (Index i = 0; i < n; ++i) prob(i, targets[t]) = sigmoid(lg(i) + b);
    }
    if (ok) return;
  }
  fail(ErrorCode::RateUnreachable, "intercept calibration could not reach the requested rate");
}

}  // namespace detail

/// Per-cell masking probabilities for `spec` on complete `data`.
inline Matrix masking_probabilities(const Matrix& data, const MaskSpec& spec) {
  spec.validate();
  require(data.allFinite(), ErrorCode::InvalidArgument, "mask generation needs complete finite data");
  const Index n = data.rows();
  const Index p = data.cols();
  require(n >= 1 && p >= 1, ErrorCode::InvalidArgument, "empty data");
  Matrix prob = Matrix::Zero(n, p);
  const std::uint64_t col_seed = detail::derive_seed(spec.seed, 1);

  switch (spec.mechanism) {
    case Mechanism::MCAR:
      prob.setConstant(spec.rate);
      break;
    case Mechanism::MAR: {
      require(p >= 2, ErrorCode::RateUnreachable, "MAR needs at least two columns");
      const auto observed = detail::pick_columns(p, spec.observed_fraction, col_seed, p - 1);
      const auto targets = detail::complement(p, observed);
      const double per_col = spec.rate * static_cast<double>(p) / static_cast<double>(targets.size());
      detail::logistic_probabilities(data, observed, targets, per_col, spec.seed, prob);
      break;
    }
    case Mechanism::MNARLogistic: {
      require(p >= 2, ErrorCode::RateUnreachable, "MNAR logistic needs at least two columns");
      const auto inputs = detail::pick_columns(p, spec.input_fraction, col_seed, p - 1);
      const auto targets = detail::complement(p, inputs);
      for (Index j : inputs) prob.col(j).setConstant(spec.rate);
      detail::logistic_probabilities(data, inputs, targets, spec.rate, spec.seed, prob);
      break;
    }
    case Mechanism::MNARQuantile: {
      const auto affected = detail::pick_columns(p, spec.affected_fraction, col_seed, p);
      for (Index j : affected) {
        std::vector<double> sorted(data.col(j).data(), data.col(j).data() + n);
        std::sort(sorted.begin(), sorted.end());
        const double lo = detail::quantile_sorted(sorted, spec.quantile_width);
        const double hi = detail::quantile_sorted(sorted, 1.0 - spec.quantile_width);
        for (Index i = 0; i < n; ++i)
          if (data(i, j) <= lo || data(i, j) >= hi) prob(i, j) = spec.rate;
      }
      break;
    }
  }
  return prob;
}

/// Observation mask (true = observed). Every column keeps at least one
/// observed cell: an all-missing column is redrawn up to 100 times, then one
/// random cell is unmasked.
inline Mask generate_mask(const Matrix& data, const MaskSpec& spec) {
  const Matrix prob = masking_probabilities(data, spec);
  const Index n = data.rows();
  const Index p = data.cols();
  Mask mask(n, p);
  detail::parallel_for(static_cast<std::size_t>(n), [&](std::size_t row) {
    const auto i = static_cast<Index>(row);
    for (Index j = 0; j < p; ++j)
      mask(i, j) = !(detail::counter_uniform(spec.seed, row, static_cast<std::uint64_t>(j)) < prob(i, j));
  });
  for (Index j = 0; j < p; ++j) {
    for (std::uint64_t attempt = 1; attempt <= 100 && !mask.col(j).any(); ++attempt)
      for (Index i = 0; i < n; ++i)
        mask(i, j) = !(detail::counter_uniform(spec.seed, static_cast<std::uint64_t>(i),
                                               static_cast<std::uint64_t>(j), attempt) < prob(i, j));
    if (!mask.col(j).any()) {
      const double u = detail::counter_uniform(spec.seed, static_cast<std::uint64_t>(n),
                                               static_cast<std::uint64_t>(j), 1000);
      mask(std::min<Index>(n - 1, static_cast<Index>(u * static_cast<double>(n))), j) = true;
    }
  }
  return mask;
}

inline double realized_missing_rate(const Mask& mask) {
  if (mask.size() == 0) return 0.0;
  return 1.0 - static_cast<double>(mask.count()) / static_cast<double>(mask.size());
}

}  // namespace rigid
