#pragma once

// Scaled ADMM for
//   minimize_beta (1/2n) sum_i ( |a_i - b_i^T beta| + gamma ||Cbar_i^T beta_M_i|| )^2
// split per sample as z_i = Ctilde_i beta - atilde_i with
//   Ctilde_i = [b_i^T; Cbar_i^T S_i],  atilde_i = [a_i; 0],
//   phi(z) = 1/2 (|z_1| + gamma ||z_2||)^2.
// Blocks are compact: z_i has 1 + |M_i| entries. The dual variable follows
// the sign convention u <- u - Ctilde beta + z + atilde, so the z-update is
// prox_{phi/rho}(Ctilde beta - atilde - u).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <vector>

#include "rigid/conditional.hpp"
#include "rigid/moments.hpp"
#include "rigid/prox.hpp"
#include "rigid/types.hpp"

namespace rigid {

struct SolverConfig {
  double rho_init = 1.0;
  bool vary_penalty = true;
  double eps_abs = 1e-8;
  double eps_rel = 1e-6;
  int max_iter = 5000;
  std::optional<Index> batch_size;
  std::uint64_t seed = 0;
  /// Residual ratio that triggers a penalty change.
  double penalty_ratio = 10.0;
  /// Multiplicative penalty change.
  double penalty_factor = 2.0;
  /// Mini-batch runs test convergence every this many iterations.
  int check_every = 10;

  void validate() const {
    require(rho_init > 0.0, ErrorCode::InvalidArgument, "rho_init must be positive");
    require(eps_abs > 0.0 && eps_rel > 0.0, ErrorCode::InvalidArgument, "tolerances must be positive");
    require(max_iter > 0, ErrorCode::InvalidArgument, "max_iter must be positive");
    require(!batch_size || *batch_size > 0, ErrorCode::InvalidArgument, "batch_size must be positive");
    require(penalty_ratio > 1.0 && penalty_factor > 1.0, ErrorCode::InvalidArgument,
            "penalty_ratio and penalty_factor must exceed 1");
    require(check_every > 0, ErrorCode::InvalidArgument, "check_every must be positive");
  }
};

/// Assembled convex program. Immutable; copies share the per-sample data.
class RigidProblem {
 public:
  struct Shared {
    Vector a;                                    // responses
    Matrix b;                                    // n x d completed rows (d = p or p + 1)
    std::shared_ptr<const PatternRegistry> registry;
    std::vector<Index> offsets;                  // start of each z-block
    Index total_dim = 0;
    bool intercept = false;
    Matrix gram;
    Eigen::LLT<Matrix> gram_factor;
  };

  RigidProblem(std::shared_ptr<const Shared> shared, double gamma)
      : shared_(std::move(shared)), gamma_(gamma) {
    require(gamma_ >= 0.0, ErrorCode::InvalidArgument, "gamma must be nonnegative");
  }

  RigidProblem with_gamma(double gamma) const { return RigidProblem(shared_, gamma); }

  double gamma() const { return gamma_; }
  Index n() const { return shared_->a.size(); }
  /// Coefficient dimension, intercept included.
  Index dim() const { return shared_->b.cols(); }
  bool has_intercept() const { return shared_->intercept; }
  const Vector& a() const { return shared_->a; }
  const Matrix& b() const { return shared_->b; }
  const PatternRegistry& registry() const { return *shared_->registry; }
  const PatternStats& stats(Index i) const { return shared_->registry->for_row(i); }
  Index offset(Index i) const { return shared_->offsets[static_cast<std::size_t>(i)]; }
  Index block_dim(Index i) const { return 1 + stats(i).pattern.n_missing(); }
  Index total_dim() const { return shared_->total_dim; }
  const Matrix& gram() const { return shared_->gram; }
  const Eigen::LLT<Matrix>& gram_factor() const { return shared_->gram_factor; }

 private:
  std::shared_ptr<const Shared> shared_;
  double gamma_;
};

struct SolveReport {
  Vector beta;
  int iterations = 0;
  std::vector<double> primal_residual;
  std::vector<double> dual_residual;
  std::vector<double> objective_trace;
  bool converged = false;
  double final_rho = 0.0;
  double objective = 0.0;

  // Last iterate pair, for re-deriving the final residuals.
  Vector last_beta;
  Vector prev_beta;
  Vector z;
  double rho_last = 0.0;
};

namespace detail {

/// Sum over `rows` (ascending) of b_i b_i^T plus each pattern's padded
/// conditional covariance times its multiplicity among `rows`.
inline Matrix gram_for(const RigidProblem::Shared& s, const std::vector<Index>& rows) {
  const Index d = s.b.cols();
  Matrix g = Matrix::Zero(d, d);
  std::vector<Index> mult(s.registry->size(), 0);
  for (Index i : rows) {
    ++mult[s.registry->row_pattern[static_cast<std::size_t>(i)]];
    g.selfadjointView<Eigen::Lower>().rankUpdate(s.b.row(i).transpose());
  }
  for (std::size_t k = 0; k < s.registry->size(); ++k) {
    if (mult[k] == 0) continue;
    const PatternStats& st = s.registry->patterns[k];
    const auto& mis = st.pattern.missing();
    const double c = static_cast<double>(mult[k]);
    for (std::size_t r = 0; r < mis.size(); ++r)
      for (std::size_t q = 0; q <= r; ++q)
        g(mis[r], mis[q]) += c * st.cond_cov(static_cast<Index>(r), static_cast<Index>(q));
  }
  g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

/// Cholesky of a Gram matrix with the pivot test min L_ii^2 > 1e-12 trace / d.
inline std::optional<Eigen::LLT<Matrix>> factor_gram(const Matrix& g) {
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const double floor = 1e-12 * g.trace() / static_cast<double>(std::max<Index>(1, g.rows()));
  const Vector diag = Matrix(llt.matrixL()).diagonal();
  if ((diag.array().square() <= floor).any()) return std::nullopt;
  return llt;
}

}  // namespace detail

/// Builds the per-sample blocks and the cached Gram factorization. With
/// `intercept`, a constant 1 is appended to every completed row; it is never
/// missing and carries no conditional uncertainty.
inline RigidProblem assemble(const IncompleteMatrix& data, const MomentEstimate& moments,
                             std::shared_ptr<const PatternRegistry> registry, double gamma,
                             bool intercept = false) {
  data.validate();
  require(gamma >= 0.0, ErrorCode::InvalidArgument, "gamma must be nonnegative");
  require(registry && registry->row_pattern.size() == static_cast<std::size_t>(data.rows()),
          ErrorCode::DimensionMismatch, "registry was not built from this data");
  require(moments.dim() == data.cols(), ErrorCode::DimensionMismatch,
          "moments do not match data width");
  auto s = std::make_shared<RigidProblem::Shared>();
  s->a = data.response;
  const Matrix completed = complete_rows(data, *registry, moments.mean);
  if (intercept) {
    s->b.resize(data.rows(), data.cols() + 1);
    s->b.leftCols(data.cols()) = completed;
    s->b.col(data.cols()).setOnes();
  } else {
    s->b = completed;
  }
  s->registry = std::move(registry);
  s->intercept = intercept;
  s->offsets.resize(static_cast<std::size_t>(data.rows()));
  Index off = 0;
  for (Index i = 0; i < data.rows(); ++i) {
    s->offsets[static_cast<std::size_t>(i)] = off;
    off += 1 + s->registry->for_row(i).pattern.n_missing();
  }
  s->total_dim = off;

  std::vector<Index> all(static_cast<std::size_t>(data.rows()));
  std::iota(all.begin(), all.end(), Index{0});
  s->gram = detail::gram_for(*s, all);
  auto factor = detail::factor_gram(s->gram);
  require(factor.has_value(), ErrorCode::RankDeficientGram,
          "sum of Ctilde_i^T Ctilde_i is numerically singular");
  s->gram_factor = std::move(*factor);
  return RigidProblem(std::move(s), gamma);
}

inline RigidProblem assemble(const IncompleteMatrix& data, const MomentEstimate& moments,
                             const PatternRegistry& registry, double gamma, bool intercept = false) {
  return assemble(data, moments, std::make_shared<const PatternRegistry>(registry), gamma, intercept);
}

/// Stacked Ctilde beta.
inline Vector apply_blocks(const RigidProblem& prob, const Vector& beta) {
  Vector out(prob.total_dim());
  for (Index i = 0; i < prob.n(); ++i) {
    const Index off = prob.offset(i);
    out(off) = prob.b().row(i).dot(beta);
    const PatternStats& st = prob.stats(i);
    const auto& mis = st.pattern.missing();
    const Index m = static_cast<Index>(mis.size());
    if (m == 0) continue;
    // Cbar^T beta_M with Cbar lower triangular
    for (Index r = 0; r < m; ++r) {
      double acc = 0.0;
      for (Index q = r; q < m; ++q) acc += st.cond_cov_factor(q, r) * beta(mis[static_cast<std::size_t>(q)]);
      out(off + 1 + r) = acc;
    }
  }
  return out;
}

/// rhs += sum over `rows` of Ctilde_i^T w_i.
inline void accumulate_adjoint(const RigidProblem& prob, const Vector& w,
                               const std::vector<Index>& rows, Vector& rhs) {
  for (Index i : rows) {
    const Index off = prob.offset(i);
    rhs += w(off) * prob.b().row(i).transpose();
    const PatternStats& st = prob.stats(i);
    const auto& mis = st.pattern.missing();
    const Index m = static_cast<Index>(mis.size());
    for (Index q = 0; q < m; ++q) {
      double acc = 0.0;
      for (Index r = 0; r <= q; ++r) acc += st.cond_cov_factor(q, r) * w(off + 1 + r);
      rhs(mis[static_cast<std::size_t>(q)]) += acc;
    }
  }
}

/// (1/2n) sum_i (|a_i - b_i^T beta| + gamma ||beta_M_i||_{Sigmabar_i})^2.
inline double objective(const RigidProblem& prob, const Vector& beta) {
  require(beta.size() == prob.dim(), ErrorCode::DimensionMismatch, "objective: beta length");
  double total = 0.0;
  for (Index i = 0; i < prob.n(); ++i) {
    const double resid = std::abs(prob.a()(i) - prob.b().row(i).dot(beta));
    double pen = 0.0;
    const PatternStats& st = prob.stats(i);
    if (prob.gamma() > 0.0 && st.pattern.n_missing() > 0) {
      const Vector bm = detail::subvector(beta, st.pattern.missing());
      pen = std::sqrt(std::max(0.0, bm.dot(st.cond_cov * bm)));
    }
    const double l = resid + prob.gamma() * pen;
    total += l * l;
  }
  return total / (2.0 * static_cast<double>(prob.n()));
}

struct Residuals {
  double primal = 0.0;
  double dual = 0.0;
};

/// Primal ||Ctilde beta - z - atilde|| and dual rho ||Ctilde (beta - beta_prev)||.
inline Residuals residuals(const RigidProblem& prob, const Vector& beta, const Vector& beta_prev,
                           const Vector& z, double rho) {
  const Vector cb = apply_blocks(prob, beta);
  Vector r = cb - z;
  for (Index i = 0; i < prob.n(); ++i) r(prob.offset(i)) -= prob.a()(i);
  return {r.norm(), rho * (cb - apply_blocks(prob, beta_prev)).norm()};
}

namespace detail {

inline Vector initial_beta(const RigidProblem& prob) {
  const Matrix btb = prob.b().transpose() * prob.b();
  if (auto f = factor_gram(btb)) return f->solve(prob.b().transpose() * prob.a());
  return Vector::Zero(prob.dim());
}

/// Shared ADMM loop. `beta_step` receives (iteration, w = z + atilde + u) and
/// returns the next beta; `check_now` says whether convergence is tested.
/// With `stochastic`, the penalty is only revisited at check points and never
/// lowered (batch noise inflates the dual residual, and a smaller rho scales
/// that noise up), and the iterates of the second half of the run are averaged;
/// the average replaces the best iterate when its objective is lower.
template <class BetaStep, class CheckNow>
SolveReport run_admm(const RigidProblem& prob, const SolverConfig& cfg, BetaStep&& beta_step,
                     CheckNow&& check_now, bool stochastic = false) {
  cfg.validate();
  const Index total = prob.total_dim();
  const double sqrt_dim = std::sqrt(static_cast<double>(total));
  const double gamma = prob.gamma();

  SolveReport rep;
  Vector beta = initial_beta(prob);
  Vector cb = apply_blocks(prob, beta);
  Vector z = cb;
  for (Index i = 0; i < prob.n(); ++i) z(prob.offset(i)) -= prob.a()(i);
  Vector u = Vector::Zero(total);
  double rho = cfg.rho_init;

  Vector best_beta = beta;
  double best_obj = std::numeric_limits<double>::infinity();
  Vector w(total);
  Vector prev_beta = beta;
  double rho_last = rho;
  Vector tail_sum = Vector::Zero(beta.size());
  int tail_count = 0;

  for (int k = 1; k <= cfg.max_iter; ++k) {
    // z-update: z_i = prox_{phi/rho}(Ctilde_i beta - atilde_i - u_i)
    z = cb - u;
    for (Index i = 0; i < prob.n(); ++i) {
      const Index off = prob.offset(i);
      z(off) -= prob.a()(i);
      auto tail = z.segment(off + 1, prob.block_dim(i) - 1);
      prox_joint_inplace(z(off), tail, 1.0 / rho, gamma);
    }

    // beta-update on w = z + atilde + u
    w = z + u;
    for (Index i = 0; i < prob.n(); ++i) w(prob.offset(i)) += prob.a()(i);
    prev_beta = beta;
    beta = beta_step(k, w);
    const Vector cb_new = apply_blocks(prob, beta);
    if (stochastic && 2 * k > cfg.max_iter) {
      tail_sum += beta;
      ++tail_count;
    }

    const Vector z_plus_a = w - u;
    const Vector r = cb_new - z_plus_a;
    u -= r;
    const double r_norm = r.norm();
    const double s_norm = rho * (cb_new - cb).norm();
    cb = cb_new;
    rho_last = rho;

    const double obj = objective(prob, beta);
    rep.primal_residual.push_back(r_norm);
    rep.dual_residual.push_back(s_norm);
    rep.objective_trace.push_back(obj);
    rep.iterations = k;
    if (obj < best_obj) {
      best_obj = obj;
      best_beta = beta;
    }

    const double eps_pri = sqrt_dim * cfg.eps_abs + cfg.eps_rel * std::max(cb.norm(), z_plus_a.norm());
    const double eps_dual = sqrt_dim * cfg.eps_abs + cfg.eps_rel * rho * u.norm();
    const bool check = check_now(k);
    if (check && r_norm <= eps_pri && s_norm <= eps_dual) {
      rep.converged = true;
      break;
    }

    if (cfg.vary_penalty && (check || !stochastic)) {
      if (r_norm > cfg.penalty_ratio * s_norm) {
        rho *= cfg.penalty_factor;
        u /= cfg.penalty_factor;
      } else if (!stochastic && s_norm > cfg.penalty_ratio * r_norm) {
        rho /= cfg.penalty_factor;
        u *= cfg.penalty_factor;
      }
    }
  }

  rep.last_beta = beta;
  rep.prev_beta = prev_beta;
  rep.z = z;
  rep.rho_last = rho_last;
  rep.final_rho = rho;
  rep.beta = rep.converged ? beta : best_beta;
  rep.objective = objective(prob, rep.beta);
  if (!rep.converged && tail_count > 0) {
    const Vector avg = tail_sum / static_cast<double>(tail_count);
    const double avg_obj = objective(prob, avg);
    if (avg_obj < rep.objective) {
      rep.beta = avg;
      rep.objective = avg_obj;
    }
  }
  return rep;
}

}  // namespace detail

/// Full-batch ADMM. Non-convergence is not an error: the best iterate is
/// returned with converged = false.
inline SolveReport solve(const RigidProblem& prob, const SolverConfig& cfg = {}) {
  std::vector<Index> all(static_cast<std::size_t>(prob.n()));
  std::iota(all.begin(), all.end(), Index{0});
  Vector rhs(prob.dim());
  return detail::run_admm(
      prob, cfg,
      [&](int, const Vector& w) {
        rhs.setZero();
        accumulate_adjoint(prob, w, all, rhs);
        return Vector(prob.gram_factor().solve(rhs));
      },
      [](int) { return true; });
}

/// Mini-batch ADMM: the beta-update uses a seeded batch drawn without
/// replacement each iteration; z and u are updated for every sample, and
/// convergence on the full residuals is tested every `check_every` iterations.
inline SolveReport solve_minibatch(const RigidProblem& prob, const SolverConfig& cfg) {
  require(cfg.batch_size.has_value(), ErrorCode::InvalidArgument, "solve_minibatch needs batch_size");
  const Index n = prob.n();
  const Index bs = *cfg.batch_size;
  require(bs <= n, ErrorCode::InvalidArgument, "batch_size exceeds sample count");
  std::mt19937_64 rng(cfg.seed);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::vector<Index> batch(static_cast<std::size_t>(bs));
  Vector rhs(prob.dim());

  RigidProblem::Shared shared_view;  // gram_for only reads b and registry
  shared_view.b = prob.b();
  shared_view.registry = std::make_shared<const PatternRegistry>(prob.registry());

  auto draw = [&] {
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index j = 0; j < bs; ++j) {
      std::uniform_int_distribution<Index> pick(j, n - 1);
      std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    std::copy(perm.begin(), perm.begin() + bs, batch.begin());
    std::sort(batch.begin(), batch.end());
  };

  return detail::run_admm(
      prob, cfg,
      [&](int, const Vector& w) {
        draw();
        std::optional<Eigen::LLT<Matrix>> local;
        const Eigen::LLT<Matrix>* factor = &prob.gram_factor();
        if (bs < n) {
          local = detail::factor_gram(detail::gram_for(shared_view, batch));
          if (!local) {
            draw();
            local = detail::factor_gram(detail::gram_for(shared_view, batch));
          }
          require(local.has_value(), ErrorCode::RankDeficientGram, "mini-batch Gram is singular");
          factor = &*local;
        }
        rhs.setZero();
        accumulate_adjoint(prob, w, batch, rhs);
        return Vector(factor->solve(rhs));
      },
      [&](int k) { return k % cfg.check_every == 0; }, bs < n);
}

/// Dispatches on cfg.batch_size.
inline SolveReport solve_auto(const RigidProblem& prob, const SolverConfig& cfg) {
  if (cfg.batch_size && *cfg.batch_size < prob.n()) return solve_minibatch(prob, cfg);
  return solve(prob, cfg);
}

}  // namespace rigid
