#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nbmf/errors.hpp"
#include "nbmf/matrix.hpp"
#include "nbmf/model.hpp"
#include "nbmf/parallel.hpp"
#include "nbmf/qubo.hpp"
#include "nbmf/random.hpp"
#include "nbmf/solver.hpp"

namespace nbmf {

/// Nonnegative/binary factorization V ~= W H with W >= 0 and H in {0,1}.
struct NbmfConfig {
  std::size_t k = 60;
  /// Weight of the alpha * ||W||_F^2 penalty in the W-update.
  double alpha = 1e-6;
  /// Stop once ||W_new - W_old||_F falls below this.
  double conv_tol = 1e-4;
  std::size_t max_outer_iters = 500;
  std::size_t pgd_max_iters = 50;
  double pgd_step_shrink = 0.5;
  double pgd_armijo_sigma = 0.01;
  AnnealConfig anneal{};
  std::uint64_t seed = 0;
  double h_init_density = 0.5;
  /// Worker threads for the per-column H solves. Results do not depend on it.
  std::size_t threads = 1;
  /// Fill TracePoint::wall_ms; otherwise it stays 0 and traces are reproducible.
  bool record_timing = false;

  void validate() const {
    if (k == 0) throw ConfigError("k must be positive");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be a finite value >= 0");
    if (!(conv_tol > 0.0)) throw ConfigError("conv_tol must be positive");
    if (max_outer_iters == 0) throw ConfigError("max_outer_iters must be positive");
    if (pgd_max_iters == 0) throw ConfigError("pgd_max_iters must be positive");
    if (!(pgd_step_shrink > 0.0 && pgd_step_shrink < 1.0)) throw ConfigError("pgd_step_shrink must be in (0,1)");
    if (!(pgd_armijo_sigma > 0.0 && pgd_armijo_sigma < 1.0)) throw ConfigError("pgd_armijo_sigma must be in (0,1)");
    if (!(h_init_density > 0.0 && h_init_density < 1.0)) throw ConfigError("h_init_density must be in (0,1)");
    anneal.validate();
  }
};

namespace detail {

inline void require_unit_interval(const Matrix& v) {
  for (double x : v.data())
    if (!(x >= 0.0 && x <= 1.0)) throw DataError("data matrix values must lie in [0,1]");
}

inline double inner(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

/// Max absolute column sum; bounds the spectral norm of a symmetric matrix.
inline double one_norm(const Matrix& a) {
  double best = 0.0;
  for (std::size_t c = 0; c < a.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r) s += std::abs(a(r, c));
    best = std::max(best, s);
  }
  return best;
}

}  // namespace detail

/// F(X) = 1/2 ||V - X H||_F^2 + alpha ||X||_F^2.
inline double w_objective(const Matrix& v, const Matrix& x, const Matrix& h, double alpha) {
  return 0.5 * squared_frobenius_distance(v, matmul(x, h)) + alpha * squared_frobenius_norm(x);
}

/// dF/dX = (X H - V) H^T + 2 alpha X.
inline Matrix w_gradient(const Matrix& v, const Matrix& x, const Matrix& h, double alpha) {
  Matrix residual = matmul(x, h);
  auto rd = residual.data();
  auto vd = v.data();
  for (std::size_t i = 0; i < rd.size(); ++i) rd[i] -= vd[i];
  Matrix g = matmul_transposed(residual, h);
  auto gd = g.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += 2.0 * alpha * xd[i];
  return g;
}

inline constexpr double kResolvableDecrease = 1e-13;

/// Called with each accepted projected-gradient iterate.
using WStepObserver = std::function<void(const Matrix&)>;

/// Projected gradient descent on F(X) over X >= 0, starting from `w`, with an
/// Armijo line search on the exact quadratic decrease
///   F(X + D) - F(X) = <G, D> + 1/2 <D H H^T, D> + alpha ||D||^2.
/// The step carries over between iterations, growing while the sufficient
/// decrease condition keeps holding and shrinking otherwise.
inline Matrix update_w(const Matrix& v, const Matrix& w, const Matrix& h, const NbmfConfig& cfg,
                       const WStepObserver& observer = {}) {
  if (v.rows() != w.rows() || w.cols() != h.rows() || v.cols() != h.cols()) {
    throw DimensionError("update_w: inconsistent shapes");
  }
  if (!v.all_finite() || !w.all_finite() || !h.all_finite()) throw NumericError("update_w: non-finite input");
  const double alpha = cfg.alpha;
  const double sigma = cfg.pgd_armijo_sigma;
  const double shrink = cfg.pgd_step_shrink;

  const Matrix hht = matmul_transposed(h, h);  // k x k
  const Matrix vht = matmul_transposed(v, h);  // n x k
  auto gradient = [&](const Matrix& x) {
    Matrix g = matmul(x, hht);
    auto gd = g.data();
    auto xd = x.data();
    auto bd = vht.data();
    for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += 2.0 * alpha * xd[i] - bd[i];
    return g;
  };
  auto candidate = [](const Matrix& x, const Matrix& g, double step) {
    Matrix out = x;
    auto od = out.data();
    auto gd = g.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = std::max(0.0, od[i] - step * gd[i]);
    return out;
  };
  // Sufficient decrease: F(X+D) - F(X) <= sigma <G, D>.
  // `change` receives the exact objective change F(next) - F(x).
  double change = 0.0;
  auto sufficient = [&](const Matrix& x, const Matrix& g, const Matrix& next, bool& moved) {
    Matrix d = next;
    auto dd = d.data();
    auto xd = x.data();
    moved = false;
    for (std::size_t i = 0; i < dd.size(); ++i) {
      dd[i] -= xd[i];
      moved = moved || dd[i] != 0.0;
    }
    const double quad = 0.5 * detail::inner(matmul(d, hht), d) + alpha * squared_frobenius_norm(d);
    const double linear = detail::inner(g, d);
    change = linear + quad;
    return (1.0 - sigma) * linear + quad <= 0.0;
  };

  double lipschitz = detail::one_norm(hht) + 2.0 * alpha;
  double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
  double objective = w_objective(v, w, h, alpha);
  Matrix x = w;
  for (std::size_t iter = 0; iter < cfg.pgd_max_iters; ++iter) {
    const Matrix g = gradient(x);
    if (!g.all_finite()) throw NumericError("update_w: non-finite gradient");

    bool moved = false;
    Matrix next = candidate(x, g, step);
    if (sufficient(x, g, next, moved)) {
      // Grow while the condition holds and the iterate keeps changing.
      for (int grow = 0; grow < 20 && moved; ++grow) {
        const double bigger = step / shrink;
        Matrix trial = candidate(x, g, bigger);
        bool trial_moved = false;
        const double accepted_change = change;
        if (!sufficient(x, g, trial, trial_moved) || trial == next) {
          change = accepted_change;
          break;
        }
        step = bigger;
        next = std::move(trial);
        moved = trial_moved;
      }
    } else {
      bool found = false;
      for (int cut = 0; cut < 60 && !found; ++cut) {
        step *= shrink;
        next = candidate(x, g, step);
        found = sufficient(x, g, next, moved);
      }
      if (!found) break;
    }
    // Stop once the gain is below what the objective can resolve.
    if (!moved || -change <= kResolvableDecrease * objective) break;
    objective += change;
    x = std::move(next);
    if (observer) observer(x);
  }
  return x;
}

inline Matrix update_w(const Matrix& v, const Matrix& w, const BinaryMatrix& h, const NbmfConfig& cfg,
                       const WStepObserver& observer = {}) {
  return update_w(v, w, h.to_real(), cfg, observer);
}

namespace detail {

inline BinaryMatrix update_h_impl(const Matrix& v, const Matrix& w, const NbmfConfig& cfg,
                                  const BinaryMatrix* previous) {
  if (v.rows() != w.rows()) throw DimensionError("update_h: V and W row counts differ");
  if (previous && (previous->rows() != w.cols() || previous->cols() != v.cols())) {
    throw DimensionError("update_h: previous H has the wrong shape");
  }
  std::vector<BitVector> columns(v.cols());
  parallel_for(v.cols(), cfg.threads, [&](std::size_t l) {
    try {
      AnnealConfig column_cfg = cfg.anneal;
      column_cfg.seed = cfg.anneal.seed ^ static_cast<std::uint64_t>(l);
      const auto problem = build_from_column(w, v, l);
      std::optional<BitVector> warm;
      if (previous) warm = previous->column(l);
      SolveResult result = solve(problem, column_cfg, warm);
      // Keep the previous column unless the new one is at least as good.
      if (warm && evaluate(problem, *warm) < result.energy) {
        columns[l] = std::move(*warm);
      } else {
        columns[l] = std::move(result.q);
      }
    } catch (const std::exception& e) {
      throw SolverError("update_h: column " + std::to_string(l) + ": " + e.what());
    }
  });
  BinaryMatrix h(w.cols(), v.cols());
  for (std::size_t l = 0; l < columns.size(); ++l) h.set_column(l, columns[l]);
  return h;
}

}  // namespace detail

/// Column-wise binary least squares: column l of the result minimizes the
/// QUBO built from (W, V[:, l]). Column l is solved with anneal seed
/// `cfg.anneal.seed ^ l`, so the result is independent of cfg.threads.
inline BinaryMatrix update_h(const Matrix& v, const Matrix& w, const NbmfConfig& cfg) {
  return detail::update_h_impl(v, w, cfg, nullptr);
}

/// Warm-started variant: each solve starts from the previous column, and the
/// previous column is kept whenever the solver's answer has higher energy.
inline BinaryMatrix update_h(const Matrix& v, const Matrix& w, const NbmfConfig& cfg,
                             const BinaryMatrix& previous) {
  return detail::update_h_impl(v, w, cfg, &previous);
}

/// Alternates W- and H-updates from a random start until W moves by less than
/// cfg.conv_tol (Frobenius) or cfg.max_outer_iters is hit.
inline FactorModel nbmf_fit(const Matrix& v, const NbmfConfig& cfg, std::vector<std::string> labels = {}) {
  cfg.validate();
  detail::require_unit_interval(v);
  if (!labels.empty() && labels.size() != v.cols()) throw DimensionError("nbmf_fit: label count mismatch");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed_ms = [&] {
    return cfg.record_timing ? std::chrono::duration<double, std::milli>(Clock::now() - start).count() : 0.0;
  };

  Rng rng(cfg.seed);
  Matrix w(v.rows(), cfg.k);
  for (double& x : w.data()) x = uniform01(rng);
  BinaryMatrix h(cfg.k, v.cols());
  for (std::size_t r = 0; r < cfg.k; ++r)
    for (std::size_t c = 0; c < v.cols(); ++c) h.set(r, c, bernoulli(rng, cfg.h_init_density));

  FactorModel model{Method::nbmf, w, h};
  model.alpha = cfg.alpha;
  model.seed = cfg.seed;
  model.labels = std::move(labels);
  model.trace.push_back({0, mean_rmse(v, matmul(w, h)), elapsed_ms()});

  NbmfConfig step_cfg = cfg;
  for (std::size_t iter = 1; iter <= cfg.max_outer_iters; ++iter) {
    Matrix w_next = update_w(v, w, h, cfg);
    step_cfg.anneal.seed = cfg.anneal.seed ^ derive_seed(cfg.seed, iter);
    h = update_h(v, w_next, step_cfg, h);
    const double moved = frobenius_distance(w_next, w);
    w = std::move(w_next);
    const double rmse = mean_rmse(v, matmul(w, h));
    if (!std::isfinite(rmse)) throw NumericError("nbmf_fit: non-finite RMSE");
    model.trace.push_back({iter, rmse, elapsed_ms()});
    model.iterations = iter;
    if (moved < cfg.conv_tol) {
      model.converged = true;
      break;
    }
  }
  model.w = std::move(w);
  model.h = std::move(h);
  return model;
}

}  // namespace nbmf
