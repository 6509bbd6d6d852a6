#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nbmf/errors.hpp"
#include "nbmf/matrix.hpp"
#include "nbmf/model.hpp"
#include "nbmf/random.hpp"

namespace nbmf {

/// Baseline NMF with multiplicative updates and unit column sums for W.
struct NmfConfig {
  std::size_t k = 60;
  double conv_tol = 1e-4;
  std::size_t max_outer_iters = 10000;
  /// Added to every (W H) entry used as a denominator.
  double epsilon_div = 1e-12;
  std::uint64_t seed = 0;
  bool record_timing = false;

  void validate() const {
    if (k == 0) throw ConfigError("k must be positive");
    if (!(conv_tol > 0.0)) throw ConfigError("conv_tol must be positive");
    if (!(epsilon_div > 0.0)) throw ConfigError("epsilon_div must be positive");
    if (max_outer_iters == 0) throw ConfigError("max_outer_iters must be positive");
  }
};

namespace detail {

inline void check_nmf_shapes(const Matrix& v, const Matrix& w, const Matrix& h) {
  if (v.rows() != w.rows() || w.cols() != h.rows() || v.cols() != h.cols()) {
    throw DimensionError("nmf: inconsistent shapes");
  }
}

/// V / (W H + eps), element-wise.
inline Matrix nmf_ratio(const Matrix& v, const Matrix& w, const Matrix& h, double eps) {
  Matrix ratio = matmul(w, h);
  auto rd = ratio.data();
  auto vd = v.data();
  for (std::size_t i = 0; i < rd.size(); ++i) rd[i] = vd[i] / (rd[i] + eps);
  return ratio;
}

}  // namespace detail

/// W_ij <- W_ij sum_r (V_ir / (WH)_ir) H_jr, then each column of W is scaled
/// to unit sum. A column that ends up all zero is refilled with uniform
/// noise in (0, 1e-6] before scaling.
inline Matrix nmf_update_w(const Matrix& v, const Matrix& w, const Matrix& h, const NmfConfig& cfg) {
  detail::check_nmf_shapes(v, w, h);
  const Matrix ratio = detail::nmf_ratio(v, w, h, cfg.epsilon_div);
  const Matrix gain = matmul_transposed(ratio, h);  // n x k
  Matrix out = w;
  auto od = out.data();
  auto gd = gain.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= gd[i];

  for (std::size_t j = 0; j < out.cols(); ++j) {
    double sum = 0.0;
    for (std::size_t r = 0; r < out.rows(); ++r) sum += out(r, j);
    if (!std::isfinite(sum)) throw NumericError("nmf_update_w: non-finite column sum");
    if (sum == 0.0) {
      Rng rng(derive_seed(cfg.seed, 0x5eed0000ULL + j));
      for (std::size_t r = 0; r < out.rows(); ++r) {
        out(r, j) = 1e-6 * (1.0 - uniform01(rng));
        sum += out(r, j);
      }
    }
    for (std::size_t r = 0; r < out.rows(); ++r) out(r, j) /= sum;
  }
  return out;
}

/// H_ij <- H_ij sum_r W_ri V_rj / (WH)_rj.
inline Matrix nmf_update_h(const Matrix& v, const Matrix& w, const Matrix& h, const NmfConfig& cfg) {
  detail::check_nmf_shapes(v, w, h);
  const Matrix ratio = detail::nmf_ratio(v, w, h, cfg.epsilon_div);
  const Matrix gain = matmul(w.transpose(), ratio);  // k x m
  Matrix out = h;
  auto od = out.data();
  auto gd = gain.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] *= gd[i];
  if (!out.all_finite()) throw NumericError("nmf_update_h: non-finite result");
  return out;
}

/// Generalized KL divergence D(V || R) = sum V log(V/R) - V + R, with
/// 0 log 0 = 0.
inline double generalized_kl(const Matrix& v, const Matrix& r) {
  if (!v.same_shape(r)) throw DimensionError("generalized_kl: shapes differ");
  double d = 0.0;
  auto vd = v.data();
  auto rd = r.data();
  for (std::size_t i = 0; i < vd.size(); ++i) {
    if (vd[i] > 0.0) d += vd[i] * std::log(vd[i] / rd[i]);
    d += rd[i] - vd[i];
  }
  return d;
}

inline FactorModel nmf_fit(const Matrix& v, const NmfConfig& cfg, std::vector<std::string> labels = {}) {
  cfg.validate();
  for (double x : v.data())
    if (!(x >= 0.0 && x <= 1.0)) throw DataError("data matrix values must lie in [0,1]");
  if (!labels.empty() && labels.size() != v.cols()) throw DimensionError("nmf_fit: label count mismatch");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed_ms = [&] {
    return cfg.record_timing ? std::chrono::duration<double, std::milli>(Clock::now() - start).count() : 0.0;
  };

  Rng rng(cfg.seed);
  Matrix w(v.rows(), cfg.k);
  for (double& x : w.data()) x = 1.0 - uniform01(rng);
  Matrix h(cfg.k, v.cols());
  for (double& x : h.data()) x = 1.0 - uniform01(rng);

  FactorModel model{Method::nmf, w, h};
  model.seed = cfg.seed;
  model.labels = std::move(labels);
  model.trace.push_back({0, mean_rmse(v, matmul(w, h)), elapsed_ms()});

  for (std::size_t iter = 1; iter <= cfg.max_outer_iters; ++iter) {
    Matrix w_next = nmf_update_w(v, w, h, cfg);
    h = nmf_update_h(v, w_next, h, cfg);
    const double moved = frobenius_distance(w_next, w);
    w = std::move(w_next);
    const double rmse = mean_rmse(v, matmul(w, h));
    if (!std::isfinite(rmse)) throw NumericError("nmf_fit: non-finite RMSE");
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
