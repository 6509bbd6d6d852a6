#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "nbmf/errors.hpp"
#include "nbmf/matrix.hpp"
#include "nbmf/qubo.hpp"
#include "nbmf/random.hpp"

namespace nbmf {

enum class Backend { exhaustive, simulated_annealing, parallel_tempering };

inline constexpr std::size_t kMaxExhaustiveVariables = 25;

inline std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::exhaustive: return "exhaustive";
    case Backend::simulated_annealing: return "sa";
    case Backend::parallel_tempering: return "pt";
  }
  return "unknown";
}

inline Backend parse_backend(std::string_view name) {
  if (name == "exhaustive") return Backend::exhaustive;
  if (name == "sa" || name == "simulated_annealing") return Backend::simulated_annealing;
  if (name == "pt" || name == "parallel_tempering") return Backend::parallel_tempering;
  throw ConfigError("unknown solver backend '" + std::string(name) + "'");
}

struct AnnealConfig {
  Backend backend = Backend::simulated_annealing;
  std::size_t sweeps = 1000;
  std::size_t restarts = 4;
  double beta_initial = 0.1;
  double beta_final = 50.0;
  std::size_t replicas = 8;
  std::uint64_t seed = 0;
  /// Record the best energy after every sweep in SolveResult::best_trace.
  bool record_trace = false;

  void validate() const {
    if (backend == Backend::exhaustive) return;
    if (sweeps == 0) throw ConfigError("sweeps must be positive");
    if (restarts == 0) throw ConfigError("restarts must be positive");
    if (!(beta_initial > 0.0) || !std::isfinite(beta_final) || !(beta_initial < beta_final)) {
      throw ConfigError("require 0 < beta_initial < beta_final");
    }
    if (backend == Backend::parallel_tempering && replicas < 2) {
      throw ConfigError("parallel tempering needs at least 2 replicas");
    }
  }
};

struct SolveResult {
  BitVector q;
  double energy = 0.0;
  std::uint64_t evaluations = 0;
  /// Best energy seen so far after each sweep (only with record_trace).
  std::vector<double> best_trace;
};

/// f(q with bit i flipped) - f(q), in O(k).
inline double delta_energy(const QuboProblem& p, std::span<const std::uint8_t> q,
                           std::size_t i) {
  detail::check_binary(q, p.size());
  if (i >= p.size()) throw IndexError("delta_energy: index " + std::to_string(i) + " out of range");
  double field = p.linear(i);
  for (std::size_t j = 0; j < p.size(); ++j)
    if (j != i && q[j]) field += p.pair(i, j);
  return q[i] ? -field : field;
}

namespace detail {

/// Binary state with cached local fields h_i = a_i + sum_j b_ij q_j, so a
/// single-bit delta is O(1) and a flip is O(k).
class FlipState {
 public:
  FlipState(const QuboProblem& p, std::span<const double> couplings, BitVector q)
      : k_(p.size()), linear_(p.linear()), couplings_(couplings), q_(std::move(q)) {
    field_.assign(linear_.begin(), linear_.end());
    for (std::size_t j = 0; j < k_; ++j) {
      if (!q_[j]) continue;
      for (std::size_t i = 0; i < k_; ++i) field_[i] += couplings_[j * k_ + i];
    }
    energy_ = evaluate(p, q_);
  }

  double delta(std::size_t i) const noexcept { return q_[i] ? -field_[i] : field_[i]; }

  void flip(std::size_t i, double delta) noexcept {
    const double sign = q_[i] ? -1.0 : 1.0;
    q_[i] ^= 1;
    const double* row = couplings_.data() + i * k_;
    for (std::size_t j = 0; j < k_; ++j) field_[j] += sign * row[j];
    energy_ += delta;
  }

  /// One Metropolis pass in fixed index order. Returns the number of deltas
  /// evaluated; `on_improve` is called whenever the running energy drops
  /// below `best`.
  template <class OnImprove>
  std::size_t metropolis_sweep(double beta, Rng& rng, double& best, OnImprove&& on_improve) {
    for (std::size_t i = 0; i < k_; ++i) {
      const double d = delta(i);
      if (d <= 0.0 || uniform01(rng) < std::exp(-beta * d)) {
        flip(i, d);
        if (energy_ < best) {
          best = energy_;
          on_improve(*this);
        }
      }
    }
    return k_;
  }

  double energy() const noexcept { return energy_; }
  const BitVector& bits() const noexcept { return q_; }

 private:
  std::size_t k_;
  std::span<const double> linear_;
  std::span<const double> couplings_;
  BitVector q_;
  std::vector<double> field_;
  double energy_ = 0.0;
};

inline BitVector random_bits(std::size_t k, Rng& rng) {
  BitVector q(k);
  for (auto& b : q) b = static_cast<std::uint8_t>(rng() >> 63);
  return q;
}

/// Geometric interpolation between two inverse temperatures, t in [0, 1].
inline double geometric_beta(double from, double to, double t) {
  return from * std::pow(to / from, t);
}

inline void check_initial(const QuboProblem& p, const std::optional<BitVector>& initial) {
  if (initial) check_binary(*initial, p.size());
}

/// Picks the better of two exactly evaluated candidates; ties keep `current`.
inline void keep_better(SolveResult& current, bool& have, BitVector q, double energy) {
  if (!have || energy < current.energy) {
    current.q = std::move(q);
    current.energy = energy;
    have = true;
  }
}

}  // namespace detail

/// Global minimizer by Gray-code enumeration of all 2^k states. Ties resolve
/// to the lexicographically smallest bit vector (q_0 most significant).
inline SolveResult solve_exhaustive(const QuboProblem& p) {
  const std::size_t k = p.size();
  if (k > kMaxExhaustiveVariables) {
    throw SolverError("exhaustive solve needs k <= " + std::to_string(kMaxExhaustiveVariables) +
                      ", got k=" + std::to_string(k));
  }
  const auto couplings = p.dense_couplings();
  // Energies are accumulated incrementally, so equal-energy states can differ
  // by rounding; treat values within this band as ties.
  double scale = 0.0;
  for (double a : p.linear()) scale += std::abs(a);
  for (double b : p.quadratic()) scale += std::abs(b);
  const double tie_band = 1e-12 * (1.0 + scale);

  // Integer code: bit (k-1-i) holds q_i, so integer order is lexicographic order.
  detail::FlipState state(p, couplings, BitVector(k, 0));
  std::uint64_t code = 0;
  std::uint64_t best_code = 0;
  double best = 0.0;
  std::uint64_t evaluations = 1;
  const std::uint64_t total = std::uint64_t{1} << k;
  for (std::uint64_t x = 1; x < total; ++x) {
    const auto position = static_cast<std::size_t>(std::countr_zero(x));
    const std::size_t i = k - 1 - position;
    state.flip(i, state.delta(i));
    code ^= std::uint64_t{1} << position;
    ++evaluations;
    const double e = state.energy();
    if (e < best - tie_band) {
      best = e;
      best_code = code;
    } else if (e <= best + tie_band && code < best_code) {
      best = std::min(best, e);
      best_code = code;
    }
  }
  SolveResult result;
  result.q.resize(k);
  for (std::size_t i = 0; i < k; ++i) result.q[i] = (best_code >> (k - 1 - i)) & 1U;
  result.energy = evaluate(p, result.q);
  result.evaluations = evaluations;
  return result;
}

/// Single-bit-flip Metropolis annealing with a geometric beta schedule from
/// beta_initial to beta_final over cfg.sweeps sweeps, repeated cfg.restarts
/// times. When `initial` is given, the first restart starts from it and it
/// counts as a candidate, so the result is never worse than `initial`.
inline SolveResult solve_sa(const QuboProblem& p, const AnnealConfig& cfg,
                            const std::optional<BitVector>& initial = std::nullopt) {
  cfg.validate();
  detail::check_initial(p, initial);
  const std::size_t k = p.size();
  const auto couplings = p.dense_couplings();

  SolveResult result;
  bool have = false;
  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    Rng rng(derive_seed(cfg.seed, restart));
    BitVector start = (restart == 0 && initial) ? *initial : detail::random_bits(k, rng);
    detail::FlipState state(p, couplings, std::move(start));
    BitVector run_best = state.bits();
    double run_best_energy = state.energy();
    auto on_improve = [&](const detail::FlipState& s) { run_best = s.bits(); };

    for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
      const double t = cfg.sweeps > 1 ? static_cast<double>(sweep) / static_cast<double>(cfg.sweeps - 1) : 1.0;
      const double beta = detail::geometric_beta(cfg.beta_initial, cfg.beta_final, t);
      result.evaluations += state.metropolis_sweep(beta, rng, run_best_energy, on_improve);
      if (cfg.record_trace) {
        result.best_trace.push_back(result.best_trace.empty()
                                        ? run_best_energy
                                        : std::min(result.best_trace.back(), run_best_energy));
      }
    }
    const double exact = evaluate(p, run_best);
    detail::keep_better(result, have, std::move(run_best), exact);
  }
  return result;
}

/// Replica-exchange Monte Carlo: cfg.replicas chains at geometrically spaced
/// betas in [beta_initial, beta_final]. Each sweep runs one Metropolis pass
/// per replica, then attempts adjacent exchanges (0,1), (1,2), ... with
/// acceptance min(1, exp((beta_r - beta_{r+1}) (E_r - E_{r+1}))).
inline SolveResult solve_pt(const QuboProblem& p, const AnnealConfig& cfg,
                            const std::optional<BitVector>& initial = std::nullopt) {
  cfg.validate();
  if (cfg.replicas < 2) {
    throw ConfigError("parallel tempering needs at least 2 replicas");
  }
  detail::check_initial(p, initial);
  const std::size_t k = p.size();
  const std::size_t replicas = cfg.replicas;
  const auto couplings = p.dense_couplings();

  std::vector<double> betas(replicas);
  for (std::size_t r = 0; r < replicas; ++r) {
    betas[r] = detail::geometric_beta(cfg.beta_initial, cfg.beta_final,
                                      static_cast<double>(r) / static_cast<double>(replicas - 1));
  }

  SolveResult result;
  bool have = false;
  for (std::size_t restart = 0; restart < cfg.restarts; ++restart) {
    Rng rng(derive_seed(cfg.seed, restart));
    std::vector<detail::FlipState> chains;
    chains.reserve(replicas);
    for (std::size_t r = 0; r < replicas; ++r) {
      // The warm start goes to the coldest chain.
      const bool warm = restart == 0 && initial && r + 1 == replicas;
      chains.emplace_back(p, couplings, warm ? *initial : detail::random_bits(k, rng));
    }
    // slot[r] = index of the chain currently at temperature r.
    std::vector<std::size_t> slot(replicas);
    std::iota(slot.begin(), slot.end(), std::size_t{0});

    BitVector run_best = chains[0].bits();
    double run_best_energy = chains[0].energy();
    for (const auto& c : chains) {
      if (c.energy() < run_best_energy) {
        run_best_energy = c.energy();
        run_best = c.bits();
      }
    }
    auto on_improve = [&](const detail::FlipState& s) { run_best = s.bits(); };

    for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
      for (std::size_t r = 0; r < replicas; ++r) {
        result.evaluations += chains[slot[r]].metropolis_sweep(betas[r], rng, run_best_energy, on_improve);
      }
      for (std::size_t r = 0; r + 1 < replicas; ++r) {
        const double log_accept = (betas[r] - betas[r + 1]) *
                                  (chains[slot[r]].energy() - chains[slot[r + 1]].energy());
        if (log_accept >= 0.0 || uniform01(rng) < std::exp(log_accept)) {
          std::swap(slot[r], slot[r + 1]);
        }
      }
      if (cfg.record_trace) {
        result.best_trace.push_back(result.best_trace.empty()
                                        ? run_best_energy
                                        : std::min(result.best_trace.back(), run_best_energy));
      }
    }
    const double exact = evaluate(p, run_best);
    detail::keep_better(result, have, std::move(run_best), exact);
  }
  return result;
}

/// Dispatches on cfg.backend. The warm start is ignored by the exhaustive
/// backend, which is exact.
inline SolveResult solve(const QuboProblem& p, const AnnealConfig& cfg,
                         const std::optional<BitVector>& initial = std::nullopt) {
  switch (cfg.backend) {
    case Backend::exhaustive: return solve_exhaustive(p);
    case Backend::simulated_annealing: return solve_sa(p, cfg, initial);
    case Backend::parallel_tempering: return solve_pt(p, cfg, initial);
  }
  throw ConfigError("unknown backend");
}

}  // namespace nbmf
