#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nbmf/errors.hpp"
#include "nbmf/matrix.hpp"

namespace nbmf {

enum class Method { nbmf, nmf };

inline std::string_view method_name(Method m) { return m == Method::nbmf ? "nbmf" : "nmf"; }

inline Method parse_method(std::string_view s) {
  if (s == "nbmf" || s == "NBMF") return Method::nbmf;
  if (s == "nmf" || s == "NMF") return Method::nmf;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

/// Mean RMSE after one (W, H) update pair. Iteration 0 is the initial guess.
struct TracePoint {
  std::size_t iteration = 0;
  double mean_rmse = 0.0;
  double wall_ms = 0.0;

  friend bool operator==(const TracePoint&, const TracePoint&) = default;
};

/// Trained factorization V ~= W H. NBMF models carry a binary H, NMF models
/// a nonnegative real H.
struct FactorModel {
  Method method = Method::nbmf;
  Matrix w;
  std::variant<BinaryMatrix, Matrix> h;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<TracePoint> trace;
  /// Training label of every column of H; used by nearest-neighbor lookup.
  std::vector<std::string> labels;

  std::size_t k() const noexcept { return w.cols(); }
  std::size_t n() const noexcept { return w.rows(); }
  std::size_t m() const noexcept {
    return std::visit([](const auto& x) { return x.cols(); }, h);
  }

  bool has_binary_h() const noexcept { return std::holds_alternative<BinaryMatrix>(h); }

  const BinaryMatrix& binary_h() const {
    if (const auto* b = std::get_if<BinaryMatrix>(&h)) return *b;
    throw DataError("model H is not binary");
  }

  /// H as reals (binary H promoted to {0.0, 1.0}).
  Matrix real_h() const {
    if (const auto* b = std::get_if<BinaryMatrix>(&h)) return b->to_real();
    return std::get<Matrix>(h);
  }

  /// Throws DataError when shapes, method tag, labels or trace disagree.
  void validate() const {
    const std::size_t h_rows = std::visit([](const auto& x) { return x.rows(); }, h);
    if (h_rows != k()) {
      throw DataError("model inconsistent: W has " + std::to_string(k()) +
                      " columns but H has " + std::to_string(h_rows) + " rows");
    }
    if (method == Method::nbmf && !has_binary_h()) throw DataError("NBMF model requires binary H");
    if (method == Method::nmf) {
      const auto* real = std::get_if<Matrix>(&h);
      if (!real) throw DataError("NMF model requires real H");
      if (!real->all_nonnegative()) throw DataError("NMF model H has negative entries");
    }
    if (!w.all_nonnegative()) throw DataError("model W has negative or non-finite entries");
    if (!labels.empty() && labels.size() != m()) {
      throw DataError("model has " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(m()) + " columns");
    }
    if (!trace.empty() && trace.size() != iterations + 1) {
      throw DataError("model trace has " + std::to_string(trace.size()) +
                      " entries, expected iterations+1 = " + std::to_string(iterations + 1));
    }
  }
};

/// W x H with binary H promoted to reals; never negative for W >= 0.
inline Matrix reconstruct(const FactorModel& model) {
  Matrix out = std::visit([&](const auto& h) { return matmul(model.w, h); }, model.h);
  for (double& x : out.data())
    if (x < 0.0) x = 0.0;
  return out;
}

}  // namespace nbmf
