#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nbmf/errors.hpp"
#include "nbmf/matrix.hpp"

namespace nbmf {

/// f(q) = sum_i a_i q_i + sum_{i<j} b_ij q_i q_j over binary q.
///
/// Pairwise coefficients are stored strictly upper-triangular, packed row by
/// row: (0,1), (0,2), ..., (0,k-1), (1,2), ...
class QuboProblem {
 public:
  explicit QuboProblem(std::size_t k)
      : k_(k), linear_(k, 0.0), quadratic_(k * (k - 1) / 2, 0.0) {
    if (k == 0) throw DimensionError("QUBO must have at least one variable");
  }

  QuboProblem(std::vector<double> linear, std::vector<double> quadratic)
      : k_(linear.size()), linear_(std::move(linear)), quadratic_(std::move(quadratic)) {
    if (k_ == 0) throw DimensionError("QUBO must have at least one variable");
    if (quadratic_.size() != k_ * (k_ - 1) / 2) {
      throw DimensionError("QUBO with " + std::to_string(k_) + " variables needs " +
                           std::to_string(k_ * (k_ - 1) / 2) +
                           " pairwise coefficients, got " +
                           std::to_string(quadratic_.size()));
    }
  }

  std::size_t size() const noexcept { return k_; }

  std::span<const double> linear() const noexcept { return linear_; }
  std::span<const double> quadratic() const noexcept { return quadratic_; }

  double& linear(std::size_t i) { return linear_.at(i); }
  double linear(std::size_t i) const { return linear_.at(i); }

  /// b_ij for i != j (symmetric view of the upper triangle).
  double pair(std::size_t i, std::size_t j) const {
    return quadratic_[pair_index(i, j)];
  }
  double& pair(std::size_t i, std::size_t j) { return quadratic_[pair_index(i, j)]; }

  std::size_t pair_index(std::size_t i, std::size_t j) const {
    if (i == j || i >= k_ || j >= k_) {
      throw IndexError("invalid QUBO pair (" + std::to_string(i) + "," +
                       std::to_string(j) + ") for k=" + std::to_string(k_));
    }
    if (i > j) std::swap(i, j);
    return i * k_ - i * (i + 1) / 2 + (j - i - 1);
  }

  /// Dense symmetric k x k coupling matrix with zero diagonal.
  std::vector<double> dense_couplings() const {
    std::vector<double> dense(k_ * k_, 0.0);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < k_; ++i) {
      for (std::size_t j = i + 1; j < k_; ++j, ++idx) {
        dense[i * k_ + j] = quadratic_[idx];
        dense[j * k_ + i] = quadratic_[idx];
      }
    }
    return dense;
  }

  friend bool operator==(const QuboProblem&, const QuboProblem&) = default;

 private:
  std::size_t k_;
  std::vector<double> linear_;
  std::vector<double> quadratic_;
};

namespace detail {

inline void check_binary(std::span<const std::uint8_t> q, std::size_t k) {
  if (q.size() != k) {
    throw DimensionError("binary vector length " + std::to_string(q.size()) +
                         " does not match QUBO size " + std::to_string(k));
  }
  for (auto b : q)
    if (b > 1) throw DataError("binary vector entry outside {0,1}");
}

}  // namespace detail

/// QUBO whose minimizer is argmin_q ||v - W q||^2 for the column v.
///
///   a_i  = sum_r W_ri (W_ri - 2 v_r)
///   b_ij = 2 sum_r W_ri W_rj
inline QuboProblem build_from_column(const Matrix& w, std::span<const double> v) {
  if (w.rows() != v.size()) {
    throw DimensionError("build_from_column: W has " + std::to_string(w.rows()) +
                         " rows but column has length " + std::to_string(v.size()));
  }
  const std::size_t n = w.rows();
  const std::size_t k = w.cols();
  std::vector<double> linear(k, 0.0);
  std::vector<double> quadratic(k * (k - 1) / 2, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto wr = w.row(r);
    const double vr = v[r];
    std::size_t idx = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double wri = wr[i];
      linear[i] += wri * (wri - 2.0 * vr);
      if (wri == 0.0) {
        idx += k - i - 1;
        continue;
      }
      for (std::size_t j = i + 1; j < k; ++j, ++idx) quadratic[idx] += 2.0 * wri * wr[j];
    }
  }
  return {std::move(linear), std::move(quadratic)};
}

inline QuboProblem build_from_column(const Matrix& w, const Matrix& v, std::size_t l) {
  const auto column = v.column(l);
  return build_from_column(w, column);
}

inline double evaluate(const QuboProblem& p, std::span<const std::uint8_t> q) {
  detail::check_binary(q, p.size());
  const std::size_t k = p.size();
  auto lin = p.linear();
  auto quad = p.quadratic();
  double value = 0.0;
  std::size_t idx = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!q[i]) {
      idx += k - i - 1;
      continue;
    }
    value += lin[i];
    for (std::size_t j = i + 1; j < k; ++j, ++idx)
      if (q[j]) value += quad[idx];
  }
  return value;
}

/// ||v||^2: the constant dropped from the QUBO, so that
/// evaluate(build_from_column(W, v), q) + energy_offset(W, v) == ||v - W q||^2.
inline double energy_offset(const Matrix& w, std::span<const double> v) {
  if (w.rows() != v.size()) throw DimensionError("energy_offset: length mismatch");
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

/// Debug dump: header "i,j,coefficient", one row per linear term (j == i)
/// followed by one row per pair i < j.
inline std::string qubo_to_csv(const QuboProblem& p) {
  std::string out = "i,j,coefficient\n";
  char buf[64];
  auto emit = [&](std::size_t i, std::size_t j, double c) {
    auto res = std::to_chars(buf, buf + sizeof buf, c);
    out += std::to_string(i) + "," + std::to_string(j) + ",";
    out.append(buf, res.ptr);
    out += "\n";
  };
  for (std::size_t i = 0; i < p.size(); ++i) emit(i, i, p.linear(i));
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) emit(i, j, p.pair(i, j));
  return out;
}

/// Parses the debug dump format. The variable count is one past the largest
/// index seen; absent entries are zero. Rows with i > j are read as (j, i).
inline QuboProblem qubo_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::map<std::pair<std::size_t, std::size_t>, double> entries;
  std::size_t max_index = 0;
  bool any = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line_no == 1 && line.rfind("i,", 0) == 0) continue;  // header
    std::size_t fields[2];
    double coefficient = 0.0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (auto& f : fields) {
      auto res = std::from_chars(p, end, f);
      if (res.ec != std::errc{} || res.ptr == end || *res.ptr != ',') {
        throw DataError("qubo csv line " + std::to_string(line_no) + ": malformed index");
      }
      p = res.ptr + 1;
    }
    auto res = std::from_chars(p, end, coefficient);
    if (res.ec != std::errc{} || res.ptr != end || !std::isfinite(coefficient)) {
      throw DataError("qubo csv line " + std::to_string(line_no) + ": malformed coefficient");
    }
    auto key = std::minmax(fields[0], fields[1]);
    if (!entries.emplace(std::pair{key.first, key.second}, coefficient).second) {
      throw DataError("qubo csv line " + std::to_string(line_no) + ": duplicate entry");
    }
    max_index = std::max(max_index, key.second);
    any = true;
  }
  if (!any) throw DataError("qubo csv contains no coefficients");
  QuboProblem problem(max_index + 1);
  for (const auto& [key, c] : entries) {
    if (key.first == key.second) {
      problem.linear(key.first) = c;
    } else {
      problem.pair(key.first, key.second) = c;
    }
  }
  return problem;
}

}  // namespace nbmf
