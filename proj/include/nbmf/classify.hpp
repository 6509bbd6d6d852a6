#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "nbmf/dataset_io.hpp"
#include "nbmf/errors.hpp"
#include "nbmf/matrix.hpp"
#include "nbmf/model.hpp"
#include "nbmf/parallel.hpp"
#include "nbmf/qubo.hpp"
#include "nbmf/solver.hpp"

namespace nbmf {

struct Neighbor {
  std::size_t column_index = 0;
  double distance = 0.0;
  std::string label;
};

struct Prediction {
  std::string label;
  /// Selected neighbors, nearest first.
  std::vector<Neighbor> neighbors;
};

inline double euclidean_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("euclidean_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// For binary vectors this is sqrt(Hamming distance).
inline double euclidean_distance(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y) {
  if (x.size() != y.size()) throw DimensionError("euclidean_distance: length mismatch");
  std::size_t differing = 0;
  for (std::size_t i = 0; i < x.size(); ++i) differing += x[i] != y[i];
  return std::sqrt(static_cast<double>(differing));
}

/// Binary code h minimizing ||v - W h||.
inline BitVector encode(const Matrix& w, std::span<const double> v, const AnnealConfig& anneal) {
  if (v.size() != w.rows()) throw DimensionError("encode: image length does not match W");
  for (double x : v)
    if (!(x >= 0.0 && x <= 1.0)) throw DataError("encode: image values must lie in [0,1]");
  return solve(build_from_column(w, v), anneal).q;
}

struct NmfEncodeConfig {
  std::size_t max_iters = 5000;
  double tol = 1e-9;
  double epsilon_div = 1e-12;
};

/// Real code for an NMF model: the H-column multiplicative update with W held
/// fixed, started from all ones and iterated until the code moves by less
/// than cfg.tol.
inline std::vector<double> encode_nmf(const Matrix& w, std::span<const double> v,
                                      const NmfEncodeConfig& cfg = {}) {
  if (v.size() != w.rows()) throw DimensionError("encode_nmf: image length does not match W");
  const std::size_t n = w.rows();
  const std::size_t k = w.cols();
  std::vector<double> h(k, 1.0), ratio(n), next(k);
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    for (std::size_t r = 0; r < n; ++r) {
      double recon = 0.0;
      for (std::size_t i = 0; i < k; ++i) recon += w(r, i) * h[i];
      ratio[r] = v[r] / (recon + cfg.epsilon_div);
    }
    double moved = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      double gain = 0.0;
      for (std::size_t r = 0; r < n; ++r) gain += w(r, i) * ratio[r];
      next[i] = h[i] * gain;
      moved += (next[i] - h[i]) * (next[i] - h[i]);
    }
    h.swap(next);
    if (std::sqrt(moved) < cfg.tol) break;
  }
  return h;
}

/// Majority vote over the `neighbors` smallest distances. Equal distances
/// rank by lower column index; a tied vote goes to the tied label whose
/// member is nearest.
inline Prediction knn_vote(std::span<const double> distances, std::span<const std::string> labels,
                           std::size_t neighbors = 3) {
  if (labels.size() != distances.size()) throw DimensionError("knn: label count mismatch");
  if (neighbors == 0) throw ConfigError("knn: neighbors must be positive");
  if (distances.size() < neighbors) {
    throw DataError("knn: " + std::to_string(distances.size()) + " training columns, need at least " +
                    std::to_string(neighbors));
  }
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(neighbors), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      return distances[a] < distances[b] || (distances[a] == distances[b] && a < b);
                    });
  Prediction out;
  for (std::size_t i = 0; i < neighbors; ++i) {
    out.neighbors.push_back({order[i], distances[order[i]], labels[order[i]]});
  }
  std::size_t best_votes = 0;
  for (const auto& candidate : out.neighbors) {
    const auto votes = static_cast<std::size_t>(
        std::count_if(out.neighbors.begin(), out.neighbors.end(),
                      [&](const Neighbor& nb) { return nb.label == candidate.label; }));
    // Neighbors are visited nearest first, so strict '>' keeps the nearest on ties.
    if (votes > best_votes) {
      best_votes = votes;
      out.label = candidate.label;
    }
  }
  return out;
}

inline Prediction knn_predict(std::span<const std::uint8_t> h, const BinaryMatrix& codes,
                              std::span<const std::string> labels, std::size_t neighbors = 3) {
  if (h.size() != codes.rows()) throw DimensionError("knn_predict: code length mismatch");
  std::vector<double> distances(codes.cols());
  for (std::size_t c = 0; c < codes.cols(); ++c) distances[c] = euclidean_distance(h, codes.column(c));
  return knn_vote(distances, labels, neighbors);
}

inline Prediction knn_predict(std::span<const double> h, const Matrix& codes, std::span<const std::string> labels,
                              std::size_t neighbors = 3) {
  if (h.size() != codes.rows()) throw DimensionError("knn_predict: code length mismatch");
  std::vector<double> distances(codes.cols());
  for (std::size_t c = 0; c < codes.cols(); ++c) distances[c] = euclidean_distance(h, codes.column(c));
  return knn_vote(distances, labels, neighbors);
}

struct ClassifyConfig {
  AnnealConfig anneal{};
  std::size_t neighbors = 3;
  std::size_t threads = 1;
  NmfEncodeConfig nmf_encode{};
};

struct PredictionRecord {
  std::size_t test_index = 0;
  std::string true_label;
  Prediction prediction;
};

struct AccuracyReport {
  std::vector<PredictionRecord> records;
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const noexcept {
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  }
};

/// Encodes every test image with the model's basis and predicts its label by
/// nearest neighbors among the training codes. Test image i is encoded with
/// anneal seed `cfg.anneal.seed ^ i`.
inline AccuracyReport evaluate_accuracy(const FactorModel& model, const LabeledDataset& test,
                                        const ClassifyConfig& cfg = {}) {
  if (test.images() == 0 || test.labels.empty()) throw DataError("evaluate_accuracy: empty test set");
  if (model.labels.size() != model.m()) throw DataError("evaluate_accuracy: model carries no training labels");
  if (test.pixels() != model.n()) {
    throw DimensionError("evaluate_accuracy: test images have " + std::to_string(test.pixels()) +
                         " pixels, model expects " + std::to_string(model.n()));
  }
  const std::set<std::string> known(model.labels.begin(), model.labels.end());
  for (const auto& label : test.labels) {
    if (!known.contains(label)) throw DataError("test label '" + label + "' does not occur in the training set");
  }
  cfg.anneal.validate();

  AccuracyReport report;
  report.records.resize(test.images());
  const std::span<const std::string> train_labels(model.labels);
  parallel_for(test.images(), cfg.threads, [&](std::size_t i) {
    const auto image = test.matrix.column(i);
    Prediction prediction;
    if (model.has_binary_h()) {
      AnnealConfig image_cfg = cfg.anneal;
      image_cfg.seed = cfg.anneal.seed ^ static_cast<std::uint64_t>(i);
      const BitVector code = encode(model.w, image, image_cfg);
      prediction = knn_predict(code, model.binary_h(), train_labels, cfg.neighbors);
    } else {
      const auto code = encode_nmf(model.w, image, cfg.nmf_encode);
      prediction = knn_predict(code, std::get<Matrix>(model.h), train_labels, cfg.neighbors);
    }
    report.records[i] = {i, test.labels[i], std::move(prediction)};
  });
  report.total = report.records.size();
  for (const auto& r : report.records) report.correct += r.prediction.label == r.true_label;
  return report;
}

/// Header: test_index,true_label,predicted_label, then neighborJ_index and
/// neighborJ_distance for each selected neighbor.
inline std::string report_to_csv(const AccuracyReport& report) {
  const std::size_t neighbors = report.records.empty() ? 0 : report.records.front().prediction.neighbors.size();
  std::string out = "test_index,true_label,predicted_label";
  for (std::size_t j = 1; j <= neighbors; ++j) {
    out += ",neighbor" + std::to_string(j) + "_index,neighbor" + std::to_string(j) + "_distance";
  }
  out += '\n';
  for (const auto& r : report.records) {
    out += std::to_string(r.test_index) + "," + r.true_label + "," + r.prediction.label;
    for (const auto& nb : r.prediction.neighbors) {
      out += "," + std::to_string(nb.column_index) + "," + io::format_double(nb.distance);
    }
    out += '\n';
  }
  return out;
}

}  // namespace nbmf
