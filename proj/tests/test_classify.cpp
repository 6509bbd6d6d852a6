#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "nbmf/classify.hpp"
#include "nbmf/nbmf.hpp"
#include "nbmf/nmf.hpp"
#include "oracles.hpp"

using nbmf::AnnealConfig;
using nbmf::Backend;
using nbmf::BinaryMatrix;
using nbmf::BitVector;
using nbmf::Matrix;

namespace {

AnnealConfig exhaustive() {
  AnnealConfig cfg;
  cfg.backend = Backend::exhaustive;
  return cfg;
}

}  // namespace

TEST(EuclideanDistance, Examples) {
  const std::vector<double> x{0.5, 0.25, 1.0};
  EXPECT_EQ(nbmf::euclidean_distance(x, x), 0.0);
  const BitVector a{1, 0, 1, 1, 0, 0}, b{0, 0, 0, 0, 1, 0};
  EXPECT_EQ(nbmf::euclidean_distance(a, b), 2.0);
  EXPECT_THROW(nbmf::euclidean_distance(a, BitVector{1}), nbmf::DimensionError);
}

TEST(EuclideanDistance, RealVectorsMatchLoop) {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> dist(-2, 2);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> x(9), y(9);
    for (auto& e : x) e = dist(rng);
    for (auto& e : y) e = dist(rng);
    double s = 0.0;
    for (std::size_t i = 0; i < 9; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    EXPECT_NEAR(nbmf::euclidean_distance(x, y), std::sqrt(s), 1e-12);
  }
}

TEST(EuclideanDistance, SquaredEqualsHammingOnBinary) {
  std::mt19937_64 rng(82);
  for (int t = 0; t < 100; ++t) {
    const auto a = oracle::random_bits(rng, 30), b = oracle::random_bits(rng, 30);
    std::size_t hamming = 0;
    for (std::size_t i = 0; i < 30; ++i) hamming += a[i] != b[i];
    const double d = nbmf::euclidean_distance(a, b);
    EXPECT_EQ(static_cast<std::size_t>(std::llround(d * d)), hamming);
  }
}

TEST(KnnPredict, MajorityVote) {
  // Columns: 0 and 1 near (label A), 2 near (label B), 3 far (label B).
  const BinaryMatrix codes(3, 4, {0, 0, 1, 1,  //
                                  0, 0, 0, 1,  //
                                  0, 1, 0, 1});
  const std::vector<std::string> labels{"A", "A", "B", "B"};
  const auto p = nbmf::knn_predict(BitVector{0, 0, 0}, codes, labels);
  EXPECT_EQ(p.label, "A");
  ASSERT_EQ(p.neighbors.size(), 3u);
  EXPECT_EQ(p.neighbors[0].column_index, 0u);
  // Columns 1 and 2 both sit at distance 1; the lower index ranks first.
  EXPECT_EQ(p.neighbors[1].column_index, 1u);
  EXPECT_EQ(p.neighbors[2].column_index, 2u);
}

TEST(KnnPredict, ExactMatchWins) {
  const BinaryMatrix codes(4, 4, {1, 0, 0, 0,  //
                                  1, 0, 0, 0,  //
                                  1, 0, 0, 1,  //
                                  1, 0, 1, 0});
  const std::vector<std::string> labels{"X", "Y", "Z", "Z"};
  EXPECT_EQ(nbmf::knn_predict(BitVector{1, 1, 1, 1}, codes, labels, 1).label, "X");
}

TEST(KnnPredict, VoteTieGoesToNearest) {
  const Matrix codes(1, 3, {0.3, 0.1, 0.2});
  const std::vector<std::string> labels{"A", "B", "C"};
  EXPECT_EQ(nbmf::knn_predict(std::vector<double>{0.0}, codes, labels).label, "B");
}

TEST(KnnPredict, Errors) {
  const BinaryMatrix codes(2, 2, {0, 1, 1, 0});
  const std::vector<std::string> labels{"A", "B"};
  EXPECT_THROW(nbmf::knn_predict(BitVector{0, 0}, codes, labels, 3), nbmf::DataError);
  EXPECT_THROW(nbmf::knn_predict(BitVector{0}, codes, labels, 1), nbmf::DimensionError);
}

TEST(KnnPredict, PermutationInvariantWithDistinctDistances) {
  std::mt19937_64 rng(83);
  for (int t = 0; t < 30; ++t) {
    const std::size_t m = 12;
    const auto codes = oracle::random_matrix(rng, 4, m);
    std::vector<std::string> labels;
    for (std::size_t c = 0; c < m; ++c) labels.push_back("L" + std::to_string(rng() % 4));
    const std::vector<double> h{0.5, 0.5, 0.5, 0.5};
    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(4, m);
    std::vector<std::string> shuffled_labels(m);
    for (std::size_t c = 0; c < m; ++c) {
      shuffled.set_column(c, codes.column(perm[c]));
      shuffled_labels[c] = labels[perm[c]];
    }
    EXPECT_EQ(nbmf::knn_predict(h, codes, labels).label, nbmf::knn_predict(h, shuffled, shuffled_labels).label);
  }
}

TEST(Encode, SelectsPlantedFeature) {
  // Columns of W with disjoint supports, so each feature is independent.
  Matrix w(16, 8);
  for (std::size_t i = 0; i < 8; ++i) {
    w(2 * i, i) = 0.6;
    w(2 * i + 1, i) = 0.4;
  }
  const auto v = w.column(3);
  const auto h = nbmf::encode(w, v, exhaustive());
  BitVector expected(8, 0);
  expected[3] = 1;
  EXPECT_EQ(h, expected);
  EXPECT_NEAR(oracle::residual_sq(w, v, h), oracle::brute_force_residual(w, v), 1e-15);
}

TEST(Encode, ZeroImageGivesZeroCode) {
  std::mt19937_64 rng(84);
  const auto w = oracle::random_matrix(rng, 10, 6, 0.05, 1.0);
  EXPECT_EQ(nbmf::encode(w, std::vector<double>(10, 0.0), exhaustive()), BitVector(6, 0));
}

TEST(Encode, DeterministicAndGloballyOptimal) {
  std::mt19937_64 rng(85);
  for (int t = 0; t < 10; ++t) {
    const std::size_t k = 4 + rng() % 9;
    const auto w = oracle::random_matrix(rng, 12, k, 0.0, 0.3);
    const auto v = oracle::random_matrix(rng, 12, 1).column(0);
    const auto h = nbmf::encode(w, v, exhaustive());
    EXPECT_NEAR(oracle::residual_sq(w, v, h), oracle::brute_force_residual(w, v), 1e-12);
    AnnealConfig sa;
    sa.seed = 5;
    EXPECT_EQ(nbmf::encode(w, v, sa), nbmf::encode(w, v, sa));
  }
  EXPECT_THROW(nbmf::encode(Matrix(3, 2), std::vector<double>{0.1}, exhaustive()), nbmf::DimensionError);
}

TEST(EncodeNmf, RecoversExactCode) {
  std::mt19937_64 rng(86);
  const auto w = oracle::column_normalized(oracle::random_matrix(rng, 20, 3, 0.1, 1.0));
  const std::vector<double> truth{0.3, 1.2, 0.7};
  std::vector<double> v(20, 0.0);
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t i = 0; i < 3; ++i) v[r] += w(r, i) * truth[i];
  const auto h = nbmf::encode_nmf(w, v);
  std::vector<double> recon(20, 0.0);
  for (std::size_t r = 0; r < 20; ++r)
    for (std::size_t i = 0; i < 3; ++i) recon[r] += w(r, i) * h[i];
  EXPECT_LE(nbmf::euclidean_distance(recon, v), 1e-4);
}

TEST(EvaluateAccuracy, SelfClassificationOfPlantedClasses) {
  const auto bench = nbmf::gen_planted_classes(48, 6, 6, 4, 1, 0.0, 0.5, 87);
  // With the true basis, every training image encodes to its class code, so
  // nearest-neighbor lookup on the training set itself must be perfect.
  nbmf::FactorModel model{nbmf::Method::nbmf, bench.w_true, BinaryMatrix(6, bench.train.images())};
  auto& h = std::get<BinaryMatrix>(model.h);
  for (std::size_t c = 0; c < bench.train.images(); ++c) h.set_column(c, bench.class_codes.column(c / 4));
  model.labels = bench.train.labels;
  nbmf::ClassifyConfig cfg;
  cfg.anneal = exhaustive();
  const auto report = nbmf::evaluate_accuracy(model, bench.train, cfg);
  EXPECT_EQ(report.correct, report.total);
  EXPECT_EQ(report.accuracy(), 1.0);
}

TEST(EvaluateAccuracy, AccuracyIsCorrectOverTotal) {
  const auto bench = nbmf::gen_planted_classes(32, 5, 4, 3, 2, 0.05, 0.5, 88);
  nbmf::NbmfConfig fit;
  fit.k = 5;
  fit.anneal = exhaustive();
  const auto model = nbmf::nbmf_fit(bench.train.matrix, fit, bench.train.labels);
  nbmf::ClassifyConfig cfg;
  cfg.anneal = exhaustive();
  const auto report = nbmf::evaluate_accuracy(model, bench.test, cfg);
  std::size_t correct = 0;
  for (const auto& r : report.records) correct += r.prediction.label == r.true_label;
  EXPECT_EQ(report.correct, correct);
  EXPECT_EQ(report.total, bench.test.images());
  EXPECT_DOUBLE_EQ(report.accuracy(), static_cast<double>(correct) / static_cast<double>(report.total));
  EXPECT_GE(report.accuracy(), 0.0);
  EXPECT_LE(report.accuracy(), 1.0);

  cfg.threads = 3;
  const auto parallel = nbmf::evaluate_accuracy(model, bench.test, cfg);
  EXPECT_EQ(nbmf::report_to_csv(parallel), nbmf::report_to_csv(report));
}

TEST(EvaluateAccuracy, NmfModelPath) {
  const auto bench = nbmf::gen_planted_classes(32, 5, 4, 3, 2, 0.02, 0.5, 89);
  nbmf::NmfConfig fit;
  fit.k = 5;
  const auto model = nbmf::nmf_fit(bench.train.matrix, fit, bench.train.labels);
  const auto report = nbmf::evaluate_accuracy(model, bench.test);
  EXPECT_EQ(report.total, 8u);
  EXPECT_GE(report.correct, 6u);
}

TEST(EvaluateAccuracy, Errors) {
  const auto bench = nbmf::gen_planted_classes(16, 4, 3, 3, 1, 0.0, 0.5, 90);
  nbmf::FactorModel model{nbmf::Method::nbmf, bench.w_true, BinaryMatrix(4, 9)};
  EXPECT_THROW(nbmf::evaluate_accuracy(model, bench.test), nbmf::DataError);  // no labels
  model.labels = std::vector<std::string>(9, "other");
  EXPECT_THROW(nbmf::evaluate_accuracy(model, bench.test), nbmf::DataError);  // label mismatch
}

TEST(ReportCsv, Layout) {
  nbmf::AccuracyReport report;
  report.records.push_back({0, "A", {"B", {{3, 1.0, "B"}, {1, 1.5, "B"}, {2, 2.0, "A"}}}});
  report.total = 1;
  EXPECT_EQ(nbmf::report_to_csv(report),
            "test_index,true_label,predicted_label,neighbor1_index,neighbor1_distance,neighbor2_index,"
            "neighbor2_distance,neighbor3_index,neighbor3_distance\n0,A,B,3,1,1,1.5,2,2\n");
}
