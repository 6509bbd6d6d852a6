#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <unistd.h>

#include "nbmf/dataset_io.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using nbmf::LabeledDataset;
using nbmf::Matrix;

namespace {

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("nbmf_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write(const fs::path& p, const std::string& contents) {
  std::ofstream out(p, std::ios::binary);
  out << contents;
}

std::string pgm(std::size_t w, std::size_t h, std::size_t maxval, const std::vector<unsigned>& pixels,
                const std::string& magic = "P5") {
  std::string s = magic + "\n# comment line\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
                  std::to_string(maxval) + "\n";
  for (unsigned p : pixels) {
    if (maxval > 255) s += static_cast<char>(p >> 8);
    s += static_cast<char>(p & 0xFF);
  }
  return s;
}

nbmf::FactorModel small_model() {
  nbmf::FactorModel m{nbmf::Method::nbmf, Matrix(3, 2, {0.1, 0.2, 0.3, 0.4, 0.5, 1.0 / 3.0}),
                      nbmf::BinaryMatrix(2, 2, {1, 0, 1, 1})};
  m.alpha = 1e-6;
  m.seed = 42;
  m.iterations = 2;
  m.converged = true;
  m.trace = {{0, 0.5, 0.0}, {1, 0.25, 0.0}, {2, 0.125, 0.0}};
  m.labels = {"a", "b"};
  return m;
}

}  // namespace

TEST(LoadCsv, ZeroImage) {
  const auto ds = nbmf::dataset_from_csv("n,4,height,2,width,2\np0,0,0,0,0\n");
  EXPECT_EQ(ds.matrix, Matrix(4, 1));
  EXPECT_EQ(ds.labels, std::vector<std::string>{"p0"});
  EXPECT_EQ(ds.height, 2u);
}

TEST(LoadCsv, RoundTripIsBitExact) {
  TempDir dir;
  std::mt19937_64 rng(51);
  LabeledDataset ds{oracle::random_matrix(rng, 6, 4), {"a", "b", "a", "c"}, 2, 3};
  ds.matrix(0, 0) = 1.0;
  ds.matrix(1, 1) = 0.0;
  nbmf::save_csv(ds, dir.path() / "d.csv");
  EXPECT_EQ(nbmf::load_csv(dir.path() / "d.csv"), ds);
}

TEST(LoadCsv, Errors) {
  EXPECT_THROW(nbmf::dataset_from_csv("n,2,height,1,width,2\na,0.5,1.5\n"), nbmf::DataError);
  EXPECT_THROW(nbmf::dataset_from_csv("n,2,height,1,width,2\na,0.5\n"), nbmf::DataError);
  EXPECT_THROW(nbmf::dataset_from_csv("n,3,height,1,width,2\na,0.5,0.1,0.2\n"), nbmf::DataError);
  EXPECT_THROW(nbmf::dataset_from_csv("n,2,height,1,width,2\na,0.5,abc\n"), nbmf::DataError);
  EXPECT_THROW(nbmf::dataset_from_csv("n,2,height,1,width,2\n"), nbmf::DataError);
  EXPECT_THROW(nbmf::dataset_from_csv(""), nbmf::DataError);
  EXPECT_THROW(nbmf::load_csv("/nonexistent/file.csv"), nbmf::DataError);
}

// Corrupting random bytes of a valid file either still yields a valid dataset
// or raises DataError; nothing else escapes.
TEST(LoadCsv, AdversarialMutations) {
  const std::string base = "n,4,height,2,width,2\nx,0.25,0.5,0.75,1\ny,0,0.125,0.5,0.5\n";
  const std::string alphabet = "0123456789.,-+eE\nxn \r";
  std::mt19937_64 rng(52);
  for (int trial = 0; trial < 500; ++trial) {
    std::string text = base;
    const int edits = 1 + static_cast<int>(rng() % 3);
    for (int e = 0; e < edits; ++e) text[rng() % text.size()] = alphabet[rng() % alphabet.size()];
    try {
      const auto ds = nbmf::dataset_from_csv(text);
      EXPECT_NO_THROW(ds.validate());
    } catch (const nbmf::DataError&) {
    } catch (const nbmf::DimensionError&) {
    }
  }
}

TEST(LoadPgmDir, NormalizesPixels) {
  TempDir dir;
  write(dir.path() / "s1_1.pgm", pgm(2, 2, 255, {0, 255, 255, 0}));
  const auto ds = nbmf::load_pgm_dir(dir.path());
  EXPECT_EQ(ds.matrix, Matrix(4, 1, {0.0, 1.0, 1.0, 0.0}));
  EXPECT_EQ(ds.labels, std::vector<std::string>{"s1"});
  EXPECT_EQ(ds.height, 2u);
  EXPECT_EQ(ds.width, 2u);
}

TEST(LoadPgmDir, SixteenBitAndSortedOrder) {
  TempDir dir;
  write(dir.path() / "b_2.pgm", pgm(1, 2, 1000, {1000, 500}));
  write(dir.path() / "a_1.pgm", pgm(1, 2, 1000, {0, 250}));
  write(dir.path() / "notes.txt", "ignored");
  const auto ds = nbmf::load_pgm_dir(dir.path());
  EXPECT_EQ(ds.labels, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.matrix, Matrix(2, 2, {0.0, 1.0, 0.25, 0.5}));
}

TEST(LoadPgmDir, ThirtyTwoByThirtyTwoGivesN1024) {
  TempDir dir;
  std::vector<unsigned> pixels(1024);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<unsigned>(i % 256);
  write(dir.path() / "p_0.pgm", pgm(32, 32, 255, pixels));
  write(dir.path() / "p_1.pgm", pgm(32, 32, 255, pixels));
  const auto ds = nbmf::load_pgm_dir(dir.path());
  EXPECT_EQ(ds.pixels(), 1024u);
  EXPECT_EQ(ds.images(), 2u);
  EXPECT_NO_THROW(ds.validate());
}

TEST(LoadPgmDir, Errors) {
  {
    TempDir dir;
    EXPECT_THROW(nbmf::load_pgm_dir(dir.path()), nbmf::DataError);
  }
  {
    TempDir dir;
    write(dir.path() / "a_1.pgm", pgm(2, 2, 255, {0, 1, 2, 3}));
    write(dir.path() / "a_2.pgm", pgm(1, 2, 255, {0, 1}));
    EXPECT_THROW(nbmf::load_pgm_dir(dir.path()), nbmf::DataError);
  }
  {
    TempDir dir;
    write(dir.path() / "a_1.pgm", pgm(2, 2, 255, {0, 1, 2, 3}, "P2"));
    EXPECT_THROW(nbmf::load_pgm_dir(dir.path()), nbmf::DataError);
  }
  {
    TempDir dir;
    write(dir.path() / "noindex.pgm", pgm(1, 1, 255, {0}));
    EXPECT_THROW(nbmf::load_pgm_dir(dir.path()), nbmf::DataError);
  }
  {
    TempDir dir;
    write(dir.path() / "a_x.pgm", pgm(1, 1, 255, {0}));
    EXPECT_THROW(nbmf::load_pgm_dir(dir.path()), nbmf::DataError);
  }
  {
    TempDir dir;
    auto truncated = pgm(2, 2, 255, {0, 1, 2, 3});
    truncated.pop_back();
    write(dir.path() / "a_1.pgm", truncated);
    EXPECT_THROW(nbmf::load_pgm_dir(dir.path()), nbmf::DataError);
  }
  EXPECT_THROW(nbmf::load_pgm_dir("/nonexistent/dir"), nbmf::DataError);
}

TEST(GenSynthetic, DeterministicAndInRange) {
  const auto a = nbmf::gen_synthetic(20, 15, 4, 0.5, 3);
  const auto b = nbmf::gen_synthetic(20, 15, 4, 0.5, 3);
  EXPECT_EQ(a.dataset, b.dataset);
  EXPECT_EQ(a.w_true, b.w_true);
  EXPECT_EQ(a.h_true, b.h_true);
  EXPECT_NO_THROW(a.dataset.validate());
  EXPECT_EQ(a.dataset.height * a.dataset.width, 20u);
  for (double x : a.w_true.data()) EXPECT_LE(x, 0.25);
  for (std::size_t c = 0; c < 15; ++c) {
    const auto col = a.h_true.column(c);
    EXPECT_NE(std::count(col.begin(), col.end(), 1), 0);
  }
}

TEST(GenSynthetic, PlantedFactorizationIsExactWithoutClamping) {
  const auto d = nbmf::gen_synthetic(64, 30, 8, 0.5, 7);
  ASSERT_FALSE(d.clamped);
  const auto product = oracle::multiply(d.w_true, d.h_true.to_real());
  for (double x : product.data()) EXPECT_LE(x, 1.0);
  EXPECT_EQ(nbmf::mean_rmse(d.dataset.matrix, product), 0.0);
}

TEST(GenSynthetic, LabelsFollowCodes) {
  const auto d = nbmf::gen_synthetic(8, 60, 3, 0.5, 11);
  for (std::size_t a = 0; a < 60; ++a)
    for (std::size_t b = 0; b < 60; ++b) {
      EXPECT_EQ(d.dataset.labels[a] == d.dataset.labels[b], d.h_true.column(a) == d.h_true.column(b));
    }
}

TEST(GenSynthetic, DensityWithinFiveStandardErrors) {
  for (double density : {0.2, 0.5, 0.8}) {
    const std::size_t k = 40, m = 50;
    const auto d = nbmf::gen_synthetic(4, m, k, density, 5);
    double ones = 0.0;
    for (auto b : d.h_true.data()) ones += b;
    const double mean = ones / static_cast<double>(k * m);
    const double se = std::sqrt(density * (1.0 - density) / static_cast<double>(k * m));
    EXPECT_NEAR(mean, density, 5.0 * se);
  }
}

TEST(GenSynthetic, RejectsInvalidParameters) {
  EXPECT_THROW(nbmf::gen_synthetic(0, 5, 2, 0.5, 1), nbmf::ConfigError);
  EXPECT_THROW(nbmf::gen_synthetic(4, 5, 2, 1.0, 1), nbmf::ConfigError);
  EXPECT_THROW(nbmf::gen_synthetic(4, 5, 2, 0.0, 1), nbmf::ConfigError);
}

TEST(GenHeldOut, SharesBasisAndLabels) {
  const auto train = nbmf::gen_synthetic(16, 10, 4, 0.5, 2);
  const auto test = nbmf::gen_held_out(train, 6, 0.0, 3);
  EXPECT_EQ(test.images(), 6u);
  for (std::size_t c = 0; c < 6; ++c) {
    const auto it = std::find(train.dataset.labels.begin(), train.dataset.labels.end(), test.labels[c]);
    ASSERT_NE(it, train.dataset.labels.end());
    const auto source = static_cast<std::size_t>(it - train.dataset.labels.begin());
    for (std::size_t r = 0; r < 16; ++r) EXPECT_NEAR(test.matrix(r, c), train.dataset.matrix(r, source), 1e-15);
  }
}

TEST(GenPlantedClasses, DistinctCodesAndShapes) {
  const auto b = nbmf::gen_planted_classes(64, 8, 10, 5, 1, 0.05, 0.5, 4);
  EXPECT_EQ(b.train.images(), 50u);
  EXPECT_EQ(b.test.images(), 10u);
  EXPECT_NO_THROW(b.train.validate());
  for (std::size_t a = 0; a < 10; ++a)
    for (std::size_t c = a + 1; c < 10; ++c) EXPECT_NE(b.class_codes.column(a), b.class_codes.column(c));
  EXPECT_THROW(nbmf::gen_planted_classes(4, 2, 4, 1, 1, 0.0, 0.5, 1), nbmf::ConfigError);
}

TEST(ModelIo, RoundTrip) {
  TempDir dir;
  const auto m = small_model();
  nbmf::save_model(m, dir.path() / "model");
  const auto loaded = nbmf::load_model(dir.path() / "model");
  EXPECT_EQ(loaded.method, m.method);
  EXPECT_EQ(loaded.w, m.w);
  EXPECT_EQ(loaded.binary_h(), m.binary_h());
  EXPECT_EQ(loaded.alpha, m.alpha);
  EXPECT_EQ(loaded.seed, m.seed);
  EXPECT_EQ(loaded.iterations, m.iterations);
  EXPECT_EQ(loaded.trace, m.trace);
  EXPECT_EQ(loaded.labels, m.labels);

  std::mt19937_64 rng(53);
  nbmf::FactorModel nmf{nbmf::Method::nmf, oracle::random_matrix(rng, 5, 3), oracle::random_matrix(rng, 3, 4)};
  nmf.trace = {{0, 0.1, 0.0}};
  nbmf::save_model(nmf, dir.path() / "nmf");
  const auto nmf_loaded = nbmf::load_model(dir.path() / "nmf");
  EXPECT_EQ(nmf_loaded.w, nmf.w);
  EXPECT_EQ(std::get<Matrix>(nmf_loaded.h), std::get<Matrix>(nmf.h));
}

TEST(ModelIo, TraceHasIterationsPlusOneLines) {
  TempDir dir;
  nbmf::save_model(small_model(), dir.path());
  const auto lines = nbmf::io::lines_of(nbmf::io::read_file(dir.path() / "trace.csv"));
  EXPECT_EQ(lines.front(), "iteration,mean_rmse,wall_ms");
  EXPECT_EQ(lines.size() - 1, small_model().iterations + 1);
}

TEST(ModelIo, RejectsNonBinaryHForNbmf) {
  TempDir dir;
  nbmf::save_model(small_model(), dir.path());
  write(dir.path() / "H.csv", "1,0\n0.5,1\n");
  EXPECT_THROW(nbmf::load_model(dir.path()), nbmf::DataError);
}

TEST(ModelIo, RejectsInconsistentMeta) {
  TempDir dir;
  nbmf::save_model(small_model(), dir.path());
  write(dir.path() / "W.csv", "0.1,0.2\n0.3,0.4\n");
  EXPECT_THROW(nbmf::load_model(dir.path()), nbmf::DataError);
  EXPECT_THROW(nbmf::load_model(dir.path() / "missing"), nbmf::DataError);
}
