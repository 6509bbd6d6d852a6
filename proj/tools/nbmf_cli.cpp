// nbmf: command-line driver for factorization, classification, synthetic data
// and single QUBO solves. Every run writes a JSON manifest that `nbmf replay`
// can re-execute and verify.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "nbmf/all.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string checksum_of(const fs::path& file) { return fnv1a_hex(nbmf::io::read_file(file)); }

struct Manifest {
  std::string subcommand;
  ordered_json params = ordered_json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  fs::path path;

  void write(double wall_ms) const {
    ordered_json j;
    j["subcommand"] = subcommand;
    j["params"] = params;
    j["seed"] = params.value("seed", std::uint64_t{0});
    auto& in = j["inputs"] = ordered_json::array();
    for (const auto& p : inputs) in.push_back(p.string());
    auto& out = j["outputs"] = ordered_json::array();
    for (const auto& p : outputs) out.push_back(p.string());
    j["wall_ms"] = wall_ms;
    auto& sums = j["checksums"] = ordered_json::object();
    for (const auto& p : outputs) sums[p.string()] = checksum_of(p);
    nbmf::io::write_file_atomic(path, j.dump(2) + "\n");
  }
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& seed) {
  if (seed) return *seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

nbmf::LabeledDataset load_dataset(const fs::path& path) {
  if (fs::is_directory(path)) return nbmf::load_pgm_dir(path);
  return nbmf::load_csv(path);
}

struct AnnealFlags {
  std::string backend = "sa";
  std::size_t sweeps = nbmf::AnnealConfig{}.sweeps;
  std::size_t restarts = nbmf::AnnealConfig{}.restarts;
  std::size_t replicas = nbmf::AnnealConfig{}.replicas;

  void add_to(CLI::App* app) {
    app->add_option("--backend", backend, "QUBO backend: exhaustive, sa or pt")
        ->check(CLI::IsMember({"exhaustive", "sa", "pt"}));
    app->add_option("--sweeps", sweeps, "Sweeps per annealing run");
    app->add_option("--restarts", restarts, "Independent annealing restarts");
    app->add_option("--replicas", replicas, "Replica count for parallel tempering");
  }

  nbmf::AnnealConfig config(std::uint64_t seed) const {
    nbmf::AnnealConfig cfg;
    cfg.backend = nbmf::parse_backend(backend);
    cfg.sweeps = sweeps;
    cfg.restarts = restarts;
    cfg.replicas = replicas;
    cfg.seed = seed;
    return cfg;
  }

  void record(ordered_json& p) const {
    p["backend"] = backend;
    p["sweeps"] = sweeps;
    p["restarts"] = restarts;
    p["replicas"] = replicas;
  }
};

// ---------------------------------------------------------------- factorize

struct FactorizeArgs {
  std::string method = "nbmf";
  std::string input;
  std::string out;
  std::size_t k = 60;
  double alpha = 1e-6;
  double tol = 1e-4;
  AnnealFlags anneal;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_iters;
  std::size_t threads = 1;
  bool timing = false;
  std::string manifest;
};

Manifest run_factorize(const FactorizeArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  const auto method = nbmf::parse_method(a.method);
  const auto data = load_dataset(a.input);

  nbmf::FactorModel model{method, nbmf::Matrix(1, 1), nbmf::BinaryMatrix(1, 1)};
  std::size_t max_iters = 0;
  if (method == nbmf::Method::nbmf) {
    nbmf::NbmfConfig cfg;
    cfg.k = a.k;
    cfg.alpha = a.alpha;
    cfg.conv_tol = a.tol;
    if (a.max_iters) cfg.max_outer_iters = *a.max_iters;
    cfg.anneal = a.anneal.config(seed);
    cfg.seed = seed;
    cfg.threads = a.threads;
    cfg.record_timing = a.timing;
    max_iters = cfg.max_outer_iters;
    model = nbmf::nbmf_fit(data.matrix, cfg, data.labels);
  } else {
    nbmf::NmfConfig cfg;
    cfg.k = a.k;
    cfg.conv_tol = a.tol;
    if (a.max_iters) cfg.max_outer_iters = *a.max_iters;
    cfg.seed = seed;
    cfg.record_timing = a.timing;
    max_iters = cfg.max_outer_iters;
    model = nbmf::nmf_fit(data.matrix, cfg, data.labels);
  }
  nbmf::save_model(model, a.out);
  nbmf::load_model(a.out);

  std::cout << "method: " << a.method << "\n"
            << "final mean RMSE: " << nbmf::io::format_double(model.trace.back().mean_rmse) << "\n"
            << "iterations: " << model.iterations << (model.converged ? " (converged)" : " (iteration cap)") << "\n";

  Manifest m;
  m.subcommand = "factorize";
  auto& p = m.params;
  p["method"] = a.method;
  p["input"] = a.input;
  p["out"] = a.out;
  p["k"] = a.k;
  p["alpha"] = a.alpha;
  p["tol"] = a.tol;
  a.anneal.record(p);
  p["seed"] = seed;
  p["max-iters"] = max_iters;
  p["threads"] = a.threads;
  p["timing"] = a.timing;
  m.inputs = {a.input};
  const fs::path dir(a.out);
  m.outputs = {dir / "W.csv", dir / "H.csv", dir / "meta.json", dir / "trace.csv"};
  m.path = a.manifest.empty() ? dir / "manifest.json" : fs::path(a.manifest);
  return m;
}

// ----------------------------------------------------------------- classify

struct ClassifyArgs {
  std::string model;
  std::string test;
  std::string report;
  std::size_t neighbors = 3;
  AnnealFlags anneal;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::string manifest;
};

Manifest run_classify(const ClassifyArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  const auto model = nbmf::load_model(a.model);
  const auto test = load_dataset(a.test);

  nbmf::ClassifyConfig cfg;
  cfg.anneal = a.anneal.config(seed);
  cfg.neighbors = a.neighbors;
  cfg.threads = a.threads;
  const auto report = nbmf::evaluate_accuracy(model, test, cfg);
  nbmf::io::write_file_atomic(a.report, nbmf::report_to_csv(report));

  char pct[32];
  std::snprintf(pct, sizeof pct, "%.1f", 100.0 * report.accuracy());
  std::cout << report.correct << "/" << report.total << " (" << pct << "%)\n";

  Manifest m;
  m.subcommand = "classify";
  auto& p = m.params;
  p["model"] = a.model;
  p["test"] = a.test;
  p["report"] = a.report;
  p["neighbors"] = a.neighbors;
  a.anneal.record(p);
  p["seed"] = seed;
  p["threads"] = a.threads;
  m.inputs = {a.model, a.test};
  m.outputs = {a.report};
  m.path = a.manifest.empty() ? fs::path(a.report + ".manifest.json") : fs::path(a.manifest);
  return m;
}

// ------------------------------------------------------------ gen-synthetic

struct GenArgs {
  std::size_t n = 64;
  std::size_t m = 30;
  std::size_t k = 8;
  double density = 0.5;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string test_out;
  std::size_t test_m = 10;
  double noise = 0.0;
  std::size_t classes = 0;
  std::size_t train_per_class = 5;
  std::size_t test_per_class = 1;
  std::string manifest;
};

fs::path sidecar(const fs::path& dataset, const std::string& suffix) {
  fs::path p = dataset;
  p.replace_extension();
  return p.string() + suffix;
}

Manifest run_gen(const GenArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  Manifest m;
  m.subcommand = "gen-synthetic";
  const fs::path out(a.out);
  const fs::path w_path = sidecar(out, ".W_true.csv");
  const fs::path h_path = sidecar(out, ".H_true.csv");

  if (a.classes > 0) {
    if (a.test_out.empty()) throw nbmf::ConfigError("--classes requires --test-out");
    const auto bench = nbmf::gen_planted_classes(a.n, a.k, a.classes, a.train_per_class, a.test_per_class, a.noise,
                                                 a.density, seed);
    nbmf::save_csv(bench.train, out);
    nbmf::save_csv(bench.test, a.test_out);
    nbmf::io::write_file_atomic(w_path, nbmf::io::matrix_to_csv(bench.w_true));
    nbmf::io::write_file_atomic(h_path, nbmf::io::matrix_to_csv(bench.class_codes));
    m.outputs = {out, a.test_out, w_path, h_path};
  } else {
    const auto data = nbmf::gen_synthetic(a.n, a.m, a.k, a.density, seed);
    nbmf::save_csv(data.dataset, out);
    nbmf::io::write_file_atomic(w_path, nbmf::io::matrix_to_csv(data.w_true));
    nbmf::io::write_file_atomic(h_path, nbmf::io::matrix_to_csv(data.h_true));
    m.outputs = {out, w_path, h_path};
    if (!a.test_out.empty()) {
      nbmf::save_csv(nbmf::gen_held_out(data, a.test_m, a.noise, nbmf::derive_seed(seed, 1)), a.test_out);
      m.outputs.push_back(a.test_out);
    }
    if (data.clamped) std::cerr << "warning: some pixels were clamped to [0,1]\n";
  }
  for (const auto& p : m.outputs) {
    if (p == w_path || p == h_path) continue;
    nbmf::load_csv(p).validate();
  }
  std::cout << "wrote " << m.outputs.size() << " files\n";

  auto& p = m.params;
  p["n"] = a.n;
  p["m"] = a.m;
  p["k"] = a.k;
  p["density"] = a.density;
  p["seed"] = seed;
  p["out"] = a.out;
  p["test-out"] = a.test_out;
  p["test-m"] = a.test_m;
  p["noise"] = a.noise;
  p["classes"] = a.classes;
  p["train-per-class"] = a.train_per_class;
  p["test-per-class"] = a.test_per_class;
  m.path = a.manifest.empty() ? fs::path(out.string() + ".manifest.json") : fs::path(a.manifest);
  return m;
}

// --------------------------------------------------------------- solve-qubo

struct SolveArgs {
  std::string input;
  std::string out;
  AnnealFlags anneal;
  std::optional<std::uint64_t> seed;
  bool oracle = false;
  std::string manifest;
};

constexpr std::size_t kOracleLimit = 20;

Manifest run_solve(const SolveArgs& a) {
  const std::uint64_t seed = resolve_seed(a.seed);
  const auto problem = nbmf::qubo_from_csv(nbmf::io::read_file(a.input));
  const auto result = nbmf::solve(problem, a.anneal.config(seed));

  std::string bits;
  for (auto b : result.q) bits += b ? '1' : '0';
  ordered_json sol;
  sol["q"] = bits;
  sol["energy"] = result.energy;
  std::cout << "q: " << bits << "\nenergy: " << nbmf::io::format_double(result.energy) << "\n";
  if (a.oracle) {
    if (problem.size() > kOracleLimit) {
      throw nbmf::ConfigError("--oracle supports at most " + std::to_string(kOracleLimit) + " variables");
    }
    const auto best = nbmf::solve_exhaustive(problem);
    const double gap = result.energy - best.energy;
    std::cout << "optimum: " << nbmf::io::format_double(best.energy) << "\ngap: " << nbmf::io::format_double(gap)
              << "\n";
    sol["optimum"] = best.energy;
    sol["gap"] = gap;
  }

  Manifest m;
  m.subcommand = "solve-qubo";
  if (!a.out.empty()) {
    nbmf::io::write_file_atomic(a.out, sol.dump(2) + "\n");
    m.outputs = {a.out};
  }
  auto& p = m.params;
  p["input"] = a.input;
  p["out"] = a.out;
  a.anneal.record(p);
  p["seed"] = seed;
  p["oracle"] = a.oracle;
  m.inputs = {a.input};
  const std::string base = a.out.empty() ? a.input : a.out;
  m.path = a.manifest.empty() ? fs::path(base + ".manifest.json") : fs::path(a.manifest);
  return m;
}

// ------------------------------------------------------------------- replay

std::vector<std::string> argv_from_manifest(const nlohmann::json& j) {
  std::vector<std::string> args{"nbmf", j.at("subcommand").get<std::string>()};
  for (const auto& [key, value] : j.at("params").items()) {
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + key);
    } else if (value.is_string()) {
      if (value.get<std::string>().empty()) continue;
      args.push_back("--" + key);
      args.push_back(value.get<std::string>());
    } else {
      args.push_back("--" + key);
      args.push_back(value.dump());
    }
  }
  return args;
}

int run(int argc, const char* const* argv, bool allow_replay);

int run_replay(const std::string& manifest_path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(nbmf::io::read_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw nbmf::DataError("manifest: " + std::string(e.what()));
  }
  auto args = argv_from_manifest(j);
  // Rewrite the replay's own manifest elsewhere so the original stays intact.
  args.push_back("--manifest");
  args.push_back(manifest_path + ".replay.json");
  std::vector<const char*> raw;
  for (const auto& s : args) raw.push_back(s.c_str());
  const int status = run(static_cast<int>(raw.size()), raw.data(), false);
  if (status != 0) return status;

  std::size_t mismatches = 0;
  for (const auto& [file, expected] : j.at("checksums").items()) {
    const std::string got = checksum_of(file);
    if (got != expected.get<std::string>()) {
      std::cerr << "checksum mismatch: " << file << "\n";
      ++mismatches;
    }
  }
  if (mismatches) return 2;
  std::cout << "replay reproduced " << j.at("checksums").size() << " artifacts\n";
  return 0;
}

int run(int argc, const char* const* argv, bool allow_replay) {
  CLI::App app{"Binary and nonnegative matrix factorization toolkit"};
  app.require_subcommand(1);

  FactorizeArgs fa;
  auto* fac = app.add_subcommand("factorize", "Factorize a dataset and write a model directory");
  fac->add_option("--method", fa.method, "nbmf or nmf")->check(CLI::IsMember({"nbmf", "nmf"}));
  fac->add_option("--input", fa.input, "Dataset CSV or directory of PGM images")->required();
  fac->add_option("--out", fa.out, "Model output directory")->required();
  fac->add_option("--k", fa.k, "Number of basis columns");
  fac->add_option("--alpha", fa.alpha, "Ridge penalty on W (nbmf)");
  fac->add_option("--tol", fa.tol, "Convergence tolerance on the change in W");
  fa.anneal.add_to(fac);
  fac->add_option("--seed", fa.seed, "Random seed (chosen and recorded when absent)");
  fac->add_option("--max-iters", fa.max_iters, "Outer iteration cap");
  fac->add_option("--threads", fa.threads, "Worker threads for the H-update");
  fac->add_flag("--timing", fa.timing, "Record wall-clock milliseconds in trace.csv");
  fac->add_option("--manifest", fa.manifest, "Manifest path (default <out>/manifest.json)");

  ClassifyArgs ca;
  auto* cls = app.add_subcommand("classify", "Classify a test set with nearest neighbors in code space");
  cls->add_option("--model", ca.model, "Model directory")->required();
  cls->add_option("--test", ca.test, "Test dataset CSV or PGM directory")->required();
  cls->add_option("--report", ca.report, "Prediction report CSV")->required();
  cls->add_option("--neighbors", ca.neighbors, "Neighbors in the vote");
  ca.anneal.add_to(cls);
  cls->add_option("--seed", ca.seed, "Random seed (chosen and recorded when absent)");
  cls->add_option("--threads", ca.threads, "Worker threads for encoding");
  cls->add_option("--manifest", ca.manifest, "Manifest path (default <report>.manifest.json)");

  GenArgs ga;
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a planted synthetic dataset");
  gen->add_option("--n", ga.n, "Pixels per image");
  gen->add_option("--m", ga.m, "Training images");
  gen->add_option("--k", ga.k, "Planted basis columns");
  gen->add_option("--density", ga.density, "Probability of a one in the planted codes");
  gen->add_option("--seed", ga.seed, "Random seed (chosen and recorded when absent)");
  gen->add_option("--out", ga.out, "Training dataset CSV")->required();
  gen->add_option("--test-out", ga.test_out, "Held-out dataset CSV sharing the planted basis");
  gen->add_option("--test-m", ga.test_m, "Held-out images");
  gen->add_option("--noise", ga.noise, "Uniform noise amplitude");
  gen->add_option("--classes", ga.classes, "Labeled benchmark with this many planted classes");
  gen->add_option("--train-per-class", ga.train_per_class, "Training images per class");
  gen->add_option("--test-per-class", ga.test_per_class, "Test images per class");
  gen->add_option("--manifest", ga.manifest, "Manifest path (default <out>.manifest.json)");

  SolveArgs sa;
  auto* sol = app.add_subcommand("solve-qubo", "Solve one QUBO from its CSV dump");
  sol->add_option("--input", sa.input, "QUBO CSV (i,j,coefficient)")->required();
  sol->add_option("--out", sa.out, "Solution JSON");
  sa.anneal.add_to(sol);
  sol->add_option("--seed", sa.seed, "Random seed (chosen and recorded when absent)");
  sol->add_flag("--oracle", sa.oracle, "Also report the exhaustive optimum and the gap");
  sol->add_option("--manifest", sa.manifest, "Manifest path");

  std::string replay_path;
  CLI::App* rep = nullptr;
  if (allow_replay) {
    rep = app.add_subcommand("replay", "Re-run a manifest and verify artifact checksums");
    rep->add_option("manifest", replay_path, "Manifest JSON")->required();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (rep && rep->parsed()) return run_replay(replay_path);
    const auto start = std::chrono::steady_clock::now();
    Manifest m;
    if (fac->parsed()) m = run_factorize(fa);
    else if (cls->parsed()) m = run_classify(ca);
    else if (gen->parsed()) m = run_gen(ga);
    else m = run_solve(sa);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    m.write(ms);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv, true); }
