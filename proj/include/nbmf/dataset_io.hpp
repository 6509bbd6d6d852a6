#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nbmf/errors.hpp"
#include "nbmf/matrix.hpp"
#include "nbmf/model.hpp"
#include "nbmf/random.hpp"

namespace nbmf {

/// n x m image matrix (one image per column) with a label per column.
struct LabeledDataset {
  Matrix matrix;
  std::vector<std::string> labels;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t pixels() const noexcept { return matrix.rows(); }
  std::size_t images() const noexcept { return matrix.cols(); }

  void validate() const {
    if (labels.size() != matrix.cols()) {
      throw DataError("dataset has " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(matrix.cols()) + " images");
    }
    if (height * width != matrix.rows()) {
      throw DataError("image shape " + std::to_string(height) + "x" + std::to_string(width) +
                      " does not match " + std::to_string(matrix.rows()) + " pixels");
    }
    for (double x : matrix.data()) {
      if (!(x >= 0.0 && x <= 1.0)) throw DataError("dataset value outside [0,1]");
    }
  }

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

namespace io {

inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return {buf, res.ptr};
}

inline double parse_double(std::string_view field, std::string_view context) {
  double x = 0.0;
  // from_chars rejects a leading '+', which some writers emit.
  if (!field.empty() && field.front() == '+') field.remove_prefix(1);
  auto res = std::from_chars(field.data(), field.data() + field.size(), x);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || field.empty()) {
    throw DataError(std::string(context) + ": cannot parse number '" + std::string(field) + "'");
  }
  return x;
}

inline std::size_t parse_size(std::string_view field, std::string_view context) {
  std::size_t x = 0;
  auto res = std::from_chars(field.data(), field.data() + field.size(), x);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size() || field.empty()) {
    throw DataError(std::string(context) + ": cannot parse integer '" + std::string(field) + "'");
  }
  return x;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + tmp.string() + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw DataError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot rename '" + tmp.string() + "': " + ec.message());
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

/// Plain numeric CSV: one matrix row per line, no header.
inline std::string matrix_to_csv(const Matrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  return out;
}

inline std::string matrix_to_csv(const BinaryMatrix& m) {
  std::string out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += m(r, c) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

inline Matrix matrix_from_csv(const std::string& text, std::string_view context) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw DataError(std::string(context) + ": empty matrix file");
  std::size_t cols = 0;
  std::vector<double> data;
  for (std::size_t r = 0; r < lines.size(); ++r) {
    const auto fields = split(lines[r]);
    if (r == 0) cols = fields.size();
    if (fields.size() != cols) {
      throw DataError(std::string(context) + ": row " + std::to_string(r + 1) + " has " +
                      std::to_string(fields.size()) + " fields, expected " + std::to_string(cols));
    }
    for (auto f : fields) {
      const double x = parse_double(f, context);
      if (!std::isfinite(x)) throw DataError(std::string(context) + ": non-finite value");
      data.push_back(x);
    }
  }
  return {lines.size(), cols, std::move(data)};
}

}  // namespace io

/// Dataset CSV: header `n,<int>,height,<int>,width,<int>`, then one image per
/// row as `label,v1,...,vn`.
inline std::string dataset_to_csv(const LabeledDataset& ds) {
  ds.validate();
  std::string out = "n," + std::to_string(ds.pixels()) + ",height," + std::to_string(ds.height) +
                    ",width," + std::to_string(ds.width) + "\n";
  for (std::size_t c = 0; c < ds.images(); ++c) {
    const auto& label = ds.labels[c];
    if (label.empty() || label.find_first_of(",\n\r") != std::string::npos) {
      throw DataError("label '" + label + "' is empty or contains a separator");
    }
    out += label;
    for (std::size_t r = 0; r < ds.pixels(); ++r) {
      out += ',';
      out += io::format_double(ds.matrix(r, c));
    }
    out += '\n';
  }
  return out;
}

inline LabeledDataset dataset_from_csv(const std::string& text, std::string_view context = "dataset") {
  const auto lines = io::lines_of(text);
  if (lines.empty()) throw DataError(std::string(context) + ": empty file");
  const auto header = io::split(lines[0]);
  if (header.size() != 6 || header[0] != "n" || header[2] != "height" || header[4] != "width") {
    throw DataError(std::string(context) + ": header must be n,<int>,height,<int>,width,<int>");
  }
  const std::size_t n = io::parse_size(header[1], context);
  const std::size_t height = io::parse_size(header[3], context);
  const std::size_t width = io::parse_size(header[5], context);
  if (n == 0 || height * width != n) {
    throw DataError(std::string(context) + ": height*width must equal n > 0");
  }
  const std::size_t m = lines.size() - 1;
  if (m == 0) throw DataError(std::string(context) + ": no images");
  Matrix v(n, m);
  std::vector<std::string> labels;
  labels.reserve(m);
  for (std::size_t c = 0; c < m; ++c) {
    const auto fields = io::split(lines[c + 1]);
    const std::string where = std::string(context) + " row " + std::to_string(c + 2);
    if (fields.size() != n + 1) {
      throw DataError(where + ": expected label and " + std::to_string(n) + " values, got " +
                      std::to_string(fields.size()) + " fields");
    }
    if (fields[0].empty()) throw DataError(where + ": empty label");
    labels.emplace_back(fields[0]);
    for (std::size_t r = 0; r < n; ++r) {
      const double x = io::parse_double(fields[r + 1], where);
      if (!(x >= 0.0 && x <= 1.0)) {
        throw DataError(where + ": value " + std::string(fields[r + 1]) + " outside [0,1]");
      }
      v(r, c) = x;
    }
  }
  return {std::move(v), std::move(labels), height, width};
}

inline LabeledDataset load_csv(const std::filesystem::path& path) {
  return dataset_from_csv(io::read_file(path), path.string());
}

inline void save_csv(const LabeledDataset& ds, const std::filesystem::path& path) {
  io::write_file_atomic(path, dataset_to_csv(ds));
}

namespace detail {

struct PgmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t maxval = 0;
  std::vector<std::uint16_t> pixels;
};

inline PgmImage parse_pgm(const std::string& bytes, const std::string& context) {
  std::size_t pos = 0;
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      const char ch = bytes[pos];
      if (ch == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f') {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&](const char* what) {
    skip_space_and_comments();
    std::size_t value = 0;
    auto res = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), value);
    if (res.ec != std::errc{}) throw DataError(context + ": bad PGM " + what);
    pos = static_cast<std::size_t>(res.ptr - bytes.data());
    return value;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw DataError(context + ": not a binary PGM (P5) file");
  }
  pos = 2;
  PgmImage img;
  img.width = read_int("width");
  img.height = read_int("height");
  img.maxval = read_int("maxval");
  if (img.width == 0 || img.height == 0) throw DataError(context + ": zero image dimension");
  if (img.maxval == 0 || img.maxval > 65535) throw DataError(context + ": maxval must be in [1,65535]");
  // Exactly one whitespace byte separates the header from the raster.
  if (pos >= bytes.size()) throw DataError(context + ": truncated PGM header");
  ++pos;
  const std::size_t count = img.width * img.height;
  const std::size_t bytes_per = img.maxval < 256 ? 1 : 2;
  if (bytes.size() - pos < count * bytes_per) throw DataError(context + ": truncated PGM raster");
  img.pixels.resize(count);
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t p = bytes_per == 1 ? raw[i] : (std::size_t{raw[2 * i]} << 8) | raw[2 * i + 1];
    if (p > img.maxval) throw DataError(context + ": pixel exceeds maxval");
    img.pixels[i] = static_cast<std::uint16_t>(p);
  }
  return img;
}

/// "<label>_<index>.pgm" -> label. The index must be a non-negative integer.
inline std::string label_from_pgm_name(const std::filesystem::path& file) {
  const std::string stem = file.stem().string();
  const auto underscore = stem.rfind('_');
  if (underscore == std::string::npos || underscore == 0 || underscore + 1 == stem.size()) {
    throw DataError("cannot parse '<label>_<index>' from file name '" + file.filename().string() + "'");
  }
  const std::string_view index = std::string_view(stem).substr(underscore + 1);
  if (!std::all_of(index.begin(), index.end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
    throw DataError("non-numeric image index in file name '" + file.filename().string() + "'");
  }
  return stem.substr(0, underscore);
}

}  // namespace detail

/// Loads every *.pgm file of a directory in sorted file-name order. Pixels
/// are divided by maxval; image rows are stacked top to bottom into a column.
inline LabeledDataset load_pgm_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") files.push_back(entry.path());
  }
  if (files.empty()) throw DataError("no .pgm files in '" + dir.string() + "'");
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  std::vector<std::string> labels;
  std::vector<detail::PgmImage> images;
  for (const auto& file : files) {
    labels.push_back(detail::label_from_pgm_name(file));
    images.push_back(detail::parse_pgm(io::read_file(file), file.string()));
    if (images.back().width != images.front().width || images.back().height != images.front().height) {
      throw DataError("'" + file.string() + "' has different dimensions from '" + files.front().string() + "'");
    }
  }
  const std::size_t n = images.front().width * images.front().height;
  Matrix v(n, images.size());
  for (std::size_t c = 0; c < images.size(); ++c) {
    const double scale = static_cast<double>(images[c].maxval);
    for (std::size_t r = 0; r < n; ++r) v(r, c) = static_cast<double>(images[c].pixels[r]) / scale;
  }
  return {std::move(v), std::move(labels), images.front().height, images.front().width};
}

/// Planted instance: V = clamp(W_true H_true, 0, 1).
struct SyntheticData {
  LabeledDataset dataset;
  Matrix w_true;
  BinaryMatrix h_true;
  /// True when at least one product entry exceeded 1 and was clamped.
  bool clamped = false;
};

namespace detail {

/// Largest divisor of n not above sqrt(n), so height * width == n.
inline std::pair<std::size_t, std::size_t> image_shape_for(std::size_t n) {
  std::size_t height = 1;
  for (std::size_t d = 1; d * d <= n; ++d)
    if (n % d == 0) height = d;
  return {height, n / height};
}

inline std::string code_key(const BinaryMatrix& h, std::size_t c) {
  std::string key(h.rows(), '0');
  for (std::size_t r = 0; r < h.rows(); ++r)
    if (h(r, c)) key[r] = '1';
  return key;
}

inline Matrix clamp_unit(Matrix v, bool& clamped) {
  clamped = false;
  for (double& x : v.data()) {
    if (x > 1.0) {
      x = 1.0;
      clamped = true;
    } else if (x < 0.0) {
      x = 0.0;
    }
  }
  return v;
}

}  // namespace detail

/// W_true ~ U[0, 1/k] i.i.d., H_true ~ Bernoulli(density) i.i.d. with every
/// column forced nonzero. Columns sharing an H_true column share a label
/// ("c0", "c1", ... in order of first appearance).
inline SyntheticData gen_synthetic(std::size_t n, std::size_t m, std::size_t k, double density,
                                   std::uint64_t seed) {
  if (n == 0 || m == 0 || k == 0) throw ConfigError("gen_synthetic: n, m, k must be positive");
  if (!(density > 0.0 && density < 1.0)) throw ConfigError("gen_synthetic: density must be in (0,1)");
  Rng rng(seed);
  Matrix w(n, k);
  for (double& x : w.data()) x = uniform(rng, 0.0, 1.0 / static_cast<double>(k));
  BinaryMatrix h(k, m);
  for (std::size_t c = 0; c < m; ++c) {
    bool any = false;
    for (std::size_t r = 0; r < k; ++r) {
      const bool bit = bernoulli(rng, density);
      h.set(r, c, bit);
      any = any || bit;
    }
    if (!any) h.set(uniform_index(rng, k), c, true);
  }
  bool clamped = false;
  Matrix v = detail::clamp_unit(matmul(w, h), clamped);

  std::map<std::string, std::size_t> ids;
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < m; ++c) {
    auto [it, inserted] = ids.emplace(detail::code_key(h, c), ids.size());
    labels.push_back("c" + std::to_string(it->second));
  }
  const auto [height, width] = detail::image_shape_for(n);
  return {{std::move(v), std::move(labels), height, width}, std::move(w), std::move(h), clamped};
}

/// Held-out images generated from the same W_true: each test image reuses the
/// code (and label) of a uniformly chosen training column, plus uniform noise
/// in [-noise, noise], clamped to [0, 1].
inline LabeledDataset gen_held_out(const SyntheticData& train, std::size_t test_m, double noise,
                                   std::uint64_t seed) {
  if (test_m == 0) throw ConfigError("gen_held_out: test_m must be positive");
  if (!(noise >= 0.0)) throw ConfigError("gen_held_out: noise must be nonnegative");
  Rng rng(seed);
  const std::size_t k = train.h_true.rows();
  BinaryMatrix codes(k, test_m);
  std::vector<std::string> labels;
  for (std::size_t c = 0; c < test_m; ++c) {
    const std::size_t source = uniform_index(rng, train.h_true.cols());
    codes.set_column(c, train.h_true.column(source));
    labels.push_back(train.dataset.labels[source]);
  }
  Matrix v = matmul(train.w_true, codes);
  for (double& x : v.data()) x = std::clamp(x + uniform(rng, -noise, noise), 0.0, 1.0);
  return {std::move(v), std::move(labels), train.dataset.height, train.dataset.width};
}

/// Labeled benchmark with one distinct planted binary code per class.
struct ClassBenchmark {
  LabeledDataset train;
  LabeledDataset test;
  Matrix w_true;
  BinaryMatrix class_codes;  // k x classes
};

/// Every image of class c is clamp(W_true * code_c + U[-noise, noise]).
/// Class codes are distinct, nonzero Bernoulli(density) vectors.
inline ClassBenchmark gen_planted_classes(std::size_t n, std::size_t k, std::size_t classes,
                                          std::size_t train_per_class, std::size_t test_per_class,
                                          double noise, double density, std::uint64_t seed) {
  if (n == 0 || k == 0 || classes == 0 || train_per_class == 0 || test_per_class == 0) {
    throw ConfigError("gen_planted_classes: sizes must be positive");
  }
  if (k < 64 && classes >= (std::uint64_t{1} << k)) {
    throw ConfigError("gen_planted_classes: not enough distinct nonzero codes for the class count");
  }
  if (!(density > 0.0 && density < 1.0) || !(noise >= 0.0)) {
    throw ConfigError("gen_planted_classes: need 0 < density < 1 and noise >= 0");
  }
  Rng rng(seed);
  Matrix w(n, k);
  for (double& x : w.data()) x = uniform(rng, 0.0, 1.0 / static_cast<double>(k));

  BinaryMatrix codes(k, classes);
  std::map<std::string, bool> seen;
  for (std::size_t c = 0; c < classes;) {
    BitVector code(k);
    bool any = false;
    for (auto& b : code) {
      b = bernoulli(rng, density) ? 1 : 0;
      any = any || b;
    }
    std::string key(code.begin(), code.end());
    if (!any || !seen.emplace(key, true).second) continue;
    codes.set_column(c, code);
    ++c;
  }
  const auto [height, width] = detail::image_shape_for(n);
  auto make_split = [&](std::size_t per_class) {
    Matrix v(n, classes * per_class);
    std::vector<std::string> labels;
    for (std::size_t c = 0; c < classes; ++c) {
      const auto code = codes.column(c);
      for (std::size_t rep = 0; rep < per_class; ++rep) {
        const std::size_t col = c * per_class + rep;
        for (std::size_t r = 0; r < n; ++r) {
          double x = 0.0;
          for (std::size_t i = 0; i < k; ++i)
            if (code[i]) x += w(r, i);
          v(r, col) = std::clamp(x + uniform(rng, -noise, noise), 0.0, 1.0);
        }
        labels.push_back("class" + std::to_string(c));
      }
    }
    return LabeledDataset{std::move(v), std::move(labels), height, width};
  };
  LabeledDataset train = make_split(train_per_class);
  LabeledDataset test = make_split(test_per_class);
  return {std::move(train), std::move(test), std::move(w), std::move(codes)};
}

/// Model directory: W.csv, H.csv, meta.json, trace.csv.
inline void save_model(const FactorModel& model, const std::filesystem::path& dir) {
  model.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create '" + dir.string() + "': " + ec.message());

  io::write_file_atomic(dir / "W.csv", io::matrix_to_csv(model.w));
  io::write_file_atomic(dir / "H.csv", std::visit([](const auto& h) { return io::matrix_to_csv(h); }, model.h));

  nlohmann::ordered_json meta;
  meta["method"] = method_name(model.method);
  meta["n"] = model.n();
  meta["k"] = model.k();
  meta["m"] = model.m();
  meta["alpha"] = model.alpha;
  meta["seed"] = model.seed;
  meta["iterations"] = model.iterations;
  meta["converged"] = model.converged;
  meta["labels"] = model.labels;
  io::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");

  std::string trace = "iteration,mean_rmse,wall_ms\n";
  for (const auto& t : model.trace) {
    trace += std::to_string(t.iteration) + "," + io::format_double(t.mean_rmse) + "," +
             io::format_double(t.wall_ms) + "\n";
  }
  io::write_file_atomic(dir / "trace.csv", trace);
}

inline FactorModel load_model(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("model directory '" + dir.string() + "' not found");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(io::read_file(dir / "meta.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("meta.json: " + std::string(e.what()));
  }

  try {
    const Method method = parse_method(meta.at("method").get<std::string>());
    Matrix w = io::matrix_from_csv(io::read_file(dir / "W.csv"), "W.csv");
    Matrix h_real = io::matrix_from_csv(io::read_file(dir / "H.csv"), "H.csv");

    std::variant<BinaryMatrix, Matrix> h = method == Method::nbmf
                                                ? std::variant<BinaryMatrix, Matrix>(BinaryMatrix::from_real(h_real))
                                                : std::variant<BinaryMatrix, Matrix>(std::move(h_real));
    FactorModel model{method, std::move(w), std::move(h)};
    model.alpha = meta.at("alpha").get<double>();
    model.seed = meta.at("seed").get<std::uint64_t>();
    model.iterations = meta.at("iterations").get<std::size_t>();
    model.converged = meta.value("converged", false);
    model.labels = meta.value("labels", std::vector<std::string>{});
    if (meta.at("k").get<std::size_t>() != model.k() || meta.at("n").get<std::size_t>() != model.n() ||
        meta.at("m").get<std::size_t>() != model.m()) {
      throw DataError("meta.json shape does not match W.csv/H.csv");
    }

    const auto trace_lines = io::lines_of(io::read_file(dir / "trace.csv"));
    for (std::size_t i = 1; i < trace_lines.size(); ++i) {
      const auto f = io::split(trace_lines[i]);
      if (f.size() != 3) throw DataError("trace.csv line " + std::to_string(i + 1) + " malformed");
      model.trace.push_back({io::parse_size(f[0], "trace.csv"), io::parse_double(f[1], "trace.csv"),
                             io::parse_double(f[2], "trace.csv")});
    }
    model.validate();
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("meta.json: " + std::string(e.what()));
  }
}

}  // namespace nbmf
