#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "tensorkernel/error.hpp"
#include "tensorkernel/matrix.hpp"
#include "tensorkernel/random.hpp"

namespace tk {

struct GroundTruth {
  Vector w_true;
  std::vector<std::size_t> support;  // {j : w_true[j] != 0}, ascending
};

struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::string> feature_names;
  std::optional<GroundTruth> truth;

  [[nodiscard]] std::size_t size() const noexcept { return x.rows(); }
  [[nodiscard]] std::size_t dim() const noexcept { return x.cols(); }

  void validate() const {
    require_shape(x.rows() == y.size(), "dataset has " + std::to_string(x.rows()) + " rows but " +
                                            std::to_string(y.size()) + " labels");
    if (truth) require_shape(truth->w_true.size() == x.cols(), "ground truth has wrong dimension");
  }

  /// Rows in the given order; truth and names carried over.
  [[nodiscard]] Dataset subset(std::span<const std::size_t> rows) const {
    Dataset out;
    out.x = x.select_rows(rows);
    out.y.reserve(rows.size());
    for (auto r : rows) out.y.push_back(y[r]);
    out.feature_names = feature_names;
    out.truth = truth;
    return out;
  }
};

inline std::vector<std::size_t> support_of(std::span<const double> w) {
  std::vector<std::size_t> s;
  for (std::size_t j = 0; j < w.size(); ++j) {
    if (w[j] != 0.0) s.push_back(j);
  }
  return s;
}

/// Synthetic sparse regression problem: X ~ N(0,1) entrywise, s nonzero
/// weights with sign(h), h ~ N(0,1), times (1 - 0.3u), u ~ U[0,1), and
/// y = X w + sigma * eps with eps ~ N(0,1).
struct SyntheticSpec {
  std::size_t n = 100;
  std::size_t d = 50;
  std::size_t sparsity = 5;
  double sigma = 0.05;
  std::uint64_t seed = 42;

  void validate() const {
    if (n < 1 || d < 1) throw InvalidArgumentError("synthetic data needs n >= 1 and d >= 1");
    if (sparsity < 1 || sparsity > d) {
      throw InvalidArgumentError("sparsity s = " + std::to_string(sparsity) + " must lie in [1, d = " +
                                 std::to_string(d) + "]");
    }
    if (!(sigma >= 0.0)) throw InvalidArgumentError("noise sigma must be >= 0");
  }
};

// Substream ids for gen_synthetic.
inline constexpr std::uint64_t stream_features = 0;
inline constexpr std::uint64_t stream_support = 1;
inline constexpr std::uint64_t stream_signs = 2;
inline constexpr std::uint64_t stream_magnitudes = 3;
inline constexpr std::uint64_t stream_noise = 4;

inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.x = Matrix(spec.n, spec.d);
  RandomStream features(spec.seed, stream_features);
  for (double& v : ds.x.data()) v = features.normal();

  RandomStream positions(spec.seed, stream_support);
  auto drawn = positions.sample_without_replacement(spec.d, spec.sparsity);
  std::vector<std::size_t> support(drawn.begin(), drawn.end());
  std::sort(support.begin(), support.end());

  RandomStream signs(spec.seed, stream_signs);
  RandomStream magnitudes(spec.seed, stream_magnitudes);
  GroundTruth truth;
  truth.w_true.assign(spec.d, 0.0);
  for (std::size_t j : support) {
    const double sign = signs.normal() < 0.0 ? -1.0 : 1.0;
    truth.w_true[j] = sign * (1.0 - 0.3 * magnitudes.uniform());
  }
  truth.support = std::move(support);

  ds.y = multiply(ds.x, truth.w_true);
  RandomStream noise(spec.seed, stream_noise);
  for (double& v : ds.y) v += spec.sigma * noise.normal();
  ds.truth = std::move(truth);
  return ds;
}

struct SplitSpec {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
  std::uint64_t seed = 42;
};

struct SplitResult {
  Dataset train, validation, test;
  std::vector<std::size_t> train_rows, validation_rows, test_rows;
};

/// Random disjoint train/validation/test subsets. Rows inside each part keep
/// their original relative order.
inline SplitResult split(const Dataset& ds, const SplitSpec& spec) {
  ds.validate();
  const std::size_t total = spec.train + spec.validation + spec.test;
  if (total > ds.size()) {
    throw InvalidArgumentError("split sizes sum to " + std::to_string(total) + " but dataset has " +
                               std::to_string(ds.size()) + " rows");
  }
  RandomStream rng(spec.seed, 0);
  auto order = rng.sample_without_replacement(ds.size(), total);
  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(begin + count));
    std::sort(rows.begin(), rows.end());
    return rows;
  };
  SplitResult out;
  out.train_rows = take(0, spec.train);
  out.validation_rows = take(spec.train, spec.validation);
  out.test_rows = take(spec.train + spec.validation, spec.test);
  out.train = ds.subset(out.train_rows);
  out.validation = ds.subset(out.validation_rows);
  out.test = ds.subset(out.test_rows);
  return out;
}

// ---------------------------------------------------------------------------
// Text formats

inline constexpr std::string_view data_format_tag = "# tk-data v1";

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, ptr};
}

inline bool is_skippable(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

}  // namespace detail

/// Dense CSV: ',' separated, '.' decimals, optional header row, '#' comment
/// lines. `label_column` < 0 counts from the end (-1 = last column).
inline Dataset read_dense_csv(std::istream& in, int label_column = -1) {
  Dataset ds;
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t line_no = 0;
  bool seen_first = false;
  std::vector<std::string> header;
  std::string line;
  std::size_t label = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_skippable(line)) continue;
    auto fields = detail::split_fields(line, ',');
    if (!seen_first) {
      seen_first = true;
      width = fields.size();
      if (width < 2) throw ParseError("need at least one feature and one label column", line_no);
      const int resolved = label_column < 0 ? static_cast<int>(width) + label_column : label_column;
      if (resolved < 0 || resolved >= static_cast<int>(width)) {
        throw ParseError("label column " + std::to_string(label_column) + " out of range", line_no);
      }
      label = static_cast<std::size_t>(resolved);
      const bool numeric = std::all_of(fields.begin(), fields.end(),
                                       [](std::string_view f) { return detail::parse_double(f).has_value(); });
      if (!numeric) {
        for (auto f : fields) header.emplace_back(f);
        continue;
      }
    }
    if (fields.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    }
    for (std::size_t c = 0; c < width; ++c) {
      auto v = detail::parse_double(fields[c]);
      if (!v) throw ParseError("cannot parse '" + std::string(fields[c]) + "' as a number", line_no);
      if (c == label) {
        ds.y.push_back(*v);
      } else {
        values.push_back(*v);
      }
    }
  }
  if (ds.y.empty()) throw ParseError("no data rows found");
  ds.x = Matrix(ds.y.size(), width - 1, std::move(values));
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c != label) ds.feature_names.push_back(header[c]);
  }
  return ds;
}

inline Dataset load_dense_csv(const std::string& path, int label_column = -1) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_dense_csv(in, label_column);
}

/// Writes the tag line, a header and one row per example with the label last.
inline void write_dense_csv(std::ostream& out, const Dataset& ds) {
  ds.validate();
  out << data_format_tag << '\n';
  for (std::size_t c = 0; c < ds.dim(); ++c) {
    out << (c < ds.feature_names.size() ? ds.feature_names[c] : "x" + std::to_string(c)) << ',';
  }
  out << "y\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.x.row(r)) out << detail::format_double(v) << ',';
    out << detail::format_double(ds.y[r]) << '\n';
  }
  if (!out) throw IoError("failed writing dense CSV");
}

inline void save_dense_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_dense_csv(out, ds);
}

/// Sparse text: one example per line, "label idx:val idx:val ...", 0-based
/// indices. The dimension is `dim` when given, otherwise max index + 1.
inline Dataset read_sparse(std::istream& in, std::optional<std::size_t> dim = std::nullopt) {
  struct Entry {
    std::size_t row, col;
    double value;
  };
  std::vector<Entry> entries;
  Dataset ds;
  std::size_t max_col = 0;
  std::size_t line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_skippable(line)) continue;
    std::istringstream tokens(line);
    std::string tok;
    tokens >> tok;
    auto label = detail::parse_double(tok);
    if (!label) throw ParseError("cannot parse label '" + tok + "'", line_no);
    const std::size_t row = ds.y.size();
    ds.y.push_back(*label);
    while (tokens >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw ParseError("expected idx:val, found '" + tok + "'", line_no);
      std::size_t col = 0;
      const auto* b = tok.data();
      auto [ptr, ec] = std::from_chars(b, b + colon, col);
      if (ec != std::errc{} || ptr != b + colon) {
        throw ParseError("bad feature index in '" + tok + "'", line_no);
      }
      auto value = detail::parse_double(std::string_view(tok).substr(colon + 1));
      if (!value) throw ParseError("bad feature value in '" + tok + "'", line_no);
      if (dim && col >= *dim) {
        throw ParseError("feature index " + std::to_string(col) + " >= dimension " + std::to_string(*dim),
                         line_no);
      }
      max_col = std::max(max_col, col + 1);
      entries.push_back({row, col, *value});
    }
  }
  if (ds.y.empty()) throw ParseError("no data rows found");
  const std::size_t d = dim.value_or(std::max<std::size_t>(max_col, 1));
  ds.x = Matrix(ds.y.size(), d);
  for (const auto& e : entries) ds.x(e.row, e.col) = e.value;
  return ds;
}

inline Dataset load_sparse(const std::string& path, std::optional<std::size_t> dim = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return read_sparse(in, dim);
}

/// Loads by extension: ".svm"/".sparse"/".txt" as sparse, anything else as dense CSV.
inline Dataset load_dataset(const std::string& path) {
  auto ends_with = [&](std::string_view suffix) {
    return path.size() >= suffix.size() && path.compare(path.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".svm") || ends_with(".sparse") || ends_with(".txt")) return load_sparse(path);
  return load_dense_csv(path);
}

inline nlohmann::json truth_to_json(const GroundTruth& t) {
  return {{"w_true", t.w_true}, {"support", t.support}};
}

inline GroundTruth truth_from_json(const nlohmann::json& j) {
  GroundTruth t;
  try {
    if (j.contains("w_true")) t.w_true = j.at("w_true").get<Vector>();
    t.support = j.at("support").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad ground-truth document: ") + e.what());
  }
  std::sort(t.support.begin(), t.support.end());
  return t;
}

inline GroundTruth load_truth(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("invalid JSON in '") + path + "': " + e.what());
  }
  return truth_from_json(j);
}

}  // namespace tk
