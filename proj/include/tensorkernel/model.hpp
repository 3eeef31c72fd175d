#pragma once

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tensorkernel/data.hpp"
#include "tensorkernel/error.hpp"
#include "tensorkernel/kernels.hpp"
#include "tensorkernel/matrix.hpp"
#include "tensorkernel/random.hpp"
#include "tensorkernel/solver.hpp"
#include "tensorkernel/symtensor.hpp"

namespace tk {

/// The m training rows a model is fitted on.
struct NystromPlan {
  std::size_t n_train = 0;
  std::size_t m = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> indices;  // distinct, ascending

  friend bool operator==(const NystromPlan&, const NystromPlan&) = default;
};

/// Uniform sample of m rows out of n_train without replacement.
inline NystromPlan nystrom_sample(std::size_t n_train, std::size_t m, std::uint64_t seed) {
  if (m == 0 || m > n_train) {
    throw InvalidArgumentError("subsample size m = " + std::to_string(m) + " must lie in [1, " +
                               std::to_string(n_train) + "]");
  }
  RandomStream rng(seed, 0);
  auto drawn = rng.sample_without_replacement(n_train, m);
  NystromPlan plan{n_train, m, seed, {drawn.begin(), drawn.end()}};
  std::sort(plan.indices.begin(), plan.indices.end());
  return plan;
}

/// Every training row; what nystrom_sample returns for m == n_train.
inline NystromPlan full_plan(std::size_t n_train, std::uint64_t seed = 0) {
  NystromPlan plan{n_train, n_train, seed, std::vector<std::size_t>(n_train)};
  for (std::size_t i = 0; i < n_train; ++i) plan.indices[i] = i;
  return plan;
}

/// Per-feature (x - mean) / std. Columns without spread keep std = 1.
struct Standardizer {
  Vector means;
  Vector stds;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    const std::size_t n = x.rows(), d = x.cols();
    s.means.assign(d, 0.0);
    s.stds.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = x.row(i);
      for (std::size_t j = 0; j < d; ++j) s.means[j] += r[j];
    }
    for (auto& m : s.means) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto r = x.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        const double c = r[j] - s.means[j];
        s.stds[j] += c * c;
      }
    }
    for (auto& v : s.stds) {
      v = std::sqrt(v / static_cast<double>(n));
      if (!(v > 0.0) || !std::isfinite(v)) v = 1.0;
    }
    return s;
  }

  [[nodiscard]] Vector apply(std::span<const double> x) const {
    require_shape(x.size() == means.size(), "point has dimension " + std::to_string(x.size()) +
                                                ", model expects " + std::to_string(means.size()));
    Vector out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - means[j]) / stds[j];
    return out;
  }

  [[nodiscard]] Matrix apply(const Matrix& x) const {
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto v = apply(x.row(i));
      std::copy(v.begin(), v.end(), out.row(i).begin());
    }
    return out;
  }
};

/// A fitted estimator: everything prediction needs and nothing else.
struct Model {
  TensorKernelSpec kernel = TensorKernelSpec::linear();
  Matrix retained_points;  // m x d, standardized
  Vector alpha;
  Standardizer standardizer;
  std::optional<Vector> weights;  // linear kernel only: J_q(X̃ᵀ alpha)

  [[nodiscard]] std::size_t dim() const noexcept { return retained_points.cols(); }
};

/// Primal weights of the linear tensor kernel, w_j = ((X̃ᵀ alpha)_j)^(q-1).
inline Vector recover_weights(const Matrix& retained, std::span<const double> alpha, unsigned q) {
  return duality_map(multiply_transposed(retained, alpha), static_cast<double>(q));
}

/// Standardized retained rows and their packed Gram tensor. Independent of
/// gamma, so one preparation serves a whole row of a grid search.
struct PreparedSubsample {
  TensorKernelSpec kernel;
  Standardizer standardizer;
  Matrix retained;
  Vector y;
  PackedSymTensor gram;
  GramBuildStats gram_stats;
};

inline PreparedSubsample prepare_subsample(const Matrix& x_train, std::span<const double> y_train,
                                           const TensorKernelSpec& kernel, const NystromPlan& plan) {
  require_shape(x_train.rows() == y_train.size(), "training rows and labels differ in count");
  require_shape(plan.n_train == x_train.rows(), "subsample plan was drawn for a different training set");
  if (plan.indices.empty()) throw InvalidArgumentError("empty subsample plan");
  for (auto i : plan.indices) {
    if (i >= x_train.rows()) throw BoundsError("subsample index out of range");
  }
  Matrix raw = x_train.select_rows(plan.indices);
  Standardizer st = Standardizer::fit(raw);
  Matrix retained = st.apply(raw);
  Vector y;
  y.reserve(plan.indices.size());
  for (auto i : plan.indices) y.push_back(y_train[i]);
  GramBuildStats stats;
  PackedSymTensor gram = build_packed_gram(kernel, retained, &stats);
  return {kernel, std::move(st), std::move(retained), std::move(y), std::move(gram), stats};
}

struct FitResult {
  Model model;
  DualSolution solution;
  GramBuildStats gram_stats;
};

inline FitResult fit_prepared(const PreparedSubsample& prep, const TrainConfig& cfg) {
  FitResult out;
  out.solution = solve_dual(prep.gram, prep.y, cfg);
  out.gram_stats = prep.gram_stats;
  Model& m = out.model;
  m.kernel = prep.kernel;
  m.retained_points = prep.retained;
  m.alpha = out.solution.alpha;
  m.standardizer = prep.standardizer;
  if (m.kernel.family() == KernelFamily::linear) {
    m.weights = recover_weights(m.retained_points, m.alpha, m.kernel.q());
  }
  return out;
}

/// Standardize the plan's rows, build their Gram tensor, solve the dual and,
/// for the linear kernel, recover primal weights.
inline FitResult fit_detailed(const Matrix& x_train, std::span<const double> y_train,
                              const TensorKernelSpec& kernel, const TrainConfig& cfg,
                              const NystromPlan& plan) {
  cfg.validate();
  return fit_prepared(prepare_subsample(x_train, y_train, kernel, plan), cfg);
}

inline Model fit(const Matrix& x_train, std::span<const double> y_train, const TensorKernelSpec& kernel,
                 const TrainConfig& cfg, const NystromPlan& plan) {
  return fit_detailed(x_train, y_train, kernel, cfg, plan).model;
}

/// Fit on the whole training set.
inline Model fit(const Matrix& x_train, std::span<const double> y_train, const TensorKernelSpec& kernel,
                 const TrainConfig& cfg) {
  return fit(x_train, y_train, kernel, cfg, full_plan(x_train.rows(), cfg.seed));
}

/// f(x) = sum over (q-1)-tuples of retained points of
/// k(x_{i_1}, ..., x_{i_{q-1}}, x) alpha_{i_1} ... alpha_{i_{q-1}}.
///
/// Only canonical (q-1)-tuples are visited; each is weighted by its number of
/// distinct orderings. Cost is O(C(m+q-2, q-1) * d).
inline double predict_generic(const Model& model, std::span<const double> x) {
  const Vector z = model.standardizer.apply(x);
  const std::size_t m = model.retained_points.rows();
  require_shape(m == model.alpha.size(), "model alpha does not match its retained points");
  const unsigned depth = model.kernel.q() - 1;
  auto scheme = IndexScheme::any_order(static_cast<index_t>(m), depth);
  std::vector<std::span<const double>> points(depth + 1);
  points[depth] = z;
  double total = 0.0;
  for (const auto& item : iter_canonical(scheme)) {
    double coeff = static_cast<double>(item.multiplicity.total_perms);
    for (unsigned r = 0; r < depth; ++r) {
      coeff *= model.alpha[item.index[r]];
      points[r] = model.retained_points.row(item.index[r]);
    }
    if (coeff == 0.0) continue;
    total += coeff * kernel_eval(model.kernel, std::span<const std::span<const double>>(points));
  }
  return total;
}

/// <w, standardize(x)>; linear kernel only.
inline double predict_linear_fast(const Model& model, std::span<const double> x) {
  if (model.kernel.family() != KernelFamily::linear || !model.weights) {
    throw UnsupportedError("fast prediction needs a linear-kernel model with weights");
  }
  return dot(*model.weights, model.standardizer.apply(x));
}

inline double predict(const Model& model, std::span<const double> x) {
  return model.weights ? predict_linear_fast(model, x) : predict_generic(model, x);
}

inline Vector predict_batch(const Model& model, const Matrix& x) {
  Vector out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(model, x.row(i));
  return out;
}

struct SelectionReport {
  double threshold = 0.0;  // 2 * population std of the weights
  double mean = 0.0;
  double std = 0.0;
  std::vector<std::size_t> selected;
  /// All weights equal (std = 0); every nonzero weight is selected.
  bool degenerate = false;
  std::optional<std::size_t> true_positive;
  std::optional<std::size_t> false_positive;
};

/// Keeps features with |w_j| strictly above twice the standard deviation of w.
inline SelectionReport select_features(std::span<const double> weights,
                                       const std::optional<std::vector<std::size_t>>& truth = std::nullopt) {
  SelectionReport r;
  const auto d = static_cast<double>(weights.size());
  if (weights.empty()) throw InvalidArgumentError("no weights to select from");
  for (double w : weights) r.mean += w;
  r.mean /= d;
  double var = 0.0;
  for (double w : weights) var += (w - r.mean) * (w - r.mean);
  r.std = std::sqrt(var / d);
  r.threshold = 2.0 * r.std;
  r.degenerate = r.std == 0.0;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (std::abs(weights[j]) > r.threshold) r.selected.push_back(j);
  }
  if (truth) {
    std::size_t tp = 0;
    for (auto j : r.selected) {
      if (std::binary_search(truth->begin(), truth->end(), j)) ++tp;
    }
    r.true_positive = tp;
    r.false_positive = r.selected.size() - tp;
  }
  return r;
}

inline SelectionReport select_features(const Model& model,
                                       const std::optional<std::vector<std::size_t>>& truth = std::nullopt) {
  if (model.kernel.family() != KernelFamily::linear || !model.weights) {
    throw UnsupportedError("feature selection needs a linear-kernel model");
  }
  std::optional<std::vector<std::size_t>> sorted = truth;
  if (sorted) std::sort(sorted->begin(), sorted->end());
  return select_features(*model.weights, sorted);
}

// ---------------------------------------------------------------------------
// Serialization. Numbers are written with 17 significant digits.

namespace detail {
inline void append_number(std::string& out, double v) {
  if (!std::isfinite(v)) throw NumericError("cannot serialize a non-finite number");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline void append_array(std::string& out, std::span<const double> values) {
  out += '[';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    append_number(out, values[i]);
  }
  out += ']';
}
}  // namespace detail

inline std::string model_to_json(const Model& m) {
  std::string out = "{\"kernel\":\"";
  out += m.kernel.name();
  out += "\",\"q\":" + std::to_string(m.kernel.q());
  if (m.kernel.degree()) out += ",\"degree\":" + std::to_string(*m.kernel.degree());
  out += ",\"means\":";
  detail::append_array(out, m.standardizer.means);
  out += ",\"stds\":";
  detail::append_array(out, m.standardizer.stds);
  out += ",\"retained_points\":[";
  for (std::size_t i = 0; i < m.retained_points.rows(); ++i) {
    if (i) out += ',';
    detail::append_array(out, m.retained_points.row(i));
  }
  out += "],\"alpha\":";
  detail::append_array(out, m.alpha);
  if (m.weights) {
    out += ",\"weights\":";
    detail::append_array(out, *m.weights);
  }
  out += "}\n";
  return out;
}

inline Model model_from_json(const std::string& text) {
  Model m;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto family = j.at("kernel").get<std::string>();
    const auto q = j.at("q").get<unsigned>();
    m.kernel = TensorKernelSpec::parse(family, q, j.value("degree", 1u));
    m.standardizer.means = j.at("means").get<Vector>();
    m.standardizer.stds = j.at("stds").get<Vector>();
    const auto rows = j.at("retained_points").get<std::vector<Vector>>();
    const std::size_t d = m.standardizer.means.size();
    std::vector<double> flat;
    flat.reserve(rows.size() * d);
    for (const auto& r : rows) {
      require_shape(r.size() == d, "retained point dimension differs from means");
      flat.insert(flat.end(), r.begin(), r.end());
    }
    m.retained_points = Matrix(rows.size(), d, std::move(flat));
    m.alpha = j.at("alpha").get<Vector>();
    if (j.contains("weights")) m.weights = j.at("weights").get<Vector>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad model document: ") + e.what());
  }
  require_shape(m.standardizer.stds.size() == m.standardizer.means.size(), "means and stds differ in length");
  require_shape(m.alpha.size() == m.retained_points.rows(), "alpha length differs from retained point count");
  if (m.weights) require_shape(m.weights->size() == m.dim(), "weights length differs from dimension");
  if ((m.kernel.family() == KernelFamily::linear) != m.weights.has_value()) {
    throw ParseError("weights must be present exactly for the linear kernel");
  }
  return m;
}

}  // namespace tk
