#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "tensorkernel/data.hpp"
#include "tensorkernel/error.hpp"
#include "tensorkernel/kernels.hpp"
#include "tensorkernel/model.hpp"
#include "tensorkernel/random.hpp"
#include "tensorkernel/solver.hpp"

namespace tk {

/// Mean of squared residuals.
inline double mse(std::span<const double> pred, std::span<const double> y) {
  require_shape(pred.size() == y.size(), "prediction and label counts differ");
  if (y.empty()) throw InvalidArgumentError("mse of an empty set");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = pred[i] - y[i];
    acc += r * r;
  }
  return acc / static_cast<double>(y.size());
}

struct Timing {
  double gram_build_seconds = 0.0;
  double solve_seconds = 0.0;
};

struct EvalReport {
  double mse = 0.0;
  std::size_t count = 0;
  std::optional<std::size_t> true_positive;
  std::optional<std::size_t> false_positive;
  Timing timing;
};

inline EvalReport evaluate(const Model& model, const Dataset& data, Timing timing = {}) {
  data.validate();
  EvalReport r;
  r.mse = mse(predict_batch(model, data.x), data.y);
  r.count = data.size();
  r.timing = timing;
  return r;
}

struct GridRow {
  std::size_t m = 0;
  double gamma = 0.0;
  unsigned rep = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double gram_seconds = 0.0;
  double solve_seconds = 0.0;
};

/// Mean and population std of validation/train MSE over repetitions.
struct GridCell {
  std::size_t m = 0;
  double gamma = 0.0;
  double val_mse_mean = 0.0;
  double val_mse_std = 0.0;
  double train_mse_mean = 0.0;
  unsigned reps = 0;
};

struct GridSearchOptions {
  std::vector<double> gammas;
  std::vector<std::size_t> ms;
  unsigned repetitions = 1;
  std::uint64_t seed = 42;
};

/// Seed of the subsample drawn for (m, repetition).
inline std::uint64_t plan_seed(std::uint64_t seed, std::size_t m, unsigned rep) {
  return derive_seed(seed, m, rep);
}

/// For every m and repetition: draw a subsample, build its Gram tensor once,
/// then fit and score each gamma. Rows come out ordered by (m, gamma, rep)
/// following the order of the option lists.
inline std::vector<GridRow> grid_search(const Dataset& train, const Dataset& val,
                                        const TensorKernelSpec& kernel, const GridSearchOptions& opt,
                                        const TrainConfig& base) {
  if (opt.gammas.empty() || opt.ms.empty()) throw InvalidArgumentError("grid search needs non-empty grids");
  if (opt.repetitions < 1) throw InvalidArgumentError("grid search needs at least one repetition");
  train.validate();
  val.validate();
  require_shape(train.dim() == val.dim(), "training and validation dimensions differ");

  std::vector<GridRow> rows(opt.ms.size() * opt.gammas.size() * opt.repetitions);
  auto row_index = [&](std::size_t mi, std::size_t gi, unsigned rep) {
    return (mi * opt.gammas.size() + gi) * opt.repetitions + rep;
  };
  for (std::size_t mi = 0; mi < opt.ms.size(); ++mi) {
    const std::size_t m = opt.ms[mi];
    for (unsigned rep = 0; rep < opt.repetitions; ++rep) {
      const auto plan = nystrom_sample(train.size(), m, plan_seed(opt.seed, m, rep));
      const auto prep = prepare_subsample(train.x, train.y, kernel, plan);
      for (std::size_t gi = 0; gi < opt.gammas.size(); ++gi) {
        TrainConfig cfg = base;
        cfg.gamma = opt.gammas[gi];
        const auto fitted = fit_prepared(prep, cfg);
        GridRow& row = rows[row_index(mi, gi, rep)];
        row.m = m;
        row.gamma = cfg.gamma;
        row.rep = rep;
        row.train_mse = mse(predict_batch(fitted.model, train.x), train.y);
        row.val_mse = mse(predict_batch(fitted.model, val.x), val.y);
        row.gram_seconds = prep.gram_stats.seconds;
        row.solve_seconds = fitted.solution.seconds;
      }
    }
  }
  return rows;
}

/// Collapses repetitions into one cell per (m, gamma), in row order.
inline std::vector<GridCell> summarize(std::span<const GridRow> rows) {
  std::vector<GridCell> cells;
  for (const auto& r : rows) {
    auto it = std::find_if(cells.begin(), cells.end(),
                           [&](const GridCell& c) { return c.m == r.m && c.gamma == r.gamma; });
    if (it == cells.end()) {
      cells.push_back({r.m, r.gamma, 0.0, 0.0, 0.0, 0});
      it = cells.end() - 1;
    }
    it->val_mse_mean += r.val_mse;
    it->train_mse_mean += r.train_mse;
    ++it->reps;
  }
  for (auto& c : cells) {
    c.val_mse_mean /= c.reps;
    c.train_mse_mean /= c.reps;
    double var = 0.0;
    for (const auto& r : rows) {
      if (r.m == c.m && r.gamma == c.gamma) var += (r.val_mse - c.val_mse_mean) * (r.val_mse - c.val_mse_mean);
    }
    c.val_mse_std = std::sqrt(var / c.reps);
  }
  return cells;
}

/// Lowest mean validation MSE; ties go to the smaller m, then the smaller gamma.
inline GridCell best_cell(std::span<const GridCell> cells) {
  if (cells.empty()) throw InvalidArgumentError("no grid cells");
  return *std::min_element(cells.begin(), cells.end(), [](const GridCell& a, const GridCell& b) {
    if (a.val_mse_mean != b.val_mse_mean) return a.val_mse_mean < b.val_mse_mean;
    if (a.m != b.m) return a.m < b.m;
    return a.gamma < b.gamma;
  });
}

inline void write_grid_csv(std::ostream& out, std::span<const GridRow> rows) {
  out << "m,gamma,rep,train_mse,val_mse,gram_seconds,solve_seconds\n";
  for (const auto& r : rows) {
    out << r.m << ',' << detail::format_double(r.gamma) << ',' << r.rep << ','
        << detail::format_double(r.train_mse) << ',' << detail::format_double(r.val_mse) << ','
        << detail::format_double(r.gram_seconds) << ',' << detail::format_double(r.solve_seconds) << '\n';
  }
}

}  // namespace tk
