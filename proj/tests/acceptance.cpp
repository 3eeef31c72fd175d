// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "tensorkernel/tensorkernel.hpp"

using namespace tk;

namespace {

int failures = 0;

void report(const char* id, bool ok, const std::string& detail, double seconds) {
  std::printf("%s %s: %s (%.1fs)\n", ok ? "PASS" : "FAIL", id, detail.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

double now() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void ac1() {
  const double t0 = now();
  struct Row {
    std::uint64_t n, c2, c3, c4;
    double p2, p3, p4;
  };
  const Row table[] = {
      {10, 55, 220, 715, 45.00, 78.00, 92.85},        {20, 210, 1540, 8855, 47.50, 80.75, 94.47},
      {30, 465, 4960, 40920, 48.33, 81.63, 94.95},    {40, 820, 11480, 123410, 48.75, 82.06, 95.18},
      {50, 1275, 22100, 292825, 49.00, 82.32, 95.31}, {100, 5050, 171700, 4421275, 49.50, 82.83, 95.58},
  };
  bool ok = true;
  double worst = 0.0;
  for (const auto& r : table) {
    ok = ok && unique_count(r.n, 2) == r.c2 && simplex_count(r.n, 3) == r.c3 && unique_count(r.n, 4) == r.c4;
    const std::pair<unsigned, double> pcts[] = {{2, r.p2}, {3, r.p3}, {4, r.p4}};
    for (auto [q, p] : pcts) {
      const double got = 100.0 * memory_report(r.n, q).reduction_fraction;
      worst = std::max(worst, std::abs(got - p));
    }
  }
  // Published percentages are rounded to two decimals.
  ok = ok && worst <= 0.005 + 1e-9;
  report("AC1 unique-entry counts", ok, fmt("18 counts exact, max percentage deviation %.4f", worst), now() - t0);
}

void ac2() {
  const double t0 = now();
  bool ok = true;
  std::size_t checked = 0;
  for (std::uint32_t n = 1; n <= 12; ++n) {
    for (unsigned q : {2u, 4u}) {
      IndexScheme s(n, q);
      const auto all = oracle::canonical_tuples(n, q);
      ok = ok && all.size() == s.size();
      for (std::size_t slot = 0; slot < all.size() && ok; ++slot) {
        ok = s.rank(all[slot]) == slot && s.unrank(slot).values() == all[slot];
        ++checked;
      }
    }
  }
  std::mt19937_64 gen(2024);
  IndexScheme s(12, 4);
  std::uniform_int_distribution<index_t> pick(0, 11);
  for (int trial = 0; trial < 1000 && ok; ++trial) {
    std::vector<index_t> t{pick(gen), pick(gen), pick(gen), pick(gen)};
    auto sorted = t;
    std::sort(sorted.begin(), sorted.end());
    std::shuffle(t.begin(), t.end(), gen);
    ok = s.rank(t) == s.rank(sorted);
  }
  report("AC2 index bijectivity", ok, fmt("%.0f slots round-tripped, 1000 shuffles", static_cast<double>(checked)),
         now() - t0);
}

void ac3() {
  const double t0 = now();
  bool ok = true;
  std::size_t entries = 0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const std::size_t n = 6 + 2 * (seed % 4);
    const std::size_t d = 5 + 3 * seed;
    const auto x = oracle::dyadic_matrix(n, d, 900 + seed);
    for (const auto& spec : {TensorKernelSpec::linear(4), TensorKernelSpec::polynomial(2, 4)}) {
      const auto packed = build_packed_gram(spec, x);
      const auto dense = build_dense_gram_matrix(spec, x);
      oracle::for_each_tuple(static_cast<std::uint32_t>(n), 4, [&](const oracle::Tuple& t) {
        const index_t left[] = {t[0], t[1]};
        const index_t right[] = {t[2], t[3]};
        ok = ok && dense.at(left, right) == packed.get(t);
        ++entries;
      });
    }
  }
  report("AC3 packed equals dense", ok, fmt("%.0f entries compared exactly", static_cast<double>(entries)),
         now() - t0);
}

void ac4() {
  const double t0 = now();
  double worst_closed = 0.0, worst_fd = 0.0;
  for (unsigned q : {2u, 4u}) {
    for (std::uint64_t s = 0; s < 20; ++s) {
      const std::size_t n = 5 + s % 6;
      const auto x = oracle::gaussian_matrix(n, 4 + s % 5, 1000 + 31 * s + q, 0.6);
      const auto y = oracle::gaussian_vector(n, 2000 + s);
      const auto a = oracle::gaussian_vector(n, 3000 + s, 0.4);
      const double gamma = 0.5 + 0.25 * static_cast<double>(s % 5);
      const auto k = build_packed_gram(TensorKernelSpec::linear(q), x);
      const auto g = dual_gradient(k, y, gamma, a);
      worst_closed = std::max(worst_closed, oracle::rel_err(g, oracle::linear_dual_gradient(x, y, gamma, q, a)));
      const auto fd = oracle::finite_difference(
          [&](const std::vector<double>& v) { return dual_objective(k, y, gamma, v); }, a, 1e-5);
      worst_fd = std::max(worst_fd, oracle::rel_err(g, fd));
    }
  }
  report("AC4 gradient correctness", worst_closed <= 1e-10 && worst_fd <= 1e-5,
         fmt("closed-form rel %.2e, finite-difference rel %.2e", worst_closed, worst_fd), now() - t0);
}

void ac5() {
  const double t0 = now();
  double worst_alpha = 0.0, worst_gap = 0.0;
  TrainConfig cfg;
  cfg.gamma = 1.0;
  cfg.max_iters = 20000;
  cfg.rel_tol = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t n = 10 + s;
    const std::size_t d = 5 + s % 10;
    const auto x = oracle::gaussian_matrix(n, d, 4000 + s, 1.0 / std::sqrt(static_cast<double>(d)));
    const auto y = oracle::gaussian_vector(n, 5000 + s);
    const auto k = build_packed_gram(TensorKernelSpec::linear(2), x);
    const auto sol = solve_dual(k, y, cfg);
    const auto ref = krr_closed_form(x, y, cfg.gamma);
    worst_alpha = std::max(worst_alpha, oracle::rel_err(sol.alpha, ref));
    worst_gap = std::max(worst_gap, std::abs(dual_objective(k, y, cfg.gamma, sol.alpha) -
                                             dual_objective(k, y, cfg.gamma, ref)));
  }
  report("AC5 ridge oracle", worst_alpha <= 1e-6 && worst_gap <= 1e-8,
         fmt("alpha rel %.2e, objective gap %.2e", worst_alpha, worst_gap), now() - t0);
}

void ac6() {
  const double t0 = now();
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const std::size_t m = 3 + s % 10;
    const std::size_t d = 2 + s % 7;
    const auto x = oracle::gaussian_matrix(m, d, 6000 + s);
    Model model;
    model.kernel = TensorKernelSpec::linear(4);
    model.standardizer = Standardizer::fit(x);
    model.retained_points = model.standardizer.apply(x);
    model.alpha = oracle::gaussian_vector(m, 7000 + s, 0.3);
    model.weights = recover_weights(model.retained_points, model.alpha, 4);
    const auto point = oracle::gaussian_vector(d, 8000 + s, 1.5);
    worst = std::max(worst, oracle::rel_err(predict_generic(model, point), predict_linear_fast(model, point)));
  }
  report("AC6 prediction identity", worst <= 1e-9, fmt("max rel %.2e over 100 pairs", worst), now() - t0);
}

// Shared synthetic setup for the recovery, gamma-shape and subsampling criteria.
const std::vector<double> kGammas{0.01, 0.1, 1.0, 10.0, 100.0};
constexpr std::size_t kTrain = 300, kVal = 200, kDim = 500, kSparsity = 10, kM = 100;
constexpr unsigned kIters = 400;

struct Sweep {
  std::vector<double> val_mse;
  std::vector<std::size_t> true_pos;
  [[nodiscard]] std::size_t best() const {
    return static_cast<std::size_t>(std::min_element(val_mse.begin(), val_mse.end()) - val_mse.begin());
  }
};

struct Problem {
  Dataset full;
  SplitResult parts;
};

Problem synthetic(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n = kTrain + kVal;
  spec.d = kDim;
  spec.sparsity = kSparsity;
  spec.sigma = 0.05;
  spec.seed = seed;
  Problem p{gen_synthetic(spec), {}};
  p.parts = split(p.full, SplitSpec{kTrain, kVal, 0, seed});
  return p;
}

Sweep sweep(const Problem& p, std::size_t m, std::uint64_t seed) {
  const auto prep = prepare_subsample(p.parts.train.x, p.parts.train.y, TensorKernelSpec::linear(4),
                                      nystrom_sample(kTrain, m, seed));
  Sweep out;
  for (double gamma : kGammas) {
    TrainConfig cfg;
    cfg.gamma = gamma;
    cfg.max_iters = kIters;
    const auto fr = fit_prepared(prep, cfg);
    out.val_mse.push_back(mse(predict_batch(fr.model, p.parts.validation.x), p.parts.validation.y));
    out.true_pos.push_back(*select_features(fr.model, p.full.truth->support).true_positive);
  }
  return out;
}

Sweep seed_one_m100;

void ac7_ac8() {
  const double t0 = now();
  double tp_sum = 0.0;
  int shaped = 0;
  std::string tps, shapes;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto s = sweep(synthetic(seed), kM, seed);
    if (seed == 1) seed_one_m100 = s;
    const std::size_t b = s.best();
    tp_sum += static_cast<double>(s.true_pos[b]);
    tps += (seed > 1 ? "," : "") + std::to_string(s.true_pos[b]);
    const double interior = *std::min_element(s.val_mse.begin() + 1, s.val_mse.end() - 1);
    const bool u = s.val_mse.front() > interior && s.val_mse.back() > interior;
    shaped += u ? 1 : 0;
    shapes += u ? "U" : "-";
  }
  const double t = now() - t0;
  const double mean_tp = tp_sum / 5.0;
  report("AC7 sparsity recovery", mean_tp >= 8.0,
         fmt("mean true positives %.1f of 10 at best gamma", mean_tp) + " (per seed " + tps + ")", t);
  report("AC8 gamma shape", shaped >= 4, fmt("%.0f of 5 seeds", shaped) + " (" + shapes + ")", 0.0);
}

void ac9() {
  const double t0 = now();
  const auto p = synthetic(1);
  std::vector<double> best;
  for (std::size_t m : {60u, 100u, 140u}) {
    const auto s = m == kM && !seed_one_m100.val_mse.empty() ? seed_one_m100 : sweep(p, m, 1);
    best.push_back(s.val_mse[s.best()]);
  }
  const double lo = *std::min_element(best.begin(), best.end());
  const double hi = *std::max_element(best.begin(), best.end());
  const double spread = (hi - lo) / lo;

  // Full-sample plan against the unsubsampled fit on a reduced training set.
  const std::size_t n = 60;
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = p.parts.train_rows[i];
  const auto small = p.full.subset(rows);
  TrainConfig cfg;
  cfg.max_iters = 50;
  const auto a = fit(small.x, small.y, TensorKernelSpec::linear(4), cfg);
  const auto b = fit(small.x, small.y, TensorKernelSpec::linear(4), cfg, nystrom_sample(n, n, 1));
  const bool bitwise = a.alpha == b.alpha && *a.weights == *b.weights;

  report("AC9 subsampling stability", spread < 0.5 && bitwise,
         fmt("best val mse %.4f / %.4f / %.4f", best[0], best[1], best[2]) +
             fmt(" for m=60/100/140, spread %.3f", spread) + (bitwise ? ", m==n bitwise" : ", m==n differs"),
         now() - t0);
}

void ac10() {
  const double t0 = now();
  const std::size_t n = 200, cap = 150;
  const auto x = oracle::gaussian_matrix(n, 3, 11);
  bool refused = false;
  try {
    (void)build_dense_gram_matrix(TensorKernelSpec::linear(4), x, cap);
  } catch (const CapacityError&) {
    refused = true;
  }
  const auto packed = build_packed_gram(TensorKernelSpec::linear(4), x);
  const auto rep = memory_report(n, 4);
  const double ratio = static_cast<double>(rep.packed_entries) / rep.dense_entries;
  const double expect = static_cast<double>(unique_count(n, 4)) / std::pow(static_cast<double>(n), 4);
  const bool ok = refused && packed.size() == unique_count(n, 4) && std::abs(ratio - expect) <= 1e-15 * expect;
  report("AC10 capacity behavior", ok,
         std::string(refused ? "dense refused" : "dense not refused") +
             fmt(" at n=%.0f, packed %.0f entries, ratio %.6f", static_cast<double>(n),
                 static_cast<double>(packed.size()), ratio),
         now() - t0);
}

}  // namespace

int main() {
  ac1();
  ac2();
  ac3();
  ac4();
  ac5();
  ac6();
  ac7_ac8();
  ac9();
  ac10();
  std::printf("%s: %d failing\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
