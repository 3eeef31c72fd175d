#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "tensorkernel/error.hpp"
#include "tensorkernel/kernels.hpp"
#include "tensorkernel/matrix.hpp"
#include "tensorkernel/symtensor.hpp"

namespace tk {

/// Optimizer settings for the dual problem. Larger gamma means weaker
/// regularization (the dual carries ||alpha||^2 / (2 gamma)).
struct TrainConfig {
  double gamma = 1.0;
  unsigned max_iters = 40;
  double rel_tol = 1e-9;
  double armijo_c = 1e-4;
  double backtrack_factor = 0.5;
  double initial_step = 1.0;
  std::uint64_t seed = 42;

  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidArgumentError("gamma must be > 0");
    if (max_iters < 1) throw InvalidArgumentError("max_iters must be >= 1");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
      throw InvalidArgumentError("backtrack_factor must lie in (0, 1)");
    }
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) throw InvalidArgumentError("armijo_c must lie in (0, 1)");
    if (!(initial_step > 0.0)) throw InvalidArgumentError("initial_step must be > 0");
    if (!(rel_tol >= 0.0)) throw InvalidArgumentError("rel_tol must be >= 0");
  }
};

struct DualSolution {
  Vector alpha;
  std::vector<double> objective_trace;  // F(alpha_0), F(alpha_1), ...
  unsigned iters_run = 0;
  bool converged = false;
  /// The line search could not find a decrease (floating-point floor reached).
  bool stalled = false;
  double seconds = 0.0;
};

/// Exponent p = q / (q - 1) conjugate to q.
inline double conjugate_exponent(double q) { return q / (q - 1.0); }

/// Componentwise sign(u_i) |u_i|^(e-1), the gradient of (1/e)||u||_e^e.
/// Integer exponents use repeated multiplication.
inline Vector duality_map(std::span<const double> u, double exponent) {
  if (!(exponent > 1.0)) throw InvalidArgumentError("duality map exponent must be > 1");
  Vector out(u.size());
  const double power = exponent - 1.0;
  const bool integral = power == std::floor(power) && power <= 64.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = std::abs(u[i]);
    const double mag = integral ? detail::ipow(a, static_cast<unsigned>(power)) : std::pow(a, power);
    out[i] = u[i] < 0.0 ? -mag : (u[i] > 0.0 ? mag : 0.0);
  }
  return out;
}

struct DualEvaluation {
  double value = 0.0;
  Vector gradient;
};

namespace detail {
/// Adds the quadratic and linear terms to a contraction result.
inline DualEvaluation finish_dual(Contraction c, std::span<const double> y, double gamma,
                                  std::span<const double> alpha) {
  DualEvaluation out{c.objective, std::move(c.gradient)};
  const double inv_gamma = 1.0 / gamma;
  double sq = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    sq += alpha[i] * alpha[i];
    lin += y[i] * alpha[i];
    out.gradient[i] += alpha[i] * inv_gamma - y[i];
  }
  out.value += 0.5 * sq * inv_gamma - lin;
  return out;
}
}  // namespace detail

/// F(alpha) = (1/q) K·alpha^{⊗q} + ||alpha||^2 / (2 gamma) - <y, alpha> and its gradient.
inline DualEvaluation evaluate_dual(const PackedSymTensor& k, std::span<const double> y, double gamma,
                                    std::span<const double> alpha) {
  require_shape(y.size() == k.n(), "y length does not match the Gram tensor");
  require_shape(alpha.size() == k.n(), "alpha length does not match the Gram tensor");
  return detail::finish_dual(contract(k, alpha), y, gamma, alpha);
}

inline double dual_objective(const PackedSymTensor& k, std::span<const double> y, double gamma,
                             std::span<const double> alpha) {
  return evaluate_dual(k, y, gamma, alpha).value;
}

inline Vector dual_gradient(const PackedSymTensor& k, std::span<const double> y, double gamma,
                            std::span<const double> alpha) {
  return evaluate_dual(k, y, gamma, alpha).gradient;
}

namespace detail {
inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}
inline constexpr unsigned max_backtracks = 100;
}  // namespace detail

/// Gradient descent with Armijo backtracking from alpha = 0.
///
/// Each search starts at min(initial_step, 2 * previous accepted step) and
/// shrinks by `backtrack_factor` until F(alpha - eta g) <= F(alpha) -
/// armijo_c * eta * ||g||^2. Stops after `max_iters` accepted steps or when
/// |ΔF| <= rel_tol * max(1, |F|).
///
/// `contract_fn(alpha)` must return the Contraction of the degree-q term; this
/// lets the dense baseline share the optimizer.
template <class ContractFn>
DualSolution solve_dual_with(ContractFn&& contract_fn, std::span<const double> y, const TrainConfig& cfg) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = y.size();
  auto evaluate = [&](std::span<const double> alpha) {
    return detail::finish_dual(contract_fn(alpha), y, cfg.gamma, alpha);
  };

  DualSolution sol;
  sol.alpha.assign(n, 0.0);
  DualEvaluation current = evaluate(sol.alpha);
  if (!std::isfinite(current.value) || !detail::all_finite(current.gradient)) {
    throw NumericError("non-finite dual objective or gradient at iteration 0");
  }
  sol.objective_trace.push_back(current.value);

  double last_step = cfg.initial_step;
  Vector trial(n);
  for (unsigned iter = 1; iter <= cfg.max_iters; ++iter) {
    double grad_sq = 0.0;
    for (double g : current.gradient) grad_sq += g * g;
    if (grad_sq == 0.0) {
      sol.converged = true;
      break;
    }

    double eta = std::min(cfg.initial_step, 2.0 * last_step);
    bool accepted = false;
    bool saw_finite = false;
    DualEvaluation next;
    for (unsigned bt = 0; bt <= detail::max_backtracks; ++bt, eta *= cfg.backtrack_factor) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = sol.alpha[i] - eta * current.gradient[i];
      next = evaluate(trial);
      if (!std::isfinite(next.value)) continue;
      saw_finite = true;
      if (next.value <= current.value - cfg.armijo_c * eta * grad_sq) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (!saw_finite) {
        throw NumericError("non-finite dual objective at every trial step of iteration " +
                           std::to_string(iter));
      }
      sol.stalled = true;
      break;
    }
    if (!detail::all_finite(next.gradient)) {
      throw NumericError("non-finite dual gradient at iteration " + std::to_string(iter));
    }

    const double change = current.value - next.value;
    sol.alpha = trial;
    current = std::move(next);
    last_step = eta;
    sol.objective_trace.push_back(current.value);
    sol.iters_run = iter;
    if (std::abs(change) <= cfg.rel_tol * std::max(1.0, std::abs(current.value))) {
      sol.converged = true;
      break;
    }
  }
  sol.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

inline DualSolution solve_dual(const PackedSymTensor& k, std::span<const double> y, const TrainConfig& cfg) {
  require_shape(y.size() == k.n(), "y length does not match the Gram tensor");
  return solve_dual_with([&](std::span<const double> alpha) { return contract(k, alpha); }, y, cfg);
}

/// Kernel ridge regression in closed form: solves (X Xᵀ + I / gamma) alpha = y
/// with a Cholesky factorization.
inline Vector krr_closed_form(const Matrix& x, std::span<const double> y, double gamma) {
  if (!(gamma > 0.0)) throw InvalidArgumentError("gamma must be > 0");
  require_shape(y.size() == x.rows(), "y length does not match X");
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto d = static_cast<Eigen::Index>(x.cols());
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
      x.data().data(), n, d);
  Eigen::MatrixXd a = xm * xm.transpose();
  a.diagonal().array() += 1.0 / gamma;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) throw NumericError("Cholesky factorization failed in KRR solve");
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  Eigen::VectorXd sol = llt.solve(rhs);
  if (!sol.allFinite()) throw NumericError("non-finite KRR solution");
  return {sol.data(), sol.data() + n};
}

}  // namespace tk
