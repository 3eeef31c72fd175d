#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tensorkernel/error.hpp"
#include "tensorkernel/matrix.hpp"
#include "tensorkernel/parallel.hpp"
#include "tensorkernel/symtensor.hpp"

namespace tk {

enum class KernelFamily { linear, polynomial, exponential };

/// Largest |sum(x_1 ⊙ ... ⊙ x_q)| the exponential kernel accepts before
/// exponentiating; e^700 is still finite in double precision.
inline constexpr double exp_sum_limit = 700.0;

/// Kernel family, tensor order q and (polynomial only) degree.
class TensorKernelSpec {
 public:
  static TensorKernelSpec linear(unsigned q = 4) { return {KernelFamily::linear, q, std::nullopt}; }
  static TensorKernelSpec polynomial(unsigned degree, unsigned q = 4) {
    if (degree < 1) throw InvalidArgumentError("polynomial kernel degree must be >= 1");
    return {KernelFamily::polynomial, q, degree};
  }
  static TensorKernelSpec exponential(unsigned q = 4) {
    return {KernelFamily::exponential, q, std::nullopt};
  }

  /// Accepts "linear", "poly"/"polynomial" and "exp"/"exponential".
  static TensorKernelSpec parse(std::string_view family, unsigned q, unsigned degree = 2) {
    if (family == "linear") return linear(q);
    if (family == "poly" || family == "polynomial") return polynomial(degree, q);
    if (family == "exp" || family == "exponential") return exponential(q);
    throw InvalidArgumentError("unknown kernel family '" + std::string(family) + "'");
  }

  [[nodiscard]] KernelFamily family() const noexcept { return family_; }
  [[nodiscard]] unsigned q() const noexcept { return q_; }
  [[nodiscard]] std::optional<unsigned> degree() const noexcept { return degree_; }

  [[nodiscard]] std::string_view name() const noexcept {
    switch (family_) {
      case KernelFamily::linear: return "linear";
      case KernelFamily::polynomial: return "poly";
      case KernelFamily::exponential: return "exp";
    }
    return "linear";
  }

  friend bool operator==(const TensorKernelSpec&, const TensorKernelSpec&) = default;

 private:
  TensorKernelSpec(KernelFamily family, unsigned q, std::optional<unsigned> degree)
      : family_(family), q_(q), degree_(degree) {
    validate_order(q);
  }

  KernelFamily family_;
  unsigned q_;
  std::optional<unsigned> degree_;
};

namespace detail {

/// sum_f a_f * b_f with four interleaved partial sums. Every kernel value
/// goes through this one routine, so packed entries, direct evaluations and
/// predictions agree bit for bit when the operands agree.
inline double product_dot(const double* a, const double* b, std::size_t d) noexcept {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t f = 0;
  for (; f + 4 <= d; f += 4) {
    s0 += a[f] * b[f];
    s1 += a[f + 1] * b[f + 1];
    s2 += a[f + 2] * b[f + 2];
    s3 += a[f + 3] * b[f + 3];
  }
  for (; f < d; ++f) s0 += a[f] * b[f];
  return (s0 + s1) + (s2 + s3);
}

inline double ipow(double v, unsigned s) noexcept {
  double out = v;
  for (unsigned i = 1; i < s; ++i) out *= v;
  return out;
}

/// Maps the multilinear sum to the kernel value for the given family.
inline double finish_kernel(const TensorKernelSpec& spec, double sum) {
  switch (spec.family()) {
    case KernelFamily::linear: return sum;
    case KernelFamily::polynomial: return ipow(sum, *spec.degree());
    case KernelFamily::exponential:
      if (!(std::abs(sum) <= exp_sum_limit)) {
        throw RangeError("exponential kernel argument " + std::to_string(sum) +
                         " outside [-700, 700]");
      }
      return std::exp(sum);
  }
  return sum;
}

}  // namespace detail

/// k(x_1, ..., x_q) for the kernel family: the multilinear sum
/// sum_j x_1j ... x_qj, raised to `degree` (polynomial) or exponentiated.
///
/// The elementwise product is formed left to right over the first q-1 points
/// and then dotted with the last one.
inline double kernel_eval(const TensorKernelSpec& spec,
                          std::span<const std::span<const double>> points) {
  const unsigned q = spec.q();
  require_shape(points.size() == q, "kernel needs " + std::to_string(q) + " points, got " +
                                        std::to_string(points.size()));
  const std::size_t d = points[0].size();
  require_shape(d >= 1, "kernel points must have dimension >= 1");
  for (const auto& p : points) require_shape(p.size() == d, "kernel points differ in dimension");
  std::vector<double> prefix(points[0].begin(), points[0].end());
  for (unsigned r = 1; r + 1 < q; ++r) {
    for (std::size_t f = 0; f < d; ++f) prefix[f] *= points[r][f];
  }
  return detail::finish_kernel(spec, detail::product_dot(prefix.data(), points[q - 1].data(), d));
}

inline double kernel_eval(const TensorKernelSpec& spec, const std::vector<std::vector<double>>& points) {
  std::vector<std::span<const double>> views(points.begin(), points.end());
  return kernel_eval(spec, std::span<const std::span<const double>>(views));
}

struct GramBuildStats {
  std::uint64_t evaluations = 0;
  double seconds = 0.0;
};

/// Packed Gram tensor K[i_1..i_q] = k(x_{i_1}, ..., x_{i_q}) over the rows of X.
///
/// For each canonical prefix (i_1..i_{q-1}) the running elementwise product of
/// its rows is kept, so each slot costs a single dot product against x_{i_q}.
/// Slots are filled in independent chunks, so the output does not depend on
/// the thread count.
inline PackedSymTensor build_packed_gram(const TensorKernelSpec& spec, const Matrix& x,
                                         GramBuildStats* stats = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  require_shape(x.rows() >= 1 && x.cols() >= 1, "Gram build needs a non-empty data matrix");
  if (x.rows() > std::numeric_limits<index_t>::max()) throw CapacityError("too many points");
  IndexScheme scheme(static_cast<index_t>(x.rows()), spec.q());
  PackedSymTensor k(scheme);
  const std::size_t d = x.cols();
  const unsigned depth = spec.q() - 1;
  const index_t n = scheme.n();
  const auto bounds = detail::chunk_bounds(scheme);
  std::vector<std::uint64_t> evaluated(bounds.size() - 1, 0);
  double* out = k.values().data();

  parallel_for_chunks(bounds.size() - 1, [&](std::size_t c) {
    // products[r] = x_{p_0} ⊙ ... ⊙ x_{p_r} for the current prefix p.
    std::vector<double> products(depth * d);
    std::array<index_t, max_order> cached{};
    bool have_cache = false;
    std::uint64_t count = 0;
    detail::for_each_prefix(scheme, bounds[c], bounds[c + 1],
                            [&](std::span<const index_t> prefix, std::uint64_t slot) {
      unsigned from = 0;
      if (have_cache) {
        while (from < depth && cached[from] == prefix[from]) ++from;
      }
      for (unsigned r = from; r < depth; ++r) {
        double* dst = products.data() + r * d;
        auto row = x.row(prefix[r]);
        if (r == 0) {
          std::copy(row.begin(), row.end(), dst);
        } else {
          const double* prev = dst - d;
          for (std::size_t f = 0; f < d; ++f) dst[f] = prev[f] * row[f];
        }
        cached[r] = prefix[r];
      }
      have_cache = true;
      const double* z = products.data() + (depth - 1) * d;
      const index_t first = prefix[depth - 1];
      for (index_t l = first; l < n; ++l) {
        out[slot + (l - first)] = detail::finish_kernel(spec, detail::product_dot(z, x.row(l).data(), d));
      }
      count += n - first;
    });
    evaluated[c] = count;
  });

  if (stats != nullptr) {
    stats->evaluations = 0;
    for (auto e : evaluated) stats->evaluations += e;
    stats->seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return k;
}

/// Default largest n accepted by the dense baseline.
inline constexpr std::size_t default_dense_cap = 150;

/// The "old layout": an order-q Gram tensor viewed as a square matrix whose
/// rows and columns are canonical (q/2)-tuples of points. Row r holds the
/// elementwise product of its points and the matrix is rows · rowsᵀ (raised
/// to the kernel degree for the polynomial family). Benchmark baseline and
/// cross-check for the packed layout only.
class DenseGramMatrix {
 public:
  DenseGramMatrix(IndexScheme half, unsigned q, Matrix values)
      : half_(std::move(half)), q_(q), values_(std::move(values)) {}

  [[nodiscard]] unsigned q() const noexcept { return q_; }
  [[nodiscard]] index_t n() const noexcept { return half_.n(); }
  /// Number of rows (= columns), C(n + q/2 - 1, q/2).
  [[nodiscard]] std::size_t dimension() const noexcept { return values_.rows(); }
  [[nodiscard]] std::uint64_t stored_entries() const noexcept {
    return static_cast<std::uint64_t>(values_.rows()) * values_.cols();
  }
  [[nodiscard]] const Matrix& matrix() const noexcept { return values_; }
  [[nodiscard]] const IndexScheme& half_scheme() const noexcept { return half_; }

  /// Entry for the pair of half-tuples (`left`, `right`); each is sorted first.
  [[nodiscard]] double at(std::span<const index_t> left, std::span<const index_t> right) const {
    return values_(half_.rank(left), half_.rank(right));
  }
  [[nodiscard]] double at(std::initializer_list<index_t> left, std::initializer_list<index_t> right) const {
    return at(std::span<const index_t>(left.begin(), left.size()),
              std::span<const index_t>(right.begin(), right.size()));
  }

  /// Same quantities as `contract` on the packed tensor, through the matrix:
  /// with beta_r = perms(r) * prod(alpha over r), G = (1/q) betaᵀ M beta.
  [[nodiscard]] Contraction contract(std::span<const double> alpha) const {
    require_shape(alpha.size() == n(), "alpha length does not match dense Gram");
    const std::size_t rows = dimension();
    std::vector<double> beta(rows);
    std::vector<TupleMultiplicity> mult(rows);
    std::vector<MultiIndex> tuples(rows);
    for (const auto& item : iter_canonical(half_)) {
      double prod = static_cast<double>(item.multiplicity.total_perms);
      for (index_t i : item.index.span()) prod *= alpha[i];
      beta[item.slot] = prod;
      mult[item.slot] = item.multiplicity;
      tuples[item.slot] = item.index;
    }
    const Vector u = multiply(values_, beta);
    Contraction out;
    out.objective = dot(beta, u) / static_cast<double>(q_);
    out.gradient.assign(n(), 0.0);
    const double scale = 2.0 / static_cast<double>(q_);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto& m = mult[r];
      for (std::size_t k = 0; k < m.distinct.size(); ++k) {
        // d beta_r / d alpha_a = perms * m_a * prod(alpha over r minus one a).
        double partial = static_cast<double>(m.total_perms) * m.counts[k];
        bool removed = false;
        for (index_t i : tuples[r].span()) {
          if (!removed && i == m.distinct[k]) {
            removed = true;
            continue;
          }
          partial *= alpha[i];
        }
        out.gradient[m.distinct[k]] += scale * u[r] * partial;
      }
    }
    return out;
  }

 private:
  IndexScheme half_;
  unsigned q_;
  Matrix values_;
};

/// Builds the dense baseline; refuses n above `cap` with CapacityError, and
/// the exponential family (it has no finite product-feature form).
inline DenseGramMatrix build_dense_gram_matrix(const TensorKernelSpec& spec, const Matrix& x,
                                               std::size_t cap = default_dense_cap,
                                               GramBuildStats* stats = nullptr) {
  const auto start = std::chrono::steady_clock::now();
  if (spec.family() == KernelFamily::exponential) {
    throw UnsupportedError("dense baseline supports linear and polynomial kernels only");
  }
  require_shape(x.rows() >= 1 && x.cols() >= 1, "Gram build needs a non-empty data matrix");
  if (x.rows() > cap) {
    throw CapacityError("dense baseline refuses n = " + std::to_string(x.rows()) +
                        " above its cap of " + std::to_string(cap));
  }
  const unsigned half_order = spec.q() / 2;
  auto half = IndexScheme::any_order(static_cast<index_t>(x.rows()), half_order);
  const std::size_t rows = half.size();
  const std::size_t d = x.cols();
  Matrix features(rows, d);
  for (const auto& item : iter_canonical(half)) {
    auto dst = features.row(item.slot);
    auto first = x.row(item.index[0]);
    std::copy(first.begin(), first.end(), dst.begin());
    for (std::size_t r = 1; r < item.index.size(); ++r) {
      auto src = x.row(item.index[r]);
      for (std::size_t f = 0; f < d; ++f) dst[f] *= src[f];
    }
  }
  Matrix gram;
  try {
    gram = Matrix(rows, rows);
  } catch (const std::bad_alloc&) {
    throw CapacityError("cannot allocate dense Gram matrix of " + std::to_string(rows) + "^2 entries");
  }
  for (std::size_t a = 0; a < rows; ++a) {
    for (std::size_t b = a; b < rows; ++b) {
      const double v = detail::finish_kernel(
          spec, detail::product_dot(features.row(a).data(), features.row(b).data(), d));
      gram(a, b) = v;
      gram(b, a) = v;
    }
  }
  if (stats != nullptr) {
    stats->evaluations = static_cast<std::uint64_t>(rows) * (rows + 1) / 2;
    stats->seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return {std::move(half), spec.q(), std::move(gram)};
}

struct MemoryReport {
  double dense_entries = 0.0;  // n^q, may exceed 2^64
  std::uint64_t packed_entries = 0;
  double dense_bytes = 0.0;
  double packed_bytes = 0.0;
  double reduction_fraction = 0.0;  // 1 - packed / dense
};

/// Storage of a full n^q tensor of doubles against the packed layout. Any
/// order >= 1 is accepted since only counts are involved.
inline MemoryReport memory_report(std::uint64_t n, unsigned q) {
  MemoryReport r;
  r.packed_entries = simplex_count(n, q);
  r.dense_entries = std::pow(static_cast<double>(n), static_cast<double>(q));
  r.dense_bytes = r.dense_entries * 8.0;
  r.packed_bytes = static_cast<double>(r.packed_entries) * 8.0;
  r.reduction_fraction = 1.0 - r.packed_bytes / r.dense_bytes;
  return r;
}

}  // namespace tk
