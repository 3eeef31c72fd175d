#pragma once

/// \file
/// Packed storage for symmetric order-q tensors over n points.
///
/// Only canonical (non-decreasing) index tuples are stored. Slots follow the
/// order of q nested loops where the first index varies slowest and every
/// inner loop starts at the value of the loop enclosing it, i.e. the
/// lexicographic order of sorted tuples. For q = 2 this reproduces the usual
/// upper-triangular offset `r*n - r*(r+1)/2 + c`.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <istream>
#include <iterator>
#include <new>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "tensorkernel/error.hpp"
#include "tensorkernel/parallel.hpp"

namespace tk {

using index_t = std::uint32_t;

/// Counts above this are rejected so they stay exact in a double.
inline constexpr std::uint64_t max_entry_count = std::uint64_t{1} << 53;
/// Largest supported tensor order; q! must fit in 64 bits.
inline constexpr unsigned max_order = 20;

/// C(n, k), throwing CapacityError when the result exceeds `max_entry_count`.
inline std::uint64_t checked_binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  unsigned __int128 result = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    // result * (n - k + i) / i is C(n-k+i, i), always an integer.
    result = result * (n - k + i) / i;
    if (result > max_entry_count) {
      throw CapacityError("binomial C(" + std::to_string(n) + ", " +
                          std::to_string(k) + ") exceeds 2^53");
    }
  }
  return static_cast<std::uint64_t>(result);
}

/// Number of non-decreasing `order`-tuples over n values, C(n+order-1, order).
/// Valid for any order >= 1, odd orders included.
inline std::uint64_t simplex_count(std::uint64_t n, unsigned order) {
  if (n == 0 || order == 0) {
    throw InvalidArgumentError("simplex_count needs n >= 1 and order >= 1");
  }
  return checked_binomial(n + order - 1, order);
}

inline void validate_order(unsigned q) {
  if (q < 2 || q % 2 != 0 || q > max_order) {
    throw InvalidOrderError("tensor order must be even and in [2, " +
                            std::to_string(max_order) + "], got " +
                            std::to_string(q));
  }
}

/// Unique entries of a symmetric order-q tensor over n points.
inline std::uint64_t unique_count(std::uint64_t n, unsigned q) {
  validate_order(q);
  if (n == 0) throw InvalidArgumentError("unique_count needs n >= 1");
  return simplex_count(n, q);
}

inline std::uint64_t factorial(unsigned k) {
  std::uint64_t f = 1;
  for (unsigned i = 2; i <= k; ++i) f *= i;
  return f;
}

/// A q-tuple of point indices. Any permutation describes the same tensor entry;
/// `canonical()` gives the sorted representative.
class MultiIndex {
 public:
  MultiIndex() = default;
  explicit MultiIndex(std::vector<index_t> indices) : indices_(std::move(indices)) {}
  MultiIndex(std::initializer_list<index_t> indices) : indices_(indices) {}

  [[nodiscard]] std::size_t size() const noexcept { return indices_.size(); }
  index_t operator[](std::size_t k) const { return indices_[k]; }
  [[nodiscard]] std::span<const index_t> span() const noexcept { return indices_; }
  [[nodiscard]] const std::vector<index_t>& values() const noexcept { return indices_; }

  [[nodiscard]] bool is_canonical() const noexcept {
    return std::is_sorted(indices_.begin(), indices_.end());
  }
  [[nodiscard]] MultiIndex canonical() const {
    MultiIndex out(*this);
    std::sort(out.indices_.begin(), out.indices_.end());
    return out;
  }

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

 private:
  std::vector<index_t> indices_;
};

/// Multiset structure of a tuple: each distinct index with its multiplicity.
struct TupleMultiplicity {
  std::vector<index_t> distinct;  // ascending
  std::vector<unsigned> counts;   // counts[k] belongs to distinct[k]
  unsigned order = 0;             // sum of counts
  std::uint64_t total_perms = 0;  // order! / prod(counts[k]!)

  /// Number of distinct permutations that put `j` in the first position,
  /// total_perms * m_j / order. Zero when j is absent.
  [[nodiscard]] std::uint64_t first_position_count(index_t j) const {
    auto it = std::lower_bound(distinct.begin(), distinct.end(), j);
    if (it == distinct.end() || *it != j) return 0;
    return total_perms * counts[static_cast<std::size_t>(it - distinct.begin())] / order;
  }
};

inline TupleMultiplicity multiplicity(std::span<const index_t> tuple) {
  std::vector<index_t> sorted(tuple.begin(), tuple.end());
  std::sort(sorted.begin(), sorted.end());
  TupleMultiplicity m;
  m.order = static_cast<unsigned>(sorted.size());
  for (index_t v : sorted) {
    if (m.distinct.empty() || m.distinct.back() != v) {
      m.distinct.push_back(v);
      m.counts.push_back(1);
    } else {
      ++m.counts.back();
    }
  }
  m.total_perms = factorial(m.order);
  for (unsigned c : m.counts) m.total_perms /= factorial(c);
  return m;
}

inline TupleMultiplicity multiplicity(const MultiIndex& t) { return multiplicity(t.span()); }

/// Maps canonical tuples to slots in O(q) using q skip tables of n+1 entries.
///
/// skip(k, v) counts the tuples that position k passes over before reaching
/// value v, i.e. the sum over u < v of the number of non-decreasing tails of
/// length q-k-1 starting at u. The rank of a canonical tuple t is then
/// sum_k skip(k, t_k) - skip(k, t_{k-1}) with t_{-1} = 0.
class IndexScheme {
 public:
  IndexScheme(index_t n, unsigned q) : IndexScheme(n, q, unique_count(n, q)) {}

  /// Scheme for tuples of any length >= 1, odd lengths included. Used for the
  /// (q-1)-tuples of prediction and the half-tuples of the dense baseline.
  static IndexScheme any_order(index_t n, unsigned order) {
    if (order > max_order) throw InvalidOrderError("order exceeds " + std::to_string(max_order));
    return IndexScheme(n, order, simplex_count(n, order));
  }

 private:
  IndexScheme(index_t n, unsigned q, std::uint64_t count) : n_(n), q_(q), count_(count) {
    const std::size_t stride = std::size_t{n_} + 1;
    skip_.assign(q_ * stride, 0);
    for (unsigned k = 0; k < q_; ++k) {
      const unsigned tail = q_ - k - 1;
      std::uint64_t* table = skip_.data() + k * stride;
      // Filled from v = 0 upward, each entry reusing the previous one.
      for (index_t v = 0; v < n_; ++v) {
        table[v + 1] = table[v] + checked_binomial(std::uint64_t{n_} - v + tail - 1, tail);
      }
    }
  }

 public:
  [[nodiscard]] index_t n() const noexcept { return n_; }
  [[nodiscard]] unsigned q() const noexcept { return q_; }
  /// Number of stored slots, unique_count(n, q).
  [[nodiscard]] std::uint64_t size() const noexcept { return count_; }

  [[nodiscard]] std::uint64_t skip(unsigned k, index_t v) const noexcept {
    return skip_[k * (std::size_t{n_} + 1) + v];
  }

  /// Slot of a sorted tuple; no validation.
  [[nodiscard]] std::uint64_t rank_canonical(std::span<const index_t> t) const noexcept {
    std::uint64_t slot = 0;
    index_t prev = 0;
    for (unsigned k = 0; k < q_; ++k) {
      slot += skip(k, t[k]) - skip(k, prev);
      prev = t[k];
    }
    return slot;
  }

  /// Slot of any permutation of a tuple.
  [[nodiscard]] std::uint64_t rank(std::span<const index_t> t) const {
    if (t.size() != q_) {
      throw ShapeError("tuple has " + std::to_string(t.size()) + " indices, order is " +
                       std::to_string(q_));
    }
    std::array<index_t, max_order> sorted{};
    for (unsigned k = 0; k < q_; ++k) {
      if (t[k] >= n_) {
        throw BoundsError("index " + std::to_string(t[k]) + " out of range for n = " +
                          std::to_string(n_));
      }
      sorted[k] = t[k];
    }
    std::sort(sorted.begin(), sorted.begin() + q_);
    return rank_canonical({sorted.data(), q_});
  }
  [[nodiscard]] std::uint64_t rank(const MultiIndex& t) const { return rank(t.span()); }

  [[nodiscard]] MultiIndex unrank(std::uint64_t slot) const {
    if (slot >= count_) {
      throw BoundsError("slot " + std::to_string(slot) + " out of range [0, " +
                        std::to_string(count_) + ")");
    }
    std::vector<index_t> out(q_);
    index_t prev = 0;
    std::uint64_t remaining = slot;
    const std::size_t stride = std::size_t{n_} + 1;
    for (unsigned k = 0; k < q_; ++k) {
      const std::uint64_t* table = skip_.data() + k * stride;
      const std::uint64_t base = table[prev];
      // Largest v in [prev, n) with table[v] - base <= remaining.
      const auto* hi = std::upper_bound(table + prev, table + n_, base + remaining);
      const auto v = static_cast<index_t>(hi - table - 1);
      remaining -= table[v] - base;
      out[k] = v;
      prev = v;
    }
    return MultiIndex(std::move(out));
  }

 private:
  index_t n_;
  unsigned q_;
  std::uint64_t count_;
  std::vector<std::uint64_t> skip_;
};

/// Unique entries of a symmetric tensor, stored linearly in slot order.
class PackedSymTensor {
 public:
  explicit PackedSymTensor(IndexScheme scheme) : scheme_(std::move(scheme)) {
    try {
      values_.assign(scheme_.size(), 0.0);
    } catch (const std::bad_alloc&) {
      throw CapacityError("cannot allocate " + std::to_string(scheme_.size()) +
                          " packed entries");
    }
  }
  PackedSymTensor(IndexScheme scheme, std::vector<double> values)
      : scheme_(std::move(scheme)), values_(std::move(values)) {
    require_shape(values_.size() == scheme_.size(),
                  "packed value count does not match the index scheme");
  }

  [[nodiscard]] const IndexScheme& scheme() const noexcept { return scheme_; }
  [[nodiscard]] index_t n() const noexcept { return scheme_.n(); }
  [[nodiscard]] unsigned q() const noexcept { return scheme_.q(); }
  [[nodiscard]] std::uint64_t size() const noexcept { return values_.size(); }

  [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
  [[nodiscard]] std::span<double> values() noexcept { return values_; }

  [[nodiscard]] double get(std::span<const index_t> t) const { return values_[scheme_.rank(t)]; }
  [[nodiscard]] double get(const MultiIndex& t) const { return get(t.span()); }
  [[nodiscard]] double get(std::initializer_list<index_t> t) const {
    return get(std::span<const index_t>(t.begin(), t.size()));
  }
  void set(std::span<const index_t> t, double v) { values_[scheme_.rank(t)] = v; }
  void set(std::initializer_list<index_t> t, double v) {
    set(std::span<const index_t>(t.begin(), t.size()), v);
  }

 private:
  IndexScheme scheme_;
  std::vector<double> values_;
};

/// One element of the canonical enumeration.
struct CanonicalItem {
  std::uint64_t slot;
  MultiIndex index;
  TupleMultiplicity multiplicity;
};

/// Input range over all canonical tuples of a scheme, in slot order.
class CanonicalTuples {
 public:
  class iterator {
   public:
    using iterator_category = std::input_iterator_tag;
    using value_type = CanonicalItem;
    using difference_type = std::ptrdiff_t;

    iterator() = default;
    iterator(index_t n, unsigned q) : n_(n), tuple_(q, 0) {}

    CanonicalItem operator*() const {
      MultiIndex idx(tuple_);
      auto mult = multiplicity(idx);
      return {slot_, std::move(idx), std::move(mult)};
    }
    iterator& operator++() {
      // Odometer: bump the rightmost position that can grow and reset the
      // positions after it to the same value.
      std::size_t k = tuple_.size();
      while (k > 0 && tuple_[k - 1] + 1 == n_) --k;
      if (k == 0) {
        done_ = true;
      } else {
        const index_t v = ++tuple_[k - 1];
        std::fill(tuple_.begin() + static_cast<std::ptrdiff_t>(k), tuple_.end(), v);
      }
      ++slot_;
      return *this;
    }
    void operator++(int) { ++*this; }
    friend bool operator==(const iterator& it, std::default_sentinel_t) { return it.done_; }

   private:
    index_t n_ = 0;
    std::vector<index_t> tuple_;
    std::uint64_t slot_ = 0;
    bool done_ = false;
  };

  explicit CanonicalTuples(const IndexScheme& scheme) : n_(scheme.n()), q_(scheme.q()) {}
  [[nodiscard]] iterator begin() const { return {n_, q_}; }
  [[nodiscard]] std::default_sentinel_t end() const { return {}; }

 private:
  index_t n_;
  unsigned q_;
};

inline CanonicalTuples iter_canonical(const IndexScheme& scheme) { return CanonicalTuples(scheme); }

namespace detail {

/// Fixed partition of the first index into contiguous ranges with roughly
/// equal slot counts. Depends only on (n, q), never on the thread count, so
/// per-chunk partial results reduce in the same order on every machine.
inline std::vector<index_t> chunk_bounds(const IndexScheme& s, std::size_t max_chunks = 64) {
  const std::size_t chunks = std::min<std::size_t>(max_chunks, s.n());
  const double target = static_cast<double>(s.size()) / static_cast<double>(chunks);
  std::vector<index_t> bounds{0};
  for (index_t i = 1; i < s.n() && bounds.size() < chunks; ++i) {
    const double done = static_cast<double>(s.skip(0, i));
    if (done >= target * static_cast<double>(bounds.size())) bounds.push_back(i);
  }
  bounds.push_back(s.n());
  return bounds;
}

/// Walks every canonical prefix (t_0, ..., t_{q-2}) with t_0 in [first_begin,
/// first_end) in slot order. For each prefix, the tuples completed by l in
/// [t_{q-2}, n) occupy the contiguous slots starting at the reported offset.
/// `visit(prefix, slot_begin)` receives the prefix as a span of q-1 indices.
template <class Visit>
void for_each_prefix(const IndexScheme& s, index_t first_begin, index_t first_end, Visit&& visit) {
  const unsigned depth = s.q() - 1;
  const index_t n = s.n();
  if (first_begin >= first_end) return;
  std::array<index_t, max_order> prefix{};
  std::fill(prefix.begin(), prefix.begin() + depth, first_begin);
  std::uint64_t slot = s.skip(0, first_begin);
  for (;;) {
    visit(std::span<const index_t>(prefix.data(), depth), slot);
    slot += n - prefix[depth - 1];
    unsigned k = depth;
    while (k > 0 && prefix[k - 1] + 1 == n) --k;
    if (k == 0) return;
    const index_t v = ++prefix[k - 1];
    if (k == 1 && v >= first_end) return;
    std::fill(prefix.begin() + k, prefix.begin() + depth, v);
  }
}

/// Multinomial weights for completing a sorted prefix with a last index l:
/// `distinct` applies when l differs from the prefix's last index, `repeat`
/// when it equals it.
struct CompletionPerms {
  std::uint64_t distinct;
  std::uint64_t repeat;
};

inline CompletionPerms completion_perms(std::span<const index_t> prefix) {
  const auto q = static_cast<unsigned>(prefix.size() + 1);
  std::uint64_t denom = 1;
  unsigned run = 0;
  for (std::size_t k = 0; k < prefix.size(); ++k) {
    run = (k > 0 && prefix[k] == prefix[k - 1]) ? run + 1 : 1;
    denom *= run;
  }
  // `run` is now the length of the trailing run.
  const std::uint64_t distinct = factorial(q) / denom;
  return {distinct, distinct / (run + 1)};
}

}  // namespace detail

/// Value and gradient of G(alpha) = (1/q) * sum over all n^q tuples of
/// K[t] * alpha[t_1] * ... * alpha[t_q].
struct Contraction {
  double objective = 0.0;
  std::vector<double> gradient;
};

/// Single pass over the packed tensor computing G and its gradient
/// g_j = sum over (i_2..i_q) of K[j, i_2, ..., i_q] alpha[i_2] ... alpha[i_q].
///
/// Each canonical tuple contributes v * total_perms / q times the product of
/// alpha over the tuple with one position removed, for every position. The
/// products are formed directly (no division), so zero coefficients are safe.
/// Chunks of first indices accumulate privately and are summed in chunk
/// order, which makes the result independent of the thread count.
inline Contraction contract(const PackedSymTensor& k, std::span<const double> alpha) {
  const IndexScheme& s = k.scheme();
  require_shape(alpha.size() == s.n(), "alpha has length " + std::to_string(alpha.size()) +
                                           ", tensor has n = " + std::to_string(s.n()));
  const index_t n = s.n();
  const unsigned q = s.q();
  const double inv_q = 1.0 / static_cast<double>(q);
  const auto bounds = detail::chunk_bounds(s);
  const std::size_t chunks = bounds.size() - 1;
  std::vector<std::vector<double>> partial_grad(chunks);
  std::vector<double> partial_obj(chunks, 0.0);
  const double* values = k.values().data();

  parallel_for_chunks(chunks, [&](std::size_t c) {
    std::vector<double> g(n, 0.0);
    double obj = 0.0;
    std::array<double, max_order> except{};
    detail::for_each_prefix(s, bounds[c], bounds[c + 1], [&](std::span<const index_t> prefix,
                                                              std::uint64_t slot) {
      const unsigned depth = q - 1;
      // except[p] = product of alpha over the prefix without position p.
      double prod = 1.0;
      for (unsigned p = 0; p < depth; ++p) {
        double e = 1.0;
        for (unsigned r = 0; r < depth; ++r) {
          if (r != p) e *= alpha[prefix[r]];
        }
        except[p] = e;
        prod *= alpha[prefix[p]];
      }
      const auto perms = detail::completion_perms(prefix);
      const double w_repeat = static_cast<double>(perms.repeat) * inv_q;
      const double w_distinct = static_cast<double>(perms.distinct) * inv_q;
      const index_t first = prefix[depth - 1];
      const double* v = values + slot;

      double c0 = v[0] * w_repeat;
      double sum = c0 * alpha[first];
      g[first] += c0 * prod;
      for (index_t l = first + 1; l < n; ++l) {
        const double cl = v[l - first] * w_distinct;
        sum += cl * alpha[l];
        g[l] += cl * prod;
      }
      obj += prod * sum;
      for (unsigned p = 0; p < depth; ++p) g[prefix[p]] += except[p] * sum;
    });
    partial_grad[c] = std::move(g);
    partial_obj[c] = obj;
  });

  Contraction out;
  out.gradient.assign(n, 0.0);
  for (std::size_t c = 0; c < chunks; ++c) {
    out.objective += partial_obj[c];
    for (index_t j = 0; j < n; ++j) out.gradient[j] += partial_grad[c][j];
  }
  return out;
}

inline std::vector<double> contract_gradient(const PackedSymTensor& k, std::span<const double> alpha) {
  return contract(k, alpha).gradient;
}

inline double contract_objective(const PackedSymTensor& k, std::span<const double> alpha) {
  return contract(k, alpha).objective;
}

// Binary dump: "PSYT", then u32 version, n, q, then the slot-ordered values
// as IEEE-754 doubles, everything little-endian.

inline constexpr std::uint32_t packed_dump_version = 1;

namespace detail {
template <class T>
void write_le(std::ostream& os, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    bytes[b] = static_cast<char>((value >> (8 * b)) & 0xFF);
  }
  os.write(bytes.data(), bytes.size());
}

template <class T>
T read_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!is) throw ParseError("truncated packed tensor dump");
  T value = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) value |= static_cast<T>(bytes[b]) << (8 * b);
  return value;
}
}  // namespace detail

inline void write_packed(std::ostream& os, const PackedSymTensor& k) {
  os.write("PSYT", 4);
  detail::write_le<std::uint32_t>(os, packed_dump_version);
  detail::write_le<std::uint32_t>(os, k.n());
  detail::write_le<std::uint32_t>(os, k.q());
  for (double v : k.values()) detail::write_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw IoError("failed writing packed tensor dump");
}

inline PackedSymTensor read_packed(std::istream& is) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || std::memcmp(magic.data(), "PSYT", 4) != 0) {
    throw ParseError("not a packed tensor dump (bad magic)");
  }
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != packed_dump_version) {
    throw ParseError("unsupported packed tensor dump version " + std::to_string(version));
  }
  const auto n = detail::read_le<std::uint32_t>(is);
  const auto q = detail::read_le<std::uint32_t>(is);
  IndexScheme scheme(n, q);
  std::vector<double> values(scheme.size());
  for (auto& v : values) v = std::bit_cast<double>(detail::read_le<std::uint64_t>(is));
  return {std::move(scheme), std::move(values)};
}

}  // namespace tk
