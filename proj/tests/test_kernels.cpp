#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "tensorkernel/tensorkernel.hpp"

using namespace tk;

TEST(KernelSpec, FactoriesAndParse) {
  EXPECT_EQ(TensorKernelSpec::parse("linear", 4), TensorKernelSpec::linear(4));
  EXPECT_EQ(TensorKernelSpec::parse("poly", 2, 3), TensorKernelSpec::polynomial(3, 2));
  EXPECT_EQ(TensorKernelSpec::parse("exponential", 4), TensorKernelSpec::exponential(4));
  EXPECT_EQ(TensorKernelSpec::polynomial(2).name(), "poly");
  EXPECT_THROW((void)TensorKernelSpec::parse("rbf", 4), InvalidArgumentError);
  EXPECT_THROW((void)TensorKernelSpec::linear(3), InvalidOrderError);
  EXPECT_THROW((void)TensorKernelSpec::polynomial(0), InvalidArgumentError);
}

TEST(KernelEval, ScalarExamples) {
  const auto lin = TensorKernelSpec::linear(2);
  EXPECT_EQ(kernel_eval(lin, {{1.0, 0.0}, {0.0, 1.0}}), 0.0);
  EXPECT_EQ(kernel_eval(lin, {{1.0, 2.0}, {3.0, 7.0}}), 17.0);
  EXPECT_EQ(kernel_eval(TensorKernelSpec::polynomial(2, 2), {{1.0, 2.0}, {3.0, 7.0}}), 289.0);
  EXPECT_EQ(kernel_eval(TensorKernelSpec::exponential(2), {{1.0, 0.0}, {0.0, 1.0}}), 1.0);
  EXPECT_EQ(kernel_eval(TensorKernelSpec::linear(4), {{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}), 17.0);
}

TEST(KernelEval, Errors) {
  const auto lin = TensorKernelSpec::linear(4);
  EXPECT_THROW((void)kernel_eval(lin, {{1.0}, {1.0}}), ShapeError);
  EXPECT_THROW((void)kernel_eval(lin, {{1.0}, {1.0}, {1.0}, {1.0, 2.0}}), ShapeError);
  EXPECT_THROW((void)kernel_eval(TensorKernelSpec::exponential(2), {{30.0}, {30.0}}), RangeError);
}

TEST(KernelEval, SymmetricUnderPermutation) {
  const auto x = oracle::gaussian_matrix(4, 6, 3);
  std::vector<std::vector<double>> pts;
  for (std::size_t i = 0; i < 4; ++i) pts.emplace_back(x.row(i).begin(), x.row(i).end());
  for (const auto& spec : {TensorKernelSpec::linear(4), TensorKernelSpec::polynomial(3, 4)}) {
    const double base = kernel_eval(spec, pts);
    auto perm = pts;
    std::sort(perm.begin(), perm.end());
    do {
      EXPECT_LT(oracle::rel_err(kernel_eval(spec, perm), base), 1e-14);
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

TEST(KernelEval, MatchesDefinition) {
  const auto x = oracle::gaussian_matrix(4, 9, 5, 0.5);
  std::vector<const double*> raw;
  std::vector<std::vector<double>> pts;
  for (std::size_t i = 0; i < 4; ++i) {
    raw.push_back(x.row(i).data());
    pts.emplace_back(x.row(i).begin(), x.row(i).end());
  }
  for (const auto& spec : {TensorKernelSpec::linear(4), TensorKernelSpec::polynomial(2, 4),
                           TensorKernelSpec::exponential(4)}) {
    EXPECT_LT(oracle::rel_err(kernel_eval(spec, pts), oracle::kernel(spec, raw, 9)), 1e-13);
  }
}

TEST(PackedGram, EqualsDirectEvaluation) {
  // Every packed entry is bitwise the kernel on its canonical tuple.
  const auto x = oracle::gaussian_matrix(7, 5, 2);
  for (const auto& spec : {TensorKernelSpec::linear(4), TensorKernelSpec::polynomial(2, 4),
                           TensorKernelSpec::exponential(2), TensorKernelSpec::linear(2)}) {
    GramBuildStats stats;
    const auto k = build_packed_gram(spec, x, &stats);
    EXPECT_EQ(stats.evaluations, k.size());
    EXPECT_GE(stats.seconds, 0.0);
    for (const auto& item : iter_canonical(k.scheme())) {
      std::vector<std::vector<double>> pts;
      for (auto i : item.index.values()) pts.emplace_back(x.row(i).begin(), x.row(i).end());
      ASSERT_EQ(k.values()[item.slot], kernel_eval(spec, pts));
    }
  }
}

TEST(PackedGram, MatchesFullTensor) {
  const auto x = oracle::gaussian_matrix(6, 4, 12);
  const auto spec = TensorKernelSpec::polynomial(2, 4);
  const auto k = build_packed_gram(spec, x);
  const auto full = oracle::full_gram(spec, x);
  double scale = 0.0;
  for (double v : full.values) scale = std::max(scale, std::abs(v));
  oracle::for_each_tuple(6, 4, [&](const oracle::Tuple& t) {
    ASSERT_LE(std::abs(k.get(t) - full.at(t)), 1e-13 * scale);
  });
}

TEST(PackedGram, LinearQuadraticIsPositiveSemidefinite) {
  const auto x = oracle::gaussian_matrix(10, 3, 4);
  const auto k = build_packed_gram(TensorKernelSpec::linear(4), x);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = oracle::gaussian_vector(10, 50 + s);
    EXPECT_GE(contract_objective(k, a), -1e-12);
  }
}

TEST(PackedGram, ThreadCountDoesNotChangeValues) {
  const auto x = oracle::gaussian_matrix(30, 8, 6);
  set_thread_count(1);
  const auto a = build_packed_gram(TensorKernelSpec::linear(4), x);
  set_thread_count(3);
  const auto b = build_packed_gram(TensorKernelSpec::linear(4), x);
  set_thread_count(0);
  EXPECT_TRUE(std::equal(a.values().begin(), a.values().end(), b.values().begin(), b.values().end()));
}

TEST(DenseGram, SmallExample) {
  const Matrix x{{1.0}, {2.0}};
  const auto dense = build_dense_gram_matrix(TensorKernelSpec::linear(4), x);
  EXPECT_EQ(dense.at({0, 1}, {0, 1}), 4.0);
  EXPECT_EQ(dense.at({1, 0}, {1, 0}), 4.0);
  EXPECT_EQ(dense.dimension(), 3u);
  EXPECT_EQ(dense.stored_entries(), 9u);
}

TEST(DenseGram, EqualsPackedOnDyadicData) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto x = oracle::dyadic_matrix(8, 6, seed);
    for (const auto& spec : {TensorKernelSpec::linear(4), TensorKernelSpec::polynomial(2, 4)}) {
      const auto packed = build_packed_gram(spec, x);
      const auto dense = build_dense_gram_matrix(spec, x);
      oracle::for_each_tuple(8, 4, [&](const oracle::Tuple& t) {
        const index_t left[] = {t[0], t[1]};
        const index_t right[] = {t[2], t[3]};
        ASSERT_EQ(dense.at(left, right), packed.get(t));
      });
    }
  }
}

TEST(DenseGram, ContractionMatchesPacked) {
  const auto x = oracle::gaussian_matrix(7, 4, 21);
  for (const auto& spec : {TensorKernelSpec::linear(4), TensorKernelSpec::polynomial(2, 4),
                           TensorKernelSpec::linear(2)}) {
    const auto packed = build_packed_gram(spec, x);
    const auto dense = build_dense_gram_matrix(spec, x);
    const auto a = oracle::gaussian_vector(7, 22);
    const auto p = contract(packed, a);
    const auto d = dense.contract(a);
    EXPECT_LT(oracle::rel_err(d.objective, p.objective), 1e-12);
    EXPECT_LT(oracle::rel_err(d.gradient, p.gradient), 1e-12);
  }
}

TEST(DenseGram, RefusesAboveCap) {
  const auto x = oracle::gaussian_matrix(12, 2, 1);
  EXPECT_THROW((void)build_dense_gram_matrix(TensorKernelSpec::linear(4), x, 10), CapacityError);
  EXPECT_NO_THROW((void)build_packed_gram(TensorKernelSpec::linear(4), x));
  EXPECT_THROW((void)build_dense_gram_matrix(TensorKernelSpec::exponential(4), x), UnsupportedError);
}

TEST(MemoryReport, Examples) {
  const auto r100 = memory_report(100, 4);
  EXPECT_EQ(r100.packed_entries, 4421275u);
  EXPECT_EQ(r100.dense_entries, 1e8);
  EXPECT_NEAR(r100.reduction_fraction, 0.9558, 5e-5);
  EXPECT_NEAR(memory_report(10, 2).reduction_fraction, 0.45, 1e-15);
  const auto r1 = memory_report(1, 4);
  EXPECT_EQ(r1.packed_bytes, 8.0);
  EXPECT_EQ(r1.dense_bytes, 8.0);
  EXPECT_EQ(r1.reduction_fraction, 0.0);
}

TEST(MemoryReport, PublishedByteFigures) {
  // 150 points: about 3.77 GiB dense against 163 MB packed; 399 points about 7.99 GiB packed.
  const double gib = 1024.0 * 1024.0 * 1024.0;
  EXPECT_NEAR(memory_report(150, 4).dense_bytes / gib, 3.77, 0.005);
  EXPECT_NEAR(memory_report(399, 4).packed_bytes / gib, 7.99, 0.005);
  EXPECT_NEAR(memory_report(250, 4).packed_bytes / gib, 1.24, 0.005);
}
