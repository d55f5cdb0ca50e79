#include <cmath>

#include <gtest/gtest.h>

#include "dapair/kernels.hpp"
#include "dapair/objective.hpp"
#include "test_util.hpp"

using namespace dapair;

namespace {

// Textbook biased MMD² as three double sums over explicit kernel evaluations.
double naive_mmd(const std::vector<double>& s, std::size_t n, const std::vector<double>& t, std::size_t m,
                 std::size_t d, const std::vector<double>& sigmas, const std::vector<double>& weights) {
  auto k = [&](const double* a, const double* b) {
    double d2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) d2 += (a[c] - b[c]) * (a[c] - b[c]);
    double sum = 0.0;
    for (std::size_t q = 0; q < sigmas.size(); ++q) sum += weights[q] * std::exp(-d2 / (2.0 * sigmas[q] * sigmas[q]));
    return sum;
  };
  double ss = 0.0, tt = 0.0, st = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) ss += k(&s[i * d], &s[j * d]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) tt += k(&t[i * d], &t[j * d]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) st += k(&s[i * d], &t[j * d]);
  const double dn = static_cast<double>(n), dm = static_cast<double>(m);
  return ss / (dn * dn) + tt / (dm * dm) - 2.0 * st / (dn * dm);
}

void naive_matmul(const std::vector<double>& a, const std::vector<double>& b, std::vector<double>& out,
                  std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      out[i * n + j] += acc;
    }
}

}  // namespace

TEST(Kernels, MmdMatchesNaiveDoubleLoop) {
  test::Generator gen(2024);
  const MmdConfig cfg;
  const kernels::RbfMixture mixture{cfg.sigmas, cfg.weights};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = gen.index(1, 16), m = gen.index(1, 16), d = gen.index(1, 8);
    const auto s = gen.values(n * d), t = gen.values(m * d, 0.7);
    const double oracle = naive_mmd(s, n, t, m, d, cfg.sigmas, cfg.weights);
    worst = std::max(worst, std::abs(kernels::serial::rbf_mmd(s, n, t, m, d, mixture).value - oracle));
    worst = std::max(worst, std::abs(kernels::omp::rbf_mmd(s, n, t, m, d, mixture).value - oracle));
    Tape tape(GradMode::inference);
    const double taped =
        mmd_squared(tape, Tensor({n, d}, s), Tensor({m, d}, t), cfg).item();
    worst = std::max(worst, std::abs(taped - oracle));
  }
  EXPECT_LE(worst, 1e-10);
}

TEST(Kernels, MmdFarApartBatches) {
  const MmdConfig cfg;
  const kernels::RbfMixture mixture{cfg.sigmas, cfg.weights};
  const std::vector<double> s{0.0}, t{1000.0};
  EXPECT_NEAR(kernels::serial::rbf_mmd(s, 1, t, 1, 1, mixture).value, 8.0, 1e-12);
  EXPECT_NEAR(kernels::omp::rbf_mmd(s, 1, t, 1, 1, mixture).value, 8.0, 1e-12);
}

TEST(Kernels, ParallelMmdMatchesSerialOnLargeBatches) {
  test::Generator gen(7);
  const MmdConfig cfg;
  const kernels::RbfMixture mixture{cfg.sigmas, cfg.weights};
  for (std::size_t n : {64u, 256u, 300u}) {
    const std::size_t m = n - 17, d = 5;
    const auto s = gen.values(n * d), t = gen.values(m * d);
    const auto a = kernels::serial::rbf_mmd(s, n, t, m, d, mixture);
    const auto b = kernels::omp::rbf_mmd(s, n, t, m, d, mixture);
    EXPECT_NEAR(a.value, b.value, 1e-12);
    for (std::size_t i = 0; i < a.grad_source.size(); ++i) EXPECT_NEAR(a.grad_source[i], b.grad_source[i], 1e-12);
    for (std::size_t i = 0; i < a.grad_target.size(); ++i) EXPECT_NEAR(a.grad_target[i], b.grad_target[i], 1e-12);
  }
}

TEST(Kernels, ParallelMmdIndependentOfThreadCount) {
  test::Generator gen(8);
  const MmdConfig cfg;
  const kernels::RbfMixture mixture{cfg.sigmas, cfg.weights};
  const std::size_t n = 256, m = 256, d = 4;
  const auto s = gen.values(n * d), t = gen.values(m * d);
  kernels::omp::set_threads(1);
  const auto one = kernels::omp::rbf_mmd(s, n, t, m, d, mixture);
  kernels::omp::set_threads(4);
  const auto four = kernels::omp::rbf_mmd(s, n, t, m, d, mixture);
  kernels::omp::set_threads(kernels::omp::max_threads());
  EXPECT_EQ(one.value, four.value);
  EXPECT_EQ(one.grad_source, four.grad_source);
  EXPECT_EQ(one.grad_target, four.grad_target);
}

TEST(Kernels, MatmulVariantsMatchNaive) {
  test::Generator gen(9);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = gen.index(1, 70), k = gen.index(1, 40), n = gen.index(1, 90);
    const auto a = gen.values(m * k), b = gen.values(k * n);
    std::vector<double> ref(m * n, 0.5), ser(m * n, 0.5), par(m * n, 0.5);
    naive_matmul(a, b, ref, m, k, n);
    kernels::serial::matmul(a, b, ser, m, k, n);
    kernels::omp::matmul(a, b, par, m, k, n);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      EXPECT_NEAR(ser[i], ref[i], 1e-12);
      EXPECT_NEAR(par[i], ref[i], 1e-12);
    }

    // aᵀ·c and c·bᵀ against explicit transposes.
    const auto c = gen.values(m * n);
    std::vector<double> at(k * m), bt(n * k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    std::vector<double> ref_atb(k * n, 0.0), ser_atb(k * n, 0.0), par_atb(k * n, 0.0);
    naive_matmul(at, c, ref_atb, k, m, n);
    kernels::serial::matmul_at_b(a, c, ser_atb, m, k, n);
    kernels::omp::matmul_at_b(a, c, par_atb, m, k, n);
    for (std::size_t i = 0; i < ref_atb.size(); ++i) {
      EXPECT_NEAR(ser_atb[i], ref_atb[i], 1e-12);
      EXPECT_NEAR(par_atb[i], ref_atb[i], 1e-12);
    }
    std::vector<double> ref_abt(m * k, 0.0), ser_abt(m * k, 0.0), par_abt(m * k, 0.0);
    naive_matmul(c, bt, ref_abt, m, n, k);
    kernels::serial::matmul_a_bt(c, b, ser_abt, m, n, k);
    kernels::omp::matmul_a_bt(c, b, par_abt, m, n, k);
    for (std::size_t i = 0; i < ref_abt.size(); ++i) {
      EXPECT_NEAR(ser_abt[i], ref_abt[i], 1e-12);
      EXPECT_NEAR(par_abt[i], ref_abt[i], 1e-12);
    }
  }
}
