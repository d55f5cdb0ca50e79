// Parallel kernels. This translation unit is compiled with -ffast-math so the
// exp calls in the MMD inner loop map onto the vector math library; nothing here
// depends on NaN or Inf semantics.

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dapair/kernels.hpp"

namespace dapair::kernels::omp {

namespace {

// Below these sizes thread start-up costs more than the loop itself.
constexpr std::size_t kMatmulParallelWork = std::size_t{1} << 15;
constexpr std::size_t kMmdParallelWork = std::size_t{1} << 14;

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(threads < 1 ? 1 : threads);
#else
  (void)threads;
#endif
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  const double* __restrict pa = a.data();
  const double* __restrict pb = b.data();
  double* __restrict po = out.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kMatmulParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t k, std::size_t n) {
  const double* __restrict pa = a.data();
  const double* __restrict pb = b.data();
  double* __restrict po = out.data();
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (m * n * k >= kMatmulParallelWork)
  for (std::ptrdiff_t p = 0; p < rows; ++p) {
    double* orow = po + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = pa[i * k + p];
      const double* brow = pb + i * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t k) {
  const double* __restrict pa = a.data();
  const double* __restrict pb = b.data();
  double* __restrict po = out.data();
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kMatmulParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* arow = pa + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      po[i * k + p] += acc;
    }
  }
}

MmdEvaluation rbf_mmd(std::span<const double> source, std::size_t n, std::span<const double> target,
                      std::size_t m, std::size_t d, const RbfMixture& mixture) {
  const std::size_t total = n + m;
  const std::size_t kernels = mixture.sigmas.size();

  std::vector<double> z(total * d);
  std::copy(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(n * d), z.begin());
  std::copy(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(m * d),
            z.begin() + static_cast<std::ptrdiff_t>(n * d));

  std::vector<double> gamma(kernels), weight(kernels), slope_weight(kernels);
  for (std::size_t q = 0; q < kernels; ++q) {
    const double s2 = mixture.sigmas[q] * mixture.sigmas[q];
    gamma[q] = 1.0 / (2.0 * s2);
    weight[q] = mixture.weights[q];
    slope_weight[q] = mixture.weights[q] / s2;
  }

  const double w_ss = 1.0 / (double(n) * double(n));
  const double w_tt = 1.0 / (double(m) * double(m));
  const double w_st = -1.0 / (double(n) * double(m));

  std::vector<double> row_value(total, 0.0);
  std::vector<double> grad(total * d, 0.0);
  const double* __restrict pz = z.data();
  const auto rows = static_cast<std::ptrdiff_t>(total);

#pragma omp parallel if (total * total * kernels >= kMmdParallelWork)
  {
    std::vector<double> dist2(total), kern(total), slope(total);
    double* __restrict pd = dist2.data();
    double* __restrict pk = kern.data();
    double* __restrict ps = slope.data();

#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      const double* zi = pz + i * d;
#pragma omp simd
      for (std::size_t j = 0; j < total; ++j) pd[j] = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double zc = zi[c];
#pragma omp simd
        for (std::size_t j = 0; j < total; ++j) {
          const double diff = zc - pz[j * d + c];
          pd[j] += diff * diff;
        }
      }
#pragma omp simd
      for (std::size_t j = 0; j < total; ++j) pk[j] = ps[j] = 0.0;
      for (std::size_t q = 0; q < kernels; ++q) {
        const double g = gamma[q], w = weight[q], sw = slope_weight[q];
#pragma omp simd
        for (std::size_t j = 0; j < total; ++j) {
          const double e = std::exp(-g * pd[j]);
          pk[j] += w * e;
          ps[j] += sw * e;
        }
      }

      const bool in_source = static_cast<std::size_t>(i) < n;
      const double w_first = in_source ? w_ss : w_st;   // partner rows j < n
      const double w_second = in_source ? w_st : w_tt;  // partner rows j >= n

      double k_first = 0.0, k_second = 0.0;
#pragma omp simd reduction(+ : k_first)
      for (std::size_t j = 0; j < n; ++j) k_first += pk[j];
#pragma omp simd reduction(+ : k_second)
      for (std::size_t j = n; j < total; ++j) k_second += pk[j];
      row_value[i] = w_first * k_first + w_second * k_second;

      for (std::size_t c = 0; c < d; ++c) {
        const double zc = zi[c];
        double g_first = 0.0, g_second = 0.0;
#pragma omp simd reduction(+ : g_first)
        for (std::size_t j = 0; j < n; ++j) g_first += ps[j] * (zc - pz[j * d + c]);
#pragma omp simd reduction(+ : g_second)
        for (std::size_t j = n; j < total; ++j) g_second += ps[j] * (zc - pz[j * d + c]);
        grad[i * d + c] = -2.0 * (w_first * g_first + w_second * g_second);
      }
    }
  }

  MmdEvaluation result;
  for (double v : row_value) result.value += v;
  result.grad_source.assign(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(n * d));
  result.grad_target.assign(grad.begin() + static_cast<std::ptrdiff_t>(n * d), grad.end());
  return result;
}

}  // namespace dapair::kernels::omp
