// Reference kernels: straightforward loops, no threading, libm exp.

#include <cmath>

#include "dapair/kernels.hpp"

namespace dapair::kernels::serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * b[p * n + j];
    }
}

void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = a[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[p * n + j] += aip * b[i * n + j];
    }
}

void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * b[p * n + j];
      out[i * k + p] += acc;
    }
}

MmdEvaluation rbf_mmd(std::span<const double> source, std::size_t n, std::span<const double> target,
                      std::size_t m, std::size_t d, const RbfMixture& mixture) {
  // Work on the stacked batch z = [source; target]. Pair (i, j) carries weight
  // 1/n² inside source, 1/m² inside target and -1/(nm) across, so the plain sum
  // over all (n+m)² pairs is the V-statistic with the cross block counted twice.
  const std::size_t total = n + m;
  auto row = [&](std::size_t i) { return i < n ? &source[i * d] : &target[(i - n) * d]; };
  auto pair_weight = [&](std::size_t i, std::size_t j) {
    const bool si = i < n, sj = j < n;
    if (si && sj) return 1.0 / (double(n) * double(n));
    if (!si && !sj) return 1.0 / (double(m) * double(m));
    return -1.0 / (double(n) * double(m));
  };

  MmdEvaluation result;
  std::vector<double> grad(total * d, 0.0);
  for (std::size_t i = 0; i < total; ++i) {
    const double* zi = row(i);
    for (std::size_t j = 0; j < total; ++j) {
      const double* zj = row(j);
      double dist2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) dist2 += (zi[c] - zj[c]) * (zi[c] - zj[c]);
      double k = 0.0, slope = 0.0;
      for (std::size_t q = 0; q < mixture.sigmas.size(); ++q) {
        const double s2 = mixture.sigmas[q] * mixture.sigmas[q];
        const double e = mixture.weights[q] * std::exp(-dist2 / (2.0 * s2));
        k += e;
        slope += e / s2;
      }
      const double w = pair_weight(i, j);
      result.value += w * k;
      for (std::size_t c = 0; c < d; ++c) grad[i * d + c] -= 2.0 * w * slope * (zi[c] - zj[c]);
    }
  }
  result.grad_source.assign(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(n * d));
  result.grad_target.assign(grad.begin() + static_cast<std::ptrdiff_t>(n * d), grad.end());
  return result;
}

}  // namespace dapair::kernels::serial
