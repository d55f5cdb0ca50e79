#pragma once

// Dense kernels behind the tape. Each kernel exists twice: a plain serial
// reference and an OpenMP version that parallelizes over output rows and
// vectorizes the inner loop. Every output element is reduced in a fixed order
// inside one thread, so the OpenMP results do not depend on the thread count.
//
// Matrix arguments are row-major. The gemm-style kernels accumulate into `out`.

#include <cstddef>
#include <span>
#include <vector>

namespace dapair::kernels {

struct RbfMixture {
  std::span<const double> sigmas;
  std::span<const double> weights;
};

/// Biased MMD² estimate together with its gradient with respect to every
/// coordinate of both batches.
struct MmdEvaluation {
  double value = 0.0;
  std::vector<double> grad_source;  // n×d
  std::vector<double> grad_target;  // m×d
};

namespace serial {

/// out[m×n] += a[m×k] · b[k×n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
/// out[k×n] += a[m×k]ᵀ · b[m×n]
void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t k, std::size_t n);
/// out[m×k] += a[m×n] · b[k×n]ᵀ
void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t k);

MmdEvaluation rbf_mmd(std::span<const double> source, std::size_t n, std::span<const double> target,
                      std::size_t m, std::size_t d, const RbfMixture& mixture);

}  // namespace serial

namespace omp {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t k, std::size_t n);
void matmul_a_bt(std::span<const double> a, std::span<const double> b, std::span<double> out,
                 std::size_t m, std::size_t n, std::size_t k);

MmdEvaluation rbf_mmd(std::span<const double> source, std::size_t n, std::span<const double> target,
                      std::size_t m, std::size_t d, const RbfMixture& mixture);

/// Threads available to the parallel kernels (1 when built without OpenMP).
int max_threads();
/// Caps the kernel thread count for the calling thread.
void set_threads(int threads);

}  // namespace omp

}  // namespace dapair::kernels
