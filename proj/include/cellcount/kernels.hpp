#pragma once

// Dense GEMM kernels. The serial variant is the reference; the OpenMP variant
// accumulates every output element over k in the same ascending order, so the
// two produce bit-identical results for any thread count.

#include <cstddef>
#include <span>

namespace cellcount::kernels {

enum class Backend { serial, parallel };

enum class Transpose { none, trans };

// C[m×n] (+)= op(A)[m×k] · op(B)[k×n], all row-major.
// op(A) = A (stored m×k) or Aᵀ (stored k×m); likewise for B.
void gemm(Backend backend, Transpose ta, Transpose tb, std::size_t m, std::size_t n,
          std::size_t k, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate);

void gemm_serial(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
                 std::span<const double> a, std::span<const double> b, std::span<double> c,
                 bool accumulate);

void gemm_parallel(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
                   std::span<const double> a, std::span<const double> b, std::span<double> c,
                   bool accumulate);

// Backend used by tensor ops. Defaults to parallel.
Backend default_backend();
void set_default_backend(Backend backend);

// Number of OpenMP threads; honours CELLCOUNT_THREADS when set.
int configure_threads_from_env();

}  // namespace cellcount::kernels
