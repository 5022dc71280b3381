#include "cellcount/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <cstdlib>
#include <string>

namespace cellcount::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::parallel};

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelThreshold = 32 * 1024;

inline double load_a(Transpose ta, std::span<const double> a, std::size_t m, std::size_t k,
                     std::size_t i, std::size_t p) {
  return ta == Transpose::none ? a[i * k + p] : a[p * m + i];
}

// One output row, i-p-j order: each c(i,j) receives its k terms in ascending p.
inline void gemm_row(Transpose ta, Transpose tb, std::size_t i, std::size_t m, std::size_t n,
                     std::size_t k, std::span<const double> a, std::span<const double> b,
                     double* crow, bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
  }
  if (tb == Transpose::none) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = load_a(ta, a, m, k, i, p);
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  } else {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = load_a(ta, a, m, k, i, p);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * k + p];
    }
  }
}

}  // namespace

void gemm_serial(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
                 std::span<const double> a, std::span<const double> b, std::span<double> c,
                 bool accumulate) {
  // Plain triple loop; kept straightforward as the reference.
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = accumulate ? c[i * n + j] : 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double bv = tb == Transpose::none ? b[p * n + j] : b[j * k + p];
        acc += load_a(ta, a, m, k, i, p) * bv;
      }
      c[i * n + j] = acc;
    }
  }
}

void gemm_parallel(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
                   std::span<const double> a, std::span<const double> b, std::span<double> c,
                   bool accumulate) {
  const bool go_wide = m > 1 && m * n * k >= kParallelThreshold;
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (go_wide)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const auto row = static_cast<std::size_t>(i);
    gemm_row(ta, tb, row, m, n, k, a, b, c.data() + row * n, accumulate);
  }
}

void gemm(Backend backend, Transpose ta, Transpose tb, std::size_t m, std::size_t n,
          std::size_t k, std::span<const double> a, std::span<const double> b,
          std::span<double> c, bool accumulate) {
  if (backend == Backend::serial) {
    gemm_serial(ta, tb, m, n, k, a, b, c, accumulate);
  } else {
    gemm_parallel(ta, tb, m, n, k, a, b, c, accumulate);
  }
}

Backend default_backend() { return g_backend.load(std::memory_order_relaxed); }

void set_default_backend(Backend backend) { g_backend.store(backend, std::memory_order_relaxed); }

int configure_threads_from_env() {
  if (const char* env = std::getenv("CELLCOUNT_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) omp_set_num_threads(n);
    } catch (const std::exception&) {
      // ignore malformed values
    }
  }
  return omp_get_max_threads();
}

}  // namespace cellcount::kernels
