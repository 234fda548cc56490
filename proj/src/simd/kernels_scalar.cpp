#include "lshrom/simd/kernels.hpp"

namespace lshrom::simd::scalar {

template <typename T>
void gemm(const GemmArgs<T>& g) {
  for (std::size_t i = 0; i < g.m; ++i) {
    T* c = g.c + static_cast<std::ptrdiff_t>(i) * g.ldc;
    if (!g.accumulate) {
      for (std::size_t j = 0; j < g.n; ++j) c[j] = T(0);
    }
    const T* a = g.a + static_cast<std::ptrdiff_t>(i) * g.a_row;
    for (std::size_t p = 0; p < g.k; ++p) {
      const T av = a[static_cast<std::ptrdiff_t>(p) * g.a_col];
      const T* b = g.b + static_cast<std::ptrdiff_t>(p) * g.ldb;
      for (std::size_t j = 0; j < g.n; ++j) c[j] += av * b[j];
    }
  }
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template void gemm<float>(const GemmArgs<float>&);
template void gemm<double>(const GemmArgs<double>&);
template float dot<float>(const float*, const float*, std::size_t);
template double dot<double>(const double*, const double*, std::size_t);
template void axpy<float>(float, const float*, float*, std::size_t);
template void axpy<double>(double, const double*, double*, std::size_t);

}  // namespace lshrom::simd::scalar
