// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after dispatch has confirmed CPU support.

#include <immintrin.h>

#include <cmath>

#include "lshrom/simd/kernels.hpp"

namespace lshrom::simd::avx2 {
namespace {

template <typename T>
struct Lanes;

template <>
struct Lanes<float> {
  using Reg = __m256;
  static constexpr std::size_t kWidth = 8;
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg broadcast(float x) { return _mm256_set1_ps(x); }
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg fma(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static float hsum(Reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Lanes<double> {
  using Reg = __m256d;
  static constexpr std::size_t kWidth = 4;
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg broadcast(double x) { return _mm256_set1_pd(x); }
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg fma(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static double hsum(Reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

// Computes an kRows x (kVecs * width) tile of C starting at (i0, j0).
template <typename T, int kRows, int kVecs>
inline void tile(const GemmArgs<T>& g, std::size_t i0, std::size_t j0) {
  using L = Lanes<T>;
  using Reg = typename L::Reg;
  Reg acc[kRows][kVecs];
  for (int r = 0; r < kRows; ++r) {
    T* c = g.c + static_cast<std::ptrdiff_t>(i0 + r) * g.ldc + j0;
    for (int v = 0; v < kVecs; ++v) {
      acc[r][v] = g.accumulate ? L::load(c + v * L::kWidth) : L::zero();
    }
  }
  const T* arow[kRows];
  for (int r = 0; r < kRows; ++r) {
    arow[r] = g.a + static_cast<std::ptrdiff_t>(i0 + r) * g.a_row;
  }
  const T* b = g.b + j0;
  for (std::size_t p = 0; p < g.k; ++p) {
    Reg bv[kVecs];
    for (int v = 0; v < kVecs; ++v) bv[v] = L::load(b + v * L::kWidth);
    const std::ptrdiff_t aoff = static_cast<std::ptrdiff_t>(p) * g.a_col;
    for (int r = 0; r < kRows; ++r) {
      const Reg av = L::broadcast(arow[r][aoff]);
      for (int v = 0; v < kVecs; ++v) acc[r][v] = L::fma(av, bv[v], acc[r][v]);
    }
    b += g.ldb;
  }
  for (int r = 0; r < kRows; ++r) {
    T* c = g.c + static_cast<std::ptrdiff_t>(i0 + r) * g.ldc + j0;
    for (int v = 0; v < kVecs; ++v) L::store(c + v * L::kWidth, acc[r][v]);
  }
}

template <typename T>
inline void tail_columns(const GemmArgs<T>& g, std::size_t i0, std::size_t rows,
                         std::size_t j0) {
  for (std::size_t i = i0; i < i0 + rows; ++i) {
    const T* a = g.a + static_cast<std::ptrdiff_t>(i) * g.a_row;
    T* c = g.c + static_cast<std::ptrdiff_t>(i) * g.ldc;
    for (std::size_t j = j0; j < g.n; ++j) {
      T acc = g.accumulate ? c[j] : T(0);
      for (std::size_t p = 0; p < g.k; ++p) {
        acc = std::fma(a[static_cast<std::ptrdiff_t>(p) * g.a_col],
                       g.b[static_cast<std::ptrdiff_t>(p) * g.ldb + j], acc);
      }
      c[j] = acc;
    }
  }
}

template <typename T, int kRows>
inline void row_block(const GemmArgs<T>& g, std::size_t i0) {
  constexpr std::size_t w = Lanes<T>::kWidth;
  std::size_t j = 0;
  for (; j + 2 * w <= g.n; j += 2 * w) tile<T, kRows, 2>(g, i0, j);
  for (; j + w <= g.n; j += w) tile<T, kRows, 1>(g, i0, j);
  if (j < g.n) tail_columns(g, i0, kRows, j);
}

}  // namespace

template <typename T>
void gemm(const GemmArgs<T>& g) {
  std::size_t i = 0;
  for (; i + 4 <= g.m; i += 4) row_block<T, 4>(g, i);
  for (; i < g.m; ++i) row_block<T, 1>(g, i);
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  using L = Lanes<T>;
  constexpr std::size_t w = L::kWidth;
  auto acc0 = L::zero();
  auto acc1 = L::zero();
  std::size_t i = 0;
  for (; i + 2 * w <= n; i += 2 * w) {
    acc0 = L::fma(L::load(x + i), L::load(y + i), acc0);
    acc1 = L::fma(L::load(x + i + w), L::load(y + i + w), acc1);
  }
  for (; i + w <= n; i += w) acc0 = L::fma(L::load(x + i), L::load(y + i), acc0);
  T s = L::hsum(acc0) + L::hsum(acc1);
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  using L = Lanes<T>;
  constexpr std::size_t w = L::kWidth;
  const auto a = L::broadcast(alpha);
  std::size_t i = 0;
  for (; i + w <= n; i += w) L::store(y + i, L::fma(a, L::load(x + i), L::load(y + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

template void gemm<float>(const GemmArgs<float>&);
template void gemm<double>(const GemmArgs<double>&);
template float dot<float>(const float*, const float*, std::size_t);
template double dot<double>(const double*, const double*, std::size_t);
template void axpy<float>(float, const float*, float*, std::size_t);
template void axpy<double>(double, const double*, double*, std::size_t);

}  // namespace lshrom::simd::avx2
