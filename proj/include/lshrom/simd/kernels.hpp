#pragma once

// Dense arithmetic kernels used by the network engine.
//
// Every kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The active variant is chosen once at startup from the
// CPU features and the LSHROM_ISA environment variable ("scalar", "avx2" or
// "auto"), and can be overridden with set_isa(). Both variants sum in the same
// order; they differ only by FMA rounding.

#include <cstddef>
#include <string_view>

namespace lshrom::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// Best ISA supported by this CPU and build.
Isa detected_isa();

/// ISA currently used by the dispatching entry points.
Isa active_isa();

/// Selects the kernels to use. Throws std::invalid_argument if the CPU or the
/// build does not support `isa`.
void set_isa(Isa isa);

/// Parses "scalar" / "avx2" / "auto". Throws std::invalid_argument otherwise.
Isa parse_isa(std::string_view name);

/// C[m x n] (+)= A[m x k] * B[k x n].
///
/// A is addressed as a[i * a_row + p * a_col], so a transposed operand is just
/// a pair of swapped strides. B and C are row-major with leading dimensions
/// ldb and ldc. When `accumulate` is false C is overwritten.
template <typename T>
struct GemmArgs {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  const T* a = nullptr;
  std::ptrdiff_t a_row = 0;
  std::ptrdiff_t a_col = 1;
  const T* b = nullptr;
  std::ptrdiff_t ldb = 0;
  T* c = nullptr;
  std::ptrdiff_t ldc = 0;
  bool accumulate = false;
};

template <typename T>
void gemm(const GemmArgs<T>& args);

template <typename T>
T dot(const T* x, const T* y, std::size_t n);

/// y += alpha * x
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n);

namespace scalar {
template <typename T>
void gemm(const GemmArgs<T>& args);
template <typename T>
T dot(const T* x, const T* y, std::size_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n);
}  // namespace scalar

#if defined(LSHROM_HAVE_AVX2)
namespace avx2 {
template <typename T>
void gemm(const GemmArgs<T>& args);
template <typename T>
T dot(const T* x, const T* y, std::size_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace lshrom::simd
