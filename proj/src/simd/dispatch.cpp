#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "lshrom/simd/kernels.hpp"

namespace lshrom::simd {
namespace {

bool cpu_has_avx2() {
#if defined(LSHROM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  const Isa best = detected_isa();
  if (const char* env = std::getenv("LSHROM_ISA")) {
    const Isa wanted = parse_isa(env);
    if (wanted == Isa::kAvx2 && best != Isa::kAvx2) return Isa::kScalar;
    return wanted == Isa::kScalar ? Isa::kScalar : best;
  }
  return best;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

Isa detected_isa() {
  static const Isa best = cpu_has_avx2() ? Isa::kAvx2 : Isa::kScalar;
  return best;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2) {
    throw std::invalid_argument("AVX2/FMA kernels are not available on this CPU or build");
  }
  current().store(isa, std::memory_order_relaxed);
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar") return Isa::kScalar;
  if (name == "avx2") return Isa::kAvx2;
  if (name == "auto" || name.empty()) return detected_isa();
  throw std::invalid_argument("unknown ISA '" + std::string(name) + "' (expected scalar, avx2 or auto)");
}

template <typename T>
void gemm(const GemmArgs<T>& args) {
  if (args.m == 0 || args.n == 0) return;
#if defined(LSHROM_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::gemm(args);
#endif
  scalar::gemm(args);
}

template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
#if defined(LSHROM_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::dot(x, y, n);
#endif
  return scalar::dot(x, y, n);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
#if defined(LSHROM_HAVE_AVX2)
  if (active_isa() == Isa::kAvx2) return avx2::axpy(alpha, x, y, n);
#endif
  scalar::axpy(alpha, x, y, n);
}

template void gemm<float>(const GemmArgs<float>&);
template void gemm<double>(const GemmArgs<double>&);
template float dot<float>(const float*, const float*, std::size_t);
template double dot<double>(const double*, const double*, std::size_t);
template void axpy<float>(float, const float*, float*, std::size_t);
template void axpy<double>(double, const double*, double*, std::size_t);

}  // namespace lshrom::simd
