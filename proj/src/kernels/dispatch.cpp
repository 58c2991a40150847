#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string_view>

#include "congrpo/kernels.hpp"
#include "kernels_impl.hpp"

namespace congrpo::kernels {
namespace {

constexpr KernelTable kScalar{Isa::kScalar,   scalar::axpy, scalar::scale,
                              scalar::dot,    scalar::sum,  scalar::max,
                              scalar::kl_from_logs};

#if defined(CONGRPO_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::kAvx2, avx2::axpy, avx2::scale, avx2::dot,
                            avx2::sum,  avx2::max,  avx2::kl_from_logs};
#endif

#if defined(CONGRPO_HAVE_NEON)
constexpr KernelTable kNeon{Isa::kNeon, neon::axpy, neon::scale, neon::dot,
                            neon::sum,  neon::max,  neon::kl_from_logs};
#endif

const KernelTable* detect_simd() {
#if defined(CONGRPO_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return &kAvx2;
  return nullptr;
#elif defined(CONGRPO_HAVE_NEON)
  return &kNeon;  // baseline on aarch64
#else
  return nullptr;
#endif
}

const KernelTable* choose_default() {
  if (const char* forced = std::getenv("CONGRPO_ISA")) {
    if (std::string_view(forced) == "scalar") return &kScalar;
  }
  const KernelTable* simd = detect_simd();
  return simd != nullptr ? simd : &kScalar;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{choose_default()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
    case Isa::kNeon: return "neon";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return kScalar; }

const KernelTable* simd_table() {
  static const KernelTable* simd = detect_simd();
  return simd;
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(const KernelTable& table) {
  slot().store(&table, std::memory_order_relaxed);
}

void softmax(std::span<double> logits, double temperature,
             std::span<double> log_probs) {
  const KernelTable& k = active();
  const std::size_t n = logits.size();
  double* z = logits.data();
  if (temperature != 1.0) k.scale(1.0 / temperature, z, n);
  const double m = k.max(z, n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] -= m;
    if (!log_probs.empty()) log_probs[i] = z[i];
    z[i] = std::exp(z[i]);
    total += z[i];
  }
  k.scale(1.0 / total, z, n);
  if (!log_probs.empty()) {
    const double log_total = std::log(total);
    for (std::size_t i = 0; i < n; ++i) log_probs[i] -= log_total;
  }
}

}  // namespace congrpo::kernels
