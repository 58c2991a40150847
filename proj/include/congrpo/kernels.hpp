#pragma once
// Dense vector kernels used by the policy inner loops.
//
// Every kernel has a scalar reference implementation. SIMD variants (AVX2+FMA
// on x86-64, NEON on aarch64) are compiled when the toolchain supports them
// and selected at runtime from CPU capabilities. Variants agree with the
// scalar path up to summation-order rounding; tests pin that tolerance.
//
// Set CONGRPO_ISA=scalar in the environment to force the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace congrpo::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y *= a
  void (*scale)(double a, double* y, std::size_t n);
  double (*dot)(const double* x, const double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*max)(const double* x, std::size_t n);
  // Σ p_i * (log p_i - log q_i), inputs are log-probabilities.
  double (*kl_from_logs)(const double* log_p, const double* log_q, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the variant was not compiled or the CPU lacks the feature.
const KernelTable* simd_table();

// Table used by the library. Chosen once on first use.
const KernelTable& active();

// Overrides the active table (tests and benchmarking). Not thread-safe with
// respect to concurrent kernel calls.
void set_active(const KernelTable& table);

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), y.size());
}
inline void scale(double a, std::span<double> y) {
  active().scale(a, y.data(), y.size());
}
inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline double sum(std::span<const double> x) {
  return active().sum(x.data(), x.size());
}
inline double max(std::span<const double> x) {
  return active().max(x.data(), x.size());
}

// In place: logits -> probabilities of softmax(logits / temperature).
// Also writes log-probabilities to `log_probs` when it is non-empty.
void softmax(std::span<double> logits, double temperature,
             std::span<double> log_probs = {});

// KL(p || q) given both as log-probabilities over the same support.
inline double kl_from_logs(std::span<const double> log_p,
                           std::span<const double> log_q) {
  return active().kl_from_logs(log_p.data(), log_q.data(), log_p.size());
}

}  // namespace congrpo::kernels
