#pragma once
// Internal per-ISA entry points. Only dispatch.cpp should include this.

#include <cstddef>

namespace congrpo::kernels {

namespace scalar {
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);
double kl_from_logs(const double* log_p, const double* log_q, std::size_t n);
}  // namespace scalar

#if defined(CONGRPO_HAVE_AVX2)
namespace avx2 {
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);
double kl_from_logs(const double* log_p, const double* log_q, std::size_t n);
}  // namespace avx2
#endif

#if defined(CONGRPO_HAVE_NEON)
namespace neon {
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* y, std::size_t n);
double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double max(const double* x, std::size_t n);
double kl_from_logs(const double* log_p, const double* log_q, std::size_t n);
}  // namespace neon
#endif

}  // namespace congrpo::kernels
