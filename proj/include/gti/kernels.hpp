#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace gti::kernels {

// Data-parallel inner loops used by the model and the quantizer. Every entry
// has a scalar reference implementation; wider variants (AVX2, NEON) are
// selected once at startup and must agree with the reference to ~1e-13
// relative (accumulation order differs, so not bit-exact).
struct Ops {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    void (*scale)(double* x, std::size_t n, double alpha);
    double (*sum)(const double* x, std::size_t n);
    double (*sumsq)(const double* x, std::size_t n);
    // squared Euclidean distance
    double (*sqdist)(const double* a, const double* b, std::size_t n);
};

const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif
#if defined(__ARM_NEON)
const Ops& neon_ops();
#endif

// Variants compiled in and usable on this CPU.
std::vector<std::string> available();

// Active variant: best available, unless overridden by the GTI_KERNELS
// environment variable or an explicit select() call.
const Ops& active();
std::string_view active_name();
void select(std::string_view name); // throws std::invalid_argument if unknown

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void scale(double* x, std::size_t n, double alpha) { active().scale(x, n, alpha); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }
inline double sumsq(const double* x, std::size_t n) { return active().sumsq(x, n); }
inline double sqdist(const double* a, const double* b, std::size_t n) { return active().sqdist(a, b, n); }

} // namespace gti::kernels
