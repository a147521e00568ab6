#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

// Dense double-precision inner loops used by the nn layers. Each kernel has a
// scalar reference implementation and vectorized variants; the variant is
// picked once at startup from the CPU features and can be overridden with the
// SKATEPOSE_KERNELS environment variable (scalar | avx2 | neon).
namespace skatepose::kernels {

enum class Backend { Scalar, Avx2, Neon };

std::string_view to_string(Backend backend) noexcept;
std::optional<Backend> parse_backend(std::string_view name) noexcept;

struct KernelTable {
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y[i] += a[i] * b[i]
    void (*fma_inplace)(const double* a, const double* b, double* y, std::size_t n);
};

// Backends compiled into this binary and supported by the running CPU.
std::vector<Backend> available_backends();

const KernelTable& table(Backend backend);

Backend active_backend() noexcept;
// Throws Error(Config) when the backend is unavailable.
void set_active_backend(Backend backend);

inline const KernelTable& active();

namespace detail {
extern const KernelTable* g_active;
const KernelTable& scalar_table() noexcept;
#if defined(SKATEPOSE_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif
#if defined(SKATEPOSE_HAVE_NEON)
const KernelTable& neon_table() noexcept;
#endif
}  // namespace detail

inline const KernelTable& active() { return *detail::g_active; }

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

// C (m x n) = A (m x k) * B^T, with B stored n x k. accumulate adds into C.
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate);

// C (m x k) += A (m x n) * B, with B stored n x k.
void matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);

// C (n x k) += A^T * B, with A stored m x n and B stored m x k.
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);

}  // namespace skatepose::kernels
