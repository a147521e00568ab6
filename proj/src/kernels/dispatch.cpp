#include "skatepose/kernels.hpp"

#include "skatepose/error.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace skatepose::kernels {

std::string_view to_string(Backend backend) noexcept {
    switch (backend) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "scalar";
}

std::optional<Backend> parse_backend(std::string_view name) noexcept {
    if (name == "scalar") return Backend::Scalar;
    if (name == "avx2") return Backend::Avx2;
    if (name == "neon") return Backend::Neon;
    return std::nullopt;
}

std::vector<Backend> available_backends() {
    std::vector<Backend> out{Backend::Scalar};
#if defined(SKATEPOSE_HAVE_AVX2)
    __builtin_cpu_init();
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
        out.push_back(Backend::Avx2);
    }
#endif
#if defined(SKATEPOSE_HAVE_NEON)
    out.push_back(Backend::Neon);
#endif
    return out;
}

const KernelTable& table(Backend backend) {
    const auto avail = available_backends();
    if (std::find(avail.begin(), avail.end(), backend) == avail.end()) {
        fail(ErrorKind::Config, "kernel backend '" + std::string(to_string(backend)) + "' is not available");
    }
    switch (backend) {
#if defined(SKATEPOSE_HAVE_AVX2)
        case Backend::Avx2: return detail::avx2_table();
#endif
#if defined(SKATEPOSE_HAVE_NEON)
        case Backend::Neon: return detail::neon_table();
#endif
        default: return detail::scalar_table();
    }
}

namespace {

Backend g_backend = Backend::Scalar;

const KernelTable* select_initial() {
    const auto avail = available_backends();
    Backend pick = avail.back();
    if (const char* env = std::getenv("SKATEPOSE_KERNELS")) {
        if (auto requested = parse_backend(env);
            requested && std::find(avail.begin(), avail.end(), *requested) != avail.end()) {
            pick = *requested;
        }
    }
    g_backend = pick;
    return &table(pick);
}

}  // namespace

namespace detail {
const KernelTable* g_active = select_initial();
}

Backend active_backend() noexcept { return g_backend; }

void set_active_backend(Backend backend) {
    detail::g_active = &table(backend);
    g_backend = backend;
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k,
               bool accumulate) {
    const auto dot_fn = active().dot;
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a + i * k;
        double* out = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = dot_fn(row, b + j * k, k);
            out[j] = accumulate ? out[j] + v : v;
        }
    }
}

void matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    const auto axpy_fn = active().axpy;
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a + i * n;
        double* out = c + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            if (row[j] != 0.0) {
                axpy_fn(row[j], b + j * k, out, k);
            }
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    const auto axpy_fn = active().axpy;
    for (std::size_t r = 0; r < m; ++r) {
        const double* arow = a + r * n;
        const double* brow = b + r * k;
        for (std::size_t i = 0; i < n; ++i) {
            if (arow[i] != 0.0) {
                axpy_fn(arow[i], brow, c + i * k, k);
            }
        }
    }
}

}  // namespace skatepose::kernels
