#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace skatepose {

// Dense row-major array of doubles. Rank 1 and 2 cover every layer here;
// higher ranks are stored but only addressed through rows()/cols().
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : shape(std::move(dims)), data(element_count(shape), fill) {}

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }
    static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }

    static std::size_t element_count(const std::vector<std::size_t>& dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const noexcept { return shape.empty() ? 0 : (shape[0] == 0 ? 0 : data.size() / shape[0]); }

    double* row(std::size_t i) noexcept { return data.data() + i * cols(); }
    const double* row(std::size_t i) const noexcept { return data.data() + i * cols(); }
    std::span<double> row_span(std::size_t i) noexcept { return {row(i), cols()}; }
    std::span<const double> row_span(std::size_t i) const noexcept { return {row(i), cols()}; }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data[i * cols() + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data[i * cols() + j]; }
    double& operator[](std::size_t i) noexcept { return data[i]; }
    double operator[](std::size_t i) const noexcept { return data[i]; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    bool same_shape(const Tensor& o) const noexcept { return shape == o.shape; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace skatepose
