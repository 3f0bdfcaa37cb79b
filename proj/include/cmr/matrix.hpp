#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmr/rng.hpp"

namespace cmr {

// Dense row-major matrix of doubles. The single value carrier for features,
// embeddings, weights and gradients.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const {
        return {data.data() + r * cols, cols};
    }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const;

    // Selects a subset of rows, in the order given.
    Matrix take_rows(const std::vector<int>& indices) const;

    bool operator==(const Matrix& o) const = default;
};

// Uniform init in [-sqrt(6/(in+out)), +sqrt(6/(in+out))]; keeps activation
// scale steady through ReLU stacks.
Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// In-place L2 normalization. Returns false (and leaves v untouched) when the
// norm is at or below eps; a zero vector has no direction to keep.
bool l2_normalize(std::span<double> v, double eps = 1e-12);

double l2_norm(std::span<const double> v);

}  // namespace cmr
