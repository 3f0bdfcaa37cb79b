#include "cmr/matrix.hpp"

#include <cmath>

namespace cmr {

bool Matrix::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix Matrix::take_rows(const std::vector<int>& indices) const {
    Matrix out(indices.size(), cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto src = row(static_cast<std::size_t>(indices[r]));
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (double& v : m.data) v = rng.uniform(-bound, bound);
    return m;
}

double l2_norm(std::span<const double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    return std::sqrt(sq);
}

bool l2_normalize(std::span<double> v, double eps) {
    const double norm = l2_norm(v);
    if (norm <= eps) return false;
    for (double& x : v) x /= norm;
    return true;
}

}  // namespace cmr
