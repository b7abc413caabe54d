#pragma once

#include <cstddef>
#include <vector>

namespace rhbsde {

// Dense row-major (path, step) array.  Kept as a flat std::vector so large
// bundles stay cache-friendly and trivially serializable.
struct Array2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Array2D() = default;
    Array2D(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool empty() const { return data.empty(); }
};

// Dense row-major (path, step, component) array for vector-valued processes.
struct Array3D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t depth = 0;  // components per (row, col)
    std::vector<double> data;

    Array3D() = default;
    Array3D(std::size_t r, std::size_t c, std::size_t d, double fill = 0.0)
        : rows(r), cols(c), depth(d), data(r * c * d, fill) {}

    double& operator()(std::size_t r, std::size_t c, std::size_t k) {
        return data[(r * cols + c) * depth + k];
    }
    double operator()(std::size_t r, std::size_t c, std::size_t k) const {
        return data[(r * cols + c) * depth + k];
    }
    // Pointer to the component vector at (r, c).
    double* at(std::size_t r, std::size_t c) { return data.data() + (r * cols + c) * depth; }
    const double* at(std::size_t r, std::size_t c) const {
        return data.data() + (r * cols + c) * depth;
    }

    bool empty() const { return data.empty(); }
};

}  // namespace rhbsde
