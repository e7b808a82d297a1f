#pragma once
#include <cstddef>
#include <vector>

namespace wavaug {

// Row-major 2D array of doubles; the pixel/coefficient workhorse.
struct Grid {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }
};

} // namespace wavaug
