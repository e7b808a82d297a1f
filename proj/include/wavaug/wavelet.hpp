#pragma once
#include <string>
#include <utility>
#include <vector>

#include "wavaug/grid.hpp"

namespace wavaug {

// Two-channel orthogonal filter pair. highpass is the quadrature mirror of
// lowpass: hi[k] = (-1)^k · lo[N-1-k].
struct FilterBank {
    std::vector<double> lowpass;
    std::vector<double> highpass;
    std::string name;
};

FilterBank sym8_bank();
FilterBank haar_bank();  // kept for tests; 2-tap closed forms are checkable by hand

// One decomposition level's detail coefficients. Orientation convention
// (first letter = filter along height, second = along width):
//   lh: low height / high width   (top-right quadrant)
//   hl: high height / low width   (bottom-left quadrant)
//   hh: high both                 (bottom-right quadrant)
struct DetailTriple {
    Grid lh, hl, hh;
};

// Multi-level dyadic decomposition; details[0] is the finest level.
struct WaveletPyramid {
    int levels = 0;
    Grid approx;
    std::vector<DetailTriple> details;
    std::size_t orig_rows = 0, orig_cols = 0;

    std::size_t coefficient_count() const;

    // Band pointers in a fixed order: per level finest-first (lh, hl, hh),
    // then approx last. Elementwise pyramid ops key off this order.
    std::vector<Grid*> bands();
    std::vector<const Grid*> bands() const;

    // All coefficients concatenated in bands() order.
    std::vector<double> flatten() const;

    bool same_shape(const WaveletPyramid& o) const;
};

WaveletPyramid zeros_like(const WaveletPyramid& p);

// Periodized single-level analysis: approx[i] = Σ_k lo[k]·s[(2i+k) mod n],
// detail likewise with hi. Circular convolution keeps the transform
// orthogonal for any even n, including n shorter than the filter.
std::pair<std::vector<double>, std::vector<double>> dwt1d(const std::vector<double>& signal,
                                                          const FilterBank& bank);

// Exact adjoint (= inverse, by orthogonality) of dwt1d.
std::vector<double> idwt1d(const std::vector<double>& approx, const std::vector<double>& detail,
                           const FilterBank& bank);

// Largest L with rows and cols both divisible by 2^L.
int max_levels(std::size_t rows, std::size_t cols);

// Separable row-then-column Mallat cascade, recursing on the LL quadrant.
WaveletPyramid dwt2d(const Grid& image, int levels, const FilterBank& bank);

Grid idwt2d(const WaveletPyramid& pyr, const FilterBank& bank);

} // namespace wavaug
