#include "wavaug/wavelet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wavaug {

FilterBank sym8_bank() {
    // Symlet-8 decomposition lowpass (16 taps). Standard published
    // constants, regenerated by spectral factorization of the order-8
    // Daubechies half-band polynomial and rounded to double.
    std::vector<double> lo = {
        -0.0033824159510050028, -0.0005421323318000107, 0.03169508781152599,
        0.007607487324976609,   -0.14329423835127267,   -0.061273359067811076,
        0.4813596512590534,     0.777185751699628,      0.36444189483617895,
        -0.0519458381078818,    -0.027219029917103486,  0.04913717967373029,
        0.0038087520138944896,  -0.014952258337062199,  -0.0003029205147241331,
        0.001889950332767689,
    };
    std::vector<double> hi(lo.size());
    for (std::size_t k = 0; k < lo.size(); ++k)
        hi[k] = (k % 2 == 0 ? 1.0 : -1.0) * lo[lo.size() - 1 - k];
    return {std::move(lo), std::move(hi), "sym8"};
}

FilterBank haar_bank() {
    const double r = 1.0 / std::sqrt(2.0);
    return {{r, r}, {r, -r}, "haar"};
}

std::size_t WaveletPyramid::coefficient_count() const {
    std::size_t n = approx.size();
    for (const auto& d : details) n += d.lh.size() + d.hl.size() + d.hh.size();
    return n;
}

std::vector<Grid*> WaveletPyramid::bands() {
    std::vector<Grid*> out;
    for (auto& d : details) {
        out.push_back(&d.lh);
        out.push_back(&d.hl);
        out.push_back(&d.hh);
    }
    out.push_back(&approx);
    return out;
}

std::vector<const Grid*> WaveletPyramid::bands() const {
    std::vector<const Grid*> out;
    for (const auto& d : details) {
        out.push_back(&d.lh);
        out.push_back(&d.hl);
        out.push_back(&d.hh);
    }
    out.push_back(&approx);
    return out;
}

std::vector<double> WaveletPyramid::flatten() const {
    std::vector<double> out;
    out.reserve(coefficient_count());
    for (const Grid* g : bands()) out.insert(out.end(), g->v.begin(), g->v.end());
    return out;
}

bool WaveletPyramid::same_shape(const WaveletPyramid& o) const {
    if (levels != o.levels || !approx.same_shape(o.approx)) return false;
    if (orig_rows != o.orig_rows || orig_cols != o.orig_cols) return false;
    for (int l = 0; l < levels; ++l) {
        if (!details[l].lh.same_shape(o.details[l].lh)) return false;
        if (!details[l].hl.same_shape(o.details[l].hl)) return false;
        if (!details[l].hh.same_shape(o.details[l].hh)) return false;
    }
    return true;
}

WaveletPyramid zeros_like(const WaveletPyramid& p) {
    WaveletPyramid out;
    out.levels = p.levels;
    out.orig_rows = p.orig_rows;
    out.orig_cols = p.orig_cols;
    out.approx = Grid(p.approx.rows, p.approx.cols);
    out.details.reserve(p.details.size());
    for (const auto& d : p.details)
        out.details.push_back({Grid(d.lh.rows, d.lh.cols), Grid(d.hl.rows, d.hl.cols),
                               Grid(d.hh.rows, d.hh.cols)});
    return out;
}

std::pair<std::vector<double>, std::vector<double>> dwt1d(const std::vector<double>& signal,
                                                          const FilterBank& bank) {
    const std::size_t n = signal.size();
    if (n == 0) throw std::invalid_argument("dwt1d: empty signal");
    if (n % 2 != 0) throw std::invalid_argument("dwt1d: odd length " + std::to_string(n));
    const std::size_t half = n / 2, taps = bank.lowpass.size();
    std::vector<double> approx(half), detail(half);
    for (std::size_t i = 0; i < half; ++i) {
        double a = 0.0, d = 0.0;
        for (std::size_t k = 0; k < taps; ++k) {
            double s = signal[(2 * i + k) % n];
            a += bank.lowpass[k] * s;
            d += bank.highpass[k] * s;
        }
        approx[i] = a;
        detail[i] = d;
    }
    return {std::move(approx), std::move(detail)};
}

std::vector<double> idwt1d(const std::vector<double>& approx, const std::vector<double>& detail,
                           const FilterBank& bank) {
    if (approx.size() != detail.size())
        throw std::invalid_argument("idwt1d: length mismatch (" + std::to_string(approx.size()) +
                                    " vs " + std::to_string(detail.size()) + ")");
    if (approx.empty()) throw std::invalid_argument("idwt1d: empty input");
    const std::size_t half = approx.size(), n = 2 * half, taps = bank.lowpass.size();
    std::vector<double> out(n, 0.0);
    // transpose of the analysis operator: scatter each coefficient back
    // through its filter taps
    for (std::size_t i = 0; i < half; ++i) {
        for (std::size_t k = 0; k < taps; ++k)
            out[(2 * i + k) % n] += bank.lowpass[k] * approx[i] + bank.highpass[k] * detail[i];
    }
    return out;
}

int max_levels(std::size_t rows, std::size_t cols) {
    int l = 0;
    while (rows % 2 == 0 && cols % 2 == 0 && rows > 1 && cols > 1) {
        rows /= 2;
        cols /= 2;
        ++l;
    }
    return l;
}

namespace {

// One separable analysis level in place: rows first (split along width),
// then columns (split along height).
void analysis_level(const Grid& in, Grid& ll, Grid& lh, Grid& hl, Grid& hh,
                    const FilterBank& bank) {
    const std::size_t r = in.rows, c = in.cols, hr = r / 2, hc = c / 2;
    Grid tmp(r, c);
    std::vector<double> line;
    for (std::size_t i = 0; i < r; ++i) {
        line.assign(in.v.begin() + i * c, in.v.begin() + (i + 1) * c);
        auto [a, d] = dwt1d(line, bank);
        for (std::size_t j = 0; j < hc; ++j) {
            tmp(i, j) = a[j];
            tmp(i, hc + j) = d[j];
        }
    }
    ll = Grid(hr, hc);
    lh = Grid(hr, hc);
    hl = Grid(hr, hc);
    hh = Grid(hr, hc);
    line.resize(r);
    for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t i = 0; i < r; ++i) line[i] = tmp(i, j);
        auto [a, d] = dwt1d(line, bank);
        for (std::size_t i = 0; i < hr; ++i) {
            if (j < hc) {
                ll(i, j) = a[i];
                hl(i, j) = d[i];
            } else {
                lh(i, j - hc) = a[i];
                hh(i, j - hc) = d[i];
            }
        }
    }
}

Grid synthesis_level(const Grid& ll, const Grid& lh, const Grid& hl, const Grid& hh,
                     const FilterBank& bank) {
    const std::size_t hr = ll.rows, hc = ll.cols, r = 2 * hr, c = 2 * hc;
    Grid tmp(r, c);
    std::vector<double> a(hr), d(hr);
    for (std::size_t j = 0; j < c; ++j) {
        for (std::size_t i = 0; i < hr; ++i) {
            if (j < hc) {
                a[i] = ll(i, j);
                d[i] = hl(i, j);
            } else {
                a[i] = lh(i, j - hc);
                d[i] = hh(i, j - hc);
            }
        }
        auto col = idwt1d(a, d, bank);
        for (std::size_t i = 0; i < r; ++i) tmp(i, j) = col[i];
    }
    Grid out(r, c);
    std::vector<double> ra(hc), rd(hc);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < hc; ++j) {
            ra[j] = tmp(i, j);
            rd[j] = tmp(i, hc + j);
        }
        auto row = idwt1d(ra, rd, bank);
        for (std::size_t j = 0; j < c; ++j) out(i, j) = row[j];
    }
    return out;
}

} // namespace

WaveletPyramid dwt2d(const Grid& image, int levels, const FilterBank& bank) {
    if (image.size() == 0) throw std::invalid_argument("dwt2d: empty image");
    if (levels < 1) throw std::invalid_argument("dwt2d: levels must be >= 1");
    const int feasible = max_levels(image.rows, image.cols);
    if (levels > feasible)
        throw std::invalid_argument("dwt2d: " + std::to_string(image.rows) + "x" +
                                    std::to_string(image.cols) + " supports at most " +
                                    std::to_string(feasible) + " levels, got " +
                                    std::to_string(levels));
    WaveletPyramid pyr;
    pyr.levels = levels;
    pyr.orig_rows = image.rows;
    pyr.orig_cols = image.cols;
    Grid cur = image;
    for (int l = 0; l < levels; ++l) {
        Grid ll;
        DetailTriple t;
        analysis_level(cur, ll, t.lh, t.hl, t.hh, bank);
        pyr.details.push_back(std::move(t));
        cur = std::move(ll);
    }
    pyr.approx = std::move(cur);
    return pyr;
}

Grid idwt2d(const WaveletPyramid& pyr, const FilterBank& bank) {
    if (pyr.levels < 1 || pyr.details.size() != static_cast<std::size_t>(pyr.levels))
        throw std::invalid_argument("idwt2d: malformed pyramid");
    Grid cur = pyr.approx;
    for (int l = pyr.levels - 1; l >= 0; --l) {
        const DetailTriple& t = pyr.details[l];
        if (!t.lh.same_shape(cur) || !t.hl.same_shape(cur) || !t.hh.same_shape(cur))
            throw std::invalid_argument("idwt2d: malformed pyramid at level " + std::to_string(l));
        cur = synthesis_level(cur, t.lh, t.hl, t.hh, bank);
    }
    if (cur.rows != pyr.orig_rows || cur.cols != pyr.orig_cols)
        throw std::invalid_argument("idwt2d: pyramid shape does not match original size");
    return cur;
}

} // namespace wavaug
