#include "wavaug/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "wavaug/rng.hpp"

namespace wavaug {
namespace {

constexpr std::size_t kSide = 32;
constexpr double kTexProb = 0.9;
constexpr double kTexAmp = 0.03;

double clip01(double x) { return x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x); }

// 7-tap separable Gaussian with reflect padding; below sigma 0.15 the kernel
// is numerically an impulse, so skip.
Grid blur(const Grid& img, double sigma) {
    if (sigma < 0.15) return img;
    std::array<double, 7> k;
    double sum = 0.0;
    for (int t = -3; t <= 3; ++t) {
        k[t + 3] = std::exp(-0.5 * (t / sigma) * (t / sigma));
        sum += k[t + 3];
    }
    for (double& x : k) x /= sum;
    auto reflect = [](long i, long n) {
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return static_cast<std::size_t>(i);
    };
    const long R = static_cast<long>(img.rows), C = static_cast<long>(img.cols);
    Grid tmp(img.rows, img.cols), out(img.rows, img.cols);
    for (long y = 0; y < R; ++y)
        for (long x = 0; x < C; ++x) {
            double acc = 0.0;
            for (int t = -3; t <= 3; ++t)
                acc += k[t + 3] * img(y, reflect(x + t, C));
            tmp(y, x) = acc;
        }
    for (long y = 0; y < R; ++y)
        for (long x = 0; x < C; ++x) {
            double acc = 0.0;
            for (int t = -3; t <= 3; ++t)
                acc += k[t + 3] * tmp(reflect(y + t, R), x);
            out(y, x) = acc;
        }
    return out;
}

// Class-keyed phase-locked dither patterns (+-1), one per class.
const Grid& micro_pattern(int cls) {
    static const std::array<Grid, 4> patterns = [] {
        std::array<Grid, 4> ps;
        for (auto& p : ps) p = Grid(kSide, kSide);
        for (std::size_t y = 0; y < kSide; ++y)
            for (std::size_t x = 0; x < kSide; ++x) {
                ps[0](y, x) = 1.0 - 2.0 * static_cast<double>(x & 1);
                ps[1](y, x) = 1.0 - 2.0 * static_cast<double>(y & 1);
                ps[2](y, x) = 1.0 - 2.0 * static_cast<double>((x + y) & 1);
                ps[3](y, x) = 1.0 - 2.0 * static_cast<double>(((x >> 1) + (y >> 1)) & 1);
            }
        return ps;
    }();
    return patterns[cls];
}

struct Frame {
    Grid ry, rx;  // rotated/anisotropic coordinates relative to the center
};

double sign_flip(Rng& rng) { return rng.uniform() < 0.5 ? 1.0 : -1.0; }

Grid sdf_for(int cls, Rng& rng, const Frame& f, bool hard) {
    Grid sdf(kSide, kSide);
    if (cls == 0) {  // filled disk
        const double r = hard ? rng.uniform(4.2, 5.8) : rng.uniform(5.0, 9.0);
        for (std::size_t i = 0; i < sdf.size(); ++i)
            sdf.v[i] = std::hypot(f.ry.v[i], f.rx.v[i]) - r;
    } else if (cls == 1) {  // ring
        const double r = rng.uniform(5.5, 9.5);
        const double hi = std::min(5.2, r - 2.2);
        const double hole = hard ? rng.uniform(2.0, 3.0) : rng.uniform(2.8, hi);
        for (std::size_t i = 0; i < sdf.size(); ++i)
            sdf.v[i] = std::fabs(std::hypot(f.ry.v[i], f.rx.v[i]) - (hole + r) / 2) -
                       (r - hole) / 2;
    } else if (cls == 2) {  // rotated filled square
        const double a = hard ? rng.uniform(4.0, 5.2) : rng.uniform(4.8, 7.8);
        for (std::size_t i = 0; i < sdf.size(); ++i)
            sdf.v[i] = std::max(std::fabs(f.ry.v[i]), std::fabs(f.rx.v[i])) - a;
    } else {  // cross
        double a, w;
        if (hard) {
            a = rng.uniform(4.8, 6.2);
            w = rng.uniform(2.8, 3.5);
        } else {
            a = rng.uniform(5.5, 9.0);
            w = rng.uniform(2.0, 3.2);
        }
        for (std::size_t i = 0; i < sdf.size(); ++i) {
            const double ay = std::fabs(f.ry.v[i]), ax = std::fabs(f.rx.v[i]);
            const double bar1 = std::max(ay - a, ax - w / 2);
            const double bar2 = std::max(ax - a, ay - w / 2);
            sdf.v[i] = std::min(bar1, bar2);
        }
    }
    return sdf;
}

constexpr double kF0Lo = 0.26, kF0Hi = 0.42;  // disk<->ring test margin band
constexpr double kF1Lo = 0.16, kF1Hi = 0.30;  // disk<->square test margin band

struct Rendered {
    Grid img;
    int label = 0;
};

// One sample. `cls_suggest` only steers the easy/hard branches; ambiguous
// samples pick their own morph family, so callers must use the returned
// label.
Rendered render(int cls_suggest, Rng& rng, bool train) {
    const double u = rng.uniform();
    const double amb_p = train ? 0.30 : 0.25;
    const double hard_p = train ? 0.10 : 0.08;
    const double cy = 16.0 + rng.uniform(-4.5, 4.5);
    const double cx = 16.0 + rng.uniform(-4.5, 4.5);
    const double th = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double sy = rng.uniform(0.8, 1.2);
    const double sx = rng.uniform(0.8, 1.2);
    Frame f{Grid(kSide, kSide), Grid(kSide, kSide)};
    const double ct = std::cos(th), st = std::sin(th);
    for (std::size_t y = 0; y < kSide; ++y)
        for (std::size_t x = 0; x < kSide; ++x) {
            const double dy = static_cast<double>(y) - cy;
            const double dx = static_cast<double>(x) - cx;
            f.ry(y, x) = (dy * ct - dx * st) / sy;
            f.rx(y, x) = (dy * st + dx * ct) / sx;
        }

    Grid sdf;
    int label;
    double contrast, sigma, psf;
    if (u < amb_p) {
        // single-parameter morphs across a labeled boundary; the train split
        // draws margins reaching closer to the boundary than the test split
        int fam;
        psf = 0.0;
        if (train) {
            fam = static_cast<int>(rng.below(3));
            psf = rng.uniform(0.0, 1.1);
        } else {
            fam = static_cast<int>(rng.below(2));
        }
        if (fam == 0) {  // disk <-> ring via hole radius, boundary 1.6
            const double r = rng.uniform(5.5, 8.5);
            double m;
            if (train) {
                m = rng.uniform(0.15, 0.60) * sign_flip(rng);
            } else {
                m = rng.uniform(kF0Lo, kF0Hi) * sign_flip(rng);
                psf = rng.uniform(0.6, 1.1);
            }
            const double h = std::max(0.35, 1.6 + m);
            sdf = Grid(kSide, kSide);
            for (std::size_t i = 0; i < sdf.size(); ++i)
                sdf.v[i] =
                    std::fabs(std::hypot(f.ry.v[i], f.rx.v[i]) - (h + r) / 2) -
                    (r - h) / 2;
            label = m > 0 ? 1 : 0;
        } else if (fam == 1) {  // disk <-> square via corner exponent, boundary 3.2
            const double r = rng.uniform(4.8, 6.5);
            double m;
            if (train) {
                m = rng.uniform(0.04, 0.34) * sign_flip(rng);
            } else {
                m = rng.uniform(kF1Lo, kF1Hi) * sign_flip(rng);
                psf = rng.uniform(0.0, 0.8);
            }
            const double p = 3.2 * std::exp(m);
            sdf = Grid(kSide, kSide);
            for (std::size_t i = 0; i < sdf.size(); ++i)
                sdf.v[i] = std::pow(std::pow(std::fabs(f.rx.v[i]), p) +
                                        std::pow(std::fabs(f.ry.v[i]), p),
                                    1.0 / p) -
                           r;
            label = m > 0 ? 2 : 0;
        } else {  // square <-> cross via arm fill, boundary 0.33 (train only)
            const double a = rng.uniform(5.0, 6.5);
            const double m = rng.uniform(0.02, 0.22) * sign_flip(rng);
            const double s = 0.33 + m;
            const double w = 2.0 * a * (1.0 - s);
            sdf = Grid(kSide, kSide);
            for (std::size_t i = 0; i < sdf.size(); ++i) {
                const double ay = std::fabs(f.ry.v[i]), ax = std::fabs(f.rx.v[i]);
                const double bar1 = std::max(ay - a, ax - w / 2);
                const double bar2 = std::max(ax - a, ay - w / 2);
                sdf.v[i] = std::min(bar1, bar2);
            }
            label = m > 0 ? 3 : 2;
        }
        contrast = rng.uniform(0.55, 0.90);
        sigma = rng.uniform(0.04, 0.09);
    } else if (u < amb_p + hard_p) {
        label = cls_suggest;
        sdf = sdf_for(label, rng, f, true);
        contrast = rng.uniform(0.40, 0.60);
        sigma = rng.uniform(0.06, 0.11);
        psf = rng.uniform(0.2, 0.8);
    } else {
        label = cls_suggest;
        sdf = sdf_for(label, rng, f, false);
        contrast = rng.uniform(0.50, 0.90);
        sigma = rng.uniform(0.04, 0.09);
        psf = rng.uniform(0.0, 1.1);
    }

    Grid cov(kSide, kSide);
    for (std::size_t i = 0; i < cov.size(); ++i)
        cov.v[i] = clip01(0.5 - sdf.v[i] / 0.5);
    const double bg = rng.uniform(0.05, 0.25);
    Grid img(kSide, kSide);
    for (std::size_t i = 0; i < img.size(); ++i)
        img.v[i] = bg + contrast * cov.v[i];
    img = blur(img, psf);
    if (rng.uniform() < kTexProb) {
        const double amp = kTexAmp * rng.uniform(0.7, 1.3);
        const Grid& pat = micro_pattern(label);
        for (std::size_t i = 0; i < img.size(); ++i)
            img.v[i] += amp * pat.v[i] * cov.v[i];
    }
    const double ramp = rng.uniform(0.0, 0.15);
    const double phi = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double cp = std::cos(phi), sp = std::sin(phi);
    for (std::size_t y = 0; y < kSide; ++y)
        for (std::size_t x = 0; x < kSide; ++x)
            img(y, x) += ramp *
                         (cp * (static_cast<double>(x) - 16.0) +
                          sp * (static_cast<double>(y) - 16.0)) /
                         16.0;
    for (double& p : img.v) p += rng.normal(0.0, sigma);
    for (double& p : img.v) p = clip01(p);
    return {std::move(img), label};
}

Batch empty_batch(std::size_t n, std::size_t side) {
    Batch b;
    b.images = Tensor({n, side, side, 1});
    b.labels.assign(n, 0);
    return b;
}

}  // namespace

Batch make_shapes(std::size_t n, std::uint64_t seed, bool train) {
    Rng rng(seed);
    Batch b = empty_batch(n, kSide);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = static_cast<int>(rng.below(4));
        Rendered r = render(c, rng, train);
        std::copy(r.img.v.begin(), r.img.v.end(),
                  b.images.data.begin() + i * kSide * kSide);
        b.labels[i] = r.label;
    }
    return b;
}

Batch make_boundary_probe(std::size_t n, std::uint64_t seed) {
    // disk<->ring morphs with the margin pinned to a thin band just outside
    // the training range's inner edge; moderate blur, mild noise
    Rng rng(seed);
    Batch b = empty_batch(n, kSide);
    for (std::size_t i = 0; i < n; ++i) {
        const double cy = 16.0 + rng.uniform(-3.0, 3.0);
        const double cx = 16.0 + rng.uniform(-3.0, 3.0);
        const double th = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double r = rng.uniform(5.5, 8.5);
        const double m = rng.uniform(0.18, 0.22) * sign_flip(rng);
        const double h = std::max(0.35, 1.6 + m);
        const double ct = std::cos(th), st = std::sin(th);
        Grid img(kSide, kSide);
        const double contrast = rng.uniform(0.6, 0.8);
        const double bg = rng.uniform(0.1, 0.2);
        for (std::size_t y = 0; y < kSide; ++y)
            for (std::size_t x = 0; x < kSide; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                const double ry = dy * ct - dx * st, rx = dy * st + dx * ct;
                const double sdf =
                    std::fabs(std::hypot(ry, rx) - (h + r) / 2) - (r - h) / 2;
                img(y, x) = bg + contrast * clip01(0.5 - sdf / 0.5);
            }
        img = blur(img, rng.uniform(0.5, 0.9));
        const int label = m > 0 ? 1 : 0;
        const double amp = kTexAmp * rng.uniform(0.7, 1.3);
        const Grid& pat = micro_pattern(label);
        for (std::size_t j = 0; j < img.size(); ++j) {
            img.v[j] += amp * pat.v[j];
            img.v[j] = clip01(img.v[j] + rng.normal(0.0, 0.05));
        }
        std::copy(img.v.begin(), img.v.end(),
                  b.images.data.begin() + i * kSide * kSide);
        b.labels[i] = label;
    }
    return b;
}

Batch make_blobs(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    Batch b = empty_batch(n, kSide);
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(rng.below(2));
        const double cy = (label == 0 ? 10.0 : 22.0) + rng.uniform(-2.0, 2.0);
        const double cx = (label == 0 ? 10.0 : 22.0) + rng.uniform(-2.0, 2.0);
        const double s = rng.uniform(3.0, 5.0);
        const double peak = rng.uniform(0.6, 0.9);
        for (std::size_t y = 0; y < kSide; ++y)
            for (std::size_t x = 0; x < kSide; ++x) {
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                double v = 0.1 + peak * std::exp(-0.5 * d2 / (s * s)) +
                           rng.normal(0.0, 0.02);
                b.images.data[(i * kSide + y) * kSide + x] = clip01(v);
            }
        b.labels[i] = label;
    }
    return b;
}

// ---- corruptions ------------------------------------------------------------

namespace {

constexpr double kGaussSigma[5] = {0.08, 0.12, 0.16, 0.20, 0.25};
constexpr double kShotLambda[5] = {100, 60, 35, 20, 10};
constexpr double kImpulseP[5] = {0.03, 0.06, 0.10, 0.15, 0.22};
constexpr double kDefocusR[5] = {1.0, 1.5, 2.0, 3.0, 4.0};
constexpr int kMotionLen[5] = {3, 5, 7, 11, 15};
constexpr double kBrightB[5] = {0.10, 0.18, 0.26, 0.34, 0.42};
constexpr double kContrastC[5] = {0.60, 0.45, 0.32, 0.22, 0.15};
constexpr int kPixelateB[5] = {2, 3, 4, 6, 8};
constexpr double kJpegQ[5] = {0.06, 0.10, 0.14, 0.20, 0.28};

Grid conv2_same(const Grid& img, const Grid& k) {
    // reflect-padded dense 2D convolution (kernels are small)
    const long R = static_cast<long>(img.rows), C = static_cast<long>(img.cols);
    const long kh = static_cast<long>(k.rows), kw = static_cast<long>(k.cols);
    const long ph = kh / 2, pw = kw / 2;
    auto reflect = [](long i, long n) {
        while (i < 0 || i >= n) {
            if (i < 0) i = -i;
            if (i >= n) i = 2 * n - 2 - i;
        }
        return static_cast<std::size_t>(i);
    };
    Grid out(img.rows, img.cols);
    for (long y = 0; y < R; ++y)
        for (long x = 0; x < C; ++x) {
            double acc = 0.0;
            for (long i = 0; i < kh; ++i)
                for (long j = 0; j < kw; ++j)
                    acc += k(i, j) * img(reflect(y + i - ph, R), reflect(x + j - pw, C));
            out(y, x) = acc;
        }
    return out;
}

Grid disk_kernel(double r) {
    const long n = static_cast<long>(std::ceil(r)) * 2 + 1;
    const long c = n / 2;
    Grid k(n, n);
    double sum = 0.0;
    for (long y = 0; y < n; ++y)
        for (long x = 0; x < n; ++x) {
            if (std::hypot(static_cast<double>(y - c), static_cast<double>(x - c)) <=
                r + 1e-9) {
                k(y, x) = 1.0;
                sum += 1.0;
            }
        }
    for (double& v : k.v) v /= sum;
    return k;
}

const Grid& dct8() {
    static const Grid M = [] {
        Grid m(8, 8);
        for (int kk = 0; kk < 8; ++kk)
            for (int i = 0; i < 8; ++i)
                m(kk, i) = std::cos(3.14159265358979323846 * (i + 0.5) * kk / 8.0) *
                           (kk == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0));
        return m;
    }();
    return M;
}

}  // namespace

const std::vector<Corruption>& all_corruptions() {
    static const std::vector<Corruption> kinds = {
        Corruption::gaussian_noise, Corruption::shot_noise,
        Corruption::impulse_noise,  Corruption::defocus_blur,
        Corruption::motion_blur,    Corruption::brightness,
        Corruption::contrast,       Corruption::pixelate,
        Corruption::jpeg_quantize,
    };
    return kinds;
}

std::string corruption_name(Corruption kind) {
    switch (kind) {
        case Corruption::gaussian_noise: return "gaussian_noise";
        case Corruption::shot_noise: return "shot_noise";
        case Corruption::impulse_noise: return "impulse_noise";
        case Corruption::defocus_blur: return "defocus_blur";
        case Corruption::motion_blur: return "motion_blur";
        case Corruption::brightness: return "brightness";
        case Corruption::contrast: return "contrast";
        case Corruption::pixelate: return "pixelate";
        case Corruption::jpeg_quantize: return "jpeg_quantize";
    }
    throw std::invalid_argument("corruption_name: bad kind");
}

Corruption corruption_from_name(const std::string& name) {
    for (Corruption k : all_corruptions())
        if (corruption_name(k) == name) return k;
    throw std::invalid_argument("unknown corruption '" + name + "'");
}

Grid corrupt(const Grid& img, Corruption kind, int severity, std::uint64_t seed) {
    if (severity < 0 || severity > 5)
        throw std::invalid_argument("corrupt: severity must be in [0,5]");
    if (severity == 0) return img;
    const int s = severity - 1;
    Rng rng(seed);
    Grid out = img;
    switch (kind) {
        case Corruption::gaussian_noise:
            for (double& p : out.v) p += rng.normal(0.0, kGaussSigma[s]);
            break;
        case Corruption::shot_noise: {
            const double lam = kShotLambda[s];
            for (double& p : out.v)
                p = static_cast<double>(rng.poisson(clip01(p) * lam)) / lam;
            break;
        }
        case Corruption::impulse_noise: {
            const double p = kImpulseP[s];
            for (double& px : out.v) {
                const double u = rng.uniform();
                if (u < p / 2)
                    px = 0.0;
                else if (u < p)
                    px = 1.0;
            }
            break;
        }
        case Corruption::defocus_blur:
            out = conv2_same(img, disk_kernel(kDefocusR[s]));
            break;
        case Corruption::motion_blur: {
            Grid k(1, kMotionLen[s], 1.0 / kMotionLen[s]);
            out = conv2_same(img, k);
            break;
        }
        case Corruption::brightness:
            for (double& p : out.v) p += kBrightB[s];
            break;
        case Corruption::contrast: {
            double m = 0.0;
            for (double p : img.v) m += p;
            m /= static_cast<double>(img.size());
            for (double& p : out.v) p = (p - m) * kContrastC[s] + m;
            break;
        }
        case Corruption::pixelate: {
            const std::size_t bsz = static_cast<std::size_t>(kPixelateB[s]);
            for (std::size_t i = 0; i < img.rows; i += bsz)
                for (std::size_t j = 0; j < img.cols; j += bsz) {
                    const std::size_t i1 = std::min(i + bsz, img.rows);
                    const std::size_t j1 = std::min(j + bsz, img.cols);
                    double mean = 0.0;
                    for (std::size_t y = i; y < i1; ++y)
                        for (std::size_t x = j; x < j1; ++x) mean += img(y, x);
                    mean /= static_cast<double>((i1 - i) * (j1 - j));
                    for (std::size_t y = i; y < i1; ++y)
                        for (std::size_t x = j; x < j1; ++x) out(y, x) = mean;
                }
            break;
        }
        case Corruption::jpeg_quantize: {
            if (img.rows % 8 != 0 || img.cols % 8 != 0)
                throw std::invalid_argument("jpeg_quantize needs 8-aligned sides");
            const double q = kJpegQ[s];
            const Grid& M = dct8();
            for (std::size_t bi = 0; bi < img.rows; bi += 8)
                for (std::size_t bj = 0; bj < img.cols; bj += 8) {
                    double blk[8][8], tmp[8][8];
                    // blk = M * block * M^T
                    for (int r = 0; r < 8; ++r)
                        for (int c = 0; c < 8; ++c) {
                            double acc = 0.0;
                            for (int t = 0; t < 8; ++t)
                                acc += M(r, t) * img(bi + t, bj + c);
                            tmp[r][c] = acc;
                        }
                    for (int r = 0; r < 8; ++r)
                        for (int c = 0; c < 8; ++c) {
                            double acc = 0.0;
                            for (int t = 0; t < 8; ++t) acc += tmp[r][t] * M(c, t);
                            const double step = (r == 0 && c == 0) ? q / 2 : q;
                            blk[r][c] = std::round(acc / step) * step;
                        }
                    // block = M^T * blk * M
                    for (int r = 0; r < 8; ++r)
                        for (int c = 0; c < 8; ++c) {
                            double acc = 0.0;
                            for (int t = 0; t < 8; ++t) acc += M(t, r) * blk[t][c];
                            tmp[r][c] = acc;
                        }
                    for (int r = 0; r < 8; ++r)
                        for (int c = 0; c < 8; ++c) {
                            double acc = 0.0;
                            for (int t = 0; t < 8; ++t) acc += tmp[r][t] * M(t, c);
                            out(bi + r, bj + c) = acc;
                        }
                }
            break;
        }
    }
    for (double& p : out.v) p = clip01(p);
    return out;
}

Batch corrupt_batch(const Batch& batch, Corruption kind, int severity,
                    std::uint64_t seed0) {
    Batch out = batch;
    for (std::size_t i = 0; i < batch.count(); ++i) {
        Grid g = batch_image(batch, i);
        set_batch_image(out, i, corrupt(g, kind, severity, seed0 + i));
    }
    return out;
}

// ---- IDX --------------------------------------------------------------------

namespace {

std::uint32_t read_u32_be(std::istream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("truncated IDX file: " + path);
    return (static_cast<std::uint32_t>(b[0]) << 24) |
           (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | b[3];
}

}  // namespace

std::vector<Grid> load_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    const std::uint32_t magic = read_u32_be(in, path);
    if (magic != 0x00000803)
        throw std::runtime_error("bad IDX image magic in " + path);
    const std::uint32_t n = read_u32_be(in, path);
    const std::uint32_t h = read_u32_be(in, path);
    const std::uint32_t w = read_u32_be(in, path);
    std::vector<Grid> imgs;
    imgs.reserve(n);
    std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
    for (std::uint32_t i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(buf.data()),
                     static_cast<std::streamsize>(buf.size())))
            throw std::runtime_error("truncated IDX file: " + path);
        Grid g(h, w);
        for (std::size_t j = 0; j < buf.size(); ++j)
            g.v[j] = static_cast<double>(buf[j]) / 255.0;
        imgs.push_back(std::move(g));
    }
    return imgs;
}

std::vector<int> load_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    const std::uint32_t magic = read_u32_be(in, path);
    if (magic != 0x00000801)
        throw std::runtime_error("bad IDX label magic in " + path);
    const std::uint32_t n = read_u32_be(in, path);
    std::vector<unsigned char> buf(n);
    if (n && !in.read(reinterpret_cast<char*>(buf.data()), n))
        throw std::runtime_error("truncated IDX file: " + path);
    return std::vector<int>(buf.begin(), buf.end());
}

Batch load_idx_batch(const std::string& image_path, const std::string& label_path,
                     std::size_t pad_to) {
    std::vector<Grid> imgs = load_idx_images(image_path);
    std::vector<int> labels = load_idx_labels(label_path);
    if (imgs.size() != labels.size())
        throw std::runtime_error("IDX image/label count mismatch: " +
                                 std::to_string(imgs.size()) + " vs " +
                                 std::to_string(labels.size()));
    const std::size_t src = imgs.empty() ? pad_to : imgs[0].rows;
    const std::size_t side = pad_to == 0 ? src : pad_to;
    if (side < src)
        throw std::runtime_error("pad_to smaller than source image side");
    Batch b = empty_batch(imgs.size(), side);
    const std::size_t off = (side - src) / 2;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        if (imgs[i].rows != src || imgs[i].cols != src)
            throw std::runtime_error("IDX images are not uniformly sized");
        Grid padded(side, side);
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) {
                const std::size_t sy =
                    std::min(src - 1, y < off ? 0 : std::min(y - off, src - 1));
                const std::size_t sx =
                    std::min(src - 1, x < off ? 0 : std::min(x - off, src - 1));
                padded(y, x) = imgs[i](sy, sx);
            }
        set_batch_image(b, i, padded);
        b.labels[i] = labels[i];
    }
    return b;
}

Grid batch_image(const Batch& batch, std::size_t index) {
    const std::size_t h = batch.images.shape[1], w = batch.images.shape[2],
                      c = batch.images.shape[3];
    if (c != 1) throw std::invalid_argument("batch_image: multi-channel batch");
    Grid g(h, w);
    std::copy(batch.images.data.begin() + index * h * w,
              batch.images.data.begin() + (index + 1) * h * w, g.v.begin());
    return g;
}

void set_batch_image(Batch& batch, std::size_t index, const Grid& img) {
    const std::size_t h = batch.images.shape[1], w = batch.images.shape[2],
                      c = batch.images.shape[3];
    if (c != 1 || img.rows != h || img.cols != w)
        throw std::invalid_argument("set_batch_image: shape mismatch");
    std::copy(img.v.begin(), img.v.end(),
              batch.images.data.begin() + index * h * w);
}

}  // namespace wavaug
