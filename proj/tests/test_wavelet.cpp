#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "wavaug/rng.hpp"
#include "wavaug/wavelet.hpp"

using namespace wavaug;

namespace {

// Dense-matrix oracle: the analysis operator written down directly from its
// definition (scatter of filter taps with periodic wraparound), independent
// of the dwt1d implementation loop.
std::vector<std::vector<double>> analysis_matrix(std::size_t n, const FilterBank& bank) {
    std::vector<std::vector<double>> M(n, std::vector<double>(n, 0.0));
    const std::size_t half = n / 2;
    for (std::size_t i = 0; i < half; ++i) {
        for (std::size_t k = 0; k < bank.lowpass.size(); ++k) {
            M[i][(2 * i + k) % n] += bank.lowpass[k];
            M[half + i][(2 * i + k) % n] += bank.highpass[k];
        }
    }
    return M;
}

std::vector<double> matvec(const std::vector<std::vector<double>>& M, const std::vector<double>& x) {
    std::vector<double> y(M.size(), 0.0);
    for (std::size_t i = 0; i < M.size(); ++i)
        for (std::size_t j = 0; j < x.size(); ++j) y[i] += M[i][j] * x[j];
    return y;
}

std::vector<double> random_signal(std::size_t n, Rng& rng) {
    std::vector<double> s(n);
    for (double& x : s) x = rng.uniform(-1.0, 1.0);
    return s;
}

Grid random_image(std::size_t r, std::size_t c, Rng& rng) {
    Grid g(r, c);
    for (double& x : g.v) x = rng.uniform(-1.0, 1.0);
    return g;
}

double energy(const std::vector<double>& v) {
    double e = 0.0;
    for (double x : v) e += x * x;
    return e;
}

double pyramid_energy(const WaveletPyramid& p) {
    double e = 0.0;
    for (const Grid* g : p.bands()) e += energy(g->v);
    return e;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("filter bank invariants: sym8 and haar") {
    for (const FilterBank& bank : {sym8_bank(), haar_bank()}) {
        CAPTURE(bank.name);
        const auto& lo = bank.lowpass;
        double sum = 0.0, sumsq = 0.0;
        for (double c : lo) {
            sum += c;
            sumsq += c * c;
        }
        CHECK(std::fabs(sum - std::sqrt(2.0)) < 1e-10);
        CHECK(std::fabs(sumsq - 1.0) < 1e-10);
        // quadrature mirror relation (±1 products are exact, so bit equality)
        for (std::size_t k = 0; k < lo.size(); ++k) {
            double expect = (k % 2 == 0 ? 1.0 : -1.0) * lo[lo.size() - 1 - k];
            CHECK(bank.highpass[k] == expect);
        }
        // double-shift orthogonality
        for (std::size_t m = 1; m < lo.size() / 2 + 1; ++m) {
            double dot = 0.0;
            for (std::size_t k = 0; k + 2 * m < lo.size(); ++k) dot += lo[k] * lo[k + 2 * m];
            CHECK(std::fabs(dot) < 1e-10);
        }
    }
}

TEST_CASE("sym8 coefficients match the standard reference table") {
    // Decomposition lowpass as tabulated in standard wavelet filter
    // references (16 taps, sym8).
    const std::vector<double> reference = {
        -0.0033824159510061256, -0.00054213233179114812, 0.031695087811492981,
        0.0076074873249176054,  -0.14329423835080971,    -0.061273359067658524,
        0.48135965125837221,    0.77718575170052351,     0.3644418948353314,
        -0.051945838107709118,  -0.027219029917056003,   0.049137179673607506,
        0.003808752013890615,   -0.014952258337048231,   -0.0003029205147213668,
        0.0018899503327594609,
    };
    const FilterBank bank = sym8_bank();
    REQUIRE(bank.lowpass.size() == reference.size());
    CHECK(max_abs_diff(bank.lowpass, reference) < 1e-10);
}

TEST_CASE("dwt1d closed forms") {
    SUBCASE("haar on [a,b]") {
        const double a = 0.7, b = -1.3, r = std::sqrt(2.0);
        auto [lo, hi] = dwt1d({a, b}, haar_bank());
        CHECK(lo[0] == doctest::Approx((a + b) / r).epsilon(1e-14));
        CHECK(hi[0] == doctest::Approx((a - b) / r).epsilon(1e-14));
    }
    SUBCASE("constant signal has zero detail") {
        std::vector<double> s(32, 3.25);
        auto [lo, hi] = dwt1d(s, sym8_bank());
        for (double d : hi) CHECK(std::fabs(d) < 1e-12);
        for (double a : lo) CHECK(a == doctest::Approx(3.25 * std::sqrt(2.0)).epsilon(1e-12));
    }
    SUBCASE("errors") {
        CHECK_THROWS_WITH_AS(dwt1d({1.0, 2.0, 3.0}, haar_bank()),
                             doctest::Contains("odd length"), std::invalid_argument);
        CHECK_THROWS_AS(dwt1d({}, haar_bank()), std::invalid_argument);
    }
}

TEST_CASE("dwt1d matches the dense-matrix oracle and preserves energy") {
    Rng rng(42);
    for (std::size_t n : {8u, 16u, 64u}) {
        CAPTURE(n);
        const FilterBank bank = sym8_bank();
        auto M = analysis_matrix(n, bank);
        // the oracle matrix itself is orthogonal: M Mᵀ = I
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t k = 0; k < n; ++k) dot += M[i][k] * M[j][k];
                CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
            }
        }
        auto x = random_signal(n, rng);
        auto [lo, hi] = dwt1d(x, bank);
        std::vector<double> got = lo;
        got.insert(got.end(), hi.begin(), hi.end());
        CHECK(max_abs_diff(got, matvec(M, x)) < 1e-12);
        CHECK(energy(got) == doctest::Approx(energy(x)).epsilon(1e-9));
    }
}

TEST_CASE("idwt1d") {
    SUBCASE("haar inverse closed form") {
        const double a = 2.0, b = 5.0, r = std::sqrt(2.0);
        auto s = idwt1d({(a + b) / r}, {(a - b) / r}, haar_bank());
        CHECK(s[0] == doctest::Approx(a).epsilon(1e-14));
        CHECK(s[1] == doctest::Approx(b).epsilon(1e-14));
    }
    SUBCASE("zeros map to zeros") {
        auto s = idwt1d(std::vector<double>(8, 0.0), std::vector<double>(8, 0.0), sym8_bank());
        for (double x : s) CHECK(x == 0.0);
    }
    SUBCASE("round trip on random length-128") {
        Rng rng(7);
        auto x = random_signal(128, rng);
        auto [lo, hi] = dwt1d(x, sym8_bank());
        CHECK(max_abs_diff(idwt1d(lo, hi, sym8_bank()), x) < 1e-10);
    }
    SUBCASE("length mismatch") {
        CHECK_THROWS_WITH_AS(idwt1d({1.0, 2.0}, {1.0}, haar_bank()),
                             doctest::Contains("length mismatch"), std::invalid_argument);
    }
}

TEST_CASE("dwt2d structure and closed forms") {
    SUBCASE("constant image: zero details, approx = c · 2^L") {
        Grid img(32, 32, 0.5);
        auto pyr = dwt2d(img, 3, sym8_bank());
        for (const auto& d : pyr.details)
            for (const Grid* g : {&d.lh, &d.hl, &d.hh})
                for (double x : g->v) CHECK(std::fabs(x) < 1e-10);
        for (double a : pyr.approx.v) CHECK(a == doctest::Approx(0.5 * 8.0).epsilon(1e-12));
    }
    SUBCASE("subband shapes halve per level") {
        Grid img(64, 32);
        auto pyr = dwt2d(img, 3, sym8_bank());
        REQUIRE(pyr.details.size() == 3);
        CHECK(pyr.details[0].lh.rows == 32);
        CHECK(pyr.details[0].lh.cols == 16);
        CHECK(pyr.details[2].hh.rows == 8);
        CHECK(pyr.details[2].hh.cols == 4);
        CHECK(pyr.approx.rows == 8);
        CHECK(pyr.approx.cols == 4);
        CHECK(pyr.coefficient_count() == 64 * 32);
    }
    SUBCASE("impulse image has unit coefficient energy") {
        Grid img(32, 32, 0.0);
        img(11, 23) = 1.0;
        auto pyr = dwt2d(img, 3, sym8_bank());
        CHECK(pyramid_energy(pyr) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("level validation names the feasible maximum") {
        Grid img(24, 24);
        CHECK(max_levels(24, 24) == 3);
        CHECK_THROWS_WITH_AS(dwt2d(img, 4, sym8_bank()), doctest::Contains("at most 3"),
                             std::invalid_argument);
    }
}

TEST_CASE("idwt2d inverse, linearity, adjoint") {
    Rng rng(1234);
    const FilterBank bank = sym8_bank();
    SUBCASE("round trip 64x64 L=4") {
        Grid x = random_image(64, 64, rng);
        Grid back = idwt2d(dwt2d(x, 4, bank), bank);
        double m = 0.0;
        for (std::size_t i = 0; i < x.v.size(); ++i) m = std::max(m, std::fabs(x.v[i] - back.v[i]));
        CHECK(m < 1e-10);
    }
    SUBCASE("round trip down to a 1x1 approx (8x8 L=3)") {
        Grid x = random_image(8, 8, rng);
        Grid back = idwt2d(dwt2d(x, 3, bank), bank);
        for (std::size_t i = 0; i < x.v.size(); ++i) CHECK(std::fabs(x.v[i] - back.v[i]) < 1e-10);
    }
    SUBCASE("zero pyramid reconstructs the zero image") {
        auto pyr = zeros_like(dwt2d(Grid(16, 16), 2, bank));
        Grid img = idwt2d(pyr, bank);
        for (double x : img.v) CHECK(x == 0.0);
    }
    SUBCASE("linearity: W⁻¹(2P - 3Q) = 2 W⁻¹(P) - 3 W⁻¹(Q)") {
        auto P = dwt2d(random_image(32, 32, rng), 3, bank);
        auto Q = dwt2d(random_image(32, 32, rng), 3, bank);
        WaveletPyramid R = zeros_like(P);
        auto pb = P.bands();
        auto qb = Q.bands();
        auto rb = R.bands();
        for (std::size_t b = 0; b < rb.size(); ++b)
            for (std::size_t i = 0; i < rb[b]->v.size(); ++i)
                rb[b]->v[i] = 2.0 * pb[b]->v[i] - 3.0 * qb[b]->v[i];
        Grid lhs = idwt2d(R, bank);
        Grid p = idwt2d(P, bank), q = idwt2d(Q, bank);
        for (std::size_t i = 0; i < lhs.v.size(); ++i)
            CHECK(lhs.v[i] == doctest::Approx(2.0 * p.v[i] - 3.0 * q.v[i]).epsilon(1e-9));
    }
    SUBCASE("orthogonality: <W x, W y> = <x, y>") {
        Grid x = random_image(32, 32, rng), y = random_image(32, 32, rng);
        auto px = dwt2d(x, 3, bank).flatten();
        auto py = dwt2d(y, 3, bank).flatten();
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < px.size(); ++i) lhs += px[i] * py[i];
        for (std::size_t i = 0; i < x.v.size(); ++i) rhs += x.v[i] * y.v[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
    SUBCASE("Parseval on random images") {
        for (int t = 0; t < 5; ++t) {
            Grid x = random_image(32, 32, rng);
            auto pyr = dwt2d(x, 3, bank);
            CHECK(pyramid_energy(pyr) == doctest::Approx(energy(x.v)).epsilon(1e-9));
        }
    }
    SUBCASE("malformed pyramid is rejected") {
        auto pyr = dwt2d(random_image(16, 16, rng), 2, bank);
        pyr.details[0].hh = Grid(3, 3);
        CHECK_THROWS_AS(idwt2d(pyr, bank), std::invalid_argument);
    }
}

TEST_CASE("haar round trips too") {
    Rng rng(99);
    Grid x = random_image(32, 32, rng);
    Grid back = idwt2d(dwt2d(x, 5, haar_bank()), haar_bank());
    for (std::size_t i = 0; i < x.v.size(); ++i) CHECK(std::fabs(x.v[i] - back.v[i]) < 1e-10);
}
