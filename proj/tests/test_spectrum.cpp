#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "wavaug/rng.hpp"
#include "wavaug/spectrum.hpp"
#include "wavaug/wavelet.hpp"

using namespace wavaug;

namespace {

Grid random_image(std::size_t r, std::size_t c, Rng& rng) {
    Grid g(r, c);
    for (double& x : g.v) x = rng.uniform(-1.0, 1.0);
    return g;
}

WaveletPyramid random_pyramid(std::size_t n, int levels, Rng& rng) {
    return dwt2d(random_image(n, n, rng), levels, sym8_bank());
}

}  // namespace

TEST_CASE("threshold_filter") {
    Rng rng(1);
    WaveletPyramid pyr = random_pyramid(4, 1, rng);
    // overwrite with hand-picked values: bands order lh, hl, hh, approx
    auto bs = pyr.bands();
    REQUIRE(bs.size() == 4);
    const double vals[16] = {0.1, -0.2, 0.3,  -0.4, 0.5, -0.6, 0.7, -0.8,
                             0.9, -1.0, 0.05, 0.0,  0.3, 0.3,  -0.3, 2.0};
    std::size_t k = 0;
    for (Grid* g : bs)
        for (double& x : g->v) x = vals[k++];

    SUBCASE("strictly-below-threshold entries zero out; |x| == T survives") {
        auto [out, kept] = threshold_filter(pyr, 0.3);
        // |x| < 0.3 zeroed: 0.1, -0.2, 0.05, 0.0 -> kept = 12
        CHECK(kept == 12);
        auto ob = out.bands();
        CHECK(ob[0]->v[0] == 0.0);
        CHECK(ob[0]->v[1] == 0.0);
        CHECK(ob[0]->v[2] == 0.3);
        CHECK(ob[2]->v[2] == 0.05 * 0.0);
        CHECK(ob[3]->v[0] == 0.3);   // equality kept
        CHECK(ob[3]->v[2] == -0.3);  // magnitude comparison
        CHECK(ob[3]->v[3] == 2.0);
    }
    SUBCASE("T = 0 keeps everything, including exact zeros") {
        auto [out, kept] = threshold_filter(pyr, 0.0);
        CHECK(kept == 16);
        CHECK(out.flatten() == pyr.flatten());
    }
    SUBCASE("negative threshold rejected") {
        CHECK_THROWS_AS(threshold_filter(pyr, -1.0), std::invalid_argument);
    }
}

TEST_CASE("quantile_threshold keeps ceil(f * total) coefficients") {
    Rng rng(2);
    WaveletPyramid pyr = random_pyramid(16, 2, rng);
    // random uniform draws are almost surely distinct, so counts are exact
    const std::size_t total = pyr.coefficient_count();
    REQUIRE(total == 256);
    for (double f : {0.05, 0.25, 0.5, 0.9, 1.0}) {
        CAPTURE(f);
        const double T = quantile_threshold(pyr, f);
        auto [out, kept] = threshold_filter(pyr, T);
        CHECK(kept == static_cast<std::size_t>(std::ceil(f * total)));
    }
    CHECK(quantile_threshold(pyr, 1.0) == 0.0);
    CHECK_THROWS_AS(quantile_threshold(pyr, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(quantile_threshold(pyr, 1.5), std::invalid_argument);
}

TEST_CASE("apply_attention") {
    Rng rng(3);
    WaveletPyramid z = random_pyramid(16, 2, rng);
    SUBCASE("zero map is the identity, bitwise") {
        AttentionMap id = AttentionMap::zeros_like(z);
        CHECK(apply_attention(z, id).flatten() == z.flatten());
    }
    SUBCASE("elementwise closed form and zero preservation") {
        AttentionMap map = AttentionMap::zeros_like(z);
        auto mb = map.delta.bands();
        for (Grid* g : mb)
            for (double& x : g->v) x = rng.uniform(-2.0, 2.0);
        auto zb = z.bands();
        zb[1]->v[0] = 0.0;
        WaveletPyramid out = apply_attention(z, map);
        auto ob = out.bands();
        auto zb2 = z.bands();
        auto mb2 = map.delta.bands();
        for (std::size_t b = 0; b < ob.size(); ++b)
            for (std::size_t i = 0; i < ob[b]->v.size(); ++i)
                CHECK(ob[b]->v[i] ==
                      doctest::Approx(zb2[b]->v[i] * (1.0 + mb2[b]->v[i]))
                          .epsilon(1e-14));
        CHECK(ob[1]->v[0] == 0.0);
    }
    SUBCASE("shape mismatch") {
        WaveletPyramid other = random_pyramid(8, 1, rng);
        AttentionMap map = AttentionMap::zeros_like(other);
        CHECK_THROWS_AS(apply_attention(z, map), std::invalid_argument);
    }
}

TEST_CASE("perturbation_bound closed forms") {
    SUBCASE("p = 2: divide by sqrt(n)") {
        PerturbBound b = perturbation_bound(1.0, 4, 0.5, 1.0, 1.0, PNorm::two);
        CHECK(b.epsilon_tilde == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("p = inf: no n dependence") {
        PerturbBound b = perturbation_bound(1.0, 4, 0.5, 1.0, 1.0, PNorm::inf);
        CHECK(b.epsilon_tilde == doctest::Approx(2.0).epsilon(1e-14));
        PerturbBound b2 =
            perturbation_bound(1.0, 4000, 0.5, 1.0, 1.0, PNorm::inf);
        CHECK(b2.epsilon_tilde == b.epsilon_tilde);
    }
    SUBCASE("linear in P, Q, and epsilon_f") {
        const double base =
            perturbation_bound(0.3, 9, 0.2, 1.0, 1.0, PNorm::two).epsilon_tilde;
        CHECK(perturbation_bound(0.3, 9, 0.2, 2.0, 1.0, PNorm::two)
                  .epsilon_tilde == doctest::Approx(2.0 * base).epsilon(1e-14));
        CHECK(perturbation_bound(0.3, 9, 0.2, 1.0, 3.0, PNorm::two)
                  .epsilon_tilde == doctest::Approx(3.0 * base).epsilon(1e-14));
        CHECK(perturbation_bound(0.6, 9, 0.2, 1.0, 1.0, PNorm::two)
                  .epsilon_tilde == doctest::Approx(2.0 * base).epsilon(1e-14));
        // doubling T halves the bound
        CHECK(perturbation_bound(0.3, 9, 0.4, 1.0, 1.0, PNorm::two)
                  .epsilon_tilde == doctest::Approx(0.5 * base).epsilon(1e-14));
    }
    SUBCASE("input validation") {
        CHECK_THROWS_AS(perturbation_bound(1.0, 0, 0.5, 1.0, 1.0, PNorm::two),
                        std::invalid_argument);
        CHECK_THROWS_AS(perturbation_bound(1.0, 4, 0.0, 1.0, 1.0, PNorm::two),
                        std::invalid_argument);
        CHECK_THROWS_AS(perturbation_bound(1.0, 4, 0.5, -1.0, 1.0, PNorm::two),
                        std::invalid_argument);
    }
}

TEST_CASE("attention_gradient matches finite differences of the composition") {
    // F(delta) = <c, W^-1(z * (1 + delta))>. The claimed gradient is
    // W(c) * z elementwise; verify against central differences through the
    // real apply_attention / idwt2d pipeline.
    Rng rng(4);
    const FilterBank bank = sym8_bank();
    WaveletPyramid z = random_pyramid(16, 2, rng);
    Grid c = random_image(16, 16, rng);

    WaveletPyramid g = attention_gradient(c, z, bank);
    REQUIRE(g.same_shape(z));

    auto eval = [&](const AttentionMap& m) {
        Grid img = idwt2d(apply_attention(z, m), bank);
        double acc = 0.0;
        for (std::size_t i = 0; i < img.v.size(); ++i) acc += img.v[i] * c.v[i];
        return acc;
    };
    const double h = 1e-6;
    Rng pick(5);
    auto gb = g.bands();
    for (int rep = 0; rep < 24; ++rep) {
        const std::size_t b = pick.below(gb.size());
        const std::size_t i = pick.below(gb[b]->v.size());
        AttentionMap m = AttentionMap::zeros_like(z);
        m.delta.bands()[b]->v[i] = h;
        const double fp = eval(m);
        m.delta.bands()[b]->v[i] = -h;
        const double fm = eval(m);
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(gb[b]->v[i] == doctest::Approx(fd).epsilon(1e-6));
    }
    SUBCASE("image-shape mismatch") {
        Grid wrong(8, 8);
        CHECK_THROWS_AS(attention_gradient(wrong, z, bank),
                        std::invalid_argument);
    }
}

TEST_CASE("published step-size table") {
    // full six-level settings, frozen independently of the implementation
    const struct {
        const char* id;
        double h[6];
        double l;
    } expect[] = {
        {"S1", {0.50, 0.07, 0.05, 0.03, 0.02, 0.010}, 0.001},
        {"S2", {0.40, 0.06, 0.04, 0.03, 0.02, 0.010}, 0.001},
        {"S3", {0.30, 0.05, 0.04, 0.03, 0.02, 0.015}, 0.015},
        {"S4", {0.10, 0.30, 0.05, 0.03, 0.02, 0.010}, 0.010},
        {"S5", {0.09, 0.09, 0.13, 0.15, 0.17, 0.150}, 0.150},
        {"S6", {0.09, 0.09, 0.09, 0.11, 0.13, 0.150}, 0.170},
    };
    for (const auto& e : expect) {
        BandStepSchedule s = table1_schedule(e.id, 6);
        CHECK(s.setting_id == e.id);
        REQUIRE(s.h_steps.size() == 6);
        for (int i = 0; i < 6; ++i) CHECK(s.h_steps[i] == e.h[i]);
        CHECK(s.l_step == e.l);
    }
    SUBCASE("truncation keeps the finest-first prefix") {
        BandStepSchedule s = table1_schedule("S3", 3);
        CHECK(s.h_steps == std::vector<double>{0.30, 0.05, 0.04});
        CHECK(s.l_step == 0.015);
        BandStepSchedule s1 = table1_schedule("S1", 1);
        CHECK(s1.h_steps == std::vector<double>{0.50});
    }
    SUBCASE("validation") {
        CHECK_THROWS_AS(table1_schedule("S7", 3), std::invalid_argument);
        CHECK_THROWS_AS(table1_schedule("S3", 0), std::invalid_argument);
        CHECK_THROWS_AS(table1_schedule("S3", 7), std::invalid_argument);
    }
}

TEST_CASE("band_steps aligns schedule entries with pyramid band order") {
    Rng rng(6);
    WaveletPyramid pyr = random_pyramid(16, 2, rng);
    BandStepSchedule s;
    s.setting_id = "custom";
    s.h_steps = {0.9, 0.2};
    s.l_step = 0.05;
    std::vector<double> steps = band_steps(s, pyr);
    CHECK(steps == std::vector<double>{0.9, 0.9, 0.9, 0.2, 0.2, 0.2, 0.05});

    SUBCASE("level-count mismatch is an error naming both sizes") {
        BandStepSchedule s3 = table1_schedule("S3", 3);
        CHECK_THROWS_WITH_AS(band_steps(s3, pyr),
                             doctest::Contains("schedule has 3"),
                             std::invalid_argument);
    }
    SUBCASE("negative steps rejected") {
        s.h_steps = {0.9, -0.1};
        CHECK_THROWS_AS(band_steps(s, pyr), std::invalid_argument);
        s.h_steps = {0.9, 0.2};
        s.l_step = -0.01;
        CHECK_THROWS_AS(band_steps(s, pyr), std::invalid_argument);
    }
}

TEST_CASE("schedule JSON round trip") {
    BandStepSchedule s = table1_schedule("S4", 5);
    BandStepSchedule back = schedule_from_json(schedule_to_json(s));
    CHECK(back.setting_id == s.setting_id);
    CHECK(back.h_steps == s.h_steps);
    CHECK(back.l_step == s.l_step);

    BandStepSchedule c;
    c.setting_id = "custom";
    c.h_steps = {2.4, 8.0, 6.4};
    c.l_step = 0.96;
    BandStepSchedule cb = schedule_from_json(schedule_to_json(c));
    CHECK(cb.h_steps == c.h_steps);
    CHECK(cb.l_step == c.l_step);

    CHECK_THROWS(schedule_from_json("not json"));
    CHECK_THROWS(schedule_from_json("{\"setting\": \"S1\"}"));
}
