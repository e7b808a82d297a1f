#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "wavaug/data.hpp"
#include "wavaug/eval.hpp"
#include "wavaug/net.hpp"
#include "wavaug/spectrum.hpp"
#include "wavaug/train.hpp"

using namespace wavaug;

namespace {

ModelState fitted_blob_model(std::uint64_t seed = 3) {
    Batch blobs = make_blobs(256, 5);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.warmup_epochs = 2;
    cfg.seed = seed;
    return train_vanilla(blobs, cfg).first;
}

// rows m + s*(+-1, +-1): sample mean m, unbiased covariance (4/3)s^2 I
Tensor four_corner_features(double mx, double my, double s) {
    Tensor t({4, 2});
    const double sx[4] = {1, 1, -1, -1}, sy[4] = {1, -1, 1, -1};
    for (int i = 0; i < 4; ++i) {
        t.data[2 * i] = mx + s * sx[i];
        t.data[2 * i + 1] = my + s * sy[i];
    }
    return t;
}

}  // namespace

TEST_CASE("predict and accuracy") {
    Batch b = make_blobs(100, 9);
    SUBCASE("constant logits fall back to class 0") {
        ModelState m = make_model(1, NormKind::batch_norm, 32, 1, 2);
        for (double& v : m.fc2.weight.data) v = 0.0;
        for (double& v : m.fc2.bias.data) v = 0.0;
        std::vector<int> pred = predict(m, b);
        for (int p : pred) CHECK(p == 0);
        int zeros = 0;
        for (int y : b.labels) zeros += y == 0 ? 1 : 0;
        CHECK(accuracy(m, b) == static_cast<double>(zeros) / 100.0);
    }
    SUBCASE("matches a brute-force recount") {
        ModelState m = fitted_blob_model();
        std::vector<int> pred = predict(m, b);
        std::size_t correct = 0;
        for (std::size_t i = 0; i < b.count(); ++i)
            if (pred[i] == b.labels[i]) ++correct;
        CHECK(accuracy(m, b) == static_cast<double>(correct) / 100.0);
        CHECK(accuracy(m, b) >= 0.99);  // memorizer on its own distribution
    }
    SUBCASE("empty batch rejected") {
        ModelState m = make_model(1, NormKind::batch_norm, 32, 1, 2);
        CHECK_THROWS_AS(predict(m, Batch{}), std::invalid_argument);
    }
}

TEST_CASE("asr counts label mismatches") {
    ModelState m = fitted_blob_model();
    Batch b = make_blobs(64, 31);
    const double acc = accuracy(m, b);
    CHECK(asr(m, b) == 1.0 - acc);

    // flip labels on predictions to pin exact fractions
    Batch four = slice_batch(b, 0, 4);
    std::vector<int> pred = predict(m, four);
    four.labels = pred;
    CHECK(asr(m, four) == 0.0);
    four.labels[0] = 1 - pred[0];
    four.labels[1] = 1 - pred[1];
    four.labels[2] = 1 - pred[2];
    CHECK(asr(m, four) == 0.75);
    for (std::size_t i = 0; i < 4; ++i) four.labels[i] = 1 - pred[i];
    CHECK(asr(m, four) == 1.0);
}

TEST_CASE("corruption error suite and mCE") {
    ModelState m = fitted_blob_model();
    Batch test = make_blobs(64, 41);
    std::vector<double> errs = corruption_errors(m, test, 1000);
    REQUIRE(errs.size() == kCorruptionCount);
    std::vector<double> errs2 = corruption_errors(m, test, 1000);
    CHECK(errs == errs2);  // determinism

    SUBCASE("self-normalization gives exactly 100") {
        std::vector<double> base = errs;
        for (double& e : base) e = std::max(e, 1e-6);  // dodge zero-error kinds
        auto [ce, m_ce] = mce_from_errors(base, base);
        for (double c : ce) CHECK(c == 100.0);
        CHECK(m_ce == 100.0);
    }
    SUBCASE("half the error halves the score") {
        std::vector<double> base(kCorruptionCount, 0.4), half(kCorruptionCount, 0.2);
        auto [ce, m_ce] = mce_from_errors(half, base);
        for (double c : ce) CHECK(c == doctest::Approx(50.0).epsilon(1e-12));
        CHECK(m_ce == doctest::Approx(50.0).epsilon(1e-12));
    }
    SUBCASE("zero baseline error is rejected") {
        std::vector<double> base(kCorruptionCount, 0.4);
        base[3] = 0.0;
        CHECK_THROWS_WITH_AS(mce_from_errors(base, base),
                             doctest::Contains("defocus_blur"), std::invalid_argument);
    }
}

TEST_CASE("frechet distance closed forms") {
    SUBCASE("identical clouds score 1.0") {
        Tensor a = four_corner_features(0.0, 0.0, 1.0);
        CHECK(frechet_distance(a, a) < 1e-10);
        CHECK(fid_norm(a, a, kUbfWhiteBox) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("commuting diagonal case has an analytic value") {
        // means (0,0) vs (3,4), covariances (4/3)I vs (16/3)I:
        // fid = 25 + 2*(sqrt(4/3)-sqrt(16/3))^2 = 25 + 8/3
        Tensor a = four_corner_features(0.0, 0.0, 1.0);
        Tensor b = four_corner_features(3.0, 4.0, 2.0);
        CHECK(frechet_distance(a, b) ==
              doctest::Approx(25.0 + 8.0 / 3.0).epsilon(1e-6));
        CHECK(fid_norm(a, b, kUbfWhiteBox) == 0.0);  // saturates above ubf
        CHECK(fid_norm(a, b, kUbfBlackBox) ==
              doctest::Approx(std::sqrt(1.0 - (25.0 + 8.0 / 3.0) / 200.0)).epsilon(1e-6));
    }
    SUBCASE("printed substitution fid=7.5, ubf=10 -> 0.5") {
        const double mshift = std::sqrt(7.5 - 8.0 / 3.0);
        Tensor a = four_corner_features(0.0, 0.0, 1.0);
        Tensor b = four_corner_features(mshift, 0.0, 2.0);
        CHECK(fid_norm(a, b, 10.0) == doctest::Approx(0.5).epsilon(1e-6));
    }
    SUBCASE("shrinkage handles sample counts at or below the dimension") {
        Tensor a({2, 3});
        a.data = {0.0, 1.0, 2.0, 1.0, 0.0, 2.0};
        Tensor b({2, 3});
        b.data = {5.0, 5.0, 5.0, 6.0, 4.0, 5.0};
        const double fid = frechet_distance(a, b);
        CHECK(std::isfinite(fid));
        CHECK(fid > 0.0);
        Tensor c({1, 3});
        CHECK_THROWS_AS(frechet_distance(c, b), std::invalid_argument);
    }
}

TEST_CASE("lpips proxy and normalization") {
    CHECK(lpips_norm(0.0) == 1.0);
    CHECK(lpips_norm(0.5) == 0.0);
    CHECK(lpips_norm(0.9) == 0.0);
    CHECK(lpips_norm(0.25) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
    CHECK(lpips_norm(-3.0) == 1.0);  // clamps at lbl
    CHECK_THROWS_AS(lpips_norm(0.2, 0.5, 0.5), std::invalid_argument);

    ModelState m = fitted_blob_model();
    Batch b = make_blobs(24, 51);
    CHECK(lpips_distance(m, b, b) == 0.0);

    Batch noisy_small = gaussian_augment(b, 0.0, 0.02, 7);
    Batch noisy_large = gaussian_augment(b, 0.0, 0.3, 7);
    const double d_small = lpips_distance(m, b, noisy_small);
    const double d_large = lpips_distance(m, b, noisy_large);
    CHECK(d_small > 0.0);
    CHECK(d_large > d_small);  // monotone response to visible distortion

    Batch other = make_blobs(23, 51);
    CHECK_THROWS_AS(lpips_distance(m, b, other), std::invalid_argument);
}

TEST_CASE("score formula") {
    CHECK(score(0.400, 0.974, 0.989) == doctest::Approx(38.5).epsilon(0.0026));
    CHECK(score(0.0, 0.9, 0.9) == 0.0);
    CHECK(score(1.0, 1.0, 1.0) == 100.0);
}

TEST_CASE("layer_features shapes and determinism") {
    ModelState m = make_model(8);
    Batch b = make_shapes(6, 77, false);
    std::vector<Tensor> f = layer_features(m, b, Path::clean);
    REQUIRE(f.size() == 3);
    CHECK(f[0].shape == std::vector<std::size_t>{6, 12, 16, 16});
    CHECK(f[1].shape == std::vector<std::size_t>{6, 24, 8, 8});
    CHECK(f[2].shape == std::vector<std::size_t>{6, 48, 4, 4});
    for (const Tensor& t : f)
        for (double v : t.data) CHECK(v >= 0.0);  // post-ReLU
    std::vector<Tensor> g = layer_features(m, b, Path::clean);
    for (std::size_t l = 0; l < 3; ++l) CHECK(f[l].data == g[l].data);
}

TEST_CASE("transfer curve") {
    ModelState source = fitted_blob_model(3);
    ModelState target = fitted_blob_model(4);
    Batch data = make_blobs(48, 61);
    AttackConfig cfg;
    cfg.schedule = table1_schedule("S3", 3);
    const int iters = 5;
    TransferCurve curve = transfer_eval(source, target, cfg, data, iters);
    REQUIRE(curve.points.size() == iters);
    CHECK_FALSE(curve.white_box);
    CHECK(curve.points[0].iteration == 0);
    CHECK(curve.points[0].asr_on_target == 1.0 - accuracy(target, data));
    CHECK(curve.points[0].fid_norm == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(curve.points[0].lpips_norm == 1.0);
    for (int i = 1; i < iters; ++i) CHECK(curve.points[i].iteration == i);

    const std::string json = transfer_to_json(curve);
    CHECK(json.find("asr_on_target") != std::string::npos);
    CHECK(json.find("\"white_box\": false") != std::string::npos);

    TransferCurve wb = transfer_eval(source, source, cfg, data, 2);
    CHECK(wb.white_box);
}

TEST_CASE("metric report serialization") {
    MetricReport rep;
    rep.top1_acc = 0.97;
    rep.corruption_ce.assign(kCorruptionCount, 95.0);
    rep.mce = 95.0;
    rep.asr = 0.4;
    rep.fid_norm = 0.97;
    rep.lpips_norm = 0.99;
    rep.score = score(rep.asr, rep.fid_norm, rep.lpips_norm);
    const std::string json = metric_report_json(rep);
    CHECK(json.find("\"mce\": 95.0") != std::string::npos);
    CHECK(json.find("gaussian_noise") != std::string::npos);
    CHECK(json.find("score") != std::string::npos);
}
