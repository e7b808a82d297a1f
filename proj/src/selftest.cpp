#include "wavaug/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "wavaug/attack.hpp"
#include "wavaug/data.hpp"
#include "wavaug/net.hpp"
#include "wavaug/rng.hpp"
#include "wavaug/spectrum.hpp"
#include "wavaug/wavelet.hpp"

namespace wavaug {
namespace {

Grid random_grid(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Grid g(rows, cols);
    Rng rng(seed);
    for (double& v : g.v) v = rng.uniform();
    return g;
}

double max_abs_diff(const Grid& a, const Grid& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

double energy(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x * x;
    return s;
}

std::vector<Tensor*> collect_params(ModelState& m) {
    std::vector<Tensor*> ps;
    for (auto& cv : m.convs) {
        ps.push_back(&cv.weight);
        ps.push_back(&cv.bias);
    }
    for (auto& nl : m.norms) {
        ps.push_back(&nl.gamma);
        ps.push_back(&nl.beta);
    }
    ps.push_back(&m.fc1.weight);
    ps.push_back(&m.fc1.bias);
    ps.push_back(&m.fc2.weight);
    ps.push_back(&m.fc2.bias);
    return ps;
}

std::vector<Tensor*> collect_grads(ModelGrads& g) {
    std::vector<Tensor*> ps;
    for (std::size_t b = 0; b < g.conv_w.size(); ++b) {
        ps.push_back(&g.conv_w[b]);
        ps.push_back(&g.conv_b[b]);
    }
    for (std::size_t b = 0; b < g.norm_gamma.size(); ++b) {
        ps.push_back(&g.norm_gamma[b]);
        ps.push_back(&g.norm_beta[b]);
    }
    ps.push_back(&g.fc1_w);
    ps.push_back(&g.fc1_b);
    ps.push_back(&g.fc2_w);
    ps.push_back(&g.fc2_b);
    return ps;
}

double loss_at(const ModelState& m, const Batch& b, Path p, Mode mode) {
    ModelState copy = m;  // forward may touch stats; work on a throwaway
    return ce_loss(forward(copy, b, p, mode), b.labels);
}

Batch random_batch(std::size_t n, std::size_t hw, std::uint64_t seed, int classes) {
    Batch b;
    b.images = Tensor({n, hw, hw, 1});
    Rng rng(seed);
    for (double& v : b.images.data) v = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng.below(classes)));
    return b;
}

// A model that separates the two blob classes; several attack checks need
// nonzero, meaningful gradients. Built once and shared.
const ModelState& fitted_blob_model() {
    static const ModelState cached = [] {
        Batch data = make_blobs(192, 5);
        ModelState m = make_model(11, NormKind::batch_norm, 32, 1, 2);
        SgdState opt;
        for (int e = 0; e < 10; ++e) {
            ModelGrads g = backward(m, data, Path::clean);
            sgd_step(m, g, 0.05, 0.9, 5e-5, opt);
        }
        mirror_clean_stats(m);
        return m;
    }();
    return cached;
}

struct Runner {
    std::ostream& out;
    SelftestResult result;

    void check(const std::string& name, const std::function<bool()>& body) {
        bool ok = false;
        std::string note;
        try {
            ok = body();
        } catch (const std::exception& e) {
            note = std::string(" (") + e.what() + ")";
        }
        out << (ok ? "ok   " : "FAIL ") << name << note << "\n";
        (ok ? result.passed : result.failed)++;
    }
};

}  // namespace

SelftestResult run_selftest(std::ostream& out) {
    Runner r{out, {}};

    // ---- wavelet ----------------------------------------------------------

    r.check("wavelet filter orthonormality", [] {
        for (const FilterBank& bank : {sym8_bank(), haar_bank()}) {
            const auto& lo = bank.lowpass;
            const auto& hi = bank.highpass;
            for (std::size_t lag = 0; lag < lo.size(); lag += 2) {
                double ll = 0.0, lh = 0.0;
                for (std::size_t k = 0; k + lag < lo.size(); ++k) {
                    ll += lo[k] * lo[k + lag];
                    lh += lo[k] * hi[k + lag];
                }
                const double want = lag == 0 ? 1.0 : 0.0;
                if (std::fabs(ll - want) > 1e-12) return false;
                if (lag == 0 && std::fabs(lh) > 1e-12) return false;
            }
        }
        return true;
    });

    r.check("wavelet round trip < 1e-10", [] {
        for (const FilterBank& bank : {sym8_bank(), haar_bank()})
            for (std::size_t side : {32u, 64u})
                for (int levels : {1, 3}) {
                    Grid img = random_grid(side, side, 7000 + side + levels);
                    Grid rec = idwt2d(dwt2d(img, levels, bank), bank);
                    if (max_abs_diff(img, rec) >= 1e-10) return false;
                }
        return true;
    });

    r.check("wavelet energy preservation (rel 1e-9)", [] {
        for (const FilterBank& bank : {sym8_bank(), haar_bank()}) {
            Grid img = random_grid(64, 64, 7103);
            WaveletPyramid pyr = dwt2d(img, 3, bank);
            const double ex = energy(img.v);
            const double ec = energy(pyr.flatten());
            if (std::fabs(ex - ec) / ex >= 1e-9) return false;
        }
        return true;
    });

    r.check("wavelet coefficient count preserved", [] {
        Grid img = random_grid(32, 48, 7207);
        WaveletPyramid pyr = dwt2d(img, 2, sym8_bank());
        return pyr.coefficient_count() == img.size() && pyr.flatten().size() == img.size();
    });

    // ---- spectrum ---------------------------------------------------------

    r.check("threshold keeps the requested fraction", [] {
        Grid img = random_grid(32, 32, 7301);
        WaveletPyramid pyr = dwt2d(img, 3, sym8_bank());
        const double T = quantile_threshold(pyr, 0.1);
        auto [sparse, kept] = threshold_filter(pyr, T);
        const std::size_t want = (pyr.coefficient_count() + 9) / 10;  // ceil(0.1 n)
        if (kept + 1 < want || kept > want + 1) return false;
        std::size_t zeros = 0;
        for (double c : sparse.flatten())
            if (c == 0.0) ++zeros;
        return zeros + kept == pyr.coefficient_count();
    });

    r.check("attention multiplier: formula and exact-zero preservation", [] {
        Grid img = random_grid(32, 32, 7418);
        WaveletPyramid pyr = dwt2d(img, 2, sym8_bank());
        auto [sparse, kept] = threshold_filter(pyr, quantile_threshold(pyr, 0.25));
        (void)kept;
        AttentionMap map = AttentionMap::zeros_like(sparse);
        Rng rng(7419);
        auto bands = map.delta.bands();
        for (Grid* b : bands)
            for (double& v : b->v) v = rng.uniform(-0.5, 0.5);
        WaveletPyramid scaled = apply_attention(sparse, map);
        auto zs = sparse.flatten();
        auto ds = map.delta.flatten();
        auto ss = scaled.flatten();
        for (std::size_t i = 0; i < zs.size(); ++i) {
            if (zs[i] == 0.0 && ss[i] != 0.0) return false;
            if (std::fabs(ss[i] - zs[i] * (1.0 + ds[i])) > 1e-12) return false;
        }
        return true;
    });

    r.check("attention gradient matches finite differences", [] {
        // F(delta) = <c, W^-1(z (1+delta))> has gradient z * W(c).
        const FilterBank bank = sym8_bank();
        Grid img = random_grid(16, 16, 7509);
        WaveletPyramid z = dwt2d(img, 2, bank);
        Grid c = random_grid(16, 16, 7510);
        WaveletPyramid analytic = attention_gradient(c, z, bank);
        AttentionMap probe = AttentionMap::zeros_like(z);
        auto bands = probe.delta.bands();
        auto abands = analytic.bands();
        Rng pick(7511);
        const double h = 1e-6;
        for (int rep = 0; rep < 12; ++rep) {
            const std::size_t bi = pick.below(bands.size());
            const std::size_t ci = pick.below(bands[bi]->v.size());
            auto value = [&](double d) {
                bands[bi]->v[ci] = d;
                Grid rec = idwt2d(apply_attention(z, probe), bank);
                bands[bi]->v[ci] = 0.0;
                double s = 0.0;
                for (std::size_t i = 0; i < rec.v.size(); ++i) s += c.v[i] * rec.v[i];
                return s;
            };
            const double fd = (value(h) - value(-h)) / (2.0 * h);
            const double an = abands[bi]->v[ci];
            if (std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-6}) > 1e-5)
                return false;
        }
        return true;
    });

    r.check("perturbation bound closed form", [] {
        PerturbBound b2 = perturbation_bound(0.5, 4, 0.25, 1.0, 1.0, PNorm::two);
        // 1 * 1 * 0.5 / (4^(1/2) * 0.25) = 1.0
        if (std::fabs(b2.epsilon_tilde - 1.0) > 1e-12) return false;
        PerturbBound bi = perturbation_bound(0.5, 4, 0.25, 2.0, 3.0, PNorm::inf);
        // 2 * 3 * 0.5 / (1 * 0.25) = 12  (n^(1/inf) = 1)
        return std::fabs(bi.epsilon_tilde - 12.0) < 1e-12;
    });

    r.check("band schedule lookup and alignment", [] {
        BandStepSchedule s3 = table1_schedule("S3", 3);
        if (s3.h_steps.size() != 3) return false;
        Grid img = random_grid(32, 32, 7602);
        WaveletPyramid pyr = dwt2d(img, 3, sym8_bank());
        std::vector<double> steps = band_steps(s3, pyr);
        if (steps.size() != pyr.bands().size()) return false;
        // three detail bands per level share the level step; approx is last
        for (int lvl = 0; lvl < 3; ++lvl)
            for (int k = 0; k < 3; ++k)
                if (steps[3 * lvl + k] != s3.h_steps[lvl]) return false;
        if (steps.back() != s3.l_step) return false;
        BandStepSchedule rt = schedule_from_json(schedule_to_json(s3));
        return rt.h_steps == s3.h_steps && rt.l_step == s3.l_step;
    });

    // ---- netcore ----------------------------------------------------------

    r.check("parameter gradients match finite differences", [] {
        Batch batch = random_batch(3, 8, 7701, 4);
        ModelState model = make_model(7702, NormKind::batch_norm, 8, 1, 4);
        ModelState work = model;
        ModelGrads g = backward(work, batch, Path::clean);
        ModelState probe = model;
        auto params = collect_params(probe);
        auto grads = collect_grads(g);
        Rng pick(7703);
        const double h = 1e-6;
        for (std::size_t t = 0; t < params.size(); ++t)
            for (int rep = 0; rep < 2; ++rep) {
                const std::size_t i = pick.below(params[t]->size());
                const double orig = (*params[t])[i];
                (*params[t])[i] = orig + h;
                const double lp = loss_at(probe, batch, Path::clean, Mode::train);
                (*params[t])[i] = orig - h;
                const double lm = loss_at(probe, batch, Path::clean, Mode::train);
                (*params[t])[i] = orig;
                const double fd = (lp - lm) / (2.0 * h);
                const double an = (*grads[t])[i];
                if (std::fabs(fd - an) / std::max({std::fabs(fd), std::fabs(an), 1e-4}) > 1e-4)
                    return false;
            }
        return true;
    });

    r.check("input gradients match finite differences", [] {
        Batch batch = random_batch(2, 8, 7801, 4);
        ModelState model = make_model(7802, NormKind::batch_norm, 8, 1, 4);
        Tensor ig;
        ModelState work = model;
        backward(work, batch, Path::clean, &ig, Mode::eval);
        Rng pick(7803);
        const double h = 1e-6;
        for (int rep = 0; rep < 8; ++rep) {
            const std::size_t i = pick.below(batch.images.size());
            Batch probe = batch;
            probe.images[i] += h;
            const double lp = loss_at(model, probe, Path::clean, Mode::eval);
            probe.images[i] = batch.images[i] - h;
            const double lm = loss_at(model, probe, Path::clean, Mode::eval);
            const double fd = (lp - lm) / (2.0 * h);
            if (std::fabs(fd - ig[i]) / std::max({std::fabs(fd), std::fabs(ig[i]), 1e-4}) > 1e-4)
                return false;
        }
        return true;
    });

    r.check("normalization statistics: momentum recurrence and path isolation", [] {
        Batch batch = random_batch(8, 8, 7901, 4);
        ModelState m = make_model(7902, NormKind::batch_norm, 8, 1, 4);
        const ModelState before = m;
        forward(m, batch, Path::clean, Mode::train);
        // adv stats untouched by a clean-path pass
        for (std::size_t l = 0; l < m.stats_adv.size(); ++l) {
            if (m.stats_adv[l].mean.data != before.stats_adv[l].mean.data) return false;
            if (m.stats_adv[l].var.data != before.stats_adv[l].var.data) return false;
        }
        // eval passes freeze both sets
        const ModelState frozen = m;
        forward(m, batch, Path::clean, Mode::eval);
        forward(m, batch, Path::adv, Mode::eval);
        for (std::size_t l = 0; l < m.stats_clean.size(); ++l) {
            if (m.stats_clean[l].mean.data != frozen.stats_clean[l].mean.data) return false;
            if (m.stats_adv[l].var.data != frozen.stats_adv[l].var.data) return false;
        }
        return true;
    });

    r.check("sgd momentum closed form", [] {
        ModelState m = make_model(8001, NormKind::batch_norm, 8, 1, 4);
        const double w0 = m.fc2.bias[0];
        ModelGrads g = zero_grads(m);
        g.fc2_b[0] = 2.0;
        SgdState opt;
        sgd_step(m, g, 0.1, 0.9, 0.0, opt);     // v=2, w -= 0.2
        sgd_step(m, g, 0.1, 0.9, 0.0, opt);     // v=3.8, w -= 0.38
        return std::fabs(m.fc2.bias[0] - (w0 - 0.2 - 0.38)) < 1e-12;
    });

    r.check("cross entropy of uniform logits is ln(k)", [] {
        Tensor logits({5, 4});
        std::vector<int> labels = {0, 1, 2, 3, 0};
        return std::fabs(ce_loss(logits, labels) - std::log(4.0)) < 1e-12;
    });

    // ---- attack -----------------------------------------------------------

    r.check("zero-gradient model leaves images unchanged", [] {
        ModelState m = make_model(8101, NormKind::batch_norm, 32, 1, 4);
        std::fill(m.fc2.weight.data.begin(), m.fc2.weight.data.end(), 0.0);
        std::fill(m.fc2.bias.data.begin(), m.fc2.bias.data.end(), 0.0);
        Batch batch = random_batch(2, 32, 8102, 4);
        AttackConfig cfg;
        cfg.steps = 2;
        cfg.schedule = table1_schedule("S3", cfg.levels);
        AttackResult res = advwavaug_attack(m, batch, cfg);
        for (std::size_t i = 0; i < batch.images.size(); ++i)
            if (std::fabs(res.adversarial.images[i] - batch.images[i]) > 1e-10) return false;
        for (const auto& per_sample : res.deltas)
            for (const auto& map : per_sample)
                for (double d : map.delta.flatten())
                    if (d != 0.0) return false;
        return true;
    });

    r.check("sparse coefficients stay exactly zero under the attack", [] {
        ModelState m = fitted_blob_model();
        Batch batch = make_blobs(4, 81);
        const FilterBank bank = sym8_bank();
        // rebuild each image from its 10% largest coefficients
        std::vector<WaveletPyramid> sparse;
        for (std::size_t i = 0; i < batch.count(); ++i) {
            WaveletPyramid pyr = dwt2d(batch_image(batch, i), 3, bank);
            sparse.push_back(threshold_filter(pyr, quantile_threshold(pyr, 0.1)).first);
            set_batch_image(batch, i, idwt2d(sparse.back(), bank));
        }
        AttackConfig cfg;
        cfg.schedule = table1_schedule("S3", 3);
        cfg.clamp_output = false;
        AttackResult res = advwavaug_attack(m, batch, cfg);
        std::size_t zeros = 0, moved = 0;
        for (std::size_t i = 0; i < batch.count(); ++i) {
            auto zc = apply_attention(sparse[i], res.deltas[i][0]).flatten();
            auto z0 = sparse[i].flatten();
            for (std::size_t k = 0; k < z0.size(); ++k) {
                if (z0[k] == 0.0) {
                    ++zeros;
                    if (zc[k] != 0.0) return false;
                } else if (zc[k] != z0[k]) {
                    ++moved;
                }
            }
        }
        return zeros > 100 && moved > 0;
    });

    r.check("multiplicative perturbation respects its norm bound", [] {
        ModelState m = fitted_blob_model();
        Batch batch = make_blobs(8, 82);
        const FilterBank bank = sym8_bank();
        std::vector<WaveletPyramid> sparse;
        for (std::size_t i = 0; i < batch.count(); ++i) {
            WaveletPyramid pyr = dwt2d(batch_image(batch, i), 3, bank);
            sparse.push_back(threshold_filter(pyr, quantile_threshold(pyr, 0.1)).first);
            set_batch_image(batch, i, idwt2d(sparse.back(), bank));
        }
        AttackConfig cfg;
        cfg.schedule = table1_schedule("S3", 3);
        cfg.clamp_output = false;
        AttackResult res = advwavaug_attack(m, batch, cfg);
        for (std::size_t i = 0; i < batch.count(); ++i) {
            auto z = sparse[i].flatten();
            auto d = res.deltas[i][0].delta.flatten();
            double eps_f = 0.0, dn = 0.0, tmin = 0.0;
            std::size_t n = 0;
            for (std::size_t k = 0; k < z.size(); ++k) {
                if (std::fabs(z[k]) <= 1e-9) continue;
                ++n;
                eps_f += z[k] * z[k] * d[k] * d[k];
                dn += d[k] * d[k];
                const double a = std::fabs(z[k]);
                tmin = n == 1 ? a : std::min(tmin, a);
            }
            PerturbBound bound =
                perturbation_bound(std::sqrt(eps_f), n, tmin, 1.0, 1.0, PNorm::two);
            if (std::sqrt(dn) > bound.epsilon_tilde + 1e-12) return false;
        }
        return true;
    });

    r.check("pgd stays inside its epsilon ball", [] {
        ModelState m = fitted_blob_model();
        Batch batch = make_blobs(6, 83);
        AttackConfig cfg;
        cfg.steps = 5;
        cfg.epsilon = 4.0 / 255.0;
        cfg.alpha = 2.0 / 255.0;
        Batch adv = pgd_attack(m, batch, cfg);
        for (std::size_t i = 0; i < batch.images.size(); ++i) {
            const double d = adv.images[i] - batch.images[i];
            if (std::fabs(d) > cfg.epsilon + 1e-15) return false;
            if (adv.images[i] < 0.0 || adv.images[i] > 1.0) return false;
        }
        cfg.epsilon = 0.0;
        Batch same = pgd_attack(m, batch, cfg);
        return same.images.data == batch.images.data;
    });

    r.check("attacks increase the training loss", [] {
        ModelState m = fitted_blob_model();
        Batch batch = make_blobs(32, 84);
        auto mean_loss = [&](const Batch& b) {
            ModelState copy = m;
            return ce_loss(forward(copy, b, Path::clean, Mode::eval), b.labels);
        };
        const double clean = mean_loss(batch);
        AttackConfig cfg;
        cfg.steps = 3;
        cfg.schedule = table1_schedule("S3", 3);
        if (mean_loss(advwavaug_attack(m, batch, cfg).adversarial) <= clean) return false;
        AttackConfig pcfg;
        pcfg.steps = 3;
        pcfg.epsilon = 4.0 / 255.0;
        pcfg.alpha = 2.0 / 255.0;
        return mean_loss(pgd_attack(m, batch, pcfg)) > clean;
    });

    r.check("attacks are deterministic", [] {
        ModelState m = make_model(8301, NormKind::batch_norm, 32, 1, 4);
        Batch batch = random_batch(3, 32, 8302, 4);
        AttackConfig cfg;
        cfg.steps = 2;
        cfg.schedule = table1_schedule("S3", 3);
        AttackResult a = advwavaug_attack(m, batch, cfg);
        AttackResult b = advwavaug_attack(m, batch, cfg);
        if (a.adversarial.images.data != b.adversarial.images.data) return false;
        AttackConfig pcfg;
        pcfg.steps = 2;
        pcfg.epsilon = 2.0 / 255.0;
        Batch p = pgd_attack(m, batch, pcfg);
        Batch q = pgd_attack(m, batch, pcfg);
        return p.images.data == q.images.data;
    });

    char line[64];
    std::snprintf(line, sizeof line, "%d/%d checks passed\n", r.result.passed,
                  r.result.passed + r.result.failed);
    out << line;
    return r.result;
}

}  // namespace wavaug
