#include "wavaug/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace wavaug {

std::pair<WaveletPyramid, std::size_t> threshold_filter(const WaveletPyramid& pyr, double T) {
    if (T < 0.0) throw std::invalid_argument("threshold_filter: negative threshold");
    WaveletPyramid out = pyr;
    std::size_t kept = 0;
    for (Grid* g : out.bands()) {
        for (double& x : g->v) {
            if (std::fabs(x) < T)
                x = 0.0;
            else
                ++kept;
        }
    }
    return {std::move(out), kept};
}

double quantile_threshold(const WaveletPyramid& pyr, double keep_fraction) {
    if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
        throw std::invalid_argument("quantile_threshold: keep_fraction must be in (0,1]");
    std::vector<double> mags = pyr.flatten();
    for (double& m : mags) m = std::fabs(m);
    std::sort(mags.begin(), mags.end());
    const std::size_t total = mags.size();
    const std::size_t keep = static_cast<std::size_t>(std::ceil(keep_fraction * total));
    const std::size_t drop = total - keep;
    return drop == 0 ? 0.0 : mags[drop];
}

WaveletPyramid apply_attention(const WaveletPyramid& pyr, const AttentionMap& map) {
    if (!pyr.same_shape(map.delta)) throw std::invalid_argument("apply_attention: shape mismatch");
    WaveletPyramid out = pyr;
    auto zb = out.bands();
    auto db = map.delta.bands();
    for (std::size_t b = 0; b < zb.size(); ++b) {
        Grid& z = *zb[b];
        const Grid& d = *db[b];
        for (std::size_t i = 0; i < z.v.size(); ++i) z.v[i] = z.v[i] * (1.0 + d.v[i]);
    }
    return out;
}

PerturbBound perturbation_bound(double epsilon_f, std::size_t n, double T, double P, double Q,
                                PNorm p) {
    if (n == 0) throw std::invalid_argument("perturbation_bound: n must be >= 1");
    if (!(T > 0.0)) throw std::invalid_argument("perturbation_bound: T must be > 0");
    if (!(P > 0.0) || !(Q > 0.0)) throw std::invalid_argument("perturbation_bound: P,Q must be > 0");
    const double root = p == PNorm::two ? std::sqrt(static_cast<double>(n)) : 1.0;
    PerturbBound b;
    b.epsilon_f = epsilon_f;
    b.n_nonsparse = n;
    b.threshold = T;
    b.p_norm = p;
    b.P = P;
    b.Q = Q;
    b.epsilon_tilde = P * Q * epsilon_f / (root * T);
    return b;
}

WaveletPyramid attention_gradient(const Grid& image_grad, const WaveletPyramid& z_f,
                                  const FilterBank& bank) {
    if (image_grad.rows != z_f.orig_rows || image_grad.cols != z_f.orig_cols)
        throw std::invalid_argument("attention_gradient: shape mismatch");
    WaveletPyramid g = dwt2d(image_grad, z_f.levels, bank);
    auto gb = g.bands();
    auto zb = z_f.bands();
    for (std::size_t b = 0; b < gb.size(); ++b) {
        Grid& gg = *gb[b];
        const Grid& zz = *zb[b];
        for (std::size_t i = 0; i < gg.v.size(); ++i) gg.v[i] *= zz.v[i];
    }
    return g;
}

BandStepSchedule table1_schedule(const std::string& setting, int levels) {
    if (levels < 1 || levels > 6)
        throw std::invalid_argument("table1_schedule: levels must be in [1,6]");
    struct Row {
        const char* id;
        double h[6];
        double l;
    };
    // finest band first (H1..H6), then the approx band L
    static const Row rows[] = {
        {"S1", {0.50, 0.07, 0.05, 0.03, 0.02, 0.010}, 0.001},
        {"S2", {0.40, 0.06, 0.04, 0.03, 0.02, 0.010}, 0.001},
        {"S3", {0.30, 0.05, 0.04, 0.03, 0.02, 0.015}, 0.015},
        {"S4", {0.10, 0.30, 0.05, 0.03, 0.02, 0.010}, 0.010},
        {"S5", {0.09, 0.09, 0.13, 0.15, 0.17, 0.150}, 0.150},
        {"S6", {0.09, 0.09, 0.09, 0.11, 0.13, 0.150}, 0.170},
    };
    for (const Row& r : rows) {
        if (setting == r.id) {
            BandStepSchedule s;
            s.setting_id = r.id;
            s.h_steps.assign(r.h, r.h + levels);
            s.l_step = r.l;
            return s;
        }
    }
    throw std::invalid_argument("table1_schedule: unknown setting '" + setting + "'");
}

std::vector<double> band_steps(const BandStepSchedule& sched, const WaveletPyramid& pyr) {
    if (sched.h_steps.size() != static_cast<std::size_t>(pyr.levels))
        throw std::invalid_argument("band_steps: schedule has " +
                                    std::to_string(sched.h_steps.size()) + " detail steps, pyramid has " +
                                    std::to_string(pyr.levels) + " levels");
    for (double h : sched.h_steps)
        if (h < 0.0) throw std::invalid_argument("band_steps: negative step");
    if (sched.l_step < 0.0) throw std::invalid_argument("band_steps: negative step");
    std::vector<double> out;
    out.reserve(3 * sched.h_steps.size() + 1);
    for (double h : sched.h_steps) {
        out.push_back(h);
        out.push_back(h);
        out.push_back(h);
    }
    out.push_back(sched.l_step);
    return out;
}

std::string schedule_to_json(const BandStepSchedule& sched) {
    nlohmann::json j;
    j["setting"] = sched.setting_id;
    j["h_steps"] = sched.h_steps;
    j["l_step"] = sched.l_step;
    return j.dump();
}

BandStepSchedule schedule_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    BandStepSchedule s;
    s.setting_id = j.at("setting").get<std::string>();
    s.h_steps = j.at("h_steps").get<std::vector<double>>();
    s.l_step = j.at("l_step").get<double>();
    return s;
}

} // namespace wavaug
