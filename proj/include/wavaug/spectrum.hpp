#pragma once
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "wavaug/wavelet.hpp"

namespace wavaug {

// Pyramid-shaped multiplier field. Stored as the deviation delta; the
// multiplier applied to coefficients is (1 + delta). A fresh map is all
// zeros, i.e. the identity multiplier.
struct AttentionMap {
    WaveletPyramid delta;

    static AttentionMap zeros_like(const WaveletPyramid& pyr) { return {wavaug::zeros_like(pyr)}; }
};

// Per-band gradient step sizes: one entry per detail level (finest first)
// plus one for the approx band.
struct BandStepSchedule {
    std::vector<double> h_steps;
    double l_step = 0.0;
    std::string setting_id;  // "S1".."S6" or "custom"
};

enum class PNorm { two, inf };

// Inputs and result of the multiplicative-perturbation norm bound
// epsilon_tilde = P·Q·epsilon_f / (n^{1/p} · T).
struct PerturbBound {
    double epsilon_f = 0.0;
    std::size_t n_nonsparse = 0;
    double threshold = 0.0;  // T
    PNorm p_norm = PNorm::two;
    double P = 1.0, Q = 1.0;
    double epsilon_tilde = 0.0;
};

// Zero out coefficients with |value| < T; returns the filtered pyramid and
// the count of retained coefficients.
std::pair<WaveletPyramid, std::size_t> threshold_filter(const WaveletPyramid& pyr, double T);

// T such that thresholding keeps ceil(keep_fraction · total) coefficients
// (within ±1 under ties): the (1 − keep_fraction)-quantile of |coefficients|.
double quantile_threshold(const WaveletPyramid& pyr, double keep_fraction);

// Elementwise z · (1 + delta). Exact zeros in z stay exact zeros.
WaveletPyramid apply_attention(const WaveletPyramid& pyr, const AttentionMap& map);

PerturbBound perturbation_bound(double epsilon_f, std::size_t n, double T, double P, double Q,
                                PNorm p);

// Chain rule for the attack variable: with x_adv = W⁻¹(z ⊙ (1+δ)) and g =
// ∂loss/∂x_adv, the gradient w.r.t. δ is W(g) ⊙ z (W⁻¹ is orthogonal, so
// its adjoint is W).
WaveletPyramid attention_gradient(const Grid& image_grad, const WaveletPyramid& z_f,
                                  const FilterBank& bank);

// Published per-band step settings S1..S6, truncated finest-first when the
// pyramid has fewer than 6 levels.
BandStepSchedule table1_schedule(const std::string& setting, int levels);

// Per-band step values aligned with WaveletPyramid::bands() order (three
// detail bands per level share their level's h step; approx gets l_step).
std::vector<double> band_steps(const BandStepSchedule& sched, const WaveletPyramid& pyr);

std::string schedule_to_json(const BandStepSchedule& sched);
BandStepSchedule schedule_from_json(const std::string& text);

} // namespace wavaug
