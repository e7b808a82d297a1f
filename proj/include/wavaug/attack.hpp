#pragma once
#include <cstdint>
#include <vector>

#include "wavaug/net.hpp"
#include "wavaug/spectrum.hpp"

namespace wavaug {

// Shared knob set for both attackers. AdvWavAug reads steps/schedule/levels,
// PGD reads steps/epsilon/alpha; clamp_output and path apply to both.
struct AttackConfig {
    int steps = 1;                 // S (AdvWavAug) or iteration count (PGD)
    BandStepSchedule schedule;     // per-band step sizes for AdvWavAug
    int levels = 3;                // wavelet decomposition depth
    double epsilon = 1.0 / 255.0;  // PGD infinity-ball radius
    double alpha = 1.0 / 255.0;    // PGD per-step size
    bool clamp_output = true;      // clamp x_adv to [0,1] at the end
    std::uint64_t seed = 0;        // reserved; both attackers are deterministic
    Path path = Path::adv;         // normalization path used for gradients
};

// Adversarial batch plus the multiplier field that produced it, kept in
// wavelet layout per sample and channel so norm-bound checks can run on it.
struct AttackResult {
    Batch adversarial;
    std::vector<std::vector<AttentionMap>> deltas;  // [sample][channel]
};

// Multiplicative wavelet-domain ascent: decompose once, then repeat
// delta += alpha_band * d loss / d delta and reconstruct from
// z * (1 + delta). Gradients use summed cross-entropy so samples decouple.
// All forwards run with frozen normalization statistics.
AttackResult advwavaug_attack(const ModelState& model, const Batch& batch,
                              const AttackConfig& config);

// Sign-gradient ascent on the pixels with an infinity-ball projection:
// delta <- clip(delta + alpha * sign(grad), [-eps, eps]); x + delta is
// clamped to [0,1] only at the end. epsilon == 0 returns the input as is.
Batch pgd_attack(const ModelState& model, const Batch& batch, const AttackConfig& config);

// x + N(mean, std^2) i.i.d. per pixel, clamped to [0,1]. std == 0 adds the
// mean deterministically without consuming randomness.
Batch gaussian_augment(const Batch& batch, double mean, double std_dev, std::uint64_t seed);

}  // namespace wavaug
