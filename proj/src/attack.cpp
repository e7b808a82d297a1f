#include "wavaug/attack.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "wavaug/rng.hpp"
#include "wavaug/wavelet.hpp"

namespace wavaug {

namespace {

constexpr std::size_t kAttackChunk = 128;  // caps backward-cache memory

Grid channel_grid(const Tensor& images, std::size_t i, std::size_t c,
                  std::size_t h, std::size_t w, std::size_t ch) {
    Grid g(h, w);
    const double* base = images.data.data() + i * h * w * ch;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) g(y, x) = base[(y * w + x) * ch + c];
    return g;
}

void store_channel(Tensor& images, const Grid& g, std::size_t i, std::size_t c,
                   std::size_t ch) {
    double* base = images.data.data() + i * g.rows * g.cols * ch;
    for (std::size_t y = 0; y < g.rows; ++y)
        for (std::size_t x = 0; x < g.cols; ++x)
            base[(y * g.cols + x) * ch + c] = g(y, x);
}

void check_common(const Batch& batch, const AttackConfig& config) {
    if (config.steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
    if (batch.images.shape.size() != 4)
        throw std::invalid_argument("attack: batch images must be N x H x W x C");
    if (batch.images.shape[0] != batch.count())
        throw std::invalid_argument("attack: image/label count mismatch");
}

void clamp01(Tensor& images) {
    for (double& v : images.data) v = std::clamp(v, 0.0, 1.0);
}

}  // namespace

AttackResult advwavaug_attack(const ModelState& model, const Batch& batch,
                              const AttackConfig& config) {
    check_common(batch, config);
    const std::size_t n = batch.images.shape[0];
    const std::size_t h = batch.images.shape[1];
    const std::size_t w = batch.images.shape[2];
    const std::size_t ch = batch.images.shape[3];
    const FilterBank bank = sym8_bank();

    std::vector<std::vector<WaveletPyramid>> zf(n);
    std::vector<std::vector<AttentionMap>> deltas(n);
    for (std::size_t i = 0; i < n; ++i) {
        zf[i].reserve(ch);
        deltas[i].reserve(ch);
        for (std::size_t c = 0; c < ch; ++c) {
            zf[i].push_back(
                dwt2d(channel_grid(batch.images, i, c, h, w, ch), config.levels, bank));
            deltas[i].push_back(AttentionMap::zeros_like(zf[i].back()));
        }
    }
    // validates the schedule against the pyramid depth as a side effect
    const std::vector<double> steps = band_steps(config.schedule, zf[0][0]);

    // all forwards below run in eval mode and leave the model untouched
    ModelState& net = const_cast<ModelState&>(model);

    Batch current = batch;
    for (int s = 0; s < config.steps; ++s) {
        if (s > 0) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < ch; ++c)
                    store_channel(current.images,
                                  idwt2d(apply_attention(zf[i][c], deltas[i][c]), bank),
                                  i, c, ch);
        }
        for (std::size_t b0 = 0; b0 < n; b0 += kAttackChunk) {
            const std::size_t cnt = std::min(kAttackChunk, n - b0);
            Batch sub = slice_batch(current, b0, cnt);
            Tensor grad;
            backward(net, sub, config.path, &grad, Mode::eval);
            // backward returns mean-loss gradients; the update wants the
            // summed loss, and under frozen statistics samples decouple,
            // so scaling by the chunk size recovers per-sample sum grads
            const double scale = static_cast<double>(cnt);
            for (std::size_t i = 0; i < cnt; ++i) {
                for (std::size_t c = 0; c < ch; ++c) {
                    Grid gg = channel_grid(grad, i, c, h, w, ch);
                    for (double& v : gg.v) v *= scale;
                    WaveletPyramid g_pyr = attention_gradient(gg, zf[b0 + i][c], bank);
                    auto dst = deltas[b0 + i][c].delta.bands();
                    auto src = g_pyr.bands();
                    for (std::size_t b = 0; b < dst.size(); ++b)
                        for (std::size_t k = 0; k < dst[b]->size(); ++k)
                            dst[b]->v[k] += steps[b] * src[b]->v[k];
                }
            }
        }
    }

    AttackResult result;
    result.adversarial = batch;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < ch; ++c)
            store_channel(result.adversarial.images,
                          idwt2d(apply_attention(zf[i][c], deltas[i][c]), bank), i, c,
                          ch);
    if (config.clamp_output) clamp01(result.adversarial.images);
    result.deltas = std::move(deltas);
    return result;
}

Batch pgd_attack(const ModelState& model, const Batch& batch,
                 const AttackConfig& config) {
    check_common(batch, config);
    if (config.epsilon < 0.0) throw std::invalid_argument("pgd: epsilon must be >= 0");
    if (config.alpha < 0.0) throw std::invalid_argument("pgd: alpha must be >= 0");
    if (config.epsilon == 0.0) return batch;

    const std::size_t n = batch.images.shape[0];
    ModelState& net = const_cast<ModelState&>(model);
    Tensor delta(batch.images.shape);

    Batch current = batch;
    for (int s = 0; s < config.steps; ++s) {
        if (s > 0)
            for (std::size_t k = 0; k < delta.size(); ++k)
                current.images.data[k] = batch.images.data[k] + delta.data[k];
        for (std::size_t b0 = 0; b0 < n; b0 += kAttackChunk) {
            const std::size_t cnt = std::min(kAttackChunk, n - b0);
            Batch sub = slice_batch(current, b0, cnt);
            Tensor grad;
            backward(net, sub, config.path, &grad, Mode::eval);
            const std::size_t px = grad.size() / cnt;
            for (std::size_t k = 0; k < grad.size(); ++k) {
                const double g = grad.data[k];
                const double step = g > 0.0 ? config.alpha : (g < 0.0 ? -config.alpha : 0.0);
                double& d = delta.data[b0 * px + k];
                d = std::clamp(d + step, -config.epsilon, config.epsilon);
            }
        }
    }

    Batch out = batch;
    for (std::size_t k = 0; k < delta.size(); ++k) out.images.data[k] += delta.data[k];
    if (config.clamp_output) clamp01(out.images);
    return out;
}

Batch gaussian_augment(const Batch& batch, double mean, double std_dev,
                       std::uint64_t seed) {
    if (std_dev < 0.0)
        throw std::invalid_argument("gaussian_augment: std must be >= 0");
    Batch out = batch;
    if (std_dev == 0.0) {
        if (mean != 0.0)
            for (double& v : out.images.data) v = std::clamp(v + mean, 0.0, 1.0);
        return out;
    }
    Rng rng(seed);
    for (double& v : out.images.data)
        v = std::clamp(v + mean + std_dev * rng.normal(), 0.0, 1.0);
    return out;
}

}  // namespace wavaug
