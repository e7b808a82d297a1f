#include "wavaug/net.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstring>

#include "wavaug/rng.hpp"

namespace wavaug {
namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr std::size_t kEvalChunk = 256;

void fill_uniform(Rng& rng, Tensor& t, double bound) {
    for (double& v : t.data) v = rng.uniform(-bound, bound);
}

// ---- conv 3x3, stride 1, pad 1, NCHW ---------------------------------------

void conv_fwd(const double* in, double* out, const ConvLayer& cv,
              std::size_t n_count, std::size_t hw) {
    const std::size_t plane = hw * hw;
    const std::size_t in_ch = cv.in_ch, out_ch = cv.out_ch;
    for (std::size_t n = 0; n < n_count; ++n) {
        const double* in_n = in + n * in_ch * plane;
        double* out_n = out + n * out_ch * plane;
        for (std::size_t oc = 0; oc < out_ch; ++oc) {
            double* op = out_n + oc * plane;
            const double b = cv.bias[oc];
            for (std::size_t i = 0; i < plane; ++i) op[i] = b;
            for (std::size_t ic = 0; ic < in_ch; ++ic) {
                const double* ip = in_n + ic * plane;
                const double* wk = &cv.weight[(oc * in_ch + ic) * 9];
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const double w = wk[ky * 3 + kx];
                        if (w == 0.0) continue;
                        // out[y][x] += w * in[y+ky-1][x+kx-1] where in bounds
                        const std::size_t y0 = (ky == 0) ? 1 : 0;
                        const std::size_t y1 = (ky == 2) ? hw - 1 : hw;
                        const std::size_t x0 = (kx == 0) ? 1 : 0;
                        const std::size_t x1 = (kx == 2) ? hw - 1 : hw;
                        for (std::size_t y = y0; y < y1; ++y) {
                            double* orow = op + y * hw + x0;
                            const double* irow =
                                ip + (y + ky - 1) * hw + (x0 + kx - 1);
                            const std::size_t len = x1 - x0;
                            for (std::size_t x = 0; x < len; ++x)
                                orow[x] += w * irow[x];
                        }
                    }
                }
            }
        }
    }
}

void conv_bwd_input(const double* dout, double* din, const ConvLayer& cv,
                    std::size_t n_count, std::size_t hw) {
    const std::size_t plane = hw * hw;
    const std::size_t in_ch = cv.in_ch, out_ch = cv.out_ch;
    std::memset(din, 0, n_count * in_ch * plane * sizeof(double));
    for (std::size_t n = 0; n < n_count; ++n) {
        const double* do_n = dout + n * out_ch * plane;
        double* di_n = din + n * in_ch * plane;
        for (std::size_t oc = 0; oc < out_ch; ++oc) {
            const double* dop = do_n + oc * plane;
            for (std::size_t ic = 0; ic < in_ch; ++ic) {
                double* dip = di_n + ic * plane;
                const double* wk = &cv.weight[(oc * in_ch + ic) * 9];
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const double w = wk[ky * 3 + kx];
                        if (w == 0.0) continue;
                        const std::size_t y0 = (ky == 0) ? 1 : 0;
                        const std::size_t y1 = (ky == 2) ? hw - 1 : hw;
                        const std::size_t x0 = (kx == 0) ? 1 : 0;
                        const std::size_t x1 = (kx == 2) ? hw - 1 : hw;
                        for (std::size_t y = y0; y < y1; ++y) {
                            const double* drow = dop + y * hw + x0;
                            double* irow =
                                dip + (y + ky - 1) * hw + (x0 + kx - 1);
                            const std::size_t len = x1 - x0;
                            for (std::size_t x = 0; x < len; ++x)
                                irow[x] += w * drow[x];
                        }
                    }
                }
            }
        }
    }
}

void conv_bwd_params(const double* in, const double* dout, const ConvLayer& cv,
                     Tensor& dw, Tensor& db, std::size_t n_count,
                     std::size_t hw) {
    const std::size_t plane = hw * hw;
    const std::size_t in_ch = cv.in_ch, out_ch = cv.out_ch;
    for (std::size_t n = 0; n < n_count; ++n) {
        const double* in_n = in + n * in_ch * plane;
        const double* do_n = dout + n * out_ch * plane;
        for (std::size_t oc = 0; oc < out_ch; ++oc) {
            const double* dop = do_n + oc * plane;
            double bsum = 0.0;
            for (std::size_t i = 0; i < plane; ++i) bsum += dop[i];
            db[oc] += bsum;
            for (std::size_t ic = 0; ic < in_ch; ++ic) {
                const double* ip = in_n + ic * plane;
                double* wk = &dw[(oc * in_ch + ic) * 9];
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    for (std::size_t kx = 0; kx < 3; ++kx) {
                        const std::size_t y0 = (ky == 0) ? 1 : 0;
                        const std::size_t y1 = (ky == 2) ? hw - 1 : hw;
                        const std::size_t x0 = (kx == 0) ? 1 : 0;
                        const std::size_t x1 = (kx == 2) ? hw - 1 : hw;
                        double acc = 0.0;
                        for (std::size_t y = y0; y < y1; ++y) {
                            const double* drow = dop + y * hw + x0;
                            const double* irow =
                                ip + (y + ky - 1) * hw + (x0 + kx - 1);
                            const std::size_t len = x1 - x0;
                            for (std::size_t x = 0; x < len; ++x)
                                acc += drow[x] * irow[x];
                        }
                        wk[ky * 3 + kx] += acc;
                    }
                }
            }
        }
    }
}

// ---- normalization ----------------------------------------------------------

// Per-block forward cache; xhat and invstd are kept for the backward pass.
struct BlockCache {
    std::vector<double> conv_out;   // pre-norm
    std::vector<double> xhat;       // normalized, pre-affine
    std::vector<double> invstd;     // batch_norm: per channel; layer_norm: per sample
    std::vector<double> act;        // post-ReLU
    std::vector<double> pooled;     // post 2x2 maxpool
    std::vector<std::uint32_t> pool_idx;
    std::size_t hw = 0;             // spatial size before pooling
    std::size_t ch = 0;
};

void norm_fwd(const double* in, BlockCache& bc, const NormLayer& nl,
              NormStats& stats, NormKind kind, Mode mode, std::size_t n_count) {
    const std::size_t plane = bc.hw * bc.hw;
    const std::size_t ch = bc.ch;
    const std::size_t total = n_count * ch * plane;
    bc.xhat.resize(total);
    if (kind == NormKind::batch_norm) {
        bc.invstd.assign(ch, 0.0);
        for (std::size_t c = 0; c < ch; ++c) {
            double mean, var;
            if (mode == Mode::train) {
                const std::size_t cnt = n_count * plane;
                double s = 0.0, s2 = 0.0;
                for (std::size_t n = 0; n < n_count; ++n) {
                    const double* p = in + (n * ch + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) {
                        s += p[i];
                        s2 += p[i] * p[i];
                    }
                }
                mean = s / static_cast<double>(cnt);
                var = s2 / static_cast<double>(cnt) - mean * mean;
                if (var < 0.0) var = 0.0;  // guard rounding
                const double unbiased =
                    cnt > 1 ? var * static_cast<double>(cnt) /
                                  static_cast<double>(cnt - 1)
                            : var;
                stats.mean[c] = (1.0 - kBnMomentum) * stats.mean[c] +
                                kBnMomentum * mean;
                stats.var[c] = (1.0 - kBnMomentum) * stats.var[c] +
                               kBnMomentum * unbiased;
            } else {
                mean = stats.mean[c];
                var = stats.var[c];
            }
            const double istd = 1.0 / std::sqrt(var + kBnEps);
            bc.invstd[c] = istd;
            for (std::size_t n = 0; n < n_count; ++n) {
                const double* p = in + (n * ch + c) * plane;
                double* xh = bc.xhat.data() + (n * ch + c) * plane;
                for (std::size_t i = 0; i < plane; ++i)
                    xh[i] = (p[i] - mean) * istd;
            }
        }
    } else {  // layer_norm: per sample over (C,H,W); no running statistics
        bc.invstd.assign(n_count, 0.0);
        const std::size_t cnt = ch * plane;
        for (std::size_t n = 0; n < n_count; ++n) {
            const double* p = in + n * cnt;
            double s = 0.0, s2 = 0.0;
            for (std::size_t i = 0; i < cnt; ++i) {
                s += p[i];
                s2 += p[i] * p[i];
            }
            const double mean = s / static_cast<double>(cnt);
            double var = s2 / static_cast<double>(cnt) - mean * mean;
            if (var < 0.0) var = 0.0;
            const double istd = 1.0 / std::sqrt(var + kBnEps);
            bc.invstd[n] = istd;
            double* xh = bc.xhat.data() + n * cnt;
            for (std::size_t i = 0; i < cnt; ++i) xh[i] = (p[i] - mean) * istd;
        }
    }
    // affine + ReLU fused into act
    bc.act.resize(total);
    for (std::size_t n = 0; n < n_count; ++n) {
        for (std::size_t c = 0; c < ch; ++c) {
            const double g = nl.gamma[c], b = nl.beta[c];
            const double* xh = bc.xhat.data() + (n * ch + c) * plane;
            double* a = bc.act.data() + (n * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double y = g * xh[i] + b;
                a[i] = y > 0.0 ? y : 0.0;
            }
        }
    }
}

// d(loss)/d(conv_out) given d(loss)/d(norm_out); also accumulates affine grads.
void norm_bwd(const BlockCache& bc, const NormLayer& nl, NormKind kind,
              Mode mode, std::size_t n_count, const std::vector<double>& dy,
              std::vector<double>& dx, Tensor& dgamma, Tensor& dbeta) {
    const std::size_t plane = bc.hw * bc.hw;
    const std::size_t ch = bc.ch;
    dx.assign(n_count * ch * plane, 0.0);
    for (std::size_t c = 0; c < ch; ++c) {
        double dg = 0.0, db = 0.0;
        for (std::size_t n = 0; n < n_count; ++n) {
            const double* d = dy.data() + (n * ch + c) * plane;
            const double* xh = bc.xhat.data() + (n * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                dg += d[i] * xh[i];
                db += d[i];
            }
        }
        dgamma[c] += dg;
        dbeta[c] += db;
    }
    if (kind == NormKind::batch_norm) {
        if (mode == Mode::eval) {
            // statistics are constants: dx = dy * gamma * invstd
            for (std::size_t n = 0; n < n_count; ++n)
                for (std::size_t c = 0; c < ch; ++c) {
                    const double k = nl.gamma[c] * bc.invstd[c];
                    const double* d = dy.data() + (n * ch + c) * plane;
                    double* o = dx.data() + (n * ch + c) * plane;
                    for (std::size_t i = 0; i < plane; ++i) o[i] = d[i] * k;
                }
            return;
        }
        const double cnt = static_cast<double>(n_count * plane);
        for (std::size_t c = 0; c < ch; ++c) {
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (std::size_t n = 0; n < n_count; ++n) {
                const double* d = dy.data() + (n * ch + c) * plane;
                const double* xh = bc.xhat.data() + (n * ch + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double dxh = d[i] * nl.gamma[c];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh[i];
                }
            }
            const double k = bc.invstd[c] / cnt;
            for (std::size_t n = 0; n < n_count; ++n) {
                const double* d = dy.data() + (n * ch + c) * plane;
                const double* xh = bc.xhat.data() + (n * ch + c) * plane;
                double* o = dx.data() + (n * ch + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double dxh = d[i] * nl.gamma[c];
                    o[i] = k * (cnt * dxh - sum_dxh - xh[i] * sum_dxh_xh);
                }
            }
        }
    } else {  // layer_norm (identical in train and eval mode)
        const std::size_t cnt = ch * plane;
        const double cntd = static_cast<double>(cnt);
        for (std::size_t n = 0; n < n_count; ++n) {
            const double* xh = bc.xhat.data() + n * cnt;
            double sum_dxh = 0.0, sum_dxh_xh = 0.0;
            for (std::size_t c = 0; c < ch; ++c) {
                const double* d = dy.data() + (n * ch + c) * plane;
                const double* x = xh + c * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double dxh = d[i] * nl.gamma[c];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * x[i];
                }
            }
            const double k = bc.invstd[n] / cntd;
            for (std::size_t c = 0; c < ch; ++c) {
                const double* d = dy.data() + (n * ch + c) * plane;
                const double* x = xh + c * plane;
                double* o = dx.data() + (n * ch + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double dxh = d[i] * nl.gamma[c];
                    o[i] = k * (cntd * dxh - sum_dxh - x[i] * sum_dxh_xh);
                }
            }
        }
    }
}

// ---- pooling ---------------------------------------------------------------

void pool_fwd(BlockCache& bc, std::size_t n_count) {
    const std::size_t hw = bc.hw, half = hw / 2, ch = bc.ch;
    const std::size_t plane = hw * hw, out_plane = half * half;
    bc.pooled.resize(n_count * ch * out_plane);
    bc.pool_idx.resize(n_count * ch * out_plane);
    for (std::size_t nc = 0; nc < n_count * ch; ++nc) {
        const double* p = bc.act.data() + nc * plane;
        double* q = bc.pooled.data() + nc * out_plane;
        std::uint32_t* ix = bc.pool_idx.data() + nc * out_plane;
        for (std::size_t y = 0; y < half; ++y) {
            for (std::size_t x = 0; x < half; ++x) {
                // first maximum in row-major window order wins ties
                std::size_t base = (2 * y) * hw + 2 * x;
                std::size_t best = base;
                double bv = p[base];
                const std::size_t cand[3] = {base + 1, base + hw, base + hw + 1};
                for (std::size_t k = 0; k < 3; ++k)
                    if (p[cand[k]] > bv) {
                        bv = p[cand[k]];
                        best = cand[k];
                    }
                q[y * half + x] = bv;
                ix[y * half + x] = static_cast<std::uint32_t>(best);
            }
        }
    }
}

void pool_bwd(const BlockCache& bc, std::size_t n_count,
              const std::vector<double>& dpool, std::vector<double>& dact) {
    const std::size_t hw = bc.hw, half = hw / 2, ch = bc.ch;
    const std::size_t plane = hw * hw, out_plane = half * half;
    dact.assign(n_count * ch * plane, 0.0);
    for (std::size_t nc = 0; nc < n_count * ch; ++nc) {
        const double* d = dpool.data() + nc * out_plane;
        const std::uint32_t* ix = bc.pool_idx.data() + nc * out_plane;
        double* o = dact.data() + nc * plane;
        for (std::size_t i = 0; i < out_plane; ++i) o[ix[i]] += d[i];
    }
}

// ---- dense -----------------------------------------------------------------

void dense_fwd(const double* in, double* out, const DenseLayer& fc,
               std::size_t n_count) {
    for (std::size_t n = 0; n < n_count; ++n) {
        const double* x = in + n * fc.in_f;
        double* y = out + n * fc.out_f;
        for (std::size_t o = 0; o < fc.out_f; ++o) {
            const double* w = &fc.weight[o * fc.in_f];
            double acc = fc.bias[o];
            for (std::size_t i = 0; i < fc.in_f; ++i) acc += w[i] * x[i];
            y[o] = acc;
        }
    }
}

// ---- full forward ----------------------------------------------------------

struct ForwardCache {
    std::vector<double> input;   // NCHW
    BlockCache blocks[3];
    std::vector<double> hidden_pre;   // fc1 output, pre-ReLU
    std::vector<double> hidden;       // post-ReLU
    std::size_t n_count = 0;
};

void to_nchw(const Tensor& images, std::size_t n0, std::size_t n_count,
             std::vector<double>& out) {
    const std::size_t h = images.shape[1], w = images.shape[2],
                      c = images.shape[3];
    out.resize(n_count * c * h * w);
    for (std::size_t n = 0; n < n_count; ++n) {
        const double* src = images.data.data() + (n0 + n) * h * w * c;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                for (std::size_t cc = 0; cc < c; ++cc)
                    out[((n * c + cc) * h + y) * w + x] =
                        src[(y * w + x) * c + cc];
    }
}

void check_batch(const ModelState& model, const Batch& batch) {
    if (batch.images.shape.size() != 4)
        throw std::invalid_argument("batch images must be N x H x W x C");
    if (batch.images.shape[0] != batch.count())
        throw std::invalid_argument("image count does not match label count");
    if (batch.images.shape[1] != model.input_hw ||
        batch.images.shape[2] != model.input_hw ||
        batch.images.shape[3] != model.in_channels)
        throw std::invalid_argument("batch shape does not match model input");
}

// Runs one contiguous slice [n0, n0+n_count) through the network.
void run_forward(ModelState& model, const Tensor& images, std::size_t n0,
                 std::size_t n_count, Path path, Mode mode, ForwardCache& fc,
                 double* logits_out) {
    to_nchw(images, n0, n_count, fc.input);
    fc.n_count = n_count;
    std::vector<NormStats>& stats =
        (path == Path::clean) ? model.stats_clean : model.stats_adv;
    const double* cur = fc.input.data();
    std::size_t hw = model.input_hw;
    for (int b = 0; b < 3; ++b) {
        BlockCache& bc = fc.blocks[b];
        bc.hw = hw;
        bc.ch = model.convs[b].out_ch;
        bc.conv_out.resize(n_count * bc.ch * hw * hw);
        conv_fwd(cur, bc.conv_out.data(), model.convs[b], n_count, hw);
        norm_fwd(bc.conv_out.data(), bc, model.norms[b], stats[b],
                 model.norm_kind, mode, n_count);
        pool_fwd(bc, n_count);
        cur = bc.pooled.data();
        hw /= 2;
    }
    // flatten order is the NCHW block output itself
    const std::size_t feat_in = model.fc1.in_f;
    fc.hidden_pre.resize(n_count * model.fc1.out_f);
    fc.hidden.resize(n_count * model.fc1.out_f);
    dense_fwd(cur, fc.hidden_pre.data(), model.fc1, n_count);
    for (std::size_t i = 0; i < fc.hidden_pre.size(); ++i)
        fc.hidden[i] = fc.hidden_pre[i] > 0.0 ? fc.hidden_pre[i] : 0.0;
    dense_fwd(fc.hidden.data(), logits_out, model.fc2, n_count);
    (void)feat_in;
#ifndef NDEBUG
    for (std::size_t i = 0; i < n_count * model.fc2.out_f; ++i)
        assert(std::isfinite(logits_out[i]));
#endif
}

}  // namespace

ModelState make_model(std::uint64_t seed, NormKind kind, std::size_t input_hw,
                      std::size_t in_channels, std::size_t num_classes) {
    if (input_hw % 8 != 0 || input_hw == 0)
        throw std::invalid_argument("input size must be a positive multiple of 8");
    ModelState m;
    m.norm_kind = kind;
    m.rng_seed = seed;
    m.input_hw = input_hw;
    m.in_channels = in_channels;
    m.num_classes = num_classes;

    const std::size_t chans[3] = {12, 24, 48};
    Rng rng(seed);
    std::size_t prev = in_channels;
    for (int b = 0; b < 3; ++b) {
        ConvLayer cv;
        cv.in_ch = prev;
        cv.out_ch = chans[b];
        cv.weight = Tensor({cv.out_ch, cv.in_ch, 3, 3});
        cv.bias = Tensor({cv.out_ch});
        const double bound = 1.0 / std::sqrt(static_cast<double>(prev * 9));
        fill_uniform(rng, cv.weight, bound);
        fill_uniform(rng, cv.bias, bound);
        m.convs.push_back(std::move(cv));

        NormLayer nl;
        nl.channels = chans[b];
        nl.gamma = Tensor({chans[b]});
        nl.beta = Tensor({chans[b]});
        std::fill(nl.gamma.data.begin(), nl.gamma.data.end(), 1.0);
        m.norms.push_back(std::move(nl));

        NormStats st;
        st.mean = Tensor({chans[b]});
        st.var = Tensor({chans[b]});
        std::fill(st.var.data.begin(), st.var.data.end(), 1.0);
        m.stats_clean.push_back(st);
        m.stats_adv.push_back(std::move(st));
        prev = chans[b];
    }

    const std::size_t spatial = input_hw / 8;
    m.fc1.in_f = chans[2] * spatial * spatial;
    m.fc1.out_f = 96;
    m.fc1.weight = Tensor({m.fc1.out_f, m.fc1.in_f});
    m.fc1.bias = Tensor({m.fc1.out_f});
    double bound = 1.0 / std::sqrt(static_cast<double>(m.fc1.in_f));
    fill_uniform(rng, m.fc1.weight, bound);
    fill_uniform(rng, m.fc1.bias, bound);

    m.fc2.in_f = m.fc1.out_f;
    m.fc2.out_f = num_classes;
    m.fc2.weight = Tensor({m.fc2.out_f, m.fc2.in_f});
    m.fc2.bias = Tensor({m.fc2.out_f});
    bound = 1.0 / std::sqrt(static_cast<double>(m.fc2.in_f));
    fill_uniform(rng, m.fc2.weight, bound);
    fill_uniform(rng, m.fc2.bias, bound);
    return m;
}

Tensor forward(ModelState& model, const Batch& batch, Path path, Mode mode) {
    check_batch(model, batch);
    const std::size_t n_total = batch.count();
    Tensor logits({n_total, model.num_classes});
    ForwardCache fc;
    // In train mode the whole batch is one normalization unit; in eval mode
    // samples are independent, so process in cache-friendly slices.
    const std::size_t step =
        (mode == Mode::train) ? (n_total == 0 ? 1 : n_total) : kEvalChunk;
    for (std::size_t n0 = 0; n0 < n_total; n0 += step) {
        const std::size_t cnt = std::min(step, n_total - n0);
        run_forward(model, batch.images, n0, cnt, path, mode, fc,
                    logits.data.data() + n0 * model.num_classes);
    }
    return logits;
}

double ce_loss(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t n = labels.size(), k = logits.shape[1];
    if (logits.shape[0] != n)
        throw std::invalid_argument("logit rows do not match label count");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data.data() + i * k;
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double se = 0.0;
        for (std::size_t j = 0; j < k; ++j) se += std::exp(row[j] - m);
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw std::invalid_argument("label out of range");
        total += m + std::log(se) - row[static_cast<std::size_t>(y)];
    }
    return total / static_cast<double>(n);
}

ModelGrads zero_grads(const ModelState& model) {
    ModelGrads g;
    for (const ConvLayer& cv : model.convs) {
        g.conv_w.push_back(Tensor(cv.weight.shape));
        g.conv_b.push_back(Tensor(cv.bias.shape));
    }
    for (const NormLayer& nl : model.norms) {
        g.norm_gamma.push_back(Tensor(nl.gamma.shape));
        g.norm_beta.push_back(Tensor(nl.beta.shape));
    }
    g.fc1_w = Tensor(model.fc1.weight.shape);
    g.fc1_b = Tensor(model.fc1.bias.shape);
    g.fc2_w = Tensor(model.fc2.weight.shape);
    g.fc2_b = Tensor(model.fc2.bias.shape);
    return g;
}

ModelGrads backward(ModelState& model, const Batch& batch, Path path,
                    Tensor* input_grad, Mode mode, double* loss_out,
                    Tensor* logits_out) {
    check_batch(model, batch);
    const std::size_t n = batch.count(), k = model.num_classes;
    ForwardCache fc;
    std::vector<double> logits(n * k);
    run_forward(model, batch.images, 0, n, path, mode, fc, logits.data());
    if (logits_out) {
        logits_out->shape = {n, k};
        logits_out->data = logits;
    }

    ModelGrads g = zero_grads(model);

    // d(mean CE)/d(logits) = (softmax - onehot) / N
    std::vector<double> dlogits(n * k);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = logits.data() + i * k;
        double m = row[0];
        for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
        double se = 0.0;
        for (std::size_t j = 0; j < k; ++j) se += std::exp(row[j] - m);
        const int y = batch.labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw std::invalid_argument("label out of range");
        loss += m + std::log(se) - row[static_cast<std::size_t>(y)];
        double* d = dlogits.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) {
            d[j] = std::exp(row[j] - m) / se;
            if (j == static_cast<std::size_t>(y)) d[j] -= 1.0;
            d[j] /= static_cast<double>(n);
        }
    }
    loss /= static_cast<double>(n);
    if (loss_out) *loss_out = loss;

    // fc2
    std::vector<double> dhidden(n * model.fc1.out_f, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* d = dlogits.data() + i * k;
        const double* h = fc.hidden.data() + i * model.fc2.in_f;
        double* dh = dhidden.data() + i * model.fc2.in_f;
        for (std::size_t o = 0; o < k; ++o) {
            g.fc2_b[o] += d[o];
            double* wrow = &g.fc2_w[o * model.fc2.in_f];
            const double* w = &model.fc2.weight[o * model.fc2.in_f];
            for (std::size_t j = 0; j < model.fc2.in_f; ++j) {
                wrow[j] += d[o] * h[j];
                dh[j] += d[o] * w[j];
            }
        }
    }
    // ReLU on hidden
    for (std::size_t i = 0; i < dhidden.size(); ++i)
        if (fc.hidden_pre[i] <= 0.0) dhidden[i] = 0.0;

    // fc1
    const std::size_t feat = model.fc1.in_f;
    const double* flat = fc.blocks[2].pooled.data();
    std::vector<double> dflat(n * feat, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* d = dhidden.data() + i * model.fc1.out_f;
        const double* x = flat + i * feat;
        double* dx = dflat.data() + i * feat;
        for (std::size_t o = 0; o < model.fc1.out_f; ++o) {
            if (d[o] == 0.0) continue;
            g.fc1_b[o] += d[o];
            double* wrow = &g.fc1_w[o * feat];
            const double* w = &model.fc1.weight[o * feat];
            for (std::size_t j = 0; j < feat; ++j) {
                wrow[j] += d[o] * x[j];
                dx[j] += d[o] * w[j];
            }
        }
    }

    // conv blocks, last to first
    std::vector<double> dcur = std::move(dflat);
    std::vector<double> dact, dnorm_in;
    for (int b = 2; b >= 0; --b) {
        BlockCache& bc = fc.blocks[b];
        pool_bwd(bc, n, dcur, dact);
        // ReLU mask (act holds post-ReLU values; zero where inactive)
        for (std::size_t i = 0; i < dact.size(); ++i)
            if (bc.act[i] <= 0.0) dact[i] = 0.0;
        norm_bwd(bc, model.norms[b], model.norm_kind, mode, n, dact, dnorm_in,
                 g.norm_gamma[b], g.norm_beta[b]);
        const double* in_planes =
            (b == 0) ? fc.input.data() : fc.blocks[b - 1].pooled.data();
        conv_bwd_params(in_planes, dnorm_in.data(), model.convs[b],
                        g.conv_w[b], g.conv_b[b], n, bc.hw);
        if (b > 0 || input_grad) {
            dcur.resize(n * model.convs[b].in_ch * bc.hw * bc.hw);
            conv_bwd_input(dnorm_in.data(), dcur.data(), model.convs[b], n,
                           bc.hw);
        }
    }

    if (input_grad) {
        // back to N x H x W x C
        *input_grad = Tensor(batch.images.shape);
        const std::size_t h = model.input_hw, w = model.input_hw,
                          c = model.in_channels;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    for (std::size_t cc = 0; cc < c; ++cc)
                        input_grad->data[((i * h + y) * w + x) * c + cc] =
                            dcur[((i * c + cc) * h + y) * w + x];
    }
    return g;
}

namespace {

void axpy_step(Tensor& w, const Tensor& grad, Tensor& vel, double lr,
               double mu, double wd) {
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double g = grad[i] + wd * w[i];
        vel[i] = mu * vel[i] + g;
        w[i] -= lr * vel[i];
    }
}

}  // namespace

void sgd_step(ModelState& model, const ModelGrads& grads, double lr,
              double momentum, double weight_decay, SgdState& state) {
    if (!state.initialized) {
        state.velocity = zero_grads(model);
        state.initialized = true;
    }
    ModelGrads& v = state.velocity;
    for (std::size_t b = 0; b < model.convs.size(); ++b) {
        axpy_step(model.convs[b].weight, grads.conv_w[b], v.conv_w[b], lr,
                  momentum, weight_decay);
        axpy_step(model.convs[b].bias, grads.conv_b[b], v.conv_b[b], lr,
                  momentum, weight_decay);
        axpy_step(model.norms[b].gamma, grads.norm_gamma[b], v.norm_gamma[b],
                  lr, momentum, weight_decay);
        axpy_step(model.norms[b].beta, grads.norm_beta[b], v.norm_beta[b], lr,
                  momentum, weight_decay);
    }
    axpy_step(model.fc1.weight, grads.fc1_w, v.fc1_w, lr, momentum,
              weight_decay);
    axpy_step(model.fc1.bias, grads.fc1_b, v.fc1_b, lr, momentum, weight_decay);
    axpy_step(model.fc2.weight, grads.fc2_w, v.fc2_w, lr, momentum,
              weight_decay);
    axpy_step(model.fc2.bias, grads.fc2_b, v.fc2_b, lr, momentum, weight_decay);
}

Tensor features(ModelState& model, const Batch& batch, Path path) {
    check_batch(model, batch);
    const std::size_t n_total = batch.count();
    Tensor out({n_total, model.fc1.out_f});
    ForwardCache fc;
    std::vector<double> logits(kEvalChunk * model.num_classes);
    for (std::size_t n0 = 0; n0 < n_total; n0 += kEvalChunk) {
        const std::size_t cnt = std::min(kEvalChunk, n_total - n0);
        logits.resize(cnt * model.num_classes);
        run_forward(model, batch.images, n0, cnt, path, Mode::eval, fc,
                    logits.data());
        std::copy(fc.hidden.begin(), fc.hidden.begin() + cnt * model.fc1.out_f,
                  out.data.begin() + n0 * model.fc1.out_f);
    }
    return out;
}

void mirror_clean_stats(ModelState& model) {
    model.stats_adv = model.stats_clean;
}

std::vector<Tensor> layer_features(ModelState& model, const Batch& batch, Path path) {
    check_batch(model, batch);
    const std::size_t n_total = batch.count();
    std::vector<Tensor> out;
    std::size_t hw = model.input_hw;
    for (const auto& conv : model.convs) {
        hw /= 2;  // post-pool spatial size
        out.emplace_back(std::vector<std::size_t>{n_total, conv.out_ch, hw, hw});
    }
    ForwardCache fc;
    std::vector<double> logits;
    for (std::size_t n0 = 0; n0 < n_total; n0 += kEvalChunk) {
        const std::size_t cnt = std::min(kEvalChunk, n_total - n0);
        logits.resize(cnt * model.num_classes);
        run_forward(model, batch.images, n0, cnt, path, Mode::eval, fc,
                    logits.data());
        for (std::size_t b = 0; b < std::size(fc.blocks); ++b) {
            const std::size_t per = out[b].size() / n_total;
            std::copy(fc.blocks[b].pooled.begin(),
                      fc.blocks[b].pooled.begin() + cnt * per,
                      out[b].data.begin() + n0 * per);
        }
    }
    return out;
}

Batch slice_batch(const Batch& batch, std::size_t begin, std::size_t count) {
    if (begin + count > batch.count())
        throw std::out_of_range("slice_batch: range exceeds batch");
    const std::size_t px = batch.images.size() / batch.count();
    Batch out;
    out.images.shape = batch.images.shape;
    out.images.shape[0] = count;
    out.images.data.assign(batch.images.data.begin() + begin * px,
                           batch.images.data.begin() + (begin + count) * px);
    out.labels.assign(batch.labels.begin() + begin,
                      batch.labels.begin() + begin + count);
    return out;
}

}  // namespace wavaug
