#include "wavaug/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace wavaug {

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major d x d).
// Returns eigenvalues; fills vectors with orthonormal columns if non-null.
std::vector<double> jacobi_eigen(std::vector<double> a, std::size_t d,
                                 std::vector<double>* vectors) {
    std::vector<double> v(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (apq == 0.0) continue;
                const double app = a[p * d + p], aqq = a[q * d + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p], akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k], aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = v[k * d + p], vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
    }
    std::vector<double> eig(d);
    for (std::size_t i = 0; i < d; ++i) eig[i] = a[i * d + i];
    if (vectors) *vectors = std::move(v);
    return eig;
}

struct GaussianFit {
    std::vector<double> mean;  // d
    std::vector<double> cov;   // d x d
};

GaussianFit fit_gaussian(const Tensor& feats) {
    if (feats.shape.size() != 2)
        throw std::invalid_argument("features must be samples x dims");
    const std::size_t n = feats.shape[0], d = feats.shape[1];
    if (n < 2) throw std::invalid_argument("need at least 2 samples per feature set");
    GaussianFit fit;
    fit.mean.assign(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) fit.mean[j] += feats.data[i * d + j];
    for (double& m : fit.mean) m /= static_cast<double>(n);
    fit.cov.assign(d * d, 0.0);
    std::vector<double> centered(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j)
            centered[j] = feats.data[i * d + j] - fit.mean[j];
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t k = j; k < d; ++k)
                fit.cov[j * d + k] += centered[j] * centered[k];
    }
    for (std::size_t j = 0; j < d; ++j)
        for (std::size_t k = j; k < d; ++k) {
            fit.cov[j * d + k] /= static_cast<double>(n - 1);
            fit.cov[k * d + j] = fit.cov[j * d + k];
        }
    if (n <= d) {
        // ridge shrinkage keeps the matrix square roots well defined
        double tr = 0.0;
        for (std::size_t j = 0; j < d; ++j) tr += fit.cov[j * d + j];
        const double ridge = 1e-6 * std::max(1.0, tr / static_cast<double>(d));
        for (std::size_t j = 0; j < d; ++j) fit.cov[j * d + j] += ridge;
    }
    return fit;
}

// V diag(sqrt(max(eig,0))) V^T
std::vector<double> sym_sqrt(const std::vector<double>& m, std::size_t d) {
    std::vector<double> vecs;
    std::vector<double> eig = jacobi_eigen(m, d, &vecs);
    std::vector<double> out(d * d, 0.0);
    for (std::size_t e = 0; e < d; ++e) {
        const double r = std::sqrt(std::max(0.0, eig[e]));
        if (r == 0.0) continue;
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                out[i * d + j] += r * vecs[i * d + e] * vecs[j * d + e];
    }
    return out;
}

std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b,
                            std::size_t d) {
    std::vector<double> out(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t k = 0; k < d; ++k) {
            const double aik = a[i * d + k];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < d; ++j) out[i * d + j] += aik * b[k * d + j];
        }
    return out;
}

}  // namespace

std::vector<int> predict(ModelState& model, const Batch& batch, Path path) {
    if (batch.count() == 0) throw std::invalid_argument("predict: empty batch");
    Tensor logits = forward(model, batch, path, Mode::eval);
    const std::size_t k = model.num_classes;
    std::vector<int> out(batch.count());
    for (std::size_t i = 0; i < batch.count(); ++i) {
        const double* row = logits.data.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;  // ties keep the lowest index
        out[i] = static_cast<int>(best);
    }
    return out;
}

double accuracy(ModelState& model, const Batch& batch, Path path) {
    const std::vector<int> pred = predict(model, batch, path);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == batch.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(pred.size());
}

std::vector<double> corruption_errors(ModelState& model, const Batch& test,
                                      std::uint64_t seed0, int threads) {
    const auto& kinds = all_corruptions();
    // one cell per (kind, severity); filled independently, reduced in order
    std::vector<double> cell(kinds.size() * 5, 0.0);
    auto run_cell = [&](ModelState& m, std::size_t c) {
        const std::size_t kind_index = c / 5;
        const int sev = static_cast<int>(c % 5) + 1;
        Batch corrupted =
            corrupt_batch(test, kinds[kind_index], sev,
                          seed0 + kind_index * 1000 + static_cast<std::uint64_t>(sev) * 100);
        cell[c] = 1.0 - accuracy(m, corrupted);
    };
    if (threads <= 1) {
        for (std::size_t c = 0; c < cell.size(); ++c) run_cell(model, c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t workers =
            std::min<std::size_t>(static_cast<std::size_t>(threads), cell.size());
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                ModelState local = model;  // eval forwards read stats; copies avoid sharing
                for (std::size_t c = next.fetch_add(1); c < cell.size(); c = next.fetch_add(1))
                    run_cell(local, c);
            });
        for (auto& t : pool) t.join();
    }
    std::vector<double> errs(kinds.size(), 0.0);
    for (std::size_t c = 0; c < cell.size(); ++c) errs[c / 5] += cell[c];
    return errs;
}

std::pair<std::vector<double>, double> mce_from_errors(
    const std::vector<double>& errs, const std::vector<double>& baseline_errs) {
    if (errs.size() != baseline_errs.size())
        throw std::invalid_argument("mce: error vectors differ in length");
    std::vector<double> ce(errs.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < errs.size(); ++k) {
        if (baseline_errs[k] == 0.0)
            throw std::invalid_argument(
                "mce: baseline has zero error on " +
                corruption_name(all_corruptions()[k]) + "; normalization undefined");
        ce[k] = errs[k] / baseline_errs[k] * 100.0;
        sum += ce[k];
    }
    return {std::move(ce), sum / static_cast<double>(errs.size())};
}

std::pair<std::vector<double>, double> mce(ModelState& model, ModelState& baseline,
                                           const Batch& test, std::uint64_t seed0, int threads) {
    return mce_from_errors(corruption_errors(model, test, seed0, threads),
                           corruption_errors(baseline, test, seed0, threads));
}

double asr(ModelState& model, const Batch& adversarial, Path path) {
    return 1.0 - accuracy(model, adversarial, path);
}

double frechet_distance(const Tensor& feats_a, const Tensor& feats_b) {
    const GaussianFit a = fit_gaussian(feats_a);
    const GaussianFit b = fit_gaussian(feats_b);
    if (a.mean.size() != b.mean.size())
        throw std::invalid_argument("frechet: feature dims differ");
    const std::size_t d = a.mean.size();

    double mean_term = 0.0, tr_a = 0.0, tr_b = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = a.mean[j] - b.mean[j];
        mean_term += diff * diff;
        tr_a += a.cov[j * d + j];
        tr_b += b.cov[j * d + j];
    }
    const std::vector<double> root_a = sym_sqrt(a.cov, d);
    // tr((A^1/2 B A^1/2)^1/2) = tr((AB)^1/2) with a symmetric argument
    std::vector<double> inner = mat_mul(mat_mul(root_a, b.cov, d), root_a, d);
    // symmetrize against round-off before the eigensolve
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const double m = 0.5 * (inner[i * d + j] + inner[j * d + i]);
            inner[i * d + j] = inner[j * d + i] = m;
        }
    double tr_root = 0.0;
    for (double e : jacobi_eigen(inner, d, nullptr))
        tr_root += std::sqrt(std::max(0.0, e));
    return std::max(0.0, mean_term + tr_a + tr_b - 2.0 * tr_root);
}

double fid_norm(const Tensor& clean_feats, const Tensor& adv_feats, double ubf) {
    if (ubf <= 0.0) throw std::invalid_argument("fid_norm: ubf must be positive");
    const double fid = frechet_distance(clean_feats, adv_feats);
    return std::sqrt(1.0 - std::min(fid, ubf) / ubf);
}

double lpips_distance(ModelState& model, const Batch& a, const Batch& b, Path path) {
    if (a.count() != b.count() || !a.images.same_shape(b.images))
        throw std::invalid_argument("lpips_distance: batches must be congruent");
    const std::vector<Tensor> fa = layer_features(model, a, path);
    const std::vector<Tensor> fb = layer_features(model, b, path);
    const std::size_t n = a.count();

    double total = 0.0;
    for (std::size_t layer = 0; layer < fa.size(); ++layer) {
        const std::size_t ch = fa[layer].shape[1];
        const std::size_t hw = fa[layer].shape[2] * fa[layer].shape[3];
        double layer_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* pa = fa[layer].data.data() + i * ch * hw;
            const double* pb = fb[layer].data.data() + i * ch * hw;
            for (std::size_t pos = 0; pos < hw; ++pos) {
                double na = 0.0, nb = 0.0;
                for (std::size_t c = 0; c < ch; ++c) {
                    na += pa[c * hw + pos] * pa[c * hw + pos];
                    nb += pb[c * hw + pos] * pb[c * hw + pos];
                }
                na = std::sqrt(na) + 1e-12;
                nb = std::sqrt(nb) + 1e-12;
                for (std::size_t c = 0; c < ch; ++c) {
                    const double diff = pa[c * hw + pos] / na - pb[c * hw + pos] / nb;
                    layer_sum += diff * diff;
                }
            }
        }
        total += layer_sum / static_cast<double>(n * hw);
    }
    return total / static_cast<double>(fa.size());
}

double lpips_norm(double distance, double lbl, double ubl) {
    if (lbl >= ubl) throw std::invalid_argument("lpips_norm: requires lbl < ubl");
    const double clamped = std::clamp(distance, lbl, ubl);
    return std::sqrt(std::max(0.0, 1.0 - 2.0 * clamped));
}

double score(double asr_frac, double fid_n, double lpips_n) {
    return 100.0 * asr_frac * fid_n * lpips_n;
}

TransferCurve transfer_eval(ModelState& source, ModelState& target,
                            const AttackConfig& config, const Batch& dataset,
                            int iterations, double ubf) {
    if (iterations < 1) throw std::invalid_argument("transfer_eval: iterations >= 1");
    if (dataset.count() == 0) throw std::invalid_argument("transfer_eval: empty dataset");

    TransferCurve curve;
    {
        // identical checkpoints mean this is a white-box run, not transfer
        bool same = source.norm_kind == target.norm_kind;
        auto eq = [&](const Tensor& x, const Tensor& y) { return x.data == y.data; };
        for (std::size_t i = 0; same && i < source.convs.size(); ++i)
            same = eq(source.convs[i].weight, target.convs[i].weight) &&
                   eq(source.convs[i].bias, target.convs[i].bias);
        same = same && eq(source.fc1.weight, target.fc1.weight) &&
               eq(source.fc2.weight, target.fc2.weight);
        curve.white_box = same;
        if (same)
            std::cerr << "warning: source and target checkpoints are identical; "
                         "curve measures a white-box attack\n";
    }

    AttackConfig step = config;
    step.steps = 1;
    Tensor clean_feats = features(target, dataset, Path::clean);

    Batch current = dataset;
    for (int it = 0; it < iterations; ++it) {
        if (it > 0) current = advwavaug_attack(source, current, step).adversarial;
        TransferPoint pt;
        pt.iteration = it;
        pt.asr_on_target = asr(target, current);
        pt.fid_norm = fid_norm(clean_feats, features(target, current, Path::clean), ubf);
        pt.lpips_norm = lpips_norm(lpips_distance(target, dataset, current));
        curve.points.push_back(pt);
    }
    return curve;
}

std::string transfer_to_json(const TransferCurve& curve) {
    nlohmann::json arr = nlohmann::json::array();
    for (const TransferPoint& pt : curve.points) {
        nlohmann::json rec;
        rec["iteration"] = pt.iteration;
        rec["asr_on_target"] = pt.asr_on_target;
        rec["fid_norm"] = pt.fid_norm;
        rec["lpips_norm"] = pt.lpips_norm;
        arr.push_back(rec);
    }
    nlohmann::json out;
    out["white_box"] = curve.white_box;
    out["points"] = arr;
    return out.dump(2);
}

std::string metric_report_json(const MetricReport& report) {
    nlohmann::json j;
    j["top1_acc"] = report.top1_acc;
    nlohmann::json ce = nlohmann::json::object();
    for (std::size_t k = 0; k < report.corruption_ce.size(); ++k)
        ce[corruption_name(all_corruptions()[k])] = report.corruption_ce[k];
    j["corruption_ce"] = ce;
    j["mce"] = report.mce;
    j["asr"] = report.asr;
    j["fid_norm"] = report.fid_norm;
    j["lpips_norm"] = report.lpips_norm;
    j["score"] = report.score;
    return j.dump(2);
}

}  // namespace wavaug
