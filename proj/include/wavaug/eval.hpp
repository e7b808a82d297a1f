#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wavaug/attack.hpp"
#include "wavaug/data.hpp"
#include "wavaug/net.hpp"

namespace wavaug {

// Saturation bounds for the normalized metrics, per protocol setting.
inline constexpr double kUbfWhiteBox = 10.0;
inline constexpr double kUbfBlackBox = 200.0;
inline constexpr double kLblDefault = 0.0;
inline constexpr double kUblDefault = 0.5;

struct MetricReport {
    double top1_acc = 0.0;
    std::vector<double> corruption_ce;  // percent, aligned with all_corruptions()
    double mce = 0.0;                   // percent
    double asr = 0.0;
    double fid_norm = 0.0;
    double lpips_norm = 0.0;
    double score = 0.0;                 // 0..100
};

// Argmax class per sample; ties resolve to the lowest class index.
std::vector<int> predict(ModelState& model, const Batch& batch, Path path = Path::clean);

double accuracy(ModelState& model, const Batch& batch, Path path = Path::clean);

// Per-kind error sums over severities 1..5. Corruption seeds follow
// seed0 + kind_index*1000 + severity*100 + sample_index, so suites are
// reproducible across models being compared. threads > 1 fans the 45
// (kind, severity) cells out over worker threads, each on its own model
// copy; cells are reduced in fixed index order, so results are identical
// for every thread count.
std::vector<double> corruption_errors(ModelState& model, const Batch& test,
                                      std::uint64_t seed0 = 1000, int threads = 1);

// CE_k = err_k / baseline_err_k * 100; mCE = mean over kinds. A baseline
// with zero error on any kind has no defined normalization.
std::pair<std::vector<double>, double> mce_from_errors(
    const std::vector<double>& errs, const std::vector<double>& baseline_errs);

std::pair<std::vector<double>, double> mce(ModelState& model, ModelState& baseline,
                                           const Batch& test,
                                           std::uint64_t seed0 = 1000, int threads = 1);

// Fraction of adversarial samples whose prediction differs from the label.
double asr(ModelState& model, const Batch& adversarial, Path path = Path::clean);

// Frechet distance between Gaussian fits of two feature sets (rows =
// samples). Ridge shrinkage stabilizes the covariances when a set has no
// more samples than feature dimensions.
double frechet_distance(const Tensor& feats_a, const Tensor& feats_b);

// sqrt(1 - min(fid, ubf)/ubf): 1 means indistinguishable feature clouds.
double fid_norm(const Tensor& clean_feats, const Tensor& adv_feats, double ubf);

// Mean perceptual-proxy distance between paired batches: channel-unit-
// normalized post-pool activations of each conv block, squared differences
// averaged over positions and blocks.
double lpips_distance(ModelState& model, const Batch& a, const Batch& b,
                      Path path = Path::clean);

// sqrt(max(0, 1 - 2*clamp(d, lbl, ubl))): 1 at zero distance.
double lpips_norm(double distance, double lbl = kLblDefault, double ubl = kUblDefault);

// 100 * asr * fid_norm * lpips_norm.
double score(double asr_frac, double fid_n, double lpips_n);

struct TransferPoint {
    int iteration = 0;
    double asr_on_target = 0.0;
    double fid_norm = 0.0;
    double lpips_norm = 0.0;
};

struct TransferCurve {
    std::vector<TransferPoint> points;
    bool white_box = false;  // source and target carried identical weights
};

// Iterated one-step wavelet attacks against the source model, scoring each
// intermediate batch on the target: point 0 is the unperturbed start, then
// one point per attack iteration (points.size() == iterations). Quality
// metrics use the target's features against the clean originals.
TransferCurve transfer_eval(ModelState& source, ModelState& target,
                            const AttackConfig& config, const Batch& dataset,
                            int iterations = 100, double ubf = kUbfBlackBox);

std::string transfer_to_json(const TransferCurve& curve);

std::string metric_report_json(const MetricReport& report);

}  // namespace wavaug
