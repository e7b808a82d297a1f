#pragma once
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "wavaug/attack.hpp"
#include "wavaug/net.hpp"

namespace wavaug {

enum class Augmenter { none, gaussian, pgd, advwavaug };
enum class TrainMode { vanilla, advprop, normal_at };

struct TrainConfig {
    TrainMode mode = TrainMode::vanilla;
    Augmenter augmenter = Augmenter::none;
    int epochs = 20;
    int warmup_epochs = 2;
    std::size_t batch_size = 128;
    double lr0 = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-5;
    std::uint64_t seed = 1;
    NormKind norm_kind = NormKind::batch_norm;
    // attack settings for the pgd/advwavaug augmenters; an empty advwavaug
    // schedule is filled with the published default (setting S3) at run time
    AttackConfig attack;
    double gauss_mean = 0.0;
    double gauss_std = 0.001;
};

struct TrainReport {
    std::vector<double> clean_loss;      // per-epoch means over samples
    std::vector<double> adv_loss;        // zeros when no auxiliary branch
    std::vector<double> train_accuracy;  // clean-branch argmax accuracy
    std::vector<double> lr;              // realized schedule
    double wall_seconds = 0.0;
    std::string checkpoint_path;         // filled by whoever saves the model
};

// Linear warmup to lr0 over warmup_epochs, then cosine decay to 0:
// lr(e) = lr0 * (e+1)/warmup for e < warmup,
//         lr0 * 0.5 * (1 + cos(pi * (e-warmup)/(epochs-warmup))) otherwise.
double lr_at_epoch(const TrainConfig& config, int epoch);

// SGD over shuffled minibatches. vanilla uses the clean path only; advprop
// adds the augmented batch through the adversarial path and updates on the
// summed loss; normal_at does the same through the single clean-path
// statistics set. Modes without a live adversarial path mirror the clean
// statistics into the adversarial slots before returning.
std::pair<ModelState, TrainReport> train_model(const Batch& dataset,
                                               const TrainConfig& config);

// Convenience entry points that pin (and validate) the mode field.
std::pair<ModelState, TrainReport> train_vanilla(const Batch& dataset, TrainConfig config);
std::pair<ModelState, TrainReport> train_advprop(const Batch& dataset, TrainConfig config);
std::pair<ModelState, TrainReport> train_normal_at(const Batch& dataset, TrainConfig config);

// One-step PGD with radius 2/255, the published normal-adversarial-training
// attacker setting.
AttackConfig normal_at_pgd_preset();

// One JSON record per epoch, appended to path.
void write_train_log(const std::string& path, const TrainConfig& config,
                     const TrainReport& report);

}  // namespace wavaug
