#include "wavaug/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "wavaug/io.hpp"
#include "wavaug/rng.hpp"
#include "wavaug/spectrum.hpp"

namespace wavaug {

namespace {

constexpr double kPi = 3.14159265358979323846;
// offsets the shuffle stream away from the parameter-init stream
constexpr std::uint64_t kShuffleSalt = 0x9e3779b97f4a7c15ull;

void validate(const Batch& data, const TrainConfig& cfg) {
    if (data.count() == 0) throw std::invalid_argument("train: empty dataset");
    if (data.images.shape.size() != 4 || data.images.shape[0] != data.count())
        throw std::invalid_argument("train: malformed batch");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.warmup_epochs < 0 || cfg.warmup_epochs > cfg.epochs)
        throw std::invalid_argument("train: warmup must be in [0, epochs]");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.mode != TrainMode::vanilla && cfg.augmenter == Augmenter::none)
        throw std::invalid_argument("train: adversarial modes need an augmenter");
}

Batch gather(const Batch& data, const std::vector<std::size_t>& order,
             std::size_t begin, std::size_t count) {
    const std::size_t px = data.images.size() / data.count();
    Batch out;
    out.images.shape = data.images.shape;
    out.images.shape[0] = count;
    out.images.data.resize(count * px);
    out.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[begin + i];
        std::copy_n(data.images.data.begin() + src * px, px,
                    out.images.data.begin() + i * px);
        out.labels[i] = data.labels[src];
    }
    return out;
}

void add_grads(ModelGrads& acc, const ModelGrads& g) {
    auto add = [](Tensor& a, const Tensor& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
    };
    for (std::size_t i = 0; i < acc.conv_w.size(); ++i) {
        add(acc.conv_w[i], g.conv_w[i]);
        add(acc.conv_b[i], g.conv_b[i]);
    }
    for (std::size_t i = 0; i < acc.norm_gamma.size(); ++i) {
        add(acc.norm_gamma[i], g.norm_gamma[i]);
        add(acc.norm_beta[i], g.norm_beta[i]);
    }
    add(acc.fc1_w, g.fc1_w);
    add(acc.fc1_b, g.fc1_b);
    add(acc.fc2_w, g.fc2_w);
    add(acc.fc2_b, g.fc2_b);
}

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels) {
    const std::size_t k = logits.shape[1];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double* row = logits.data.data() + i * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j)
            if (row[j] > row[best]) best = j;  // ties keep the lowest index
        if (static_cast<int>(best) == labels[i]) ++correct;
    }
    return correct;
}

Batch make_augmented(ModelState& model, const Batch& sub, const TrainConfig& cfg,
                     const AttackConfig& attack, int epoch, std::size_t step) {
    switch (cfg.augmenter) {
        case Augmenter::gaussian:
            return gaussian_augment(sub, cfg.gauss_mean, cfg.gauss_std,
                                    cfg.seed * 1000003ull + static_cast<std::uint64_t>(epoch) * 1009ull + step);
        case Augmenter::pgd:
            return pgd_attack(model, sub, attack);
        case Augmenter::advwavaug:
            return advwavaug_attack(model, sub, attack).adversarial;
        case Augmenter::none:
            break;
    }
    throw std::logic_error("train: unreachable augmenter");
}

}  // namespace

double lr_at_epoch(const TrainConfig& config, int epoch) {
    if (epoch < 0 || epoch >= config.epochs)
        throw std::out_of_range("lr_at_epoch: epoch outside [0, epochs)");
    if (epoch < config.warmup_epochs)
        return config.lr0 * static_cast<double>(epoch + 1) /
               static_cast<double>(config.warmup_epochs);
    const double t = static_cast<double>(epoch - config.warmup_epochs) /
                     static_cast<double>(config.epochs - config.warmup_epochs);
    return config.lr0 * 0.5 * (1.0 + std::cos(kPi * t));
}

std::pair<ModelState, TrainReport> train_model(const Batch& dataset,
                                               const TrainConfig& config) {
    validate(dataset, config);
    const auto t_start = std::chrono::steady_clock::now();

    const std::size_t n = dataset.count();
    int max_label = 0;
    for (int y : dataset.labels) max_label = std::max(max_label, y);
    const std::size_t classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);

    ModelState model = make_model(config.seed, config.norm_kind,
                                  dataset.images.shape[1], dataset.images.shape[3],
                                  classes);

    AttackConfig attack = config.attack;
    if (config.augmenter == Augmenter::advwavaug && attack.schedule.h_steps.empty())
        attack.schedule = table1_schedule("S3", attack.levels);
    // a single statistics set means the attack must read it too
    const Path aux_path = config.mode == TrainMode::advprop ? Path::adv : Path::clean;
    attack.path = aux_path;

    SgdState opt;
    Rng shuffle_rng(config.seed + kShuffleSalt);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainReport report;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_at_epoch(config, epoch);
        shuffle_rng.shuffle(order);

        double clean_sum = 0.0, adv_sum = 0.0;
        std::size_t correct = 0, step = 0;
        for (std::size_t b0 = 0; b0 < n; b0 += config.batch_size, ++step) {
            const std::size_t cnt = std::min(config.batch_size, n - b0);
            Batch sub = gather(dataset, order, b0, cnt);

            double closs = 0.0;
            Tensor logits;
            ModelGrads grads;
            if (config.mode == TrainMode::vanilla) {
                grads = backward(model, sub, Path::clean, nullptr, Mode::train,
                                 &closs, &logits);
            } else {
                Batch aug = make_augmented(model, sub, config, attack, epoch, step);
                grads = backward(model, sub, Path::clean, nullptr, Mode::train,
                                 &closs, &logits);
                double aloss = 0.0;
                ModelGrads aux = backward(model, aug, aux_path, nullptr, Mode::train,
                                          &aloss);
                add_grads(grads, aux);
                adv_sum += aloss * static_cast<double>(cnt);
            }
            sgd_step(model, grads, lr, config.momentum, config.weight_decay, opt);
            clean_sum += closs * static_cast<double>(cnt);
            correct += count_correct(logits, sub.labels);
        }

        report.clean_loss.push_back(clean_sum / static_cast<double>(n));
        report.adv_loss.push_back(config.mode == TrainMode::vanilla
                                      ? 0.0
                                      : adv_sum / static_cast<double>(n));
        report.train_accuracy.push_back(static_cast<double>(correct) /
                                        static_cast<double>(n));
        report.lr.push_back(lr);
    }

    if (config.mode != TrainMode::advprop) mirror_clean_stats(model);

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    return {std::move(model), std::move(report)};
}

std::pair<ModelState, TrainReport> train_vanilla(const Batch& dataset, TrainConfig config) {
    config.mode = TrainMode::vanilla;
    return train_model(dataset, config);
}

std::pair<ModelState, TrainReport> train_advprop(const Batch& dataset, TrainConfig config) {
    config.mode = TrainMode::advprop;
    return train_model(dataset, config);
}

std::pair<ModelState, TrainReport> train_normal_at(const Batch& dataset, TrainConfig config) {
    config.mode = TrainMode::normal_at;
    return train_model(dataset, config);
}

AttackConfig normal_at_pgd_preset() {
    AttackConfig cfg;
    cfg.steps = 1;
    cfg.epsilon = 2.0 / 255.0;
    cfg.alpha = 2.0 / 255.0;
    return cfg;
}

void write_train_log(const std::string& path, const TrainConfig& config,
                     const TrainReport& report) {
    for (std::size_t e = 0; e < report.clean_loss.size(); ++e) {
        nlohmann::json rec;
        rec["epoch"] = e;
        rec["lr"] = report.lr[e];
        rec["clean_loss"] = report.clean_loss[e];
        rec["adv_loss"] = report.adv_loss[e];
        rec["train_accuracy"] = report.train_accuracy[e];
        rec["seed"] = config.seed;
        append_jsonl(path, rec.dump());
    }
}

}  // namespace wavaug
