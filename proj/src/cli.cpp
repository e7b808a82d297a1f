#include "wavaug/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wavaug/attack.hpp"
#include "wavaug/data.hpp"
#include "wavaug/eval.hpp"
#include "wavaug/io.hpp"
#include "wavaug/selftest.hpp"
#include "wavaug/spectrum.hpp"
#include "wavaug/train.hpp"

namespace fs = std::filesystem;

namespace wavaug {
namespace {

// ---- dataset loading --------------------------------------------------------

Batch load_image_dir(const std::string& dir) {
    const std::string csv_path = dir + "/labels.csv";
    if (!fs::exists(csv_path))
        throw std::invalid_argument("image-dir dataset: missing " + csv_path);
    const std::string text = read_text_file(csv_path);

    std::vector<std::pair<std::string, int>> entries;
    std::size_t pos = 0, lineno = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string::npos) end = text.size();
        std::string line = text.substr(pos, end - pos);
        pos = end + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument(csv_path + ": line " + std::to_string(lineno) +
                                        " is not 'file,label'");
        const std::string name = line.substr(0, comma);
        const std::string label_text = line.substr(comma + 1);
        char* parse_end = nullptr;
        const long label = std::strtol(label_text.c_str(), &parse_end, 10);
        if (parse_end == label_text.c_str() || *parse_end != '\0') {
            if (lineno == 1) continue;  // header row
            throw std::invalid_argument(csv_path + ": line " + std::to_string(lineno) +
                                        ": label '" + label_text + "' is not an integer");
        }
        if (label < 0)
            throw std::invalid_argument(csv_path + ": line " + std::to_string(lineno) +
                                        ": negative label");
        entries.emplace_back(name, static_cast<int>(label));
    }
    if (entries.empty()) throw std::invalid_argument(csv_path + ": no samples listed");

    Batch batch;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string path = dir + "/" + entries[i].first;
        if (!fs::exists(path)) throw std::invalid_argument("image-dir dataset: missing " + path);
        Grid img;
        if (path.size() >= 4 && path.substr(path.size() - 4) == ".png")
            img = read_png(path).to_grid();
        else if (path.size() >= 4 && path.substr(path.size() - 4) == ".pgm")
            img = read_pgm(path);
        else
            throw std::invalid_argument("image-dir dataset: " + path +
                                        " is neither .png nor .pgm");
        if (i == 0) {
            batch.images = Tensor({entries.size(), img.rows, img.cols, 1});
        } else if (img.rows != batch.images.shape[1] || img.cols != batch.images.shape[2]) {
            throw std::invalid_argument("image-dir dataset: " + path +
                                        " differs in size from the first image");
        }
        std::copy(img.v.begin(), img.v.end(),
                  batch.images.data.begin() + static_cast<std::ptrdiff_t>(i * img.size()));
        batch.labels.push_back(entries[i].second);
    }
    return batch;
}

void validate_batch(const Batch& batch, const std::string& what) {
    if (batch.images.shape.size() != 4 || batch.images.shape[0] != batch.count())
        throw std::invalid_argument(what + ": malformed batch");
    for (double v : batch.images.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument(what + ": pixel outside [0,1]");
    for (int l : batch.labels)
        if (l < 0) throw std::invalid_argument(what + ": negative label");
}

// ---- option bundles ---------------------------------------------------------

struct DataOpts {
    std::string format = "synthetic";
    std::string images, labels;
    std::size_t pad = 32;
    std::string dir;
    std::string gen = "shapes";
    std::size_t n = 512;
    std::uint64_t seed = 1;
    std::string split = "train";

    DatasetSource to_source() const {
        DatasetSource s;
        if (format == "idx")
            s.format = DatasetSource::Format::idx;
        else if (format == "image-dir")
            s.format = DatasetSource::Format::image_dir;
        else
            s.format = DatasetSource::Format::synthetic;
        s.images_path = images;
        s.labels_path = labels;
        s.pad_to = pad;
        s.dir = dir;
        s.generator = gen;
        s.count = n;
        s.seed = seed;
        s.train_split = split == "train";
        return s;
    }

    std::string describe() const {
        if (format == "idx") return "idx:" + images;
        if (format == "image-dir") return "image-dir:" + dir;
        return "synthetic:" + gen + ":" + split + ":n=" + std::to_string(n) +
               ":seed=" + std::to_string(seed);
    }
};

void add_data_options(CLI::App* cmd, DataOpts& d, const std::string& default_split) {
    d.split = default_split;
    cmd->add_option("--data-format", d.format, "dataset source kind")
        ->check(CLI::IsMember({"idx", "image-dir", "synthetic"}))
        ->capture_default_str();
    cmd->add_option("--data-images", d.images, "IDX image tensor file");
    cmd->add_option("--data-labels", d.labels, "IDX label file");
    cmd->add_option("--data-pad", d.pad, "pad IDX image sides up to this (0 = keep)")
        ->capture_default_str();
    cmd->add_option("--data-dir", d.dir, "directory of PNG/PGM files with labels.csv");
    cmd->add_option("--data-gen", d.gen, "synthetic generator")
        ->check(CLI::IsMember({"shapes", "blobs", "probe"}))
        ->capture_default_str();
    cmd->add_option("--data-n", d.n, "synthetic sample count")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--data-seed", d.seed, "synthetic generator seed")->capture_default_str();
    cmd->add_option("--data-split", d.split, "synthetic split: train|test")
        ->check(CLI::IsMember({"train", "test"}))
        ->capture_default_str();
}

BandStepSchedule resolve_schedule(const std::string& spec, int levels) {
    static const std::set<std::string> published = {"S1", "S2", "S3", "S4", "S5", "S6"};
    if (published.count(spec)) return table1_schedule(spec, levels);
    if (!fs::exists(spec))
        throw std::invalid_argument("schedule '" + spec +
                                    "' is neither S1..S6 nor an existing JSON file");
    BandStepSchedule sched = schedule_from_json(read_text_file(spec));
    if (sched.h_steps.size() != static_cast<std::size_t>(levels))
        throw std::invalid_argument("schedule file " + spec + " has " +
                                    std::to_string(sched.h_steps.size()) +
                                    " detail levels, expected " + std::to_string(levels));
    return sched;
}

void require_file(const std::string& path, const std::string& what) {
    if (!fs::exists(path)) throw std::invalid_argument(what + " not found: " + path);
}

int resolve_threads(int flag_value) {
    int threads = 1;
    if (const char* env = std::getenv("WAVAUG_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1)
            throw std::invalid_argument("WAVAUG_THREADS must be a positive integer, got '" +
                                        std::string(env) + "'");
        threads = static_cast<int>(v);
    }
    if (flag_value > 0) threads = flag_value;  // flag wins over the env var
    return threads;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// ---- config file merging ----------------------------------------------------

// Turns a flat JSON object into CLI tokens injected before the user's own
// flags; later (user) values win. Unknown keys surface as unknown-flag
// parse errors.
std::vector<std::string> config_tokens(const std::string& path) {
    require_file(path, "config file");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config file " + path + ": " + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("config file " + path + ": not an object");
    std::vector<std::string> tokens;
    for (const auto& [key, value] : j.items()) {
        if (key == "config") continue;  // no recursive configs
        if (value.is_boolean()) {
            if (value.get<bool>()) tokens.push_back("--" + key);
        } else if (value.is_string()) {
            tokens.push_back("--" + key + "=" + value.get<std::string>());
        } else if (value.is_number()) {
            tokens.push_back("--" + key + "=" + value.dump());
        } else {
            throw std::invalid_argument("config file " + path + ": key '" + key +
                                        "' must be a scalar");
        }
    }
    return tokens;
}

// ---- train ------------------------------------------------------------------

struct TrainOpts {
    std::string mode = "vanilla";
    std::string augmenter = "none";
    int epochs = 20, warmup = 2;
    std::size_t batch_size = 128;
    double lr0 = 0.05, momentum = 0.9, weight_decay = 5e-5;
    std::uint64_t seed = 1;
    std::string norm = "batch";
    int steps = 1, levels = 3;
    double epsilon = 1.0 / 255.0, alpha = 1.0 / 255.0;
    std::string schedule = "S3";
    double gauss_mean = 0.0, gauss_std = 0.001;
    DataOpts data;
    std::string out = "model.wavg";
    std::string log = "train_log.jsonl";
    std::string dump_config;
};

nlohmann::json effective_train_config(const TrainOpts& o) {
    nlohmann::json j;
    j["mode"] = o.mode;
    j["augmenter"] = o.augmenter;
    j["epochs"] = o.epochs;
    j["warmup"] = o.warmup;
    j["batch-size"] = o.batch_size;
    j["lr0"] = o.lr0;
    j["momentum"] = o.momentum;
    j["weight-decay"] = o.weight_decay;
    j["seed"] = o.seed;
    j["norm"] = o.norm;
    j["steps"] = o.steps;
    j["levels"] = o.levels;
    j["epsilon"] = o.epsilon;
    j["alpha"] = o.alpha;
    j["schedule"] = o.schedule;
    j["gauss-mean"] = o.gauss_mean;
    j["gauss-std"] = o.gauss_std;
    j["data-format"] = o.data.format;
    j["data-gen"] = o.data.gen;
    j["data-n"] = o.data.n;
    j["data-seed"] = o.data.seed;
    j["data-split"] = o.data.split;
    j["data-pad"] = o.data.pad;
    if (!o.data.images.empty()) j["data-images"] = o.data.images;
    if (!o.data.labels.empty()) j["data-labels"] = o.data.labels;
    if (!o.data.dir.empty()) j["data-dir"] = o.data.dir;
    j["out"] = o.out;
    j["log"] = o.log;
    return j;
}

TrainConfig to_train_config(const TrainOpts& o) {
    TrainConfig cfg;
    if (o.mode == "vanilla")
        cfg.mode = TrainMode::vanilla;
    else if (o.mode == "advprop")
        cfg.mode = TrainMode::advprop;
    else
        cfg.mode = TrainMode::normal_at;
    if (o.augmenter == "none")
        cfg.augmenter = Augmenter::none;
    else if (o.augmenter == "gaussian")
        cfg.augmenter = Augmenter::gaussian;
    else if (o.augmenter == "pgd")
        cfg.augmenter = Augmenter::pgd;
    else
        cfg.augmenter = Augmenter::advwavaug;
    cfg.epochs = o.epochs;
    cfg.warmup_epochs = o.warmup;
    cfg.batch_size = o.batch_size;
    cfg.lr0 = o.lr0;
    cfg.momentum = o.momentum;
    cfg.weight_decay = o.weight_decay;
    cfg.seed = o.seed;
    cfg.norm_kind = o.norm == "layer" ? NormKind::layer_norm : NormKind::batch_norm;
    cfg.attack.steps = o.steps;
    cfg.attack.levels = o.levels;
    cfg.attack.epsilon = o.epsilon;
    cfg.attack.alpha = o.alpha;
    if (cfg.augmenter == Augmenter::advwavaug)
        cfg.attack.schedule = resolve_schedule(o.schedule, o.levels);
    cfg.gauss_mean = o.gauss_mean;
    cfg.gauss_std = o.gauss_std;
    return cfg;
}

int cmd_train(const TrainOpts& o) {
    TrainConfig cfg = to_train_config(o);
    if (!o.dump_config.empty()) {
        write_text_file(o.dump_config, effective_train_config(o).dump(2) + "\n");
        std::cout << "wrote " << o.dump_config << " (no training run)\n";
        return 0;
    }
    Batch data = load_dataset(o.data.to_source());
    auto [model, report] = train_model(data, cfg);
    save_checkpoint(o.out, model);
    report.checkpoint_path = o.out;
    if (!o.log.empty()) {
        write_text_file(o.log, "");  // truncate so reruns are bit-identical
        write_train_log(o.log, cfg, report);
    }
    std::cout << "trained " << o.mode << "/" << o.augmenter << " on " << o.data.describe()
              << ": " << o.epochs << " epochs, final train acc "
              << fmt(report.train_accuracy.back()) << ", " << fmt(report.wall_seconds)
              << " s\nsaved " << o.out;
    if (!o.log.empty()) std::cout << ", log " << o.log;
    std::cout << "\n";
    return 0;
}

// ---- attack -----------------------------------------------------------------

struct AttackOpts {
    std::string checkpoint;
    std::string attacker = "advwavaug";
    int steps = 1, levels = 3;
    double epsilon = 1.0 / 255.0, alpha = 1.0 / 255.0;
    std::string schedule = "S3";
    double gauss_mean = 0.0, gauss_std = 0.001;
    bool no_clamp = false;
    std::uint64_t seed = 0;
    DataOpts data;
    std::string out_dir, format = "png", report_path;
};

int cmd_attack(const AttackOpts& o) {
    require_file(o.checkpoint, "checkpoint");
    AttackConfig acfg;
    acfg.steps = o.steps;
    acfg.levels = o.levels;
    acfg.epsilon = o.epsilon;
    acfg.alpha = o.alpha;
    acfg.clamp_output = !o.no_clamp;
    acfg.seed = o.seed;
    if (o.attacker == "advwavaug") acfg.schedule = resolve_schedule(o.schedule, o.levels);

    ModelState model = load_checkpoint(o.checkpoint);
    Batch data = load_dataset(o.data.to_source());

    Batch adv;
    if (o.attacker == "advwavaug")
        adv = advwavaug_attack(model, data, acfg).adversarial;
    else if (o.attacker == "pgd")
        adv = pgd_attack(model, data, acfg);
    else
        adv = gaussian_augment(data, o.gauss_mean, o.gauss_std, o.seed);

    const double clean_acc = accuracy(model, data);
    const double adv_acc = accuracy(model, adv);
    const double asr_v = asr(model, adv);
    const double fid_n =
        fid_norm(features(model, data, Path::clean), features(model, adv, Path::clean),
                 kUbfWhiteBox);
    const double lpips_n = lpips_norm(lpips_distance(model, data, adv));

    nlohmann::json j;
    j["attacker"] = o.attacker;
    j["count"] = data.count();
    j["clean_acc"] = clean_acc;
    j["adv_acc"] = adv_acc;
    j["asr"] = asr_v;
    j["fid_norm"] = fid_n;
    j["lpips_norm"] = lpips_n;
    j["score"] = score(asr_v, fid_n, lpips_n);
    const std::string text = j.dump(2);
    std::cout << text << "\n";
    if (!o.report_path.empty()) write_text_file(o.report_path, text + "\n");
    if (!o.out_dir.empty()) {
        const std::string manifest = export_images(
            adv, o.out_dir, o.format,
            "wavaug attack " + o.attacker + " steps=" + std::to_string(o.steps) + " on " +
                o.data.describe());
        std::cout << "exported adversarial images: " << manifest << "\n";
    }
    return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalOpts {
    std::string checkpoint, baseline;
    std::string suite = "desk-c";
    std::uint64_t corruption_seed = 1000;
    int threads = 0;  // 0 = unset; env/default apply
    DataOpts data;
    std::string out;
};

int cmd_eval(const EvalOpts& o) {
    require_file(o.checkpoint, "checkpoint");
    if (!o.baseline.empty()) require_file(o.baseline, "baseline checkpoint");
    const int threads = resolve_threads(o.threads);

    ModelState model = load_checkpoint(o.checkpoint);
    Batch test = load_dataset(o.data.to_source());

    MetricReport report;
    report.top1_acc = accuracy(model, test);
    std::vector<double> errs = corruption_errors(model, test, o.corruption_seed, threads);
    std::vector<double> base_errs;
    if (o.baseline.empty()) {
        std::cerr << "note: no --baseline; corruption errors are normalized against this "
                     "model itself (CE = 100)\n";
        base_errs = errs;
    } else {
        ModelState baseline = load_checkpoint(o.baseline);
        base_errs = corruption_errors(baseline, test, o.corruption_seed, threads);
    }
    auto [ce, mce_v] = mce_from_errors(errs, base_errs);
    report.corruption_ce = ce;
    report.mce = mce_v;

    const std::string text = metric_report_json(report);
    std::cout << text << "\n";
    if (!o.out.empty()) write_text_file(o.out, text + "\n");
    return 0;
}

// ---- corrupt-gen ------------------------------------------------------------

struct CorruptOpts {
    std::string kind = "gaussian_noise";
    int severity = 3;
    std::uint64_t seed = 1000;
    DataOpts data;
    std::string out_dir, format = "png";
};

int cmd_corrupt_gen(const CorruptOpts& o) {
    const Corruption kind = corruption_from_name(o.kind);
    Batch batch = load_dataset(o.data.to_source());
    Batch corrupted = corrupt_batch(batch, kind, o.severity, o.seed);
    const std::string manifest = export_images(
        corrupted, o.out_dir, o.format,
        "wavaug corrupt-gen " + o.kind + " severity=" + std::to_string(o.severity) +
            " seed=" + std::to_string(o.seed) + " on " + o.data.describe());
    std::cout << "wrote " << corrupted.count() << " images, manifest " << manifest << "\n";
    return 0;
}

// ---- transfer ---------------------------------------------------------------

struct TransferOpts {
    std::string source, target;
    int iterations = 10, levels = 3;
    std::string schedule = "S3";
    double ubf = kUbfBlackBox;
    DataOpts data;
    std::string out = "transfer.json";
};

int cmd_transfer(const TransferOpts& o) {
    require_file(o.source, "source checkpoint");
    require_file(o.target, "target checkpoint");
    AttackConfig acfg;
    acfg.levels = o.levels;
    acfg.schedule = resolve_schedule(o.schedule, o.levels);

    ModelState source = load_checkpoint(o.source);
    ModelState target = load_checkpoint(o.target);
    Batch data = load_dataset(o.data.to_source());

    TransferCurve curve = transfer_eval(source, target, acfg, data, o.iterations, o.ubf);
    write_text_file(o.out, transfer_to_json(curve) + "\n");
    const TransferPoint& last = curve.points.back();
    std::cout << (curve.white_box ? "white-box" : "black-box") << " transfer over "
              << o.iterations << " iterations: final asr " << fmt(last.asr_on_target)
              << ", fid_norm " << fmt(last.fid_norm) << ", lpips_norm "
              << fmt(last.lpips_norm) << "\nwrote " << o.out << "\n";
    return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportOpts {
    std::vector<std::string> inputs;
    std::vector<std::string> names;
    std::string out = "report.csv";
};

int cmd_report(const ReportOpts& o) {
    if (!o.names.empty() && o.names.size() != o.inputs.size())
        throw std::invalid_argument("--names must match --inputs in count");
    std::vector<std::string> header = {"model", "clean_acc"};
    for (Corruption kind : all_corruptions()) header.push_back(corruption_name(kind));
    header.push_back("mce");

    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < o.inputs.size(); ++i) {
        require_file(o.inputs[i], "report input");
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_text_file(o.inputs[i]));
            std::vector<std::string> row;
            row.push_back(o.names.empty() ? fs::path(o.inputs[i]).stem().string()
                                          : o.names[i]);
            row.push_back(fmt(j.at("top1_acc").get<double>() * 100.0));
            const nlohmann::json& ce = j.at("corruption_ce");
            for (Corruption kind : all_corruptions())
                row.push_back(fmt(ce.at(corruption_name(kind)).get<double>()));
            row.push_back(fmt(j.at("mce").get<double>()));
            rows.push_back(std::move(row));
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument("report input " + o.inputs[i] +
                                        " is not a metric report: " + e.what());
        }
    }
    write_csv(o.out, header, rows);
    std::cout << "wrote " << o.out << " (" << rows.size() << " models)\n";
    return 0;
}

}  // namespace

// ---- public surface ---------------------------------------------------------

Batch load_dataset(const DatasetSource& source) {
    Batch batch;
    switch (source.format) {
        case DatasetSource::Format::idx:
            if (source.images_path.empty() || source.labels_path.empty())
                throw std::invalid_argument(
                    "idx dataset needs --data-images and --data-labels");
            require_file(source.images_path, "IDX image file");
            require_file(source.labels_path, "IDX label file");
            batch = load_idx_batch(source.images_path, source.labels_path, source.pad_to);
            break;
        case DatasetSource::Format::image_dir:
            if (source.dir.empty())
                throw std::invalid_argument("image-dir dataset needs --data-dir");
            batch = load_image_dir(source.dir);
            break;
        case DatasetSource::Format::synthetic:
            if (source.generator == "shapes")
                batch = make_shapes(source.count, source.seed, source.train_split);
            else if (source.generator == "blobs")
                batch = make_blobs(source.count, source.seed);
            else if (source.generator == "probe")
                batch = make_boundary_probe(source.count, source.seed);
            else
                throw std::invalid_argument("unknown synthetic generator '" +
                                            source.generator + "'");
            break;
    }
    validate_batch(batch, "dataset");
    return batch;
}

std::string export_images(const Batch& batch, const std::string& dir,
                          const std::string& format, const std::string& provenance) {
    if (format != "png" && format != "pgm")
        throw std::invalid_argument("export format must be png or pgm, got '" + format + "'");
    if (batch.images.shape.size() != 4 || batch.images.shape[3] != 1)
        throw std::invalid_argument("export supports single-channel batches only");
    fs::create_directories(dir);

    nlohmann::json files = nlohmann::json::array();
    std::string labels_csv = "file,label\n";
    for (std::size_t i = 0; i < batch.count(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img_%05zu.%s", i, format.c_str());
        const Grid img = batch_image(batch, i);
        const std::string path = dir + "/" + name;
        if (format == "png")
            write_png(path, Image::from_grid(img));
        else
            write_pgm(path, img);
        files.push_back({{"file", name}, {"label", batch.labels[i]}});
        labels_csv += std::string(name) + "," + std::to_string(batch.labels[i]) + "\n";
    }
    // exported directories double as image-dir dataset sources
    write_text_file(dir + "/labels.csv", labels_csv);
    nlohmann::json manifest;
    manifest["count"] = batch.count();
    manifest["format"] = format;
    manifest["provenance"] = provenance;
    manifest["files"] = files;
    const std::string manifest_path = dir + "/manifest.json";
    write_text_file(manifest_path, manifest.dump(2) + "\n");
    return manifest_path;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"wavelet-domain adversarial augmentation toolkit"};
    app.name("wavaug");
    app.require_subcommand(1);
    // config-file values are injected before user flags; last value wins
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::string config_path;  // consumed during pre-pass, registered so parsing accepts it

    TrainOpts train_o;
    CLI::App* train_cmd = app.add_subcommand("train", "train a classifier");
    train_cmd->add_option("--config", config_path, "JSON config file (flags win)");
    train_cmd->add_option("--mode", train_o.mode, "training mode")
        ->check(CLI::IsMember({"vanilla", "advprop", "normal_at"}))
        ->capture_default_str();
    train_cmd->add_option("--augmenter", train_o.augmenter, "auxiliary-batch augmenter")
        ->check(CLI::IsMember({"none", "gaussian", "pgd", "advwavaug"}))
        ->capture_default_str();
    train_cmd->add_option("--epochs", train_o.epochs)->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--warmup", train_o.warmup, "linear warmup epochs")
        ->check(CLI::NonNegativeNumber)->capture_default_str();
    train_cmd->add_option("--batch-size", train_o.batch_size)->check(CLI::PositiveNumber)
        ->capture_default_str();
    train_cmd->add_option("--lr0", train_o.lr0, "peak learning rate")->capture_default_str();
    train_cmd->add_option("--momentum", train_o.momentum)->capture_default_str();
    train_cmd->add_option("--weight-decay", train_o.weight_decay)->capture_default_str();
    train_cmd->add_option("--seed", train_o.seed)->capture_default_str();
    train_cmd->add_option("--norm", train_o.norm, "normalization layer kind")
        ->check(CLI::IsMember({"batch", "layer"}))->capture_default_str();
    train_cmd->add_option("--steps", train_o.steps, "attack steps for pgd/advwavaug")
        ->check(CLI::PositiveNumber)->capture_default_str();
    train_cmd->add_option("--levels", train_o.levels, "wavelet decomposition depth")
        ->check(CLI::Range(1, 6))->capture_default_str();
    train_cmd->add_option("--epsilon", train_o.epsilon, "pgd ball radius")
        ->capture_default_str();
    train_cmd->add_option("--alpha", train_o.alpha, "pgd step size")->capture_default_str();
    train_cmd->add_option("--schedule", train_o.schedule,
                          "band step setting S1..S6 or a schedule JSON file")
        ->capture_default_str();
    train_cmd->add_option("--gauss-mean", train_o.gauss_mean)->capture_default_str();
    train_cmd->add_option("--gauss-std", train_o.gauss_std)->capture_default_str();
    add_data_options(train_cmd, train_o.data, "train");
    train_cmd->add_option("--out", train_o.out, "checkpoint output path")
        ->capture_default_str();
    train_cmd->add_option("--log", train_o.log, "JSONL epoch log path (empty disables)")
        ->capture_default_str();
    train_cmd->add_option("--dump-config", train_o.dump_config,
                          "write the effective config JSON and exit without training");

    AttackOpts attack_o;
    CLI::App* attack_cmd = app.add_subcommand("attack", "attack a checkpoint and score it");
    attack_cmd->add_option("--config", config_path, "JSON config file (flags win)");
    attack_cmd->add_option("--checkpoint", attack_o.checkpoint, "model checkpoint")
        ->required();
    attack_cmd->add_option("--attacker", attack_o.attacker)
        ->check(CLI::IsMember({"advwavaug", "pgd", "gaussian"}))->capture_default_str();
    attack_cmd->add_option("--steps", attack_o.steps)->check(CLI::PositiveNumber)
        ->capture_default_str();
    attack_cmd->add_option("--levels", attack_o.levels)->check(CLI::Range(1, 6))
        ->capture_default_str();
    attack_cmd->add_option("--epsilon", attack_o.epsilon)->capture_default_str();
    attack_cmd->add_option("--alpha", attack_o.alpha)->capture_default_str();
    attack_cmd->add_option("--schedule", attack_o.schedule)->capture_default_str();
    attack_cmd->add_option("--gauss-mean", attack_o.gauss_mean)->capture_default_str();
    attack_cmd->add_option("--gauss-std", attack_o.gauss_std)->capture_default_str();
    attack_cmd->add_flag("--no-clamp", attack_o.no_clamp, "skip the final [0,1] clamp");
    attack_cmd->add_option("--seed", attack_o.seed, "gaussian augmenter seed")
        ->capture_default_str();
    add_data_options(attack_cmd, attack_o.data, "test");
    attack_cmd->add_option("--out-dir", attack_o.out_dir, "export adversarial images here");
    attack_cmd->add_option("--format", attack_o.format, "export image format")
        ->check(CLI::IsMember({"png", "pgm"}))->capture_default_str();
    attack_cmd->add_option("--report", attack_o.report_path, "write the JSON report here");

    EvalOpts eval_o;
    CLI::App* eval_cmd = app.add_subcommand("eval", "clean + corruption metrics");
    eval_cmd->add_option("--config", config_path, "JSON config file (flags win)");
    eval_cmd->add_option("--checkpoint", eval_o.checkpoint, "model checkpoint")->required();
    eval_cmd->add_option("--baseline", eval_o.baseline,
                         "baseline checkpoint for mCE normalization");
    eval_cmd->add_option("--suite", eval_o.suite, "evaluation suite")
        ->check(CLI::IsMember({"desk-c"}))->capture_default_str();
    eval_cmd->add_option("--corruption-seed", eval_o.corruption_seed)->capture_default_str();
    eval_cmd->add_option("--threads", eval_o.threads,
                         "worker threads for the corruption fan-out (default 1; "
                         "WAVAUG_THREADS sets it too, the flag wins); results are "
                         "identical for every thread count")
        ->check(CLI::PositiveNumber);
    add_data_options(eval_cmd, eval_o.data, "test");
    eval_cmd->add_option("--out", eval_o.out, "write the metric report JSON here");

    CorruptOpts corrupt_o;
    CLI::App* corrupt_cmd =
        app.add_subcommand("corrupt-gen", "export a corrupted copy of a dataset");
    corrupt_cmd->add_option("--config", config_path, "JSON config file (flags win)");
    corrupt_cmd->add_option("--kind", corrupt_o.kind, "corruption kind")
        ->capture_default_str();
    corrupt_cmd->add_option("--severity", corrupt_o.severity)->check(CLI::Range(0, 5))
        ->capture_default_str();
    corrupt_cmd->add_option("--seed", corrupt_o.seed)->capture_default_str();
    add_data_options(corrupt_cmd, corrupt_o.data, "test");
    corrupt_cmd->add_option("--out-dir", corrupt_o.out_dir, "output directory")->required();
    corrupt_cmd->add_option("--format", corrupt_o.format)
        ->check(CLI::IsMember({"png", "pgm"}))->capture_default_str();

    TransferOpts transfer_o;
    CLI::App* transfer_cmd =
        app.add_subcommand("transfer", "iterated attack on one model scored on another");
    transfer_cmd->add_option("--config", config_path, "JSON config file (flags win)");
    transfer_cmd->add_option("--source", transfer_o.source, "attacked checkpoint")
        ->required();
    transfer_cmd->add_option("--target", transfer_o.target, "scoring checkpoint")
        ->required();
    transfer_cmd->add_option("--iterations", transfer_o.iterations)
        ->check(CLI::PositiveNumber)->capture_default_str();
    transfer_cmd->add_option("--levels", transfer_o.levels)->check(CLI::Range(1, 6))
        ->capture_default_str();
    transfer_cmd->add_option("--schedule", transfer_o.schedule)->capture_default_str();
    transfer_cmd->add_option("--ubf", transfer_o.ubf, "feature-distance saturation bound")
        ->capture_default_str();
    add_data_options(transfer_cmd, transfer_o.data, "test");
    transfer_cmd->add_option("--out", transfer_o.out, "transfer curve JSON path")
        ->capture_default_str();

    ReportOpts report_o;
    CLI::App* report_cmd =
        app.add_subcommand("report", "merge metric reports into a CSV table");
    report_cmd->add_option("--inputs", report_o.inputs, "metric report JSON files")
        ->required()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    report_cmd->add_option("--names", report_o.names, "row labels (default: file stems)")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    report_cmd->add_option("--out", report_o.out, "CSV output path")->capture_default_str();

    CLI::App* selftest_cmd =
        app.add_subcommand("selftest", "run the library invariant suite");
    (void)selftest_cmd;

    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    // merge a config file, if any, by injecting its tokens right after the
    // subcommand so explicit flags override them
    std::string pre_config;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size())
            pre_config = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0)
            pre_config = args[i].substr(9);
    }
    if (!pre_config.empty() && !args.empty()) {
        std::vector<std::string> tokens;
        try {
            tokens = config_tokens(pre_config);
        } catch (const std::invalid_argument& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
        args.insert(args.begin() + 1, tokens.begin(), tokens.end());
    }

    std::vector<const char*> cargv;
    cargv.push_back("wavaug");
    for (const std::string& a : args) cargv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(cargv.size()), cargv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        std::cerr << (subs.empty() ? app.help() : subs[0]->help());
        return 1;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(train_o);
        if (attack_cmd->parsed()) return cmd_attack(attack_o);
        if (eval_cmd->parsed()) return cmd_eval(eval_o);
        if (corrupt_cmd->parsed()) return cmd_corrupt_gen(corrupt_o);
        if (transfer_cmd->parsed()) return cmd_transfer(transfer_o);
        if (report_cmd->parsed()) return cmd_report(report_o);
        if (selftest_cmd->parsed()) return run_selftest(std::cout).ok() ? 0 : 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace wavaug
