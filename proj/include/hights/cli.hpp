#pragma once

#include "hights/checkpoint.hpp"
#include "hights/config.hpp"
#include "hights/data.hpp"
#include "hights/metrics.hpp"
#include "hights/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hights::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericError = 3 };

/// Published High-TS test accuracy (mean, std over five seeds) per dataset.
inline std::optional<std::pair<double, double>> reference_accuracy(const std::string& dataset) {
    static const std::map<std::string, std::pair<double, double>> table{
        {"DPOAG", {0.804, 0.032}},
        {"DistalPhalanxOutlineAgeGroup", {0.804, 0.032}},
        {"DPOC", {0.807, 0.025}},
        {"DistalPhalanxOutlineCorrect", {0.807, 0.025}},
        {"ECG5000", {0.942, 0.002}},
        {"FRT", {0.998, 0.000}},
        {"FreezerRegularTrain", {0.998, 0.000}},
        {"Ham", {0.798, 0.049}},
        {"MPOC", {0.847, 0.014}},
        {"MiddlePhalanxOutlineCorrect", {0.847, 0.014}},
        {"PPOAG", {0.878, 0.006}},
        {"ProximalPhalanxOutlineAgeGroup", {0.878, 0.006}},
        {"RD", {0.624, 0.031}},
        {"RefrigerationDevices", {0.624, 0.031}},
        {"Strawberry", {0.984, 0.004}},
        {"Wine", {0.974, 0.017}},
        {"C&E", {0.994, 0.001}},
        {"B&C&E", {0.973, 0.004}},
    };
    if (auto it = table.find(dataset); it != table.end()) return it->second;
    return std::nullopt;
}

inline constexpr const char* kSyntheticName = "synthetic";

/// Locates <dir>/<name>/<name>_TRAIN.{tsv,txt} (or directly under <dir>).
inline std::filesystem::path find_split_file(const std::filesystem::path& dir, const std::string& name,
                                             const std::string& split) {
    for (const auto& base : {dir / name, dir})
        for (const char* ext : {".tsv", ".txt", ".csv"}) {
            auto p = base / (name + "_" + split + ext);
            if (std::filesystem::exists(p)) return p;
        }
    throw DataError("cannot find " + split + " split of dataset '" + name + "' under " + dir.string());
}

/// Train/test pair for a named dataset; "synthetic" is the sine-vs-noise set
/// (200 train / 100 test, length 128).
inline std::pair<Dataset, Dataset> load_named_dataset(const std::filesystem::path& dir, const std::string& name,
                                                      bool normalize) {
    std::pair<Dataset, Dataset> d;
    if (name == kSyntheticName) {
        d = {make_sine_vs_noise(200, 128, 1), make_sine_vs_noise(100, 128, 2)};
    } else {
        d = load_train_test(find_split_file(dir, name, "TRAIN"), find_split_file(dir, name, "TEST"));
    }
    if (normalize) {
        d.first = znormalize(std::move(d.first));
        d.second = znormalize(std::move(d.second));
    }
    return d;
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    try {
        write_file_atomic(path, text);
    } catch (const std::exception& e) {
        throw DataError(std::string("cannot write output: ") + e.what());
    }
}

struct Options {
    std::string data_dir = "data";
    std::string dataset;
    std::string out;
    std::string config_file;
    std::string checkpoint;
    std::string checkpoint_dir;
    std::size_t seeds = 1;
    bool record_time = false;
    bool verbose = false;
    std::map<std::string, std::string> overrides;
};

struct Run {
    std::uint64_t seed = 0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double dbi = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
};

inline TrainConfig resolve_config(const Options& opt) {
    TrainConfig cfg;
    if (!opt.config_file.empty())
        for (const auto& [k, v] : read_config_file(opt.config_file))
            if (!apply_setting(cfg, k, v)) throw ConfigError("unknown config key '" + k + "'");
    for (const auto& [k, v] : opt.overrides)
        if (!apply_setting(cfg, k, v)) throw ConfigError("unknown setting '" + k + "'");
    return cfg;
}

inline Run run_seed(const Dataset& train_full, const Dataset& test, TrainConfig cfg, std::uint64_t seed,
                    const Options& opt, std::ostream& log) {
    cfg.seed = seed;
    const auto split = split_train_val(train_full, cfg.val_frac, seed);
    EpochCallback cb;
    if (opt.verbose)
        cb = [&log, seed](const EpochRecord& r) {
            log << "seed " << seed << " epoch " << r.epoch << " loss " << r.train.loss << " train_acc "
                << r.train.accuracy << " val_acc " << r.val_accuracy << (r.improved ? " *" : "") << '\n';
        };
    auto fitted = fit(split.first, split.second, cfg, cb);
    const auto prepared_test = prepare(test, cfg);
    const auto pred = fitted.model->predict(prepared_test);
    const auto labels = labels_of(prepared_test);
    Run run;
    run.seed = seed;
    run.val_accuracy = fitted.best.best_val_accuracy;
    run.best_epoch = fitted.best.best_epoch;
    run.epochs_run = fitted.history.size();
    run.test_accuracy = accuracy(pred.predicted, labels);
    run.dbi = davies_bouldin(pred.representation, labels);
    if (!opt.checkpoint_dir.empty()) {
        std::filesystem::create_directories(opt.checkpoint_dir);
        save_checkpoint(std::filesystem::path(opt.checkpoint_dir) /
                            (opt.dataset + "_seed" + std::to_string(seed) + ".hits"),
                        fitted.best);
    }
    return run;
}

inline void emit_report(const Options& opt, const nlohmann::json& report) {
    if (!opt.out.empty()) write_text_atomic(opt.out, report.dump(2) + "\n");
}

inline int cmd_train(const Options& opt, std::ostream& out, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    const TrainConfig cfg = resolve_config(opt);
    auto [train, test] = load_named_dataset(opt.data_dir, opt.dataset, cfg.znormalize);
    cfg.validate(train.length);
    MetricsReport report;
    report.dataset = opt.dataset;
    report.config = cfg;
    nlohmann::json runs = nlohmann::json::array();
    double dbi_sum = 0.0;
    for (std::size_t k = 0; k < opt.seeds; ++k) {
        const std::uint64_t seed = cfg.seed + k;
        const Run r = run_seed(train, test, cfg, seed, opt, log);
        report.seeds.push_back(seed);
        report.accuracies.push_back(r.test_accuracy);
        dbi_sum += r.dbi;
        runs.push_back({{"seed", r.seed},
                        {"test_accuracy", r.test_accuracy},
                        {"val_accuracy", r.val_accuracy},
                        {"dbi", std::isfinite(r.dbi) ? nlohmann::json(r.dbi) : nlohmann::json("inf")},
                        {"best_epoch", r.best_epoch},
                        {"epochs_run", r.epochs_run}});
        out << opt.dataset << " seed " << seed << ": test accuracy " << r.test_accuracy << " (val " << r.val_accuracy
            << ", best epoch " << r.best_epoch << "/" << r.epochs_run << ")\n";
    }
    report.finalize();
    report.dbi = dbi_sum / static_cast<double>(opt.seeds);
    if (auto ref = reference_accuracy(opt.dataset)) {
        report.reference_accuracy = ref->first;
        report.reference_std = ref->second;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (opt.record_time) report.wall_clock_seconds = seconds;
    auto j = report.to_json();
    j["runs"] = runs;
    emit_report(opt, j);

    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: mean test accuracy %.4f +- %.4f over %zu seed(s), DBI %.4f, %.1f s",
                  opt.dataset.c_str(), report.mean, report.std_dev, opt.seeds, report.dbi, seconds);
    out << buf;
    if (report.reference_accuracy) {
        std::snprintf(buf, sizeof buf, " [published: %.3f +- %.3f]", *report.reference_accuracy, *report.reference_std);
        out << buf;
    }
    out << '\n';
    return kOk;
}

inline std::unique_ptr<HighTsModel> load_model(const Options& opt, Checkpoint& ckpt) {
    if (opt.checkpoint.empty()) throw ConfigError("--checkpoint is required");
    ckpt = load_checkpoint(opt.checkpoint);
    return restore_model(ckpt);
}

inline int cmd_eval(const Options& opt, std::ostream& out) {
    Checkpoint ckpt;
    auto model = load_model(opt, ckpt);
    auto [train, test] = load_named_dataset(opt.data_dir, opt.dataset, ckpt.config.znormalize);
    if (test.length != ckpt.series_length) throw DataError("dataset length does not match the checkpoint");
    const auto prepared = prepare(test, ckpt.config);
    const auto pred = model->predict(prepared);
    const auto labels = labels_of(prepared);
    MetricsReport report;
    report.dataset = opt.dataset;
    report.config = ckpt.config;
    report.seeds = {ckpt.seed};
    report.accuracies = {accuracy(pred.predicted, labels)};
    report.finalize();
    report.dbi = davies_bouldin(pred.representation, labels);
    if (auto ref = reference_accuracy(opt.dataset)) {
        report.reference_accuracy = ref->first;
        report.reference_std = ref->second;
    }
    auto j = report.to_json();
    j["confusion_matrix"] = confusion_matrix(pred.predicted, labels, model->num_classes());
    emit_report(opt, j);
    out << opt.dataset << ": test accuracy " << report.mean << ", DBI " << report.dbi << '\n';
    return kOk;
}

inline int cmd_embed(const Options& opt, std::ostream& out) {
    if (opt.out.empty()) throw ConfigError("--out is required for embed");
    Checkpoint ckpt;
    auto model = load_model(opt, ckpt);
    auto [train, test] = load_named_dataset(opt.data_dir, opt.dataset, ckpt.config.znormalize);
    if (test.length != ckpt.series_length) throw DataError("dataset length does not match the checkpoint");
    const auto prepared = prepare(test, ckpt.config);
    export_embeddings(*model, prepared, opt.out);
    out << "wrote " << prepared.size() << " embeddings of width " << model->config().representation_dim() << " to "
        << opt.out << '\n';
    return kOk;
}

inline int cmd_inspect(const Options& opt, std::ostream& out) {
    TrainConfig cfg = resolve_config(opt);
    auto [train, test] = load_named_dataset(opt.data_dir, opt.dataset, cfg.znormalize);
    std::ostringstream records;
    auto emit = [&](const Dataset& d, const char* split) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto in = spatial::prepare_spatial_input(d.samples[i].values, cfg.vertices, cfg.cutoff_frac, 2,
                                                           cfg.fixed_cutoff);
            const auto& K = in.complex;
            nlohmann::json r{{"split", split},
                             {"index", i},
                             {"label", d.samples[i].label},
                             {"m0", K.count(0)},
                             {"m1", K.count(1)},
                             {"m2", K.count(2)},
                             {"cutoff", K.cutoff},
                             {"edge_density", K.edge_density()}};
            records << r.dump() << '\n';
        }
    };
    emit(train, "train");
    emit(test, "test");
    if (opt.out.empty()) out << records.str();
    else {
        write_text_atomic(opt.out, records.str());
        out << "wrote " << train.size() + test.size() << " complex records to " << opt.out << '\n';
    }
    return kOk;
}

inline int cmd_gridsearch(const Options& opt, std::ostream& out) {
    const TrainConfig cfg = resolve_config(opt);
    auto [train, test] = load_named_dataset(opt.data_dir, opt.dataset, cfg.znormalize);
    const auto split = split_train_val(train, cfg.val_frac, cfg.seed);
    const auto res = grid_search(split.first, split.second, cfg);
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : res.cells) {
        nlohmann::json j{{"vertices", c.vertices}, {"latent_dim", c.latent_dim}, {"seed", c.seed},
                         {"val_accuracy", c.val_accuracy}, {"ok", c.ok}};
        if (!c.ok) j["error"] = c.error;
        cells.push_back(j);
        out << "n=" << c.vertices << " d=" << c.latent_dim << ": "
            << (c.ok ? std::to_string(c.val_accuracy) : "failed: " + c.error) << '\n';
    }
    const auto& best = res.cells[res.best];
    emit_report(opt, {{"dataset", opt.dataset},
                      {"cells", cells},
                      {"best", {{"vertices", best.vertices}, {"latent_dim", best.latent_dim}, {"val_accuracy", best.val_accuracy}}},
                      {"config", cfg}});
    out << "best: n=" << best.vertices << " d=" << best.latent_dim << " val accuracy " << best.val_accuracy << '\n';
    return kOk;
}

inline int cmd_ablate(const Options& opt, std::ostream& out) {
    const TrainConfig cfg = resolve_config(opt);
    auto [train, test] = load_named_dataset(opt.data_dir, opt.dataset, cfg.znormalize);
    const auto split = split_train_val(train, cfg.val_frac, cfg.seed);
    const auto rows = ablate(split.first, split.second, test, cfg);
    nlohmann::json table = nlohmann::json::array();
    for (const auto& r : rows) {
        table.push_back({{"variant", r.variant},
                         {"representation_dim", r.representation_dim},
                         {"val_accuracy", r.val_accuracy},
                         {"test_accuracy", r.test_accuracy}});
        out << r.variant << ": test accuracy " << r.test_accuracy << " (dim " << r.representation_dim << ")\n";
    }
    emit_report(opt, {{"dataset", opt.dataset}, {"variants", table}, {"config", cfg}});
    return kOk;
}

/// Entry point shared by the `hights` executable and the tests.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Multiscale Transformer + simplicial-complex time-series classifier"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;

    app.add_option("--data-dir", opt.data_dir, "Directory holding <name>/<name>_TRAIN.tsv and _TEST.tsv");
    app.add_option("--dataset", opt.dataset, "Dataset name ('synthetic' for the built-in sine-vs-noise set)");
    app.add_option("--out", opt.out, "Report / output file");
    app.add_option("--config", opt.config_file, "Flat key=value config file");
    app.add_option("--checkpoint", opt.checkpoint, "Checkpoint to evaluate or embed with");
    app.add_option("--checkpoint-dir", opt.checkpoint_dir, "Where train writes one checkpoint per seed");
    app.add_option("--seeds", opt.seeds, "Number of seeds (consecutive from --seed)")->check(CLI::PositiveNumber);
    app.add_flag("--record-time", opt.record_time, "Include wall-clock seconds in the report");
    app.add_flag("-v,--verbose", opt.verbose, "Per-epoch progress on stderr");

    struct Forwarded {
        const char* flag;
        const char* key;
        const char* help;
    };
    const Forwarded forwarded[] = {
        {"--scales", "scales", "Comma-separated scale list"},
        {"--vertices", "vertices", "Point-cloud vertex count n"},
        {"--latent-dim", "latent_dim", "Latent dimension d"},
        {"--contrast-dim", "contrast_dim", "Contrast space width (0 = d)"},
        {"--heads", "heads", "Attention heads"},
        {"--mp-layers", "mp_layers", "Message-passing layers (1-3)"},
        {"--tau", "tau", "Contrastive temperature"},
        {"--lr", "lr", "Adam learning rate"},
        {"--batch", "batch", "Batch size"},
        {"--epochs", "epochs", "Maximum epochs"},
        {"--patience", "patience", "Early-stopping patience"},
        {"--seed", "seed", "Base seed"},
        {"--cutoff-frac", "cutoff_frac", "Fraction of top similarities kept as edges"},
    };
    for (const auto& f : forwarded)
        app.add_option_function<std::string>(
            f.flag, [&opt, key = std::string(f.key)](const std::string& v) { opt.overrides[key] = v; }, f.help);

    auto* train = app.add_subcommand("train", "Fit over --seeds seeds and report test accuracy");
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    auto* embed = app.add_subcommand("embed", "Export test-set embeddings as CSV");
    auto* inspect = app.add_subcommand("inspect-complex", "Per-sample Rips complex statistics");
    auto* grid = app.add_subcommand("gridsearch", "Vertices x latent-dim grid search");
    auto* abl = app.add_subcommand("ablate", "Full model and seven ablation variants");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help();
        return kUsage;
    }

    try {
        if (opt.dataset.empty()) throw ConfigError("--dataset is required");
        if (*train) return cmd_train(opt, out, err);
        if (*eval) return cmd_eval(opt, out);
        if (*embed) return cmd_embed(opt, out);
        if (*inspect) return cmd_inspect(opt, out);
        if (*grid) return cmd_gridsearch(opt, out);
        if (*abl) return cmd_ablate(opt, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumericError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kUsage;
}

}  // namespace hights::cli
