#pragma once

#include "hights/checkpoint.hpp"
#include "hights/metrics.hpp"
#include "hights/model.hpp"
#include "hights/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hights {

struct EpochMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
    std::size_t batches = 0;
    /// Batches of size 1 whose contrastive term was skipped.
    std::size_t contrast_skipped = 0;
};

/// One pass over `train` in seeded shuffled batches: forward, L_CE (+ L_CL),
/// backward, Adam step. Loss is averaged over batches, accuracy over samples.
inline EpochMetrics train_epoch(HighTsModel& model, std::span<const PreparedSample> train, AdamState& adam,
                                std::uint64_t shuffle_seed) {
    const TrainConfig& cfg = model.config();
    EpochMetrics m;
    std::size_t correct = 0;
    for (const auto& idx : batches(train.size(), cfg.batch, shuffle_seed, true)) {
        std::vector<const PreparedSample*> batch;
        for (std::size_t i : idx) batch.push_back(&train[i]);
        Tape tape;
        const auto out = model.forward(tape, batch);
        const double loss = tape.value(out.loss).item();
        if (!std::isfinite(loss)) throw NumericError("non-finite training loss");
        if (cfg.contrast_active() && !out.contrast) ++m.contrast_skipped;
        const Tensor& probs = tape.value(out.probabilities);
        for (std::size_t r = 0; r < batch.size(); ++r) {
            auto row = probs.row(r);
            correct += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == batch[r]->label;
        }
        model.parameters().zero_grad();
        tape.backward(out.loss);
        adam_step(model.parameters(), adam, cfg.lr);
        m.loss += loss;
        ++m.batches;
    }
    if (m.batches) m.loss /= static_cast<double>(m.batches);
    if (!train.empty()) m.accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
    return m;
}

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    EpochMetrics train;
    double val_accuracy = 0.0;
    double val_loss = 0.0;
    bool improved = false;
};

struct FitResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
    std::unique_ptr<HighTsModel> model;  // restored from `best`
};

/// Mean clamped negative log-likelihood of the true class.
inline double mean_nll(const Tensor& probs, std::span<const std::size_t> labels) {
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        s -= std::log(std::clamp(probs(i, labels[i]), objectives::kProbabilityFloor, 1.0));
    return labels.empty() ? 0.0 : s / static_cast<double>(labels.size());
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/**
 * Trains for up to cfg.epochs and keeps the checkpoint with the best
 * validation accuracy (ties broken by lower validation loss). Stops once
 * more than cfg.patience consecutive epochs bring no accuracy gain.
 */
inline FitResult fit(std::span<const PreparedSample> train, std::span<const PreparedSample> val,
                     const TrainConfig& cfg, std::size_t length, std::size_t num_classes,
                     const EpochCallback& on_epoch = {}) {
    if (train.empty()) throw DataError("empty training set");
    if (val.empty()) throw DataError("empty validation set");
    auto model = std::make_unique<HighTsModel>(cfg, length, num_classes);
    AdamState adam(model->parameters());
    const auto val_labels = labels_of(val);

    FitResult result;
    double best_acc = -1.0;
    double best_loss = 0.0;
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train = train_epoch(*model, train, adam, detail::splitmix64(cfg.seed * 0x100000001b3ULL + epoch));
        const auto pred = model->predict(val);
        rec.val_accuracy = accuracy(pred.predicted, val_labels);
        rec.val_loss = mean_nll(pred.probabilities, val_labels);
        // Only a strict accuracy gain resets patience; an equal accuracy with
        // lower loss still replaces the kept checkpoint.
        rec.improved = rec.val_accuracy > best_acc;
        if (rec.improved || (rec.val_accuracy == best_acc && rec.val_loss < best_loss)) {
            best_acc = rec.val_accuracy;
            best_loss = rec.val_loss;
            result.best = make_checkpoint(*model, best_acc, epoch);
        }
        stale = rec.improved ? 0 : stale + 1;
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (stale > cfg.patience) break;
    }
    if (result.history.empty()) result.best = make_checkpoint(*model, 0.0, 0);
    result.model = restore_model(result.best);
    return result;
}

inline FitResult fit(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                     const EpochCallback& on_epoch = {}) {
    const auto tr = prepare(train, cfg);
    const auto va = prepare(val, cfg);
    return fit(tr, va, cfg, train.length, train.num_classes, on_epoch);
}

struct Grid {
    std::vector<std::size_t> vertices{15, 20, 25, 30};
    std::vector<std::size_t> latent_dims{8, 16, 32, 64};
};

struct GridCell {
    std::size_t vertices = 0;
    std::size_t latent_dim = 0;
    std::uint64_t seed = 0;
    double val_accuracy = 0.0;
    bool ok = false;
    std::string error;
};

struct GridResult {
    std::vector<GridCell> cells;
    std::size_t best = 0;
    TrainConfig best_config;
};

/// Index of the successful cell with the highest validation accuracy; ties go
/// to smaller latent dim, then fewer vertices.
inline std::size_t select_best_cell(const std::vector<GridCell>& cells) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto& c = cells[i];
        if (!c.ok) continue;
        if (!best) {
            best = i;
            continue;
        }
        const auto& b = cells[*best];
        const bool better = c.val_accuracy > b.val_accuracy ||
                            (c.val_accuracy == b.val_accuracy &&
                             (c.latent_dim < b.latent_dim || (c.latent_dim == b.latent_dim && c.vertices < b.vertices)));
        if (better) best = i;
    }
    if (!best) throw ConfigError("every grid cell failed");
    return *best;
}

/// Fits every (vertices, latent dim) cell with seed base_seed + cell index and
/// picks the highest validation accuracy; ties go to smaller d, then smaller n.
inline GridResult grid_search(const Dataset& train, const Dataset& val, const TrainConfig& cfg, const Grid& grid = {}) {
    GridResult res;
    std::size_t index = 0;
    for (std::size_t n : grid.vertices)
        for (std::size_t d : grid.latent_dims) {
            GridCell cell;
            cell.vertices = n;
            cell.latent_dim = d;
            cell.seed = cfg.seed + index++;
            TrainConfig c = cfg;
            c.vertices = n;
            c.latent_dim = d;
            c.seed = cell.seed;
            try {
                cell.val_accuracy = fit(train, val, c).best.best_val_accuracy;
                cell.ok = true;
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
            res.cells.push_back(std::move(cell));
        }
    res.best = select_best_cell(res.cells);
    res.best_config = cfg;
    res.best_config.vertices = res.cells[res.best].vertices;
    res.best_config.latent_dim = res.cells[res.best].latent_dim;
    res.best_config.seed = res.cells[res.best].seed;
    return res;
}

struct AblationVariant {
    std::string name;
    TrainConfig config;
};

/// The full model plus the seven hierarchy-slice variants. Every variant other
/// than the full model trains without the contrastive term.
inline std::vector<AblationVariant> ablation_variants(const TrainConfig& base) {
    std::vector<AblationVariant> v;
    auto add = [&](std::string name, auto&& tweak) {
        TrainConfig c = base;
        c.use_cl = false;
        tweak(c);
        v.push_back({std::move(name), c});
    };
    v.push_back({"full", base});
    add("w/o_CL", [](TrainConfig&) {});
    add("w/o_2-simplex", [](TrainConfig& c) { c.use_2simplex = false; });
    add("w/o_1-simplex", [](TrainConfig& c) { c.use_1simplex = false; });
    add("w/o_3-scale", [](TrainConfig& c) { c.use_scale3 = false; });
    add("w/o_2-scale", [](TrainConfig& c) { c.use_scale2 = false; });
    add("w/o_SC", [](TrainConfig& c) { c.temporal_only = true; });
    add("w/o_MS", [](TrainConfig& c) { c.spatial_only = true; });
    return v;
}

struct AblationRow {
    std::string variant;
    std::size_t representation_dim = 0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
};

inline std::vector<AblationRow> ablate(const Dataset& train, const Dataset& val, const Dataset& test,
                                       const TrainConfig& cfg) {
    std::vector<AblationRow> rows;
    for (const auto& variant : ablation_variants(cfg)) {
        auto fitted = fit(train, val, variant.config);
        const auto prepared_test = prepare(test, variant.config);
        rows.push_back({variant.name, variant.config.representation_dim(), fitted.best.best_val_accuracy,
                        evaluate_accuracy(*fitted.model, prepared_test)});
    }
    return rows;
}

}  // namespace hights
