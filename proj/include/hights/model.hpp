#pragma once

#include "hights/autodiff.hpp"
#include "hights/config.hpp"
#include "hights/data.hpp"
#include "hights/objectives.hpp"
#include "hights/spatial.hpp"
#include "hights/temporal.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace hights {

/// Weight-independent per-sample inputs: segment matrices for each active
/// scale and the Rips complex with its features and operators.
struct PreparedSample {
    std::vector<Tensor> segments;
    std::optional<spatial::SpatialInput> spatial;
    std::size_t label = 0;
};

inline PreparedSample prepare_sample(const TimeSeriesSample& s, const TrainConfig& cfg) {
    PreparedSample p;
    p.label = s.label;
    if (cfg.has_temporal())
        for (std::size_t scale : cfg.active_scales()) p.segments.push_back(temporal::segment(s.values, scale));
    if (cfg.has_spatial())
        p.spatial = spatial::prepare_spatial_input(s.values, cfg.vertices, cfg.cutoff_frac, cfg.max_simplex_dim(),
                                                   cfg.fixed_cutoff);
    return p;
}

inline std::vector<PreparedSample> prepare(const Dataset& d, const TrainConfig& cfg) {
    std::vector<PreparedSample> out;
    out.reserve(d.size());
    for (const auto& s : d.samples) out.push_back(prepare_sample(s, cfg));
    return out;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/**
 * Multiscale temporal encoder + simplicial spatial encoder + projection heads
 * + linear softmax classifier. Which parts exist follows the config's
 * ablation switches; disabled branches have no parameters at all.
 */
class HighTsModel {
  public:
    struct BatchOutput {
        std::optional<Var> temporal;  // B x temporal_dim
        std::optional<Var> spatial;   // B x spatial_dim
        Var representation;           // B x representation_dim
        Var probabilities;            // B x C
        Var cross_entropy;
        std::optional<Var> contrast;  // present when the contrastive term was evaluated
        Var loss;
    };

    HighTsModel(TrainConfig cfg, std::size_t length, std::size_t num_classes)
        : cfg_(std::move(cfg)), length_(length), num_classes_(num_classes) {
        cfg_.validate(length);
        if (num_classes < 2) throw ConfigError("need at least two classes");
        std::uint64_t seed = detail::splitmix64(cfg_.seed);
        const std::size_t d = cfg_.latent_dim;
        if (cfg_.has_temporal())
            temporal_ = temporal::make_temporal_params(params_, cfg_.active_scales(), d, cfg_.heads,
                                                       cfg_.effective_ff_dim(), seed + 1000);
        if (cfg_.has_spatial())
            spatial_ = spatial::make_spatial_params(params_, cfg_.max_simplex_dim(), cfg_.mp_layers,
                                                    length / cfg_.vertices, d, seed + 2000);
        if (cfg_.contrast_active()) {
            const std::size_t dc = cfg_.effective_contrast_dim();
            proj_temporal_w_ = &params_.add("project.temporal.weight", xavier_init({cfg_.temporal_dim(), dc}, seed + 3000));
            proj_temporal_b_ = &params_.add("project.temporal.bias", Tensor({dc}));
            proj_spatial_w_ = &params_.add("project.spatial.weight", xavier_init({cfg_.spatial_dim(), dc}, seed + 3001));
            proj_spatial_b_ = &params_.add("project.spatial.bias", Tensor({dc}));
        }
        classifier_w_ =
            &params_.add("classifier.weight", xavier_init({cfg_.representation_dim(), num_classes}, seed + 4000));
        classifier_b_ = &params_.add("classifier.bias", Tensor({num_classes}));
    }

    HighTsModel(const HighTsModel&) = delete;
    HighTsModel& operator=(const HighTsModel&) = delete;

    const TrainConfig& config() const noexcept { return cfg_; }
    std::size_t series_length() const noexcept { return length_; }
    std::size_t num_classes() const noexcept { return num_classes_; }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }
    const std::optional<temporal::TemporalEncoderParams>& temporal_params() const noexcept { return temporal_; }
    const std::optional<spatial::SpatialEncoderParams>& spatial_params() const noexcept { return spatial_; }

    /// F_M for one prepared sample (1 x temporal_dim).
    Var temporal_features(Tape& tape, const PreparedSample& s) const {
        std::vector<Var> parts;
        for (std::size_t i = 0; i < temporal_->scales.size(); ++i)
            parts.push_back(
                temporal::scale_representation(tape, s.segments.at(i), temporal_->scales[i], temporal_->model_dim));
        return parts.size() == 1 ? parts.front() : concat_cols(parts);
    }

    /// F_T for one prepared sample (1 x spatial_dim).
    Var spatial_features(Tape& tape, const PreparedSample& s) const {
        return spatial::spatial_representation(tape, *s.spatial, *spatial_);
    }

    /// Forward pass over a batch, including L_CE and (when active, B >= 2) L_CL.
    BatchOutput forward(Tape& tape, std::span<const PreparedSample* const> batch) const {
        if (batch.empty()) throw ContractError("empty batch");
        BatchOutput out;
        std::vector<std::size_t> labels;
        std::vector<Var> fm, ft;
        for (const PreparedSample* s : batch) {
            labels.push_back(s->label);
            if (temporal_) fm.push_back(temporal_features(tape, *s));
            if (spatial_) ft.push_back(spatial_features(tape, *s));
        }
        if (temporal_) out.temporal = concat_rows(fm);
        if (spatial_) out.spatial = concat_rows(ft);
        if (out.temporal && out.spatial) out.representation = objectives::fuse(*out.temporal, *out.spatial);
        else out.representation = out.temporal ? *out.temporal : *out.spatial;

        out.probabilities = objectives::classify(out.representation, tape.param(*classifier_w_), tape.param(*classifier_b_));
        out.cross_entropy = objectives::cross_entropy(out.probabilities, labels);
        out.loss = out.cross_entropy;
        if (cfg_.contrast_active() && batch.size() >= 2) {
            Var zm = add_row_vector(matmul(*out.temporal, tape.param(*proj_temporal_w_)), tape.param(*proj_temporal_b_));
            Var zt = add_row_vector(matmul(*out.spatial, tape.param(*proj_spatial_w_)), tape.param(*proj_spatial_b_));
            out.contrast = objectives::contrastive_loss(zm, zt, cfg_.tau, cfg_.contrast_include_positive);
            out.loss = objectives::total_loss(out.cross_entropy, *out.contrast);
        }
        return out;
    }

    struct Prediction {
        std::vector<std::size_t> predicted;
        Tensor probabilities;   // N x C
        Tensor representation;  // N x representation_dim
    };

    /// Inference in chunks of the configured batch size.
    Prediction predict(std::span<const PreparedSample> samples) const {
        const std::size_t n = samples.size();
        Prediction p;
        p.probabilities = Tensor::matrix(n, num_classes_);
        p.representation = Tensor::matrix(n, cfg_.representation_dim());
        p.predicted.resize(n);
        for (std::size_t start = 0; start < n; start += cfg_.batch) {
            const std::size_t end = std::min(n, start + cfg_.batch);
            std::vector<const PreparedSample*> chunk;
            for (std::size_t i = start; i < end; ++i) chunk.push_back(&samples[i]);
            Tape tape;
            const auto out = forward_inference(tape, chunk);
            const Tensor& probs = tape.value(out.first);
            const Tensor& rep = tape.value(out.second);
            for (std::size_t i = start; i < end; ++i) {
                auto prow = probs.row(i - start);
                std::copy(prow.begin(), prow.end(), p.probabilities.row(i).begin());
                auto rrow = rep.row(i - start);
                std::copy(rrow.begin(), rrow.end(), p.representation.row(i).begin());
                p.predicted[i] = static_cast<std::size_t>(std::max_element(prow.begin(), prow.end()) - prow.begin());
            }
        }
        return p;
    }

  private:
    std::pair<Var, Var> forward_inference(Tape& tape, std::span<const PreparedSample* const> batch) const {
        std::vector<Var> fm, ft;
        for (const PreparedSample* s : batch) {
            if (temporal_) fm.push_back(temporal_features(tape, *s));
            if (spatial_) ft.push_back(spatial_features(tape, *s));
        }
        Var rep;
        if (temporal_ && spatial_) rep = objectives::fuse(concat_rows(fm), concat_rows(ft));
        else rep = temporal_ ? concat_rows(fm) : concat_rows(ft);
        Var probs = objectives::classify(rep, tape.param(*classifier_w_), tape.param(*classifier_b_));
        return {probs, rep};
    }

    TrainConfig cfg_;
    std::size_t length_;
    std::size_t num_classes_;
    ParameterSet params_;
    std::optional<temporal::TemporalEncoderParams> temporal_;
    std::optional<spatial::SpatialEncoderParams> spatial_;
    Parameter* proj_temporal_w_ = nullptr;
    Parameter* proj_temporal_b_ = nullptr;
    Parameter* proj_spatial_w_ = nullptr;
    Parameter* proj_spatial_b_ = nullptr;
    Parameter* classifier_w_ = nullptr;
    Parameter* classifier_b_ = nullptr;
};

}  // namespace hights
