#include "oracles.hpp"
#include "tiny.hpp"

#include <gtest/gtest.h>

using namespace hights;
using hights::testing::tiny_config;
using hights::testing::tiny_dataset;

namespace {

std::vector<Tensor> snapshot(const ParameterSet& set) {
    std::vector<Tensor> out;
    for (const auto& p : set.all()) out.push_back(p.value);
    return out;
}

}  // namespace

TEST(Adam, FirstStepMovesByLearningRate) {
    for (double g : {3.0, -0.02}) {
        ParameterSet set;
        Parameter& p = set.add("w", Tensor::scalar(1.0));
        AdamState state(set);
        p.grad[0] = g;
        adam_step(set, state, 0.01);
        EXPECT_NEAR(p.value[0], 1.0 - 0.01 * (g > 0 ? 1.0 : -1.0), 1e-8);
    }
}

TEST(Adam, MatchesHandRecursionOverSteps) {
    ParameterSet set;
    Parameter& p = set.add("w", Tensor::scalar(0.5));
    AdamState state(set);
    double m = 0.0, v = 0.0, x = 0.5;
    const double grads[] = {0.3, -1.0, 0.7, 0.0, 2.0};
    for (int t = 1; t <= 5; ++t) {
        const double g = grads[t - 1];
        p.grad[0] = g;
        adam_step(set, state, 0.05);
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        x -= 0.05 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        EXPECT_NEAR(p.value[0], x, 1e-14);
    }
}

TEST(Adam, ZeroGradientLeavesParameters) {
    ParameterSet set;
    set.add("w", Tensor::from_rows({{1, 2}, {3, 4}}));
    AdamState state(set);
    for (int i = 0; i < 3; ++i) adam_step(set, state, 0.1);
    EXPECT_EQ(set.all()[0].value, Tensor::from_rows({{1, 2}, {3, 4}}));
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    ParameterSet set;
    set.add("good", Tensor::scalar(1.0));
    Parameter& bad = set.add("classifier.bias", Tensor::scalar(1.0));
    AdamState state(set);
    set.all()[0].grad[0] = 1.0;
    bad.grad[0] = std::numeric_limits<double>::infinity();
    try {
        adam_step(set, state, 0.1);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("classifier.bias"), std::string::npos);
    }
    EXPECT_EQ(set.all()[0].value[0], 1.0);
}

TEST(Model, ParameterLayoutFollowsConfig) {
    auto cfg = tiny_config();
    HighTsModel full(cfg, 32, 2);
    EXPECT_NE(full.parameters().find("project.temporal.weight"), nullptr);
    EXPECT_EQ(full.parameters().at("classifier.weight").value.shape(), (Shape{cfg.representation_dim(), 2}));
    EXPECT_EQ(cfg.representation_dim(), 3u * 8u + 3u * 8u);

    cfg.use_cl = false;
    HighTsModel no_cl(cfg, 32, 2);
    EXPECT_EQ(no_cl.parameters().find("project.temporal.weight"), nullptr);

    cfg.temporal_only = true;
    HighTsModel temporal(cfg, 32, 2);
    EXPECT_EQ(temporal.parameters().find("spatial.k0.layer0.weight"), nullptr);
}

TEST(Model, ProjectionAndClassifierGradientCheck) {
    auto cfg = tiny_config();
    cfg.scales = {1, 2};
    cfg.latent_dim = 4;
    cfg.mp_layers = 1;
    const auto data = znormalize(make_sine_vs_noise(4, 24, 3));
    cfg.vertices = 6;
    HighTsModel model(cfg, 24, 2);
    std::mt19937_64 rng(8);
    for (auto& p : model.parameters().all()) p.value = oracle::random_tensor(p.value.shape(), rng, -0.7, 0.7);
    const auto prepared = prepare(data, cfg);
    std::vector<const PreparedSample*> batch;
    for (const auto& s : prepared) batch.push_back(&s);
    EXPECT_LT(oracle::parameter_gradient_error(model.parameters(),
                                               [&](Tape& t) { return model.forward(t, batch).loss; }),
              1e-4);
}

TEST(Model, SingleSampleBatchSkipsContrast) {
    const auto cfg = tiny_config();
    const auto prepared = prepare(tiny_dataset(2), cfg);
    HighTsModel model(cfg, 32, 2);
    const PreparedSample* one[] = {&prepared[0]};
    Tape t;
    const auto out = model.forward(t, one);
    EXPECT_FALSE(out.contrast.has_value());
    EXPECT_EQ(t.value(out.loss).item(), t.value(out.cross_entropy).item());
}

TEST(TrainEpoch, ZeroLearningRateKeepsParameters) {
    auto cfg = tiny_config();
    cfg.lr = 0.0;
    const auto prepared = prepare(tiny_dataset(), cfg);
    HighTsModel model(cfg, 32, 2);
    const auto before = snapshot(model.parameters());
    AdamState adam(model.parameters());
    const auto m = train_epoch(model, prepared, adam, 1);
    EXPECT_EQ(snapshot(model.parameters()), before);
    EXPECT_TRUE(std::isfinite(m.loss));
    EXPECT_EQ(m.batches, 3u);
}

TEST(TrainEpoch, FixedBatchLossDecreases) {
    auto cfg = tiny_config();
    cfg.batch = 8;
    cfg.lr = 3e-3;
    const auto prepared = prepare(tiny_dataset(8), cfg);
    HighTsModel model(cfg, 32, 2);
    AdamState adam(model.parameters());
    std::vector<double> losses;
    for (int step = 0; step < 50; ++step) losses.push_back(train_epoch(model, prepared, adam, 0).loss);
    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 10; ++i) {
        head += losses[i];
        tail += losses[40 + i];
    }
    EXPECT_LT(tail, head);
    for (double l : losses) EXPECT_TRUE(std::isfinite(l));
}

TEST(Fit, ZeroPatienceStopsAtFirstNonImprovement) {
    auto cfg = tiny_config();
    cfg.patience = 0;
    cfg.epochs = 30;
    cfg.lr = 0.0;  // validation never improves after epoch 1
    const auto data = tiny_dataset();
    const auto split = split_train_val(data, 0.25, 0);
    const auto res = fit(split.first, split.second, cfg);
    ASSERT_EQ(res.history.size(), 2u);
    EXPECT_TRUE(res.history[0].improved);
    EXPECT_FALSE(res.history[1].improved);
    EXPECT_EQ(res.best.best_epoch, 1u);
}

TEST(Fit, PatienceCountsStaleEpochs) {
    auto cfg = tiny_config();
    cfg.patience = 3;
    cfg.epochs = 30;
    cfg.lr = 0.0;
    const auto split = split_train_val(tiny_dataset(), 0.25, 0);
    EXPECT_EQ(fit(split.first, split.second, cfg).history.size(), 5u);
}

TEST(Fit, ReturnsBestCheckpointAndIsDeterministic) {
    const auto cfg = tiny_config();
    const auto split = split_train_val(tiny_dataset(), 0.25, 0);
    std::vector<EpochRecord> seen;
    const auto a = fit(split.first, split.second, cfg, [&](const EpochRecord& r) { seen.push_back(r); });
    const auto b = fit(split.first, split.second, cfg);
    EXPECT_EQ(encode_checkpoint(a.best), encode_checkpoint(b.best));
    EXPECT_EQ(seen.size(), a.history.size());
    double best = -1.0;
    for (const auto& r : a.history) best = std::max(best, r.val_accuracy);
    EXPECT_EQ(a.best.best_val_accuracy, best);
    const auto val = prepare(split.second, cfg);
    EXPECT_EQ(evaluate_accuracy(*a.model, val), best);
}

TEST(Fit, EmptyInputsRejected) {
    const auto cfg = tiny_config();
    const auto data = tiny_dataset();
    EXPECT_THROW(fit(subset(data, {}), data, cfg), DataError);
    EXPECT_THROW(fit(data, subset(data, {}), cfg), DataError);
}

TEST(Grid, TieBreakPrefersSmallerDimThenFewerVertices) {
    std::vector<GridCell> cells{{15, 32, 0, 0.9, true, ""}, {20, 16, 1, 0.9, true, ""},
                                {15, 16, 2, 0.9, true, ""}, {30, 8, 3, 0.8, true, ""},
                                {30, 8, 4, 0.95, false, "boom"}};
    EXPECT_EQ(select_best_cell(cells), 2u);
    cells[0].val_accuracy = 0.91;
    EXPECT_EQ(select_best_cell(cells), 0u);
    for (auto& c : cells) c.ok = false;
    EXPECT_THROW(select_best_cell(cells), ConfigError);
}

TEST(Grid, SixteenCellsWithConsecutiveSeeds) {
    auto cfg = tiny_config();
    cfg.epochs = 1;
    cfg.seed = 40;
    const auto split = split_train_val(tiny_dataset(16), 0.25, 0);
    const auto res = grid_search(split.first, split.second, cfg);
    ASSERT_EQ(res.cells.size(), 16u);
    for (std::size_t i = 0; i < 16; ++i) {
        EXPECT_EQ(res.cells[i].seed, 40u + i);
        EXPECT_TRUE(res.cells[i].ok) << res.cells[i].error;
    }
    EXPECT_EQ(res.cells[5].vertices, 20u);
    EXPECT_EQ(res.cells[5].latent_dim, 16u);
    EXPECT_EQ(res.best_config.vertices, res.cells[res.best].vertices);
}

TEST(Grid, SingleCellEqualsSingleFit) {
    const auto cfg = tiny_config();
    const auto split = split_train_val(tiny_dataset(), 0.25, 0);
    const auto res = grid_search(split.first, split.second, cfg, Grid{{cfg.vertices}, {cfg.latent_dim}});
    ASSERT_EQ(res.cells.size(), 1u);
    EXPECT_EQ(res.cells[0].val_accuracy, fit(split.first, split.second, cfg).best.best_val_accuracy);
}

TEST(Ablation, VariantsAndWidths) {
    TrainConfig base;
    const auto v = ablation_variants(base);
    ASSERT_EQ(v.size(), 8u);
    const std::vector<std::string> names{"full",          "w/o_CL",      "w/o_2-simplex", "w/o_1-simplex",
                                         "w/o_3-scale",   "w/o_2-scale", "w/o_SC",        "w/o_MS"};
    const std::vector<std::size_t> dims{192, 192, 160, 128, 160, 128, 96, 96};
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(v[i].name, names[i]);
        EXPECT_EQ(v[i].config.representation_dim(), dims[i]) << names[i];
        EXPECT_EQ(v[i].config.contrast_active(), i == 0) << names[i];
    }
    EXPECT_EQ(v[6].config.temporal_dim(), 96u);
    EXPECT_EQ(v[7].config.spatial_dim(), 96u);
}

TEST(Ablation, EightRows) {
    auto cfg = tiny_config();
    cfg.epochs = 1;
    const auto data = tiny_dataset();
    const auto split = split_train_val(data, 0.25, 0);
    const auto rows = ablate(split.first, split.second, tiny_dataset(10, 2), cfg);
    ASSERT_EQ(rows.size(), 8u);
    for (const auto& r : rows) {
        EXPECT_GE(r.test_accuracy, 0.0);
        EXPECT_LE(r.test_accuracy, 1.0);
    }
}

TEST(Config, SettingsAndErrors) {
    TrainConfig c;
    EXPECT_TRUE(apply_setting(c, "--latent-dim", "16"));
    EXPECT_TRUE(apply_setting(c, "scales", "1, 4"));
    EXPECT_TRUE(apply_setting(c, "tau", "0.5"));
    EXPECT_TRUE(apply_setting(c, "use_cl", "false"));
    EXPECT_EQ(c.latent_dim, 16u);
    EXPECT_EQ(c.scales, (std::vector<std::size_t>{1, 4}));
    EXPECT_EQ(c.tau, 0.5);
    EXPECT_FALSE(c.use_cl);
    EXPECT_FALSE(apply_setting(c, "nonsense", "1"));
    EXPECT_THROW(apply_setting(c, "vertices", "ten"), ConfigError);
    EXPECT_THROW(apply_setting(c, "use_cl", "maybe"), ConfigError);
    EXPECT_THROW(apply_setting(c, "scales", ""), ConfigError);
}

TEST(Config, Validation) {
    TrainConfig c;
    EXPECT_NO_THROW(c.validate(128));
    c.heads = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    EXPECT_THROW(c.validate(10), ConfigError);  // 20 vertices > length 10
    c.mp_layers = 4;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.temporal_only = c.spatial_only = true;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    TrainConfig c;
    c.scales = {2, 5};
    c.fixed_cutoff = 0.25;
    c.use_2simplex = false;
    c.seed = 123456789012345ULL;
    const nlohmann::json j = c;
    const auto back = j.get<TrainConfig>();
    EXPECT_EQ(nlohmann::json(back).dump(), j.dump());
}
