#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace hights;
using namespace hights::temporal;

namespace {

std::vector<double> iota_series(std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i + 1);
    return x;
}

void randomize(ParameterSet& set, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : set.all()) p.value = oracle::random_tensor(p.value.shape(), rng, -0.8, 0.8);
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
    Mat m(t.rows(), std::vector<double>(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t(i, j);
    return m;
}

Mat mm(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b[0].size(); ++j)
            for (std::size_t k = 0; k < b.size(); ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

Mat layer_norm_oracle(const Mat& x, const Tensor& g, const Tensor& b) {
    Mat y = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(x[i].size());
        double mu = 0.0, var = 0.0;
        for (double v : x[i]) mu += v / n;
        for (double v : x[i]) var += (v - mu) * (v - mu) / n;
        for (std::size_t j = 0; j < x[i].size(); ++j) y[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * g[j] + b[j];
    }
    return y;
}

/// Single-head encoder layer written out with scalar loops.
Mat encoder_oracle(const Mat& u, const EncoderLayerParams& p) {
    const Mat q = mm(u, to_mat(p.heads[0].query->value));
    const Mat k = mm(u, to_mat(p.heads[0].key->value));
    const Mat v = mm(u, to_mat(p.heads[0].value->value));
    const std::size_t n = u.size();
    const double dk = static_cast<double>(q[0].size());
    Mat attn(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < q[i].size(); ++c) s += q[i][c] * k[j][c];
            attn[i][j] = std::exp(s / std::sqrt(dk));
            z += attn[i][j];
        }
        for (double& a : attn[i]) a /= z;
    }
    Mat mixed = mm(mm(attn, v), to_mat(p.out_proj->value));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < u[i].size(); ++j) mixed[i][j] += u[i][j];
    const Mat n1 = layer_norm_oracle(mixed, p.norm1_gain->value, p.norm1_bias->value);
    Mat hidden = mm(n1, to_mat(p.ff1_weight->value));
    for (auto& row : hidden)
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::max(0.0, row[j] + p.ff1_bias->value[j]);
    Mat ff = mm(hidden, to_mat(p.ff2_weight->value));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ff[i].size(); ++j) ff[i][j] += p.ff2_bias->value[j] + n1[i][j];
    return layer_norm_oracle(ff, p.norm2_gain->value, p.norm2_bias->value);
}

}  // namespace

TEST(Segment, DropsRemainder) {
    const auto x = iota_series(10);
    const Tensor s = segment(x, 3);
    EXPECT_EQ(s, Tensor::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}));
}

TEST(Segment, ScaleOneIsIdentity) {
    const auto x = iota_series(5);
    const Tensor s = segment(x, 1);
    EXPECT_EQ(s.shape(), (Shape{5, 1}));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(s(i, 0), x[i]);
}

TEST(Segment, ReconstructsWhenScaleDivides) {
    const auto x = iota_series(12);
    for (std::size_t s : {1u, 2u, 3u, 4u, 6u, 12u}) {
        const Tensor seg = segment(x, s);
        EXPECT_EQ(std::vector<double>(seg.values().begin(), seg.values().end()), x);
    }
}

TEST(Segment, InvalidScales) {
    const auto x = iota_series(4);
    EXPECT_THROW(segment(x, 0), ConfigError);
    EXPECT_THROW(segment(x, 5), ConfigError);
}

TEST(Positional, FirstPosition) {
    const auto pe = positional_encoding(1, 2);
    EXPECT_NEAR(pe[0], 0.8415, 1e-4);
    EXPECT_NEAR(pe[1], 0.5403, 1e-4);
}

TEST(Positional, PairsOnUnitCircle) {
    for (std::size_t t : {1u, 7u, 100u}) {
        const auto pe = positional_encoding(t, 16);
        for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(pe[2 * k] * pe[2 * k] + pe[2 * k + 1] * pe[2 * k + 1], 1.0, 1e-12);
    }
    EXPECT_DOUBLE_EQ(positional_encoding(1, 4)[0], std::sin(1.0));
    EXPECT_DOUBLE_EQ(positional_encoding(2, 4)[0], std::sin(2.0));
    EXPECT_NEAR(positional_encoding(3, 4)[2], std::sin(3.0 / 100.0), 1e-15);
}

TEST(EmbedInput, Examples) {
    Tape t;
    const Tensor seg = Tensor::from_rows({{0.5, 2.0}, {1.0, 0.0}});
    EXPECT_EQ(t.value(embed_input(t.constant(seg), t.constant(Tensor::matrix(2, 2)), t.constant(Tensor::vector({0, 0})))),
              Tensor::matrix(2, 2));
    EXPECT_EQ(t.value(embed_input(t.constant(seg), t.constant(Tensor::identity(2)), t.constant(Tensor::vector({0, 0})))),
              seg);
}

TEST(EmbedInput, MatchesDirectEvaluation) {
    std::mt19937_64 rng(2);
    const Tensor seg = oracle::random_tensor({5, 3}, rng);
    const Tensor w = oracle::random_tensor({3, 4}, rng);
    const Tensor b = oracle::random_tensor({4}, rng);
    Tape t;
    const Tensor& got = t.value(embed_input(t.constant(seg), t.constant(w), t.constant(b)));
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
            double s = b[j];
            for (std::size_t k = 0; k < 3; ++k) s += seg(i, k) * w(k, j);
            EXPECT_NEAR(got(i, j), std::max(0.0, s), 1e-12);
        }
}

TEST(EmbedInput, GradientCheck) {
    std::mt19937_64 rng(3);
    const Tensor seg = oracle::random_tensor({6, 3}, rng);
    const double err = oracle::input_gradient_error(
        {oracle::random_tensor({3, 8}, rng), oracle::random_tensor({8}, rng)},
        [&](Tape& t, const std::vector<Var>& v) { return oracle::weighted_sum(embed_input(t.constant(seg), v[0], v[1])); });
    EXPECT_LT(err, 1e-4);
}

TEST(EncoderLayer, SingleHeadMatchesScalarOracle) {
    ParameterSet set;
    std::uint64_t seed = 1;
    const auto p = make_encoder_layer(set, "enc", 2, 1, 8, seed);
    randomize(set, 21);
    const Tensor u = Tensor::from_rows({{0.3, -1.2}, {0.9, 0.4}});
    Tape t;
    const Tensor& got = t.value(encoder_layer(t.constant(u), p));
    const Mat want = encoder_oracle(to_mat(u), p);
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(got(i, j), want[i][j], 1e-10);
}

TEST(EncoderLayer, IdenticalRowsStayIdentical) {
    ParameterSet set;
    std::uint64_t seed = 5;
    const auto p = make_encoder_layer(set, "enc", 4, 2, 16, seed);
    Tensor u = Tensor::matrix(5, 4);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) u(i, j) = 0.1 * static_cast<double>(j) - 0.2;
    Tape t;
    EncoderTrace trace;
    const Tensor& y = t.value(encoder_layer(t.constant(u), p, &trace));
    for (std::size_t i = 1; i < 5; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y(i, j), y(0, j), 1e-14);
    ASSERT_EQ(trace.attention.size(), 2u);
    for (double a : t.value(trace.attention[0]).values()) EXPECT_NEAR(a, 0.2, 1e-14);
}

TEST(EncoderLayer, SingleTokenAttendsToItself) {
    ParameterSet set;
    std::uint64_t seed = 5;
    const auto p = make_encoder_layer(set, "enc", 4, 2, 16, seed);
    Tape t;
    EncoderTrace trace;
    encoder_layer(t.constant(Tensor::from_rows({{1, 2, 3, 4}})), p, &trace);
    for (Var a : trace.attention) EXPECT_EQ(t.value(a).item(), 1.0);
}

TEST(EncoderLayer, HeadsMustDivideDim) {
    ParameterSet set;
    std::uint64_t seed = 0;
    EXPECT_THROW(make_encoder_layer(set, "enc", 6, 4, 24, seed), ConfigError);
}

TEST(EncoderLayer, GradientCheck) {
    ParameterSet set;
    std::uint64_t seed = 9;
    const auto p = make_encoder_layer(set, "enc", 8, 2, 16, seed);
    randomize(set, 10);
    std::mt19937_64 rng(4);
    const Tensor u = oracle::random_tensor({4, 8}, rng);
    EXPECT_LT(oracle::parameter_gradient_error(
                  set, [&](Tape& t) { return oracle::weighted_sum(encoder_layer(t.constant(u), p)); }),
              1e-4);
    EXPECT_LT(oracle::input_gradient_error(
                  {u}, [&](Tape&, const std::vector<Var>& v) { return oracle::weighted_sum(encoder_layer(v[0], p)); }),
              1e-4);
}

TEST(TemporalRepresentation, WidthIsScalesTimesDim) {
    ParameterSet set;
    const auto params = make_temporal_params(set, {1, 2, 3}, 32, 4, 128, 1);
    const auto x = iota_series(24);
    Tape t;
    EXPECT_EQ(t.value(temporal_representation(t, x, params)).shape(), (Shape{1, 96}));
}

TEST(TemporalRepresentation, SingleScaleIsThatScale) {
    ParameterSet set;
    const auto params = make_temporal_params(set, {2}, 8, 2, 32, 1);
    std::vector<double> x(16, 0.25);
    Tape t;
    const Tensor a = t.value(temporal_representation(t, x, params));
    const Tensor b = t.value(scale_representation(t, segment(x, 2), params.scales[0], 8));
    EXPECT_EQ(a, b);
}

TEST(TemporalRepresentation, ZeroSeriesDeterministic) {
    ParameterSet set;
    const auto params = make_temporal_params(set, {1, 2, 3}, 8, 2, 32, 1);
    std::vector<double> x(24, 0.0);
    Tape t1, t2;
    EXPECT_EQ(t1.value(temporal_representation(t1, x, params)), t2.value(temporal_representation(t2, x, params)));
}

TEST(TemporalRepresentation, GradientCheckAllScales) {
    ParameterSet set;
    const auto params = make_temporal_params(set, {1, 2, 3}, 4, 2, 8, 3);
    randomize(set, 12);
    std::mt19937_64 rng(6);
    const Tensor x = oracle::random_tensor({24}, rng);
    EXPECT_LT(oracle::parameter_gradient_error(
                  set, [&](Tape& t) { return oracle::weighted_sum(temporal_representation(t, x.values(), params)); }),
              1e-4);
}
