#pragma once

#include "hights/autodiff.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hights::temporal {

/// Splits x into floor(L/s) consecutive segments of length s as an L_s x s
/// matrix; the trailing L mod s points are dropped.
inline Tensor segment(std::span<const double> x, std::size_t s) {
    if (s == 0) throw ConfigError("scale must be at least 1");
    const std::size_t count = x.size() / s;
    if (count == 0)
        throw ConfigError("scale " + std::to_string(s) + " exceeds series length " + std::to_string(x.size()));
    std::vector<double> data(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(count * s));
    return Tensor({count, s}, std::move(data));
}

/// Sinusoidal encoding of 1-based position t: sin at even components, cos at
/// odd, with frequency 10000^(-2k/d) for the k-th pair.
inline std::vector<double> positional_encoding(std::size_t t, std::size_t d) {
    std::vector<double> pe(d);
    for (std::size_t m = 0; m < d; ++m) {
        const std::size_t k = m / 2;
        const double omega = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(d));
        const double arg = omega * static_cast<double>(t);
        pe[m] = (m % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
    return pe;
}

/// Rows t = 1..count of the positional encoding.
inline Tensor positional_table(std::size_t count, std::size_t d) {
    Tensor table = Tensor::matrix(count, d);
    for (std::size_t t = 0; t < count; ++t) {
        const auto pe = positional_encoding(t + 1, d);
        std::copy(pe.begin(), pe.end(), table.row(t).begin());
    }
    return table;
}

struct HeadParams {
    Parameter* query = nullptr;  // d x d_k
    Parameter* key = nullptr;
    Parameter* value = nullptr;
};

struct EncoderLayerParams {
    std::vector<HeadParams> heads;
    Parameter* out_proj = nullptr;  // (h*d_k) x d
    Parameter* ff1_weight = nullptr;
    Parameter* ff1_bias = nullptr;
    Parameter* ff2_weight = nullptr;
    Parameter* ff2_bias = nullptr;
    Parameter* norm1_gain = nullptr;
    Parameter* norm1_bias = nullptr;
    Parameter* norm2_gain = nullptr;
    Parameter* norm2_bias = nullptr;
};

struct ScaleParams {
    std::size_t scale = 1;
    Parameter* embed_weight = nullptr;  // s x d
    Parameter* embed_bias = nullptr;    // d
    EncoderLayerParams encoder;
};

struct TemporalEncoderParams {
    std::size_t model_dim = 0;
    std::size_t num_heads = 0;
    std::vector<ScaleParams> scales;

    std::size_t output_dim() const { return scales.size() * model_dim; }
};

/// Registers one encoder layer's weights under `prefix`.
inline EncoderLayerParams make_encoder_layer(ParameterSet& set, const std::string& prefix, std::size_t d,
                                             std::size_t heads, std::size_t d_ff, std::uint64_t& seed) {
    if (heads == 0 || d % heads != 0)
        throw ConfigError("model dim " + std::to_string(d) + " is not divisible by " + std::to_string(heads) +
                          " heads");
    const std::size_t dk = d / heads;
    EncoderLayerParams p;
    for (std::size_t h = 0; h < heads; ++h) {
        const std::string hp = prefix + ".head" + std::to_string(h);
        HeadParams head;
        head.query = &set.add(hp + ".query", xavier_init({d, dk}, seed++));
        head.key = &set.add(hp + ".key", xavier_init({d, dk}, seed++));
        head.value = &set.add(hp + ".value", xavier_init({d, dk}, seed++));
        p.heads.push_back(head);
    }
    p.out_proj = &set.add(prefix + ".out_proj", xavier_init({heads * dk, d}, seed++));
    p.ff1_weight = &set.add(prefix + ".ff1.weight", xavier_init({d, d_ff}, seed++));
    p.ff1_bias = &set.add(prefix + ".ff1.bias", Tensor({d_ff}));
    p.ff2_weight = &set.add(prefix + ".ff2.weight", xavier_init({d_ff, d}, seed++));
    p.ff2_bias = &set.add(prefix + ".ff2.bias", Tensor({d}));
    p.norm1_gain = &set.add(prefix + ".norm1.gain", Tensor({d}, 1.0));
    p.norm1_bias = &set.add(prefix + ".norm1.bias", Tensor({d}));
    p.norm2_gain = &set.add(prefix + ".norm2.gain", Tensor({d}, 1.0));
    p.norm2_bias = &set.add(prefix + ".norm2.bias", Tensor({d}));
    return p;
}

/// Separate embedding and encoder weights for each scale.
inline TemporalEncoderParams make_temporal_params(ParameterSet& set, const std::vector<std::size_t>& scales,
                                                  std::size_t d, std::size_t heads, std::size_t d_ff,
                                                  std::uint64_t seed) {
    TemporalEncoderParams p;
    p.model_dim = d;
    p.num_heads = heads;
    for (std::size_t s : scales) {
        if (s == 0) throw ConfigError("scale must be at least 1");
        const std::string prefix = "temporal.scale" + std::to_string(s);
        ScaleParams sp;
        sp.scale = s;
        sp.embed_weight = &set.add(prefix + ".embed.weight", xavier_init({s, d}, seed++));
        sp.embed_bias = &set.add(prefix + ".embed.bias", Tensor({d}));
        sp.encoder = make_encoder_layer(set, prefix + ".encoder", d, heads, d_ff, seed);
        p.scales.push_back(std::move(sp));
    }
    return p;
}

/// ReLU(H W + b) applied to every segment row of H.
inline Var embed_input(Var segments, Var weight, Var bias) {
    return relu(add_row_vector(matmul(segments, weight), bias));
}

struct EncoderTrace {
    /// Post-softmax attention matrices, one per head.
    std::vector<Var> attention;
};

/**
 * One Transformer encoder layer over L_s x d token rows: multi-head scaled
 * dot-product self-attention, output projection, Add & Norm, then a ReLU
 * feed-forward block with a second Add & Norm.
 */
inline Var encoder_layer(Var u, const EncoderLayerParams& p, EncoderTrace* trace = nullptr) {
    Tape& tape = *u.tape;
    const std::size_t dk = tape.value(tape.param(*p.heads.front().query)).cols();
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
    std::vector<Var> heads;
    heads.reserve(p.heads.size());
    for (const HeadParams& h : p.heads) {
        Var q = matmul(u, tape.param(*h.query));
        Var k = matmul(u, tape.param(*h.key));
        Var v = matmul(u, tape.param(*h.value));
        Var weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dk));
        if (trace) trace->attention.push_back(weights);
        heads.push_back(matmul(weights, v));
    }
    Var mixed = matmul(heads.size() == 1 ? heads.front() : concat_cols(heads), tape.param(*p.out_proj));
    Var n = layer_norm(add(mixed, u), tape.param(*p.norm1_gain), tape.param(*p.norm1_bias));
    Var hidden = relu(add_row_vector(matmul(n, tape.param(*p.ff1_weight)), tape.param(*p.ff1_bias)));
    Var ff = add_row_vector(matmul(hidden, tape.param(*p.ff2_weight)), tape.param(*p.ff2_bias));
    return layer_norm(add(ff, n), tape.param(*p.norm2_gain), tape.param(*p.norm2_bias));
}

/// z^s for one scale: segment, embed, add positions, encode, mean-pool.
inline Var scale_representation(Tape& tape, const Tensor& segments, const ScaleParams& p, std::size_t d) {
    Var seg = tape.constant(segments);
    Var embedded = embed_input(seg, tape.param(*p.embed_weight), tape.param(*p.embed_bias));
    Var u = add(embedded, tape.constant(positional_table(segments.rows(), d)));
    return mean_rows(encoder_layer(u, p.encoder));
}

/// F_M(x) = z^{s_1} + ... + z^{s_S} (concatenated), a 1 x (S*d) row.
inline Var temporal_representation(Tape& tape, std::span<const double> x, const TemporalEncoderParams& params) {
    if (params.scales.empty()) throw ConfigError("temporal encoder has no scales");
    std::vector<Var> parts;
    for (const ScaleParams& sp : params.scales)
        parts.push_back(scale_representation(tape, segment(x, sp.scale), sp, params.model_dim));
    return parts.size() == 1 ? parts.front() : concat_cols(parts);
}

}  // namespace hights::temporal
