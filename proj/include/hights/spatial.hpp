#pragma once

#include "hights/autodiff.hpp"
#include "hights/complex.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hights::spatial {

inline constexpr std::size_t kMaxSimplexDim = 2;

/// Row per k-simplex: the mean of its vertices' patches.
inline Tensor initial_features(const complex::SimplicialComplex& K, const complex::PointCloud& cloud, std::size_t k) {
    complex::require_dim(k, 0, kMaxSimplexDim);
    const std::size_t lp = cloud.patch_length();
    Tensor H = Tensor::matrix(K.count(k), lp);
    for (std::size_t r = 0; r < K.count(k); ++r) {
        const auto& s = K[k][r];
        auto row = H.row(r);
        for (std::uint32_t v : s) {
            auto p = cloud.point(v);
            for (std::size_t j = 0; j < lp; ++j) row[j] += p[j];
        }
        for (double& x : row) x /= static_cast<double>(s.size());
    }
    return H;
}

/// D^-1/2 (A + I) D^-1/2 where D holds the row sums of A + I.
inline Tensor normalized_operator(const complex::IntMatrix& A) {
    const std::size_t m = A.rows;
    std::vector<double> inv_sqrt(m);
    for (std::size_t i = 0; i < m; ++i) {
        double deg = 1.0;
        for (std::size_t j = 0; j < m; ++j) deg += A(i, j);
        inv_sqrt[i] = 1.0 / std::sqrt(deg);
    }
    Tensor op = Tensor::matrix(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const double a = A(i, j) + (i == j ? 1.0 : 0.0);
            if (a != 0.0) op(i, j) = inv_sqrt[i] * a * inv_sqrt[j];
        }
    return op;
}

/// H' = ReLU(op H W). An empty H (no simplexes) stays empty with W's width.
inline Var message_passing_layer(Var H, const Tensor& op, Var W) {
    Tape& tape = *H.tape;
    if (tape.value(H).rows() == 0) {
        if (tape.value(H).cols() != tape.value(W).rows())
            throw DimensionError("message passing: feature width " + std::to_string(tape.value(H).cols()) +
                                 " does not match weight " + shape_string(tape.value(W).shape()));
        return tape.constant(Tensor::matrix(0, tape.value(W).cols()));
    }
    return relu(matmul(tape.constant(op), matmul(H, W)));
}

/// Column mean over simplexes; an empty level pools to a zero row.
inline Var pool_simplexes(Var H) { return mean_rows(H); }

struct SpatialEncoderParams {
    std::size_t latent_dim = 0;
    /// weights[k][l] maps layer l's input to latent_dim for simplex dimension k.
    std::vector<std::vector<Parameter*>> weights;

    std::size_t levels() const { return weights.size(); }
    std::size_t output_dim() const { return weights.size() * latent_dim; }
};

inline SpatialEncoderParams make_spatial_params(ParameterSet& set, std::size_t max_dim, std::size_t layers,
                                                std::size_t patch_length, std::size_t d, std::uint64_t seed) {
    if (layers < 1 || layers > 3) throw ConfigError("message-passing layers must be in [1, 3]");
    complex::require_dim(max_dim, 0, kMaxSimplexDim);
    SpatialEncoderParams p;
    p.latent_dim = d;
    for (std::size_t k = 0; k <= max_dim; ++k) {
        std::vector<Parameter*> chain;
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = l == 0 ? patch_length : d;
            chain.push_back(&set.add("spatial.k" + std::to_string(k) + ".layer" + std::to_string(l) + ".weight",
                                     xavier_init({in, d}, seed++)));
        }
        p.weights.push_back(std::move(chain));
    }
    return p;
}

/// Data-dependent inputs of the spatial encoder, independent of the weights.
struct SpatialInput {
    complex::SimplicialComplex complex;
    std::vector<Tensor> features;   // H_k^(0), k = 0..max_dim
    std::vector<Tensor> operators;  // normalized A_k
};

/// Patch, similarity, per-sample percentile cutoff (or a fixed one), Rips, and
/// the per-dimension features and propagation operators.
inline SpatialInput prepare_spatial_input(std::span<const double> x, std::size_t vertices, double cutoff_fraction,
                                          std::size_t max_dim, std::optional<double> fixed_cutoff = std::nullopt) {
    const auto cloud = complex::patch(x, vertices);
    const Tensor sim = complex::similarity_matrix(cloud);
    const double c = fixed_cutoff ? *fixed_cutoff : complex::cutoff_from_percentile(sim, cutoff_fraction);
    SpatialInput in;
    in.complex = complex::build_rips(sim, c);
    for (std::size_t k = 0; k <= max_dim; ++k) {
        in.features.push_back(initial_features(in.complex, cloud, k));
        in.operators.push_back(normalized_operator(complex::adjacency(in.complex, k)));
    }
    return in;
}

/// F_T(x) = f_0 + ... + f_K (concatenated), a 1 x (levels * d) row.
inline Var spatial_representation(Tape& tape, const SpatialInput& in, const SpatialEncoderParams& params) {
    if (in.features.size() < params.levels()) throw ConfigError("spatial input prepared for fewer simplex levels");
    std::vector<Var> pooled;
    for (std::size_t k = 0; k < params.levels(); ++k) {
        Var H = tape.constant(in.features[k]);
        for (Parameter* W : params.weights[k]) H = message_passing_layer(H, in.operators[k], tape.param(*W));
        pooled.push_back(pool_simplexes(H));
    }
    return pooled.size() == 1 ? pooled.front() : concat_cols(pooled);
}

inline Var spatial_representation(Tape& tape, std::span<const double> x, std::size_t vertices, double cutoff_fraction,
                                  const SpatialEncoderParams& params) {
    return spatial_representation(tape, prepare_spatial_input(x, vertices, cutoff_fraction, params.levels() - 1),
                                  params);
}

}  // namespace hights::spatial
