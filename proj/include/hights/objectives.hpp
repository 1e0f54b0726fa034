#pragma once

#include "hights/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hights::objectives {

namespace detail {

// log sum_{j in row/col, optionally skipping the diagonal} exp(S)
// together with the corresponding softmax weights.
inline double masked_logsumexp(std::span<const double> vals, std::size_t skip, std::vector<double>& weights) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < vals.size(); ++j)
        if (j != skip) mx = std::max(mx, vals[j]);
    double z = 0.0;
    weights.assign(vals.size(), 0.0);
    for (std::size_t j = 0; j < vals.size(); ++j)
        if (j != skip) {
            weights[j] = std::exp(vals[j] - mx);
            z += weights[j];
        }
    for (double& w : weights) w /= z;
    return mx + std::log(z);
}

}  // namespace detail

/**
 * Symmetric cross-view contrast over a B x B logit matrix S (S_ij =
 * sim(m_i, t_j) / tau):
 *
 *   L = 1/2 sum_i [ 2 S_ii - LSE_j S_ij - LSE_j S_ji ] * (-1)
 *
 * With `include_positive == false` the log-sum-exps run over j != i only.
 */
inline Var pair_contrast_loss(Var logits, bool include_positive) {
    Tape& tape = *logits.tape;
    const Tensor& S = tape.value(logits);
    const std::size_t B = S.rows();
    if (S.cols() != B) throw DimensionError("contrast logits must be square, got " + shape_string(S.shape()));
    if (B < 2) throw ContractError("contrastive loss needs a batch of at least 2");
    const std::size_t none = B;

    Tensor colmajor = Tensor::matrix(B, B);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) colmajor(i, j) = S(j, i);

    Tensor row_w = Tensor::matrix(B, B);
    Tensor col_w = Tensor::matrix(B, B);  // col_w(i, j): weight of S(j, i)
    std::vector<double> w;
    double loss = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        const double lse_row = detail::masked_logsumexp(S.row(i), include_positive ? none : i, w);
        std::copy(w.begin(), w.end(), row_w.row(i).begin());
        const double lse_col = detail::masked_logsumexp(colmajor.row(i), include_positive ? none : i, w);
        std::copy(w.begin(), w.end(), col_w.row(i).begin());
        loss += -((S(i, i) - lse_row) + (S(i, i) - lse_col));
    }
    loss *= 0.5;

    return tape.record(Tensor::scalar(loss), {logits.index},
                       [il = logits.index, row_w = std::move(row_w), col_w = std::move(col_w)](Tape& t, std::size_t self) {
                           const double g = t.grad_of(self)[0];
                           Tensor* gs = t.grad_slot(il);
                           const std::size_t B = row_w.rows();
                           for (std::size_t i = 0; i < B; ++i) {
                               (*gs)(i, i) -= g;
                               for (std::size_t j = 0; j < B; ++j) {
                                   (*gs)(i, j) += 0.5 * g * row_w(i, j);
                                   (*gs)(j, i) += 0.5 * g * col_w(i, j);
                               }
                           }
                       });
}

/**
 * Cross-structural contrastive loss between the temporal (Zm) and spatial (Zt)
 * projections of the same B samples. Positive pair: row i of both. The
 * default denominator excludes the positive pair, which allows negative values.
 */
inline Var contrastive_loss(Var Zm, Var Zt, double tau, bool include_positive = false) {
    if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
    Tape& tape = *Zm.tape;
    if (tape.value(Zm).shape() != tape.value(Zt).shape())
        throw DimensionError("contrastive loss: embeddings " + shape_string(tape.value(Zm).shape()) + " and " +
                             shape_string(tape.value(Zt).shape()));
    if (tape.value(Zm).rows() < 2) throw ContractError("contrastive loss needs a batch of at least 2");
    Var sims = matmul(normalize_rows(Zm), transpose(normalize_rows(Zt)));
    return pair_contrast_loss(scale(sims, 1.0 / tau), include_positive);
}

/// r = F_M (+) F_T, row-wise.
inline Var fuse(Var temporal, Var spatial) { return concat_cols({temporal, spatial}); }

/// Row-wise softmax(r W + b); W is dim(r) x C.
inline Var classify(Var r, Var weight, Var bias) { return softmax_rows(add_row_vector(matmul(r, weight), bias)); }

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over rows of -log(clamp(P[i, y_i], 1e-12, 1)).
inline Var cross_entropy(Var probs, std::span<const std::size_t> labels) {
    Tape& tape = *probs.tape;
    const Tensor& P = tape.value(probs);
    if (P.rows() != labels.size())
        throw DimensionError("cross_entropy: " + std::to_string(P.rows()) + " predictions for " +
                             std::to_string(labels.size()) + " labels");
    const double inv_b = 1.0 / static_cast<double>(labels.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= P.cols()) throw DimensionError("label " + std::to_string(labels[i]) + " out of range");
        loss -= std::log(std::clamp(P(i, labels[i]), kProbabilityFloor, 1.0));
    }
    loss *= inv_b;
    std::vector<std::size_t> y(labels.begin(), labels.end());
    return tape.record(Tensor::scalar(loss), {probs.index}, [ip = probs.index, y = std::move(y), inv_b](Tape& t, std::size_t self) {
        const double g = t.grad_of(self)[0];
        const Tensor& P = t.value(ip);
        Tensor* gp = t.grad_slot(ip);
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double p = P(i, y[i]);
            if (p >= kProbabilityFloor && p <= 1.0) (*gp)(i, y[i]) -= g * inv_b / p;
        }
    });
}

/// L_CE + L_CL with unit weights.
inline Var total_loss(Var ce, Var cl) { return add(ce, cl); }

}  // namespace hights::objectives
