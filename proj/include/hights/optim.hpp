#pragma once

#include "hights/autodiff.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace hights {

/// Adam moments for a ParameterSet, in the set's insertion order.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t step = 0;
    std::vector<Tensor> first;
    std::vector<Tensor> second;

    AdamState() = default;
    explicit AdamState(const ParameterSet& params) {
        for (const auto& p : params.all()) {
            first.emplace_back(p.value.shape());
            second.emplace_back(p.value.shape());
        }
    }
};

/// One bias-corrected Adam update from the accumulated `Parameter::grad`s.
/// Throws NumericError naming the first parameter with a non-finite gradient,
/// before any parameter is modified.
inline void adam_step(ParameterSet& params, AdamState& state, double lr) {
    if (state.first.size() != params.size()) throw DimensionError("Adam state does not match the parameter set");
    for (const auto& p : params.all())
        if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p.name);
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    std::size_t idx = 0;
    for (auto& p : params.all()) {
        Tensor& m = state.first[idx];
        Tensor& v = state.second[idx];
        ++idx;
        if (m.shape() != p.value.shape()) throw DimensionError("Adam moment shape mismatch for " + p.name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace hights
