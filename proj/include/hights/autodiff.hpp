#pragma once

#include "hights/tensor.hpp"

#include <Eigen/Core>

#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hights {

/// A named learnable tensor together with its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(0.0); }
};

/// Insertion-ordered parameter registry with stable element addresses.
class ParameterSet {
  public:
    Parameter& add(std::string name, Tensor init) {
        for (const auto& p : params_)
            if (p.name == name) throw ContractError("duplicate parameter name " + name);
        params_.emplace_back(std::move(name), std::move(init));
        return params_.back();
    }

    Parameter* find(std::string_view name) {
        for (auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }
    const Parameter* find(std::string_view name) const {
        for (const auto& p : params_)
            if (p.name == name) return &p;
        return nullptr;
    }

    Parameter& at(std::string_view name) {
        if (Parameter* p = find(name)) return *p;
        throw ContractError("unknown parameter " + std::string(name));
    }

    std::deque<Parameter>& all() noexcept { return params_; }
    const std::deque<Parameter>& all() const noexcept { return params_; }
    std::size_t size() const noexcept { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

  private:
    std::deque<Parameter> params_;
};

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t index = 0;
};

/**
 * Reverse-mode computation record.
 *
 * Every primitive appends one node holding its output value and a closure that
 * propagates the node's gradient into its inputs. Nodes are appended in
 * evaluation order, so walking the list backwards is a valid topological
 * order. Parameters enter as leaves; `backward` adds the leaf gradient into
 * `Parameter::grad`.
 */
class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) { return push(std::move(value), false, nullptr, {}, {}); }

    /// Differentiable leaf that is not a model parameter (gradient readable via grad()).
    Var leaf(Tensor value) { return push(std::move(value), true, nullptr, {}, {}); }

    /// Binds a parameter as a leaf; repeated calls on one tape return the same node.
    Var param(Parameter& p) {
        if (auto it = bound_.find(&p); it != bound_.end()) return Var{this, it->second};
        Var v = push(p.value, true, &p, {}, {});
        bound_.emplace(&p, v.index);
        return v;
    }

    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
        bool rg = false;
        for (std::size_t i : inputs) rg = rg || nodes_[i].requires_grad;
        return push(std::move(value), rg, nullptr, std::move(inputs), rg ? std::move(fn) : BackwardFn{});
    }

    const Tensor& value(Var v) const { return nodes_.at(v.index).value; }
    const Tensor& value(std::size_t i) const { return nodes_[i].value; }

    /// Gradient of the last backward pass; zero-filled for nodes it did not reach.
    const Tensor& grad(Var v) const {
        const Node& n = nodes_.at(v.index);
        if (n.grad.size() != n.value.size())
            throw ContractError("gradient requested before backward() or for a constant");
        return n.grad;
    }

    bool requires_grad(std::size_t i) const { return nodes_[i].requires_grad; }

    /// Accumulation target for an input's gradient; nullptr for constants.
    Tensor* grad_slot(std::size_t i) {
        Node& n = nodes_[i];
        return n.requires_grad ? &n.grad : nullptr;
    }
    const Tensor& grad_of(std::size_t i) const { return nodes_[i].grad; }
    const std::vector<std::size_t>& inputs_of(std::size_t i) const { return nodes_[i].inputs; }

    std::size_t size() const noexcept { return nodes_.size(); }

    void backward(Var loss) {
        if (value(loss).size() != 1)
            throw ContractError("backward() needs a scalar loss, got shape " +
                                shape_string(value(loss).shape()));
        backward(loss, Tensor(value(loss).shape(), 1.0));
    }

    /// Vector-Jacobian product seeded with `seed` at `out`.
    void backward(Var out, const Tensor& seed) {
        if (out.tape != this) throw ContractError("Var belongs to a different tape");
        if (seed.shape() != value(out).shape())
            throw DimensionError("seed shape " + shape_string(seed.shape()) + " does not match output " +
                                 shape_string(value(out).shape()));
        for (std::size_t i = 0; i <= out.index; ++i) {
            Node& n = nodes_[i];
            if (n.requires_grad) n.grad = Tensor(n.value.shape());
        }
        Node& root = nodes_[out.index];
        if (!root.requires_grad) return;
        root.grad = seed;
        for (std::size_t i = out.index + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (n.requires_grad && n.backward) n.backward(*this, i);
        }
        for (std::size_t i = 0; i <= out.index; ++i) {
            Node& n = nodes_[i];
            if (n.param) n.param->grad += n.grad;
        }
    }

  private:
    Var push(Tensor value, bool rg, Parameter* p, std::vector<std::size_t> inputs, BackwardFn fn) {
        nodes_.push_back(Node{std::move(value), Tensor{}, rg, p, std::move(inputs), std::move(fn)});
        return Var{this, nodes_.size() - 1};
    }

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> bound_;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline CMapMat view(const Tensor& t) { return {t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }
inline MapMat view(Tensor& t) { return {t.data(), Eigen::Index(t.rows()), Eigen::Index(t.cols())}; }

inline Tape& same_tape(Var a, Var b) {
    if (a.tape == nullptr || a.tape != b.tape) throw ContractError("operands recorded on different tapes");
    return *a.tape;
}

inline void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

inline Var matmul(Var a, Var b) {
    Tape& tape = detail::same_tape(a, b);
    const Tensor& A = tape.value(a);
    const Tensor& B = tape.value(b);
    detail::require_matrix(A, "matmul");
    detail::require_matrix(B, "matmul");
    if (A.cols() != B.rows())
        throw DimensionError("matmul: inner dimensions disagree for " + shape_string(A.shape()) + " and " +
                             shape_string(B.shape()));
    Tensor out = Tensor::matrix(A.rows(), B.cols());
    if (!out.empty() && A.cols() > 0) detail::view(out).noalias() = detail::view(A) * detail::view(B);
    return tape.record(std::move(out), {a.index, b.index}, [ia = a.index, ib = b.index](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        if (G.empty()) return;
        if (Tensor* ga = t.grad_slot(ia); ga && ga->size())
            detail::view(*ga).noalias() += detail::view(G) * detail::view(t.value(ib)).transpose();
        if (Tensor* gb = t.grad_slot(ib); gb && gb->size())
            detail::view(*gb).noalias() += detail::view(t.value(ia)).transpose() * detail::view(G);
    });
}

inline Var transpose(Var a) {
    Tape& tape = *a.tape;
    const Tensor& A = tape.value(a);
    detail::require_matrix(A, "transpose");
    Tensor out = Tensor::matrix(A.cols(), A.rows());
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) out(j, i) = A(i, j);
    return tape.record(std::move(out), {a.index}, [ia = a.index](Tape& t, std::size_t self) {
        Tensor* ga = t.grad_slot(ia);
        const Tensor& G = t.grad_of(self);
        for (std::size_t i = 0; i < ga->rows(); ++i)
            for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += G(j, i);
    });
}

inline Var add(Var a, Var b) {
    Tape& tape = detail::same_tape(a, b);
    const Tensor& A = tape.value(a);
    const Tensor& B = tape.value(b);
    if (A.shape() != B.shape())
        throw DimensionError("add: shapes " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
    Tensor out = A;
    out += B;
    return tape.record(std::move(out), {a.index, b.index}, [ia = a.index, ib = b.index](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        if (Tensor* ga = t.grad_slot(ia)) *ga += G;
        if (Tensor* gb = t.grad_slot(ib)) *gb += G;
    });
}

inline Var mul(Var a, Var b) {
    Tape& tape = detail::same_tape(a, b);
    const Tensor& A = tape.value(a);
    const Tensor& B = tape.value(b);
    if (A.shape() != B.shape())
        throw DimensionError("mul: shapes " + shape_string(A.shape()) + " and " + shape_string(B.shape()));
    Tensor out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    return tape.record(std::move(out), {a.index, b.index}, [ia = a.index, ib = b.index](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        const Tensor& A = t.value(ia);
        const Tensor& B = t.value(ib);
        if (Tensor* ga = t.grad_slot(ia))
            for (std::size_t i = 0; i < G.size(); ++i) (*ga)[i] += G[i] * B[i];
        if (Tensor* gb = t.grad_slot(ib))
            for (std::size_t i = 0; i < G.size(); ++i) (*gb)[i] += G[i] * A[i];
    });
}

/// Adds a length-n row vector to every row of an m x n matrix.
inline Var add_row_vector(Var a, Var bias) {
    Tape& tape = detail::same_tape(a, bias);
    const Tensor& A = tape.value(a);
    const Tensor& b = tape.value(bias);
    detail::require_matrix(A, "add_row_vector");
    if (b.size() != A.cols())
        throw DimensionError("add_row_vector: bias " + shape_string(b.shape()) + " for matrix " +
                             shape_string(A.shape()));
    Tensor out = A;
    for (std::size_t i = 0; i < out.rows(); ++i)
        for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += b[j];
    return tape.record(std::move(out), {a.index, bias.index}, [ia = a.index, ib = bias.index](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        if (Tensor* ga = t.grad_slot(ia)) *ga += G;
        if (Tensor* gb = t.grad_slot(ib))
            for (std::size_t i = 0; i < G.rows(); ++i)
                for (std::size_t j = 0; j < G.cols(); ++j) (*gb)[j] += G(i, j);
    });
}

inline Var scale(Var a, double factor) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    for (double& v : out.values()) v *= factor;
    return tape.record(std::move(out), {a.index}, [ia = a.index, factor](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        Tensor* ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < G.size(); ++i) (*ga)[i] += factor * G[i];
    });
}

inline Var relu(Var a) {
    Tape& tape = *a.tape;
    Tensor out = tape.value(a);
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return tape.record(std::move(out), {a.index}, [ia = a.index](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        const Tensor& X = t.value(ia);
        Tensor* ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < G.size(); ++i)
            if (X[i] > 0.0) (*ga)[i] += G[i];
    });
}

inline Var sum(Var a) {
    Tape& tape = *a.tape;
    const Tensor& A = tape.value(a);
    double s = 0.0;
    for (double v : A.values()) s += v;
    return tape.record(Tensor::scalar(s), {a.index}, [ia = a.index](Tape& t, std::size_t self) {
        const double g = t.grad_of(self)[0];
        Tensor* ga = t.grad_slot(ia);
        for (double& v : ga->values()) v += g;
    });
}

/// Row-wise softmax, stabilized by subtracting each row's maximum.
inline Var softmax_rows(Var a) {
    Tape& tape = *a.tape;
    const Tensor& A = tape.value(a);
    detail::require_matrix(A, "softmax_rows");
    Tensor out = A;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto r = out.row(i);
        const double mx = *std::max_element(r.begin(), r.end());
        double z = 0.0;
        for (double& v : r) {
            v = std::exp(v - mx);
            z += v;
        }
        for (double& v : r) v /= z;
    }
    return tape.record(std::move(out), {a.index}, [ia = a.index](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        const Tensor& Y = t.value(self);
        Tensor* ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < Y.rows(); ++i) {
            auto y = Y.row(i);
            auto g = G.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) dot += g[j] * y[j];
            auto dx = ga->row(i);
            for (std::size_t j = 0; j < y.size(); ++j) dx[j] += y[j] * (g[j] - dot);
        }
    });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Per-row standardization followed by an affine gain/bias of length d.
inline Var layer_norm(Var a, Var gain, Var bias, double eps = kLayerNormEps) {
    Tape& tape = detail::same_tape(a, gain);
    detail::same_tape(a, bias);
    const Tensor& A = tape.value(a);
    detail::require_matrix(A, "layer_norm");
    const std::size_t m = A.rows();
    const std::size_t d = A.cols();
    if (tape.value(gain).size() != d || tape.value(bias).size() != d)
        throw DimensionError("layer_norm: gain/bias must have length " + std::to_string(d));
    if (!(eps > 0.0)) throw ConfigError("layer_norm eps must be positive");

    Tensor normalized = Tensor::matrix(m, d);
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto r = A.row(i);
        double mean = 0.0;
        for (double v : r) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : r) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) normalized(i, j) = (r[j] - mean) * inv_std[i];
    }
    const Tensor& g = tape.value(gain);
    const Tensor& b = tape.value(bias);
    Tensor out = Tensor::matrix(m, d);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) out(i, j) = normalized(i, j) * g[j] + b[j];

    return tape.record(
        std::move(out), {a.index, gain.index, bias.index},
        [ia = a.index, ig = gain.index, ib = bias.index, xhat = std::move(normalized),
         inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
            const Tensor& G = t.grad_of(self);
            const Tensor& g = t.value(ig);
            const std::size_t m = G.rows();
            const std::size_t d = G.cols();
            if (Tensor* gg = t.grad_slot(ig))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < d; ++j) (*gg)[j] += G(i, j) * xhat(i, j);
            if (Tensor* gb = t.grad_slot(ib))
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < d; ++j) (*gb)[j] += G(i, j);
            if (Tensor* ga = t.grad_slot(ia)) {
                std::vector<double> dxhat(d);
                for (std::size_t i = 0; i < m; ++i) {
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        dxhat[j] = G(i, j) * g[j];
                        s1 += dxhat[j];
                        s2 += dxhat[j] * xhat(i, j);
                    }
                    const double k = inv_std[i] / static_cast<double>(d);
                    for (std::size_t j = 0; j < d; ++j)
                        (*ga)(i, j) += k * (static_cast<double>(d) * dxhat[j] - s1 - xhat(i, j) * s2);
                }
            }
        });
}

/// Column-wise mean over rows, producing a 1 x n row. Zero rows yield zeros.
inline Var mean_rows(Var a) {
    Tape& tape = *a.tape;
    const Tensor& A = tape.value(a);
    detail::require_matrix(A, "mean_rows");
    const std::size_t m = A.rows();
    const std::size_t n = A.cols();
    Tensor out = Tensor::matrix(1, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += A(i, j);
    if (m > 0)
        for (double& v : out.values()) v /= static_cast<double>(m);
    return tape.record(std::move(out), {a.index}, [ia = a.index](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        Tensor* ga = t.grad_slot(ia);
        const std::size_t m = ga->rows();
        if (m == 0) return;
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < ga->cols(); ++j) (*ga)(i, j) += G[j] * inv;
    });
}

/// Horizontal concatenation of matrices sharing a row count.
inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols needs at least one operand");
    Tape& tape = *parts.front().tape;
    const std::size_t m = tape.value(parts.front()).rows();
    std::size_t total = 0;
    std::vector<std::size_t> inputs;
    for (Var p : parts) {
        detail::same_tape(parts.front(), p);
        const Tensor& v = tape.value(p);
        if (v.rows() != m)
            throw DimensionError("concat_cols: row counts differ (" + std::to_string(m) + " vs " +
                                 std::to_string(v.rows()) + ")");
        total += v.cols();
        inputs.push_back(p.index);
    }
    Tensor out = Tensor::matrix(m, total);
    std::size_t offset = 0;
    for (Var p : parts) {
        const Tensor& v = tape.value(p);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < v.cols(); ++j) out(i, offset + j) = v(i, j);
        offset += v.cols();
    }
    return tape.record(std::move(out), inputs, [](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        std::size_t offset = 0;
        for (std::size_t in : t.inputs_of(self)) {
            const std::size_t c = t.value(in).cols();
            if (Tensor* gi = t.grad_slot(in))
                for (std::size_t i = 0; i < G.rows(); ++i)
                    for (std::size_t j = 0; j < c; ++j) (*gi)(i, j) += G(i, offset + j);
            offset += c;
        }
    });
}

/// Vertical concatenation of matrices sharing a column count.
inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_rows needs at least one operand");
    Tape& tape = *parts.front().tape;
    const std::size_t n = tape.value(parts.front()).cols();
    std::size_t total = 0;
    std::vector<std::size_t> inputs;
    for (Var p : parts) {
        detail::same_tape(parts.front(), p);
        const Tensor& v = tape.value(p);
        if (v.cols() != n)
            throw DimensionError("concat_rows: column counts differ (" + std::to_string(n) + " vs " +
                                 std::to_string(v.cols()) + ")");
        total += v.rows();
        inputs.push_back(p.index);
    }
    std::vector<double> data;
    data.reserve(total * n);
    for (Var p : parts) {
        const auto vals = tape.value(p).values();
        data.insert(data.end(), vals.begin(), vals.end());
    }
    return tape.record(Tensor({total, n}, std::move(data)), inputs, [](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        std::size_t offset = 0;
        for (std::size_t in : t.inputs_of(self)) {
            const std::size_t len = t.value(in).size();
            if (Tensor* gi = t.grad_slot(in))
                for (std::size_t k = 0; k < len; ++k) (*gi)[k] += G[offset + k];
            offset += len;
        }
    });
}

inline constexpr double kNormFloor = 1e-12;

/// Scales every row to unit Euclidean norm; rows with norm below 1e-12 are
/// divided by 1e-12 instead.
inline Var normalize_rows(Var a) {
    Tape& tape = *a.tape;
    const Tensor& A = tape.value(a);
    detail::require_matrix(A, "normalize_rows");
    Tensor out = A;
    std::vector<double> norms(A.rows());
    for (std::size_t i = 0; i < A.rows(); ++i) {
        double s = 0.0;
        for (double v : A.row(i)) s += v * v;
        norms[i] = std::max(std::sqrt(s), kNormFloor);
        for (double& v : out.row(i)) v /= norms[i];
    }
    return tape.record(std::move(out), {a.index}, [ia = a.index, norms = std::move(norms)](Tape& t, std::size_t self) {
        const Tensor& G = t.grad_of(self);
        const Tensor& Y = t.value(self);
        Tensor* ga = t.grad_slot(ia);
        for (std::size_t i = 0; i < Y.rows(); ++i) {
            auto y = Y.row(i);
            auto g = G.row(i);
            double dot = 0.0;
            for (std::size_t j = 0; j < y.size(); ++j) dot += g[j] * y[j];
            const bool floored = norms[i] <= kNormFloor;
            auto dx = ga->row(i);
            for (std::size_t j = 0; j < y.size(); ++j)
                dx[j] += floored ? g[j] / norms[i] : (g[j] - y[j] * dot) / norms[i];
        }
    });
}

}  // namespace hights
