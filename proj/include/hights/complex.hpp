#pragma once

#include "hights/tensor.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace hights::complex {

/// n patches of equal length L_p = floor(L/n), stored as an n x L_p matrix.
struct PointCloud {
    Tensor points;

    std::size_t size() const { return points.rows(); }
    std::size_t patch_length() const { return points.cols(); }
    std::span<const double> point(std::size_t i) const { return points.row(i); }
};

inline PointCloud patch(std::span<const double> x, std::size_t n) {
    if (n == 0) throw ConfigError("vertex count must be at least 1");
    if (n > x.size())
        throw ConfigError("vertex count " + std::to_string(n) + " exceeds series length " + std::to_string(x.size()));
    const std::size_t lp = x.size() / n;
    std::vector<double> data(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n * lp));
    return PointCloud{Tensor({n, lp}, std::move(data))};
}

/// Pairwise cosine similarity. A zero-norm point has similarity 0 to every
/// other point and 1 to itself.
inline Tensor similarity_matrix(const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double v : cloud.point(i)) s += v * v;
        norms[i] = std::sqrt(s);
    }
    Tensor sim = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        sim(i, i) = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            double value = 0.0;
            if (norms[i] > 0.0 && norms[j] > 0.0) {
                double dot = 0.0;
                auto a = cloud.point(i);
                auto b = cloud.point(j);
                for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
                value = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
            }
            sim(i, j) = value;
            sim(j, i) = value;
        }
    }
    return sim;
}

/// Linear-interpolated quantile of a sample (position p * (N - 1) in sorted order).
inline double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw ConfigError("quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

/// Cutoff keeping the top fraction q of the off-diagonal similarities, i.e.
/// their (1 - q)-quantile.
inline double cutoff_from_percentile(const Tensor& sim, double q) {
    if (!(q > 0.0 && q < 1.0)) throw ConfigError("cutoff fraction must lie in (0, 1)");
    const std::size_t n = sim.rows();
    if (n < 2) throw ConfigError("cutoff needs at least two points");
    std::vector<double> pairs;
    pairs.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) pairs.push_back(sim(i, j));
    return quantile(std::move(pairs), 1.0 - q);
}

using Simplex = std::vector<std::uint32_t>;

/// Rips complex up to dimension 2 with simplexes in lexicographic order.
struct SimplicialComplex {
    std::array<std::vector<Simplex>, 3> simplexes;
    double cutoff = 0.0;

    std::size_t count(std::size_t k) const { return simplexes.at(k).size(); }
    const std::vector<Simplex>& operator[](std::size_t k) const { return simplexes.at(k); }

    /// Row index of a stored simplex, or count(k) when absent.
    std::size_t index_of(const Simplex& s) const {
        const auto& list = simplexes.at(s.size() - 1);
        auto it = std::lower_bound(list.begin(), list.end(), s);
        if (it == list.end() || *it != s) return list.size();
        return static_cast<std::size_t>(it - list.begin());
    }

    bool contains(const Simplex& s) const { return !s.empty() && s.size() <= 3 && index_of(s) < count(s.size() - 1); }

    /// Fraction of vertex pairs joined by an edge.
    double edge_density() const {
        const double n = static_cast<double>(count(0));
        return n < 2 ? 0.0 : static_cast<double>(count(1)) / (n * (n - 1) / 2.0);
    }
};

/// Vertices, edges with similarity >= cutoff, and triangles whose three edges
/// all exist.
inline SimplicialComplex build_rips(const Tensor& sim, double cutoff) {
    const std::size_t n = sim.rows();
    SimplicialComplex K;
    K.cutoff = cutoff;
    std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
    for (std::size_t i = 0; i < n; ++i) K.simplexes[0].push_back({static_cast<std::uint32_t>(i)});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (sim(i, j) >= cutoff) {
                adj[i][j] = adj[j][i] = 1;
                K.simplexes[1].push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)});
            }
    for (const Simplex& e : K.simplexes[1])
        for (std::size_t l = e[1] + 1; l < n; ++l)
            if (adj[e[0]][l] && adj[e[1]][l]) K.simplexes[2].push_back({e[0], e[1], static_cast<std::uint32_t>(l)});
    return K;
}

inline SimplicialComplex build_rips(const PointCloud& cloud, double cutoff) {
    return build_rips(similarity_matrix(cloud), cutoff);
}

/// Small dense integer matrix for combinatorial operators.
struct IntMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<int> data;

    IntMatrix() = default;
    IntMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

    int& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    int operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    friend bool operator==(const IntMatrix&, const IntMatrix&) = default;
};

inline IntMatrix multiply(const IntMatrix& a, const IntMatrix& b) {
    if (a.cols != b.rows)
        throw DimensionError("integer matmul: " + std::to_string(a.rows) + "x" + std::to_string(a.cols) + " by " +
                             std::to_string(b.rows) + "x" + std::to_string(b.cols));
    IntMatrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const int v = a(i, k);
            if (v == 0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += v * b(k, j);
        }
    return out;
}

inline IntMatrix transpose(const IntMatrix& a) {
    IntMatrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

inline void require_dim(std::size_t k, std::size_t lo, std::size_t hi) {
    if (k < lo || k > hi)
        throw ConfigError("simplex dimension " + std::to_string(k) + " outside [" + std::to_string(lo) + ", " +
                          std::to_string(hi) + "]");
}

/// Faces of s obtained by omitting one vertex, ordered by the omitted position.
inline std::vector<Simplex> faces(const Simplex& s) {
    std::vector<Simplex> out;
    for (std::size_t omit = 0; omit < s.size(); ++omit) {
        Simplex f;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != omit) f.push_back(s[i]);
        out.push_back(std::move(f));
    }
    return out;
}

/**
 * A_0 joins vertices that span an edge (upper adjacency). For k >= 1, A_k
 * joins k-simplexes sharing a (k-1)-face (lower adjacency). Zero diagonal.
 */
inline IntMatrix adjacency(const SimplicialComplex& K, std::size_t k) {
    require_dim(k, 0, 2);
    const std::size_t m = K.count(k);
    IntMatrix A(m, m);
    if (k == 0) {
        for (const Simplex& e : K[1]) A(e[0], e[1]) = A(e[1], e[0]) = 1;
        return A;
    }
    std::map<Simplex, std::vector<std::size_t>> cofaces;
    for (std::size_t i = 0; i < m; ++i)
        for (Simplex& f : faces(K[k][i])) cofaces[std::move(f)].push_back(i);
    for (const auto& [face, members] : cofaces)
        for (std::size_t a = 0; a < members.size(); ++a)
            for (std::size_t b = a + 1; b < members.size(); ++b) A(members[a], members[b]) = A(members[b], members[a]) = 1;
    return A;
}

/// Diagonal degree matrix: upper degree for vertices, lower degree for k >= 1.
inline IntMatrix degree(const SimplicialComplex& K, std::size_t k) {
    const IntMatrix A = adjacency(K, k);
    IntMatrix D(A.rows, A.cols);
    for (std::size_t i = 0; i < A.rows; ++i) {
        int s = 0;
        for (std::size_t j = 0; j < A.cols; ++j) s += A(i, j);
        D(i, i) = s;
    }
    return D;
}

/// Signed incidence B_k (rows: (k-1)-simplexes, cols: k-simplexes) under the
/// increasing-index orientation: the face omitting vertex i gets (-1)^i.
inline IntMatrix boundary_matrix(const SimplicialComplex& K, std::size_t k) {
    require_dim(k, 1, 2);
    IntMatrix B(K.count(k - 1), K.count(k));
    for (std::size_t col = 0; col < K.count(k); ++col) {
        const auto fs = faces(K[k][col]);
        for (std::size_t i = 0; i < fs.size(); ++i) {
            const std::size_t row = K.index_of(fs[i]);
            if (row >= B.rows) throw ContractError("complex is not closed under faces");
            B(row, col) = (i % 2 == 0) ? 1 : -1;
        }
    }
    return B;
}

}  // namespace hights::complex
