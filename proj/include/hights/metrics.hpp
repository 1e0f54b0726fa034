#pragma once

#include "hights/checkpoint.hpp"
#include "hights/model.hpp"

#include "json.hpp"

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace hights {

/// Fraction of predictions equal to their labels.
inline double accuracy(std::span<const std::size_t> predicted, std::span<const std::size_t> labels) {
    if (labels.empty()) throw DataError("accuracy of an empty set");
    if (predicted.size() != labels.size()) throw DimensionError("prediction/label count mismatch");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hit += predicted[i] == labels[i];
    return static_cast<double>(hit) / static_cast<double>(labels.size());
}

inline std::vector<std::size_t> labels_of(std::span<const PreparedSample> samples) {
    std::vector<std::size_t> y;
    y.reserve(samples.size());
    for (const auto& s : samples) y.push_back(s.label);
    return y;
}

inline double evaluate_accuracy(const HighTsModel& model, std::span<const PreparedSample> test) {
    if (test.empty()) throw DataError("cannot evaluate on an empty test set");
    return accuracy(model.predict(test).predicted, labels_of(test));
}

/// counts[true][predicted].
inline std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const std::size_t> predicted,
                                                              std::span<const std::size_t> labels,
                                                              std::size_t num_classes) {
    std::vector<std::vector<std::size_t>> m(num_classes, std::vector<std::size_t>(num_classes, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) ++m.at(labels[i]).at(predicted[i]);
    return m;
}

/**
 * Davies-Bouldin index with Euclidean distances: the mean over classes of the
 * worst (S_i + S_j) / |c_i - c_j|, where S_i is the mean distance of class i's
 * points to its centroid c_i. Coincident centroids give +infinity.
 */
inline double davies_bouldin(const Tensor& embeddings, std::span<const std::size_t> labels) {
    const std::size_t n = embeddings.rows();
    const std::size_t dim = embeddings.cols();
    if (labels.size() != n) throw DimensionError("one label per embedding row is required");
    std::size_t classes = 0;
    for (std::size_t y : labels) classes = std::max(classes, y + 1);
    std::vector<std::vector<double>> centroid(classes, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> count(classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
        ++count[labels[i]];
        auto row = embeddings.row(i);
        for (std::size_t k = 0; k < dim; ++k) centroid[labels[i]][k] += row[k];
    }
    std::vector<std::size_t> present;
    for (std::size_t c = 0; c < classes; ++c)
        if (count[c] > 0) {
            present.push_back(c);
            for (double& v : centroid[c]) v /= static_cast<double>(count[c]);
        }
    if (present.size() < 2) throw DataError("Davies-Bouldin index needs at least two non-empty classes");

    auto dist = [dim](std::span<const double> a, std::span<const double> b) {
        double s = 0.0;
        for (std::size_t k = 0; k < dim; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
        return std::sqrt(s);
    };
    std::vector<double> scatter(classes, 0.0);
    for (std::size_t i = 0; i < n; ++i) scatter[labels[i]] += dist(embeddings.row(i), centroid[labels[i]]);
    for (std::size_t c : present) scatter[c] /= static_cast<double>(count[c]);

    double total = 0.0;
    for (std::size_t i : present) {
        double worst = 0.0;
        for (std::size_t j : present) {
            if (i == j) continue;
            const double sep = dist(centroid[i], centroid[j]);
            const double ratio =
                sep > 0.0 ? (scatter[i] + scatter[j]) / sep : std::numeric_limits<double>::infinity();
            worst = std::max(worst, ratio);
        }
        total += worst;
    }
    return total / static_cast<double>(present.size());
}

/// CSV with header "label,r_0,...,r_{D-1}" and 9 significant digits.
inline std::string embeddings_csv(const Tensor& representation, std::span<const std::size_t> labels) {
    std::string out = "label";
    for (std::size_t k = 0; k < representation.cols(); ++k) out += ",r_" + std::to_string(k);
    out += '\n';
    char buf[64];
    for (std::size_t i = 0; i < representation.rows(); ++i) {
        out += std::to_string(labels[i]);
        for (double v : representation.row(i)) {
            std::snprintf(buf, sizeof buf, ",%.9g", v);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

inline void export_embeddings(const HighTsModel& model, std::span<const PreparedSample> data,
                              const std::filesystem::path& path) {
    const auto pred = model.predict(data);
    try {
        write_file_atomic(path, embeddings_csv(pred.representation, labels_of(data)));
    } catch (const std::exception& e) {
        throw DataError(std::string("cannot export embeddings: ") + e.what());
    }
}

struct MetricsReport {
    std::string dataset;
    std::vector<std::uint64_t> seeds;
    std::vector<double> accuracies;
    double mean = 0.0;
    double std_dev = 0.0;
    double dbi = 0.0;
    TrainConfig config;
    std::optional<double> wall_clock_seconds;
    /// Published accuracy for the dataset, when known.
    std::optional<double> reference_accuracy;
    std::optional<double> reference_std;

    void finalize() {
        const double n = static_cast<double>(accuracies.size());
        mean = 0.0;
        for (double a : accuracies) mean += a;
        mean = accuracies.empty() ? 0.0 : mean / n;
        double var = 0.0;
        for (double a : accuracies) var += (a - mean) * (a - mean);
        std_dev = accuracies.size() < 2 ? 0.0 : std::sqrt(var / n);
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"dataset", dataset},
                         {"seeds", seeds},
                         {"accuracies", accuracies},
                         {"mean", mean},
                         {"std", std_dev},
                         {"dbi", std::isfinite(dbi) ? nlohmann::json(dbi) : nlohmann::json("inf")},
                         {"dbi_space", "raw"},
                         {"config", config}};
        if (wall_clock_seconds) j["wall_clock_seconds"] = *wall_clock_seconds;
        if (reference_accuracy) j["reference_accuracy"] = *reference_accuracy;
        if (reference_std) j["reference_std"] = *reference_std;
        return j;
    }
};

}  // namespace hights
