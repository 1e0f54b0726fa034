#pragma once

#include "hights/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hights {

struct TimeSeriesSample {
    std::vector<double> values;
    std::size_t label = 0;
};

/// Labeled univariate series of a common length with contiguous labels.
struct Dataset {
    std::vector<TimeSeriesSample> samples;
    std::size_t num_classes = 0;
    std::size_t length = 0;
    /// Original label value -> contiguous index.
    std::map<double, std::size_t> label_map;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= line.size()) {
        std::size_t end = line.find(delim, start);
        if (end == std::string_view::npos) end = line.size();
        std::string_view field = line.substr(start, end - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
        if (!(delim == '\t' && field.empty() && end == line.size() && !out.empty())) out.push_back(field);
        start = end + 1;
    }
    return out;
}

inline std::optional<double> parse_real(std::string_view s) {
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

struct RawRow {
    double label;
    std::vector<double> values;
};

inline std::vector<RawRow> read_rows(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::vector<RawRow> rows;
    std::string line;
    std::size_t line_no = 0;
    std::optional<char> delim;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        if (!delim) delim = line.find('\t') != std::string::npos ? '\t' : ',';
        auto fields = split_fields(line, *delim);
        if (fields.size() < 2) throw DataError("row has no series values", line_no);
        if (width == 0) width = fields.size();
        if (fields.size() != width)
            throw DataError("ragged row: expected " + std::to_string(width) + " fields, got " +
                                std::to_string(fields.size()),
                            line_no);
        RawRow row;
        auto label = parse_real(fields[0]);
        if (!label) throw DataError("non-numeric label '" + std::string(fields[0]) + "'", line_no);
        row.label = *label;
        row.values.reserve(fields.size() - 1);
        for (std::size_t i = 1; i < fields.size(); ++i) {
            auto v = parse_real(fields[i]);
            if (!v) throw DataError("non-numeric value '" + std::string(fields[i]) + "'", line_no);
            row.values.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("empty data file " + path.string());
    return rows;
}

inline Dataset assemble(std::vector<RawRow> rows, const std::map<double, std::size_t>& label_map) {
    Dataset d;
    d.label_map = label_map;
    d.num_classes = label_map.size();
    d.length = rows.front().values.size();
    d.samples.reserve(rows.size());
    for (auto& r : rows) {
        if (r.values.size() != d.length) throw DataError("series lengths differ between files");
        d.samples.push_back({std::move(r.values), label_map.at(r.label)});
    }
    return d;
}

inline std::map<double, std::size_t> contiguous_labels(const std::vector<double>& labels) {
    std::vector<double> sorted = labels;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::map<double, std::size_t> map;
    for (std::size_t i = 0; i < sorted.size(); ++i) map.emplace(sorted[i], i);
    return map;
}

}  // namespace detail

/**
 * Reads a UCR-style file: one sample per line, label first, then the series.
 *
 * The delimiter (tab or comma) is sniffed from the first non-blank line. Labels
 * are remapped to 0-based indices in ascending order of their original values.
 */
inline Dataset load_tsv(const std::filesystem::path& path) {
    auto rows = detail::read_rows(path);
    std::vector<double> labels;
    for (const auto& r : rows) labels.push_back(r.label);
    return detail::assemble(std::move(rows), detail::contiguous_labels(labels));
}

/// Loads a train/test pair with one label map built over the union of both files.
inline std::pair<Dataset, Dataset> load_train_test(const std::filesystem::path& train_path,
                                                   const std::filesystem::path& test_path) {
    auto train_rows = detail::read_rows(train_path);
    auto test_rows = detail::read_rows(test_path);
    std::vector<double> labels;
    for (const auto& r : train_rows) labels.push_back(r.label);
    for (const auto& r : test_rows) labels.push_back(r.label);
    const auto map = detail::contiguous_labels(labels);
    auto train = detail::assemble(std::move(train_rows), map);
    auto test = detail::assemble(std::move(test_rows), map);
    if (train.length != test.length)
        throw DataError("series length differs between " + train_path.string() + " (" + std::to_string(train.length) +
                        ") and " + test_path.string() + " (" + std::to_string(test.length) + ")");
    return {std::move(train), std::move(test)};
}

/// Writes the dataset back in tab-separated form using original label values.
inline void write_tsv(const Dataset& d, const std::filesystem::path& path) {
    std::vector<double> original(d.num_classes);
    for (const auto& [orig, idx] : d.label_map) original[idx] = orig;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out.precision(17);
    for (const auto& s : d.samples) {
        out << original.at(s.label);
        for (double v : s.values) out << '\t' << v;
        out << '\n';
    }
}

/// Per-series z-normalization with population standard deviation.
inline std::vector<double> znormalize_series(std::vector<double> x) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    if (sd < 1e-12) {
        std::fill(x.begin(), x.end(), 0.0);
        return x;
    }
    for (double& v : x) v = (v - mean) / sd;
    return x;
}

inline Dataset znormalize(Dataset d) {
    for (auto& s : d.samples) s.values = znormalize_series(std::move(s.values));
    return d;
}

inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.num_classes = d.num_classes;
    out.length = d.length;
    out.label_map = d.label_map;
    out.samples.reserve(indices.size());
    for (std::size_t i : indices) out.samples.push_back(d.samples.at(i));
    return out;
}

struct SplitResult {
    Dataset first;
    Dataset second;
    std::vector<std::size_t> first_indices;
    std::vector<std::size_t> second_indices;
    /// True when some class had fewer than two samples and stratification was abandoned.
    bool unstratified = false;
};

/**
 * Shuffled split with round(frac * n) samples in `second`.
 *
 * Stratified: each class contributes round(frac * n_c) samples to `second`,
 * then the total is corrected to round(frac * n) by moving samples from the
 * classes with the largest rounding remainders.
 */
inline SplitResult split_train_val(const Dataset& d, double frac, std::uint64_t seed) {
    if (!(frac > 0.0 && frac < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
    const std::size_t n = d.size();
    const auto target = static_cast<std::size_t>(std::llround(frac * static_cast<double>(n)));
    std::mt19937_64 rng(seed);

    std::vector<std::vector<std::size_t>> by_class(d.num_classes);
    for (std::size_t i = 0; i < n; ++i) by_class.at(d.samples[i].label).push_back(i);
    bool stratify = true;
    for (const auto& c : by_class)
        if (!c.empty() && c.size() < 2) stratify = false;

    SplitResult res;
    res.unstratified = !stratify;
    std::vector<std::size_t> second, first;
    if (stratify) {
        std::vector<std::size_t> take(by_class.size());
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            const double exact = frac * static_cast<double>(by_class[c].size());
            take[c] = static_cast<std::size_t>(std::floor(exact));
            assigned += take[c];
            remainders.emplace_back(exact - std::floor(exact), c);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; assigned < target && r < remainders.size(); ++r) {
            const std::size_t c = remainders[r].second;
            if (take[c] < by_class[c].size()) {
                ++take[c];
                ++assigned;
            }
        }
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            auto members = by_class[c];
            std::shuffle(members.begin(), members.end(), rng);
            second.insert(second.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take[c]));
            first.insert(first.end(), members.begin() + static_cast<std::ptrdiff_t>(take[c]), members.end());
        }
        std::shuffle(second.begin(), second.end(), rng);
        std::shuffle(first.begin(), first.end(), rng);
    } else {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        second.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(target));
        first.assign(order.begin() + static_cast<std::ptrdiff_t>(target), order.end());
    }
    res.first = subset(d, first);
    res.second = subset(d, second);
    res.first_indices = std::move(first);
    res.second_indices = std::move(second);
    return res;
}

/// One epoch's worth of index batches; every index appears exactly once.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                     bool shuffle) {
    if (batch_size == 0) throw ConfigError("batch size must be at least 1");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    return out;
}

inline std::vector<std::vector<std::size_t>> batches(const Dataset& d, std::size_t batch_size, std::uint64_t seed,
                                                     bool shuffle) {
    return batches(d.size(), batch_size, seed, shuffle);
}

/**
 * Two-class synthetic set: class 0 is a sine with random phase/frequency plus
 * Gaussian noise (sd 0.3), class 1 is unit white noise. Classes alternate.
 */
inline Dataset make_sine_vs_noise(std::size_t count, std::size_t length, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::uniform_real_distribution<double> cycles(2.0, 5.0);
    Dataset d;
    d.num_classes = 2;
    d.length = length;
    d.label_map = {{0.0, 0}, {1.0, 1}};
    for (std::size_t i = 0; i < count; ++i) {
        TimeSeriesSample s;
        s.label = i % 2;
        s.values.resize(length);
        if (s.label == 0) {
            const double ph = phase(rng);
            const double f = cycles(rng);
            for (std::size_t t = 0; t < length; ++t)
                s.values[t] = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) /
                                           static_cast<double>(length) +
                                       ph) +
                              0.3 * noise(rng);
        } else {
            for (double& v : s.values) v = noise(rng);
        }
        d.samples.push_back(std::move(s));
    }
    return d;
}

}  // namespace hights
