#pragma once

#include "hights/errors.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hights {

/// Hyperparameters, seeds, and ablation switches of one training run.
struct TrainConfig {
    std::vector<std::size_t> scales{1, 2, 3};
    std::size_t vertices = 20;
    std::size_t latent_dim = 32;
    /// Shared contrast-space width; 0 means "same as latent_dim".
    std::size_t contrast_dim = 0;
    std::size_t heads = 4;
    /// Feed-forward width; 0 means 4 * latent_dim.
    std::size_t ff_dim = 0;
    std::size_t mp_layers = 2;
    double tau = 0.2;
    double lr = 2e-4;
    std::size_t batch = 64;
    std::size_t epochs = 300;
    std::size_t patience = 50;
    std::uint64_t seed = 0;
    double cutoff_frac = 0.10;
    /// When set, replaces the per-sample percentile cutoff.
    std::optional<double> fixed_cutoff;
    double val_frac = 0.25;
    bool znormalize = true;
    bool contrast_include_positive = false;

    bool use_cl = true;
    bool use_2simplex = true;
    bool use_1simplex = true;
    bool use_scale3 = true;
    bool use_scale2 = true;
    bool temporal_only = false;
    bool spatial_only = false;

    bool has_temporal() const { return !spatial_only; }
    bool has_spatial() const { return !temporal_only; }
    bool contrast_active() const { return use_cl && has_temporal() && has_spatial(); }

    std::size_t effective_contrast_dim() const { return contrast_dim ? contrast_dim : latent_dim; }
    std::size_t effective_ff_dim() const { return ff_dim ? ff_dim : 4 * latent_dim; }

    /// Scales left after the w/o_3-scale / w/o_2-scale switches.
    std::vector<std::size_t> active_scales() const {
        std::size_t keep = scales.size();
        if (!use_scale2) keep = std::min<std::size_t>(keep, 1);
        else if (!use_scale3) keep = std::min<std::size_t>(keep, 2);
        return {scales.begin(), scales.begin() + static_cast<std::ptrdiff_t>(keep)};
    }

    /// Highest simplex dimension used by the spatial branch.
    std::size_t max_simplex_dim() const {
        if (!use_1simplex) return 0;
        if (!use_2simplex) return 1;
        return 2;
    }

    std::size_t temporal_dim() const { return has_temporal() ? active_scales().size() * latent_dim : 0; }
    std::size_t spatial_dim() const { return has_spatial() ? (max_simplex_dim() + 1) * latent_dim : 0; }
    std::size_t representation_dim() const { return temporal_dim() + spatial_dim(); }

    /// Throws ConfigError on out-of-range values; `length` is the series length when known.
    void validate(std::size_t length = 0) const {
        auto fail = [](const std::string& m) { throw ConfigError(m); };
        if (temporal_only && spatial_only) fail("temporal_only and spatial_only are mutually exclusive");
        if (has_temporal() && scales.empty()) fail("at least one scale is required");
        for (std::size_t s : scales)
            if (s == 0) fail("scales must be >= 1");
        if (latent_dim == 0) fail("latent dim must be >= 1");
        if (heads == 0 || latent_dim % heads != 0)
            fail("latent dim " + std::to_string(latent_dim) + " must be divisible by heads " + std::to_string(heads));
        if (mp_layers < 1 || mp_layers > 3) fail("mp_layers must be in [1, 3]");
        if (!(tau > 0.0)) fail("tau must be positive");
        if (!(lr >= 0.0)) fail("lr must be non-negative");
        if (batch == 0) fail("batch must be >= 1");
        if (vertices < 2) fail("vertices must be >= 2");
        if (!(cutoff_frac > 0.0 && cutoff_frac < 1.0)) fail("cutoff fraction must lie in (0, 1)");
        if (!(val_frac > 0.0 && val_frac < 1.0)) fail("validation fraction must lie in (0, 1)");
        if (length) {
            if (has_spatial() && vertices > length)
                fail("vertices " + std::to_string(vertices) + " exceed series length " + std::to_string(length));
            if (has_temporal())
                for (std::size_t s : active_scales())
                    if (s > length) fail("scale " + std::to_string(s) + " exceeds series length " + std::to_string(length));
        }
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"scales", c.scales},
                       {"vertices", c.vertices},
                       {"latent_dim", c.latent_dim},
                       {"contrast_dim", c.contrast_dim},
                       {"heads", c.heads},
                       {"ff_dim", c.ff_dim},
                       {"mp_layers", c.mp_layers},
                       {"tau", c.tau},
                       {"lr", c.lr},
                       {"batch", c.batch},
                       {"epochs", c.epochs},
                       {"patience", c.patience},
                       {"seed", c.seed},
                       {"cutoff_frac", c.cutoff_frac},
                       {"fixed_cutoff", c.fixed_cutoff ? nlohmann::json(*c.fixed_cutoff) : nlohmann::json(nullptr)},
                       {"val_frac", c.val_frac},
                       {"znormalize", c.znormalize},
                       {"contrast_include_positive", c.contrast_include_positive},
                       {"use_cl", c.use_cl},
                       {"use_2simplex", c.use_2simplex},
                       {"use_1simplex", c.use_1simplex},
                       {"use_scale3", c.use_scale3},
                       {"use_scale2", c.use_scale2},
                       {"temporal_only", c.temporal_only},
                       {"spatial_only", c.spatial_only}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.scales = j.value("scales", d.scales);
    c.vertices = j.value("vertices", d.vertices);
    c.latent_dim = j.value("latent_dim", d.latent_dim);
    c.contrast_dim = j.value("contrast_dim", d.contrast_dim);
    c.heads = j.value("heads", d.heads);
    c.ff_dim = j.value("ff_dim", d.ff_dim);
    c.mp_layers = j.value("mp_layers", d.mp_layers);
    c.tau = j.value("tau", d.tau);
    c.lr = j.value("lr", d.lr);
    c.batch = j.value("batch", d.batch);
    c.epochs = j.value("epochs", d.epochs);
    c.patience = j.value("patience", d.patience);
    c.seed = j.value("seed", d.seed);
    c.cutoff_frac = j.value("cutoff_frac", d.cutoff_frac);
    if (j.contains("fixed_cutoff") && !j.at("fixed_cutoff").is_null()) c.fixed_cutoff = j.at("fixed_cutoff").get<double>();
    else c.fixed_cutoff.reset();
    c.val_frac = j.value("val_frac", d.val_frac);
    c.znormalize = j.value("znormalize", d.znormalize);
    c.contrast_include_positive = j.value("contrast_include_positive", d.contrast_include_positive);
    c.use_cl = j.value("use_cl", d.use_cl);
    c.use_2simplex = j.value("use_2simplex", d.use_2simplex);
    c.use_1simplex = j.value("use_1simplex", d.use_1simplex);
    c.use_scale3 = j.value("use_scale3", d.use_scale3);
    c.use_scale2 = j.value("use_scale2", d.use_scale2);
    c.temporal_only = j.value("temporal_only", d.temporal_only);
    c.spatial_only = j.value("spatial_only", d.spatial_only);
}

namespace detail {

inline std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

inline std::string normalize_key(std::string key) {
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    std::replace(key.begin(), key.end(), '-', '_');
    return key;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
        throw ConfigError("invalid value '" + text + "' for " + key);
    return v;
}

inline bool parse_bool(const std::string& key, std::string text) {
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (text == "1" || text == "true" || text == "yes" || text == "on") return true;
    if (text == "0" || text == "false" || text == "no" || text == "off") return false;
    throw ConfigError("invalid boolean '" + text + "' for " + key);
}

}  // namespace detail

/// Parses a comma-separated list of positive integers, e.g. "1,2,3".
inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item.empty()) continue;
        out.push_back(detail::parse_number<std::size_t>(key, item));
    }
    if (out.empty()) throw ConfigError("empty list for " + key);
    return out;
}

/// Applies one key=value setting. Keys accept '-' or '_' and an optional "--".
/// Returns false for keys that are not TrainConfig fields.
inline bool apply_setting(TrainConfig& c, std::string key, const std::string& raw) {
    key = detail::normalize_key(std::move(key));
    const std::string v = detail::trim(raw);
    using detail::parse_bool;
    using detail::parse_number;
    if (key == "scales") c.scales = parse_size_list(key, v);
    else if (key == "vertices") c.vertices = parse_number<std::size_t>(key, v);
    else if (key == "latent_dim") c.latent_dim = parse_number<std::size_t>(key, v);
    else if (key == "contrast_dim") c.contrast_dim = parse_number<std::size_t>(key, v);
    else if (key == "heads") c.heads = parse_number<std::size_t>(key, v);
    else if (key == "ff_dim") c.ff_dim = parse_number<std::size_t>(key, v);
    else if (key == "mp_layers") c.mp_layers = parse_number<std::size_t>(key, v);
    else if (key == "tau") c.tau = parse_number<double>(key, v);
    else if (key == "lr") c.lr = parse_number<double>(key, v);
    else if (key == "batch") c.batch = parse_number<std::size_t>(key, v);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, v);
    else if (key == "patience") c.patience = parse_number<std::size_t>(key, v);
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "cutoff_frac") c.cutoff_frac = parse_number<double>(key, v);
    else if (key == "fixed_cutoff") c.fixed_cutoff = parse_number<double>(key, v);
    else if (key == "val_frac") c.val_frac = parse_number<double>(key, v);
    else if (key == "znormalize") c.znormalize = parse_bool(key, v);
    else if (key == "contrast_include_positive") c.contrast_include_positive = parse_bool(key, v);
    else if (key == "use_cl") c.use_cl = parse_bool(key, v);
    else if (key == "use_2simplex") c.use_2simplex = parse_bool(key, v);
    else if (key == "use_1simplex") c.use_1simplex = parse_bool(key, v);
    else if (key == "use_scale3") c.use_scale3 = parse_bool(key, v);
    else if (key == "use_scale2") c.use_scale2 = parse_bool(key, v);
    else if (key == "temporal_only") c.temporal_only = parse_bool(key, v);
    else if (key == "spatial_only") c.spatial_only = parse_bool(key, v);
    else return false;
    return true;
}

/// Flat key=value lines; '#' starts a comment. Returns the entries in file order.
inline std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + " is not key=value: " + line);
        entries.emplace_back(detail::normalize_key(detail::trim(line.substr(0, eq))), detail::trim(line.substr(eq + 1)));
    }
    return entries;
}

}  // namespace hights
