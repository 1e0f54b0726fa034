#pragma once

#include "hights/config.hpp"
#include "hights/model.hpp"

#include "json.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace hights {

class CheckpointError : public std::runtime_error {
  public:
    enum class Kind { NotACheckpoint, VersionMismatch, Truncated, Malformed, Io };

    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

  private:
    Kind kind_;
};

inline constexpr char kCheckpointMagic[4] = {'H', 'I', 'T', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::vector<std::pair<std::string, Tensor>> tensors;
    TrainConfig config;
    std::size_t series_length = 0;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;
    double best_val_accuracy = 0.0;
    std::size_t best_epoch = 0;

    nlohmann::json snapshot() const {
        return {{"config", config},
                {"series_length", series_length},
                {"num_classes", num_classes},
                {"seed", seed},
                {"best_val_accuracy", best_val_accuracy},
                {"best_epoch", best_epoch}};
    }
};

inline Checkpoint make_checkpoint(const HighTsModel& model, double best_val_accuracy = 0.0, std::size_t best_epoch = 0) {
    Checkpoint c;
    for (const auto& p : model.parameters().all()) c.tensors.emplace_back(p.name, p.value);
    c.config = model.config();
    c.series_length = model.series_length();
    c.num_classes = model.num_classes();
    c.seed = model.config().seed;
    c.best_val_accuracy = best_val_accuracy;
    c.best_epoch = best_epoch;
    return c;
}

/// Rebuilds a model with the checkpoint's architecture and copies its tensors in.
inline std::unique_ptr<HighTsModel> restore_model(const Checkpoint& c) {
    auto model = std::make_unique<HighTsModel>(c.config, c.series_length, c.num_classes);
    auto& params = model->parameters();
    if (params.size() != c.tensors.size())
        throw CheckpointError(CheckpointError::Kind::Malformed,
                              "checkpoint holds " + std::to_string(c.tensors.size()) + " tensors, model expects " +
                                  std::to_string(params.size()));
    for (const auto& [name, t] : c.tensors) {
        Parameter* p = params.find(name);
        if (!p) throw CheckpointError(CheckpointError::Kind::Malformed, "unexpected tensor " + name);
        if (p->value.shape() != t.shape())
            throw CheckpointError(CheckpointError::Kind::Malformed,
                                  "tensor " + name + " has shape " + shape_string(t.shape()) + ", model expects " +
                                      shape_string(p->value.shape()));
        p->value = t;
    }
    return model;
}

namespace detail {

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
  public:
    explicit Reader(std::string data) : data_(std::move(data)) {}

    template <class U>
    U get_le() {
        need(sizeof(U));
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool at_end() const { return pos_ == data_.size(); }
    std::size_t remaining() const { return data_.size() - pos_; }

  private:
    void need(std::size_t n) const {
        if (n > data_.size() - pos_)
            throw CheckpointError(CheckpointError::Kind::Truncated, "checkpoint is truncated");
    }

    std::string data_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Serialized checkpoint bytes (little-endian throughout).
inline std::string encode_checkpoint(const Checkpoint& c) {
    std::string out(kCheckpointMagic, 4);
    detail::put_le<std::uint32_t>(out, c.version);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));
    for (const auto& [name, t] : c.tensors) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t e : t.shape()) detail::put_le<std::uint64_t>(out, e);
        for (double v : t.values()) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
    const std::string json = c.snapshot().dump();
    detail::put_le<std::uint64_t>(out, json.size());
    out += json;
    return out;
}

inline Checkpoint decode_checkpoint(std::string bytes) {
    using Kind = CheckpointError::Kind;
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw CheckpointError(Kind::NotACheckpoint, "not a checkpoint (bad magic)");
    detail::Reader r(std::move(bytes));
    r.get_bytes(4);
    Checkpoint c;
    c.version = r.get_le<std::uint32_t>();
    if (c.version != kCheckpointVersion)
        throw CheckpointError(Kind::VersionMismatch, "unsupported checkpoint version " + std::to_string(c.version));
    const auto count = r.get_le<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto name_len = r.get_le<std::uint32_t>();
        std::string name = r.get_bytes(name_len);
        const auto rank = r.get_le<std::uint32_t>();
        if (rank == 0 || rank > 8) throw CheckpointError(Kind::Malformed, "bad rank for tensor " + name);
        Shape shape;
        std::size_t numel = 1;
        for (std::uint32_t k = 0; k < rank; ++k) {
            shape.push_back(static_cast<std::size_t>(r.get_le<std::uint64_t>()));
            numel *= shape.back();
        }
        if (numel > r.remaining() / 8) throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
        std::vector<double> data(numel);
        for (double& v : data) v = std::bit_cast<double>(r.get_le<std::uint64_t>());
        c.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    const auto json_len = r.get_le<std::uint64_t>();
    if (json_len > r.remaining()) throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
    const std::string json_text = r.get_bytes(static_cast<std::size_t>(json_len));
    if (!r.at_end()) throw CheckpointError(Kind::Malformed, "trailing bytes after checkpoint");
    try {
        const auto j = nlohmann::json::parse(json_text);
        c.config = j.at("config").get<TrainConfig>();
        c.series_length = j.at("series_length").get<std::size_t>();
        c.num_classes = j.at("num_classes").get<std::size_t>();
        c.seed = j.at("seed").get<std::uint64_t>();
        c.best_val_accuracy = j.at("best_val_accuracy").get<double>();
        c.best_epoch = j.at("best_epoch").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(Kind::Malformed, std::string("bad config snapshot: ") + e.what());
    }
    return c;
}

/// Writes via a temporary file and rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError(CheckpointError::Kind::Io, "cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError(CheckpointError::Kind::Io, "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    write_file_atomic(path, encode_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointError::Kind::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str());
}

}  // namespace hights
