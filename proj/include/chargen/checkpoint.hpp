// chargen: character-level data-to-text generation toolkit
//
// checkpoint.hpp - single-file versioned checkpoint container with named
// tensors and an integrity digest, plus the binary decode-trace format.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "chargen/model.hpp"
#include "chargen/tensor.hpp"

namespace chargen {

struct CorruptArtifactError : std::runtime_error {
    explicit CorruptArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

constexpr char kCheckpointMagic[8] = {'C', 'G', 'C', 'K', 'P', 'T', '0', '1'};
constexpr char kTraceMagic[8] = {'C', 'G', 'T', 'R', 'C', '0', '0', '1'};

/// FNV-1a 64-bit, used as the integrity digest.
class Fnv1a {
public:
    void update(const void* data, std::size_t n) {
        const unsigned char* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            state_ ^= p[i];
            state_ *= 0x100000001b3ULL;
        }
    }
    std::uint64_t digest() const { return state_; }

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

struct HashedWriter {
    std::ofstream out;
    Fnv1a hash;

    void write(const void* data, std::size_t n) {
        out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        hash.update(data, n);
    }
    void write_u64(std::uint64_t v) { write(&v, sizeof v); }
    void write_doubles(const std::vector<double>& v) {
        write(v.data(), v.size() * sizeof(double));
    }
};

struct HashedReader {
    std::ifstream in;
    Fnv1a hash;

    void read(void* data, std::size_t n) {
        in.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n))
            throw CorruptArtifactError("truncated file");
        hash.update(data, n);
    }
    std::uint64_t read_u64() {
        std::uint64_t v;
        read(&v, sizeof v);
        return v;
    }
    void read_doubles(std::vector<double>& v, std::size_t n) {
        v.resize(n);
        read(v.data(), n * sizeof(double));
    }
};

}  // namespace detail

/// Save every parameter (and optionally the optimizer moments) together
/// with the model configuration and an arbitrary config echo.
inline void save_checkpoint(const std::string& path, const ParameterStore& store,
                            const ModelConfig& config, const nlohmann::json& run_config_echo,
                            const AdamState* adam = nullptr) {
    nlohmann::json header;
    header["format_version"] = 1;
    header["alphabet"] = {{"size", Alphabet::size()},
                          {"start", Alphabet::kStart},
                          {"end", Alphabet::kEnd},
                          {"unknown", Alphabet::kUnknown}};
    header["model"] = {{"alphabet_size", config.alphabet_size},
                       {"embedding_size", config.embedding_size},
                       {"hidden_size", config.hidden_size},
                       {"align_size", config.align_size},
                       {"copy_enabled", config.copy_enabled},
                       {"shift_enabled", config.shift_enabled},
                       {"sum_loss", config.sum_loss},
                       {"max_decode_length", config.max_decode_length}};
    header["run_config"] = run_config_echo;
    auto& tensors = header["tensors"] = nlohmann::json::array();
    for (const auto& [name, t] : store.items())
        tensors.push_back({{"name", name}, {"shape", t->shape}});
    header["has_optimizer_state"] = adam != nullptr;
    if (adam) header["optimizer_step"] = adam->step_count();

    detail::HashedWriter w;
    w.out.open(path, std::ios::binary);
    if (!w.out) throw CorruptArtifactError("cannot write checkpoint: " + path);
    w.write(detail::kCheckpointMagic, sizeof detail::kCheckpointMagic);
    std::string head = header.dump();
    w.write_u64(head.size());
    w.write(head.data(), head.size());
    for (const auto& [name, t] : store.items()) w.write_doubles(t->value);
    if (adam) {
        auto& moments = const_cast<AdamState*>(adam)->moments();
        for (const auto& [name, t] : store.items()) {
            auto it = moments.find(name);
            if (it == moments.end()) {
                std::vector<double> z(t->size(), 0.0);
                w.write_doubles(z);
                w.write_doubles(z);
            } else {
                w.write_doubles(it->second.first);
                w.write_doubles(it->second.second);
            }
        }
    }
    std::uint64_t digest = w.hash.digest();
    w.out.write(reinterpret_cast<const char*>(&digest), sizeof digest);
    if (!w.out) throw CorruptArtifactError("error while writing checkpoint: " + path);
}

struct LoadedCheckpoint {
    ModelConfig config;
    nlohmann::json run_config_echo;
    ParameterStore store;
    ModelParams model;
    bool has_optimizer_state = false;
    long long optimizer_step = 0;
    AdamState adam;
};

/// Load and verify a checkpoint; parameters are reconstructed bit-exactly.
inline LoadedCheckpoint load_checkpoint(const std::string& path,
                                        const AdamConfig& adam_config = {}) {
    detail::HashedReader r;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw CorruptArtifactError("cannot open checkpoint: " + path);
    char magic[8];
    r.read(magic, sizeof magic);
    if (std::memcmp(magic, detail::kCheckpointMagic, sizeof magic) != 0)
        throw CorruptArtifactError("not a checkpoint file: " + path);
    std::uint64_t head_len = r.read_u64();
    std::string head(head_len, '\0');
    r.read(head.data(), head_len);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(head);
    } catch (const nlohmann::json::exception&) {
        throw CorruptArtifactError("corrupt checkpoint header: " + path);
    }
    if (header.value("format_version", 0) != 1)
        throw CorruptArtifactError("unsupported checkpoint version");

    LoadedCheckpoint ck;
    ck.adam = AdamState(adam_config);
    const auto& mc = header["model"];
    ck.config.alphabet_size = mc["alphabet_size"];
    ck.config.embedding_size = mc["embedding_size"];
    ck.config.hidden_size = mc["hidden_size"];
    ck.config.align_size = mc["align_size"];
    ck.config.copy_enabled = mc["copy_enabled"];
    ck.config.shift_enabled = mc["shift_enabled"];
    ck.config.sum_loss = mc["sum_loss"];
    ck.config.max_decode_length = mc["max_decode_length"];
    ck.run_config_echo = header["run_config"];

    std::mt19937_64 rng(0);
    ck.model = make_model(ck.store, ck.config, rng);
    // the header's tensor list must match the reconstructed layout
    const auto& tensors = header["tensors"];
    if (tensors.size() != ck.store.items().size())
        throw CorruptArtifactError("checkpoint tensor list does not match model layout");
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& [name, t] = ck.store.items()[i];
        if (tensors[i]["name"] != name ||
            tensors[i]["shape"].get<std::vector<std::size_t>>() != t->shape)
            throw CorruptArtifactError("checkpoint tensor mismatch: " + name);
    }
    for (const auto& [name, t] : ck.store.items()) r.read_doubles(t->value, t->size());
    ck.has_optimizer_state = header.value("has_optimizer_state", false);
    if (ck.has_optimizer_state) {
        ck.optimizer_step = header.value("optimizer_step", 0LL);
        ck.adam.set_step_count(ck.optimizer_step);
        for (const auto& [name, t] : ck.store.items()) {
            auto& mv = ck.adam.moments()[name];
            r.read_doubles(mv.first, t->size());
            r.read_doubles(mv.second, t->size());
        }
    }
    std::uint64_t expected = r.hash.digest();
    std::uint64_t stored;
    r.in.read(reinterpret_cast<char*>(&stored), sizeof stored);
    if (r.in.gcount() != sizeof stored || stored != expected)
        throw CorruptArtifactError("checkpoint digest mismatch: " + path);
    return ck;
}

// ---------------------------------------------------------------------------
// Trace files

struct TraceRecord {
    std::vector<std::size_t> source;  // input character indices
    DecoderTrace trace;
};

inline void save_traces(const std::string& path, const std::vector<TraceRecord>& traces) {
    detail::HashedWriter w;
    w.out.open(path, std::ios::binary);
    if (!w.out) throw CorruptArtifactError("cannot write trace file: " + path);
    w.write(detail::kTraceMagic, sizeof detail::kTraceMagic);
    w.write_u64(traces.size());
    for (const auto& rec : traces) {
        w.write_u64(rec.source.size());
        for (std::size_t c : rec.source) w.write_u64(c);
        w.write_u64(rec.trace.steps.size());
        w.write_u64(rec.trace.hit_end_symbol ? 1 : 0);
        for (const auto& step : rec.trace.steps) {
            if (step.attention.size() != rec.source.size())
                throw ContractError("save_traces: ragged attention row");
            w.write_u64(step.emitted);
            w.write(&step.p_gen, sizeof step.p_gen);
            w.write_doubles(step.attention);
        }
    }
    std::uint64_t digest = w.hash.digest();
    w.out.write(reinterpret_cast<const char*>(&digest), sizeof digest);
    if (!w.out) throw CorruptArtifactError("error while writing trace file: " + path);
}

inline std::vector<TraceRecord> load_traces(const std::string& path) {
    detail::HashedReader r;
    r.in.open(path, std::ios::binary);
    if (!r.in) throw CorruptArtifactError("cannot open trace file: " + path);
    char magic[8];
    r.read(magic, sizeof magic);
    if (std::memcmp(magic, detail::kTraceMagic, sizeof magic) != 0)
        throw CorruptArtifactError("not a trace file: " + path);
    std::uint64_t count = r.read_u64();
    std::vector<TraceRecord> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        TraceRecord rec;
        std::uint64_t t_x = r.read_u64();
        rec.source.resize(t_x);
        for (auto& c : rec.source) c = r.read_u64();
        rec.trace.source_length = t_x;
        std::uint64_t t_y = r.read_u64();
        rec.trace.hit_end_symbol = r.read_u64() != 0;
        for (std::uint64_t s = 0; s < t_y; ++s) {
            TraceStep step;
            step.emitted = r.read_u64();
            r.read(&step.p_gen, sizeof step.p_gen);
            r.read_doubles(step.attention, t_x);
            rec.trace.steps.push_back(std::move(step));
        }
        out.push_back(std::move(rec));
    }
    std::uint64_t expected = r.hash.digest();
    std::uint64_t stored;
    r.in.read(reinterpret_cast<char*>(&stored), sizeof stored);
    if (r.in.gcount() != sizeof stored || stored != expected)
        throw CorruptArtifactError("trace file digest mismatch: " + path);
    return out;
}

}  // namespace chargen
