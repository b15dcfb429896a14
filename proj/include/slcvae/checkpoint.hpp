#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "slcvae/adam.hpp"
#include "slcvae/config.hpp"
#include "slcvae/corpus.hpp"
#include "slcvae/model.hpp"

namespace slcvae {

constexpr char kCheckpointMagic[4] = {'S', 'L', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Everything a training run persists: the model, optimizer moments, the
// vocabulary and the loop counters needed for exact resume.
struct TrainState {
    TrainConfig config;
    Vocab vocab;
    std::unique_ptr<Model> model;
    Adam adam;
    std::uint64_t epochs_done = 0;
    std::uint64_t global_step = 0;   // batches processed, both phases
    std::uint64_t cvae_steps = 0;    // drives the KLA / lambda ramp
    std::uint64_t label_steps = 0;
    std::int64_t resolved_kla_steps = -1;

    TrainState() : adam(1e-4) {}
};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline void write_doubles(std::ostream& out, const std::vector<double>& v) {
    for (double d : v) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, 8);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        out.write(reinterpret_cast<const char*>(b), 8);
    }
}

inline bool read_doubles(std::istream& in, std::vector<double>& v) {
    for (double& d : v) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        if (!in) return false;
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        std::memcpy(&d, &bits, 8);
    }
    return true;
}

}  // namespace detail

// Layout: "SLCK", u32 version (LE), newline-terminated compact JSON
// manifest, then raw little-endian f64 payloads in directory order.
// Offsets in the directory are relative to the payload start.
inline void save_checkpoint(const TrainState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("save_checkpoint: cannot open " + path);
    }

    // Directory order: every parameter value, then its adam moments.
    struct Entry {
        std::string name;
        const Tensor* tensor;
    };
    std::vector<Entry> entries;
    const auto& states = state.adam.states();
    for (Parameter* p : state.model->all_params()) {
        entries.push_back({p->name, &p->value});
        auto it = states.find(p->name);
        if (it != states.end() && it->second.m.size() > 0) {
            entries.push_back({"adam.m:" + p->name, &it->second.m});
            entries.push_back({"adam.v:" + p->name, &it->second.v});
        }
    }

    nlohmann::ordered_json manifest;
    manifest["config"] = to_json(state.config);
    manifest["vocab"] = state.vocab.tokens();
    auto dir = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const auto& e : entries) {
        nlohmann::ordered_json t;
        t["name"] = e.name;
        t["shape"] = e.tensor->shape();
        t["offset"] = offset;
        dir.push_back(std::move(t));
        offset += 8 * e.tensor->size();
    }
    manifest["tensors"] = std::move(dir);
    auto adam_t = nlohmann::ordered_json::object();
    for (const auto& [name, s] : states) adam_t[name] = s.t;
    manifest["adam_t"] = std::move(adam_t);
    manifest["epochs_done"] = state.epochs_done;
    manifest["global_step"] = state.global_step;
    manifest["cvae_steps"] = state.cvae_steps;
    manifest["label_steps"] = state.label_steps;
    manifest["resolved_kla_steps"] = state.resolved_kla_steps;

    out.write(kCheckpointMagic, 4);
    detail::write_u32(out, kCheckpointVersion);
    const std::string m = manifest.dump();
    out.write(m.data(), static_cast<std::streamsize>(m.size()));
    out.put('\n');
    for (const auto& e : entries) detail::write_doubles(out, e.tensor->vec());
    if (!out) {
        throw std::runtime_error("save_checkpoint: write failed for " + path);
    }
}

inline TrainState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_checkpoint: cannot open " + path);
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw std::runtime_error("load_checkpoint: corrupt header (bad magic) in " + path);
    }
    const std::uint32_t version = detail::read_u32(in);
    if (!in || version != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw std::runtime_error("load_checkpoint: corrupt header (missing manifest) in " +
                                 path);
    }
    nlohmann::json manifest;
    TrainState state;
    try {
        manifest = nlohmann::json::parse(line);
        state.config = config_from_json(manifest.at("config"));
        Vocab vocab;
        const auto tokens = manifest.at("vocab").get<std::vector<std::string>>();
        for (std::size_t i = 4; i < tokens.size(); ++i) vocab.add(tokens[i]);
        state.vocab = vocab;
        state.epochs_done = manifest.at("epochs_done").get<std::uint64_t>();
        state.global_step = manifest.at("global_step").get<std::uint64_t>();
        state.cvae_steps = manifest.at("cvae_steps").get<std::uint64_t>();
        state.label_steps = manifest.at("label_steps").get<std::uint64_t>();
        state.resolved_kla_steps = manifest.at("resolved_kla_steps").get<std::int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: corrupt manifest in " + path + ": " +
                                 e.what());
    }
    state.adam = Adam(state.config.lr);

    // Rebuild the model skeleton, then overwrite every tensor from the payload.
    state.model = std::make_unique<Model>(state.config, state.vocab.size(),
                                          Rng(state.config.seed));

    nlohmann::json tensors;
    try {
        tensors = manifest.at("tensors");
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("load_checkpoint: corrupt manifest in " + path + ": " +
                                 e.what());
    }
    for (const auto& entry : tensors) {
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        Tensor t(shape);
        if (!detail::read_doubles(in, t.vec())) {
            throw std::runtime_error("load_checkpoint: truncated payload at tensor " +
                                     name + " in " + path);
        }
        if (name.rfind("adam.m:", 0) == 0) {
            state.adam.states()[name.substr(7)].m = std::move(t);
        } else if (name.rfind("adam.v:", 0) == 0) {
            state.adam.states()[name.substr(7)].v = std::move(t);
        } else {
            Parameter* p = state.model->store().find(name);
            if (!p) {
                throw std::runtime_error("load_checkpoint: unknown tensor " + name +
                                         " in " + path);
            }
            if (p->value.shape() != t.shape()) {
                throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
            }
            p->value = std::move(t);
        }
    }
    for (const auto& [name, t] : manifest.at("adam_t").items()) {
        state.adam.states()[name].t = t.get<std::uint64_t>();
    }
    return state;
}

}  // namespace slcvae
