#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace slcvae {

enum class Mode { Seq2Seq, Cvae, CvaeBow, Slcvae };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::Seq2Seq: return "seq2seq";
        case Mode::Cvae: return "cvae";
        case Mode::CvaeBow: return "cvae-bow";
        case Mode::Slcvae: return "slcvae";
    }
    return "?";
}

inline Mode mode_from_string(const std::string& s) {
    if (s == "seq2seq") return Mode::Seq2Seq;
    if (s == "cvae") return Mode::Cvae;
    if (s == "cvae-bow") return Mode::CvaeBow;
    if (s == "slcvae") return Mode::Slcvae;
    throw std::invalid_argument("unknown mode: " + s +
                                " (expected seq2seq|cvae|cvae-bow|slcvae)");
}

inline bool has_latent(Mode m) { return m != Mode::Seq2Seq; }

struct TrainConfig {
    Mode mode = Mode::Slcvae;
    std::size_t embed_dim = 32;
    std::size_t hidden_dim = 32;
    std::size_t latent_dim = 8;
    double lr = 1e-4;
    std::size_t batch_size = 64;
    std::size_t epochs = 30;
    // < 0 means one epoch of batches, resolved at train start.
    std::int64_t kla_anneal_steps = -1;
    double wd_rate = 0.25;
    double lambda_max = 1.0;
    std::size_t m_cvae_steps = 1;
    std::size_t n_label_steps = 1;
    std::uint64_t seed = 1;

    void validate() const {
        if (embed_dim == 0 || hidden_dim == 0 || latent_dim == 0 || batch_size == 0) {
            throw std::invalid_argument("config: dims and batch size must be positive");
        }
        if (m_cvae_steps < 1 || n_label_steps < 1) {
            throw std::invalid_argument("config: m and n must be >= 1");
        }
        if (wd_rate < 0.0 || wd_rate > 1.0) {
            throw std::invalid_argument("config: wd-rate must be in [0, 1]");
        }
    }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
    nlohmann::ordered_json j;
    j["mode"] = to_string(c.mode);
    j["embed_dim"] = c.embed_dim;
    j["hidden_dim"] = c.hidden_dim;
    j["latent_dim"] = c.latent_dim;
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["epochs"] = c.epochs;
    j["kla_anneal_steps"] = c.kla_anneal_steps;
    j["wd_rate"] = c.wd_rate;
    j["lambda_max"] = c.lambda_max;
    j["m_cvae_steps"] = c.m_cvae_steps;
    j["n_label_steps"] = c.n_label_steps;
    j["seed"] = c.seed;
    return j;
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.mode = mode_from_string(j.at("mode").get<std::string>());
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
    c.latent_dim = j.at("latent_dim").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.kla_anneal_steps = j.at("kla_anneal_steps").get<std::int64_t>();
    c.wd_rate = j.at("wd_rate").get<double>();
    c.lambda_max = j.at("lambda_max").get<double>();
    c.m_cvae_steps = j.at("m_cvae_steps").get<std::size_t>();
    c.n_label_steps = j.at("n_label_steps").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace slcvae
