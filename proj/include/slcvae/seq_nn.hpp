#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "slcvae/autodiff.hpp"
#include "slcvae/corpus.hpp"
#include "slcvae/rng.hpp"

namespace slcvae {

// Owns every Parameter of a model. Creation order is fixed by construction
// order, which pins the init rng stream and the checkpoint layout.
class ParamStore {
public:
    Parameter& create(const std::string& name, std::vector<std::size_t> shape,
                      double init_scale, Rng& rng) {
        Tensor t(std::move(shape));
        if (init_scale > 0.0) {
            for (auto& v : t.vec()) v = (rng.uniform() * 2.0 - 1.0) * init_scale;
        }
        for (const auto& p : params_) {
            if (p->name == name) {
                throw std::logic_error("ParamStore: duplicate parameter name " + name);
            }
        }
        params_.push_back(std::make_unique<Parameter>(name, std::move(t)));
        return *params_.back();
    }

    std::vector<Parameter*> all() const {
        std::vector<Parameter*> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p.get());
        return out;
    }

    Parameter* find(const std::string& name) const {
        for (const auto& p : params_) {
            if (p->name == name) return p.get();
        }
        return nullptr;
    }

private:
    std::vector<std::unique_ptr<Parameter>> params_;
};

struct Linear {
    Parameter* weight = nullptr;  // [in x out]
    Parameter* bias = nullptr;    // [out]

    Linear() = default;
    Linear(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
           Rng& rng) {
        const double k = 1.0 / std::sqrt(static_cast<double>(in));
        weight = &store.create(name + ".weight", {in, out}, k, rng);
        bias = &store.create(name + ".bias", {out}, 0.0, rng);
    }

    Var apply(const Var& x) const { return add_bias(matmul(x, leaf(*weight)), leaf(*bias)); }

    void collect(std::vector<Parameter*>& out) const {
        out.push_back(weight);
        out.push_back(bias);
    }
};

struct EmbeddingTable {
    Parameter* weights = nullptr;  // [V x E]

    EmbeddingTable() = default;
    EmbeddingTable(ParamStore& store, const std::string& name, std::size_t vocab,
                   std::size_t embed, Rng& rng) {
        weights = &store.create(name, {vocab, embed}, 0.1, rng);
    }

    Var lookup(const std::vector<std::size_t>& ids) const {
        return gather_rows(leaf(*weights), ids);
    }

    void collect(std::vector<Parameter*>& out) const { out.push_back(weights); }
};

// ---- GRU ----

struct GruCellParams {
    Linear gates;      // concat(x, h) -> [2H] (update z, reset r)
    Linear candidate;  // concat(x, r*h) -> [H]
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;

    GruCellParams() = default;
    GruCellParams(ParamStore& store, const std::string& name, std::size_t in,
                  std::size_t hidden, Rng& rng)
        : gates(store, name + ".gates", in + hidden, 2 * hidden, rng),
          candidate(store, name + ".candidate", in + hidden, hidden, rng),
          input_dim(in),
          hidden_dim(hidden) {}

    void collect(std::vector<Parameter*>& out) const {
        gates.collect(out);
        candidate.collect(out);
    }
};

// x_t [B x in], h_prev [B x H] -> h [B x H].
// z, r = sigmoid(W [x, h] + b); hcand = tanh(Wc [x, r*h] + bc);
// h = (1 - z) * h_prev + z * hcand.
inline Var gru_cell(const Var& x_t, const Var& h_prev, const GruCellParams& p) {
    if (x_t->value.cols() != p.input_dim || h_prev->value.cols() != p.hidden_dim) {
        throw std::invalid_argument("gru_cell: got x " + x_t->value.shape_str() + ", h " +
                                    h_prev->value.shape_str() + "; cell expects in=" +
                                    std::to_string(p.input_dim) + " hidden=" +
                                    std::to_string(p.hidden_dim));
    }
    const std::size_t h = p.hidden_dim;
    Var zr = sigmoid(p.gates.apply(concat_cols(x_t, h_prev)));
    Var z = slice_cols(zr, 0, h);
    Var r = slice_cols(zr, h, h);
    Var cand = tanh_v(p.candidate.apply(concat_cols(x_t, mul(r, h_prev))));
    return add(sub(h_prev, mul(z, h_prev)), mul(z, cand));
}

// Fixed two layers per the model family this implements.
struct GruStack {
    std::vector<GruCellParams> layers;
    std::size_t hidden_dim = 0;

    GruStack() = default;
    GruStack(ParamStore& store, const std::string& name, std::size_t input_dim,
             std::size_t hidden, std::size_t num_layers, Rng& rng)
        : hidden_dim(hidden) {
        for (std::size_t l = 0; l < num_layers; ++l) {
            layers.emplace_back(store, name + ".layer" + std::to_string(l),
                                l == 0 ? input_dim : hidden, hidden, rng);
        }
    }

    std::size_t num_layers() const { return layers.size(); }

    // One time step through all layers; `states` is updated in place.
    Var step(const Var& x_t, std::vector<Var>& states) const {
        Var input = x_t;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            states[l] = gru_cell(input, states[l], layers[l]);
            input = states[l];
        }
        return input;
    }

    std::vector<Var> zero_states(std::size_t batch) const {
        std::vector<Var> s;
        for (std::size_t l = 0; l < layers.size(); ++l)
            s.push_back(constant(Tensor({batch, hidden_dim})));
        return s;
    }

    void collect(std::vector<Parameter*>& out) const {
        for (const auto& l : layers) l.collect(out);
    }
};

// ---- bidirectional encoder ----

struct BiEncoder {
    GruStack forward;
    GruStack backward_;

    BiEncoder() = default;
    BiEncoder(ParamStore& store, const std::string& name, std::size_t input_dim,
              std::size_t hidden, std::size_t num_layers, Rng& rng)
        : forward(store, name + ".fwd", input_dim, hidden, num_layers, rng),
          backward_(store, name + ".bwd", input_dim, hidden, num_layers, rng) {}

    void collect(std::vector<Parameter*>& out) const {
        forward.collect(out);
        backward_.collect(out);
    }
};

namespace detail {

// 1 for live positions, 0 for padding, broadcast to hidden width.
inline Var step_mask(const std::vector<std::size_t>& lens, std::size_t t,
                     std::size_t width) {
    Tensor m({lens.size(), width});
    for (std::size_t b = 0; b < lens.size(); ++b) {
        if (t < lens[b]) {
            for (std::size_t c = 0; c < width; ++c) m.at(b, c) = 1.0;
        }
    }
    return constant(std::move(m));
}

inline Var masked_update(const Var& h_new, const Var& h_prev, const Var& mask) {
    return add(mul(mask, h_new), sub(h_prev, mul(mask, h_prev)));
}

inline std::vector<std::size_t> column(const std::vector<std::vector<std::size_t>>& m,
                                       std::size_t t) {
    std::vector<std::size_t> out(m.size());
    for (std::size_t b = 0; b < m.size(); ++b) out[b] = m[b][t];
    return out;
}

}  // namespace detail

// Runs the forward and backward stacks over a padded batch and concatenates
// the final top-layer states into a [B x 2H] summary.
inline Var encode_bidirectional(const std::vector<std::vector<std::size_t>>& ids,
                                const std::vector<std::size_t>& lens,
                                const EmbeddingTable& table, const BiEncoder& enc) {
    if (ids.empty() || ids[0].empty()) {
        throw std::invalid_argument("encode_bidirectional: empty sequence batch");
    }
    for (std::size_t b = 0; b < lens.size(); ++b) {
        if (lens[b] == 0) {
            throw std::invalid_argument("encode_bidirectional: empty sequence at row " +
                                        std::to_string(b));
        }
    }
    const std::size_t batch = ids.size();
    const std::size_t steps = ids[0].size();
    const std::size_t h = enc.forward.hidden_dim;

    std::vector<Var> embedded;
    embedded.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t)
        embedded.push_back(table.lookup(detail::column(ids, t)));

    auto run = [&](const GruStack& stack, bool reversed) {
        std::vector<Var> states = stack.zero_states(batch);
        for (std::size_t i = 0; i < steps; ++i) {
            const std::size_t t = reversed ? steps - 1 - i : i;
            Var mask = detail::step_mask(lens, t, h);
            std::vector<Var> next = states;
            stack.step(embedded[t], next);
            for (std::size_t l = 0; l < states.size(); ++l)
                states[l] = detail::masked_update(next[l], states[l], mask);
        }
        return states.back();
    };

    return concat_cols(run(enc.forward, false), run(enc.backward_, true));
}

// Encoder summary plus sigma * standard normal noise, the stochastic
// seq2seq baseline.
inline Var encode_with_noise(const std::vector<std::vector<std::size_t>>& ids,
                             const std::vector<std::size_t>& lens,
                             const EmbeddingTable& table, const BiEncoder& enc,
                             double sigma, Rng& rng) {
    if (sigma < 0.0) {
        throw std::invalid_argument("encode_with_noise: sigma must be >= 0");
    }
    Var clean = encode_bidirectional(ids, lens, table, enc);
    if (sigma == 0.0) return clean;
    Tensor noise = randn(clean->value.shape(), rng);
    for (auto& v : noise.vec()) v *= sigma;
    return add(clean, constant(std::move(noise)));
}

// ---- decoder ----

struct Decoder {
    GruStack stack;
    Linear init_map;  // concat(context, z) -> [layers * H], tanh
    Linear out_proj;  // [H] -> [V]
    std::size_t hidden_dim = 0;

    Decoder() = default;
    Decoder(ParamStore& store, const std::string& name, std::size_t embed,
            std::size_t context_dim, std::size_t hidden, std::size_t num_layers,
            std::size_t vocab, Rng& rng)
        : stack(store, name + ".gru", embed, hidden, num_layers, rng),
          init_map(store, name + ".init", context_dim, num_layers * hidden, rng),
          out_proj(store, name + ".proj", hidden, vocab, rng),
          hidden_dim(hidden) {}

    // Initial per-layer hidden states from the (context, z) vector. The latent
    // enters the decoder here and only here.
    std::vector<Var> init_states(const Var& context_and_z) const {
        Var init = tanh_v(init_map.apply(context_and_z));
        std::vector<Var> states;
        for (std::size_t l = 0; l < stack.num_layers(); ++l)
            states.push_back(slice_cols(init, l * hidden_dim, hidden_dim));
        return states;
    }

    void collect(std::vector<Parameter*>& out) const {
        stack.collect(out);
        init_map.collect(out);
        out_proj.collect(out);
    }
};

struct TeacherForcedResult {
    Var loss;                     // scalar: mean over steps, mean over batch
    std::vector<Var> step_logits; // [B x V] per step
};

// Teacher-forced decode over a BOS/EOS framed padded target batch.
// Fed gold tokens after BOS are replaced by UNK with probability wd_rate.
inline TeacherForcedResult decode_teacher_forced(
    const Decoder& dec, const EmbeddingTable& table, const Var& context_and_z,
    const std::vector<std::vector<std::size_t>>& target_ids,
    const std::vector<std::size_t>& target_lens, double wd_rate, Rng& rng) {
    if (wd_rate < 0.0 || wd_rate > 1.0) {
        throw std::invalid_argument("decode_teacher_forced: wd_rate must be in [0, 1]");
    }
    const std::size_t batch = target_ids.size();
    const std::size_t steps = target_ids[0].size();
    for (std::size_t b = 0; b < batch; ++b) {
        if (target_lens[b] < 2 || target_ids[b][0] != Vocab::kBos ||
            target_ids[b][target_lens[b] - 1] != Vocab::kEos) {
            throw std::invalid_argument(
                "decode_teacher_forced: target row " + std::to_string(b) +
                " must be framed with BOS ... EOS");
        }
    }
    std::vector<Var> states = dec.init_states(context_and_z);
    TeacherForcedResult result;
    Var total;  // [B] accumulated per-row loss
    for (std::size_t t = 0; t + 1 < steps; ++t) {
        std::vector<std::size_t> fed = detail::column(target_ids, t);
        if (t > 0 && wd_rate > 0.0) {
            for (std::size_t b = 0; b < batch; ++b) {
                if (rng.uniform() < wd_rate) fed[b] = Vocab::kUnk;
            }
        }
        Var top = dec.stack.step(table.lookup(fed), states);
        Var logits = dec.out_proj.apply(top);
        result.step_logits.push_back(logits);
        std::vector<std::size_t> gold(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            gold[b] = (t + 1 < target_lens[b]) ? target_ids[b][t + 1]
                                               : static_cast<std::size_t>(-1);
        }
        Var ce = softmax_cross_entropy_rows(logits, gold);
        total = total ? add(total, ce) : ce;
    }
    // Mean over real steps per row, then mean over batch.
    std::vector<double> weights(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        weights[b] = 1.0 / (static_cast<double>(target_lens[b] - 1) *
                            static_cast<double>(batch));
    }
    result.loss = dot_const(total, weights);
    return result;
}

namespace detail {

inline std::vector<double> log_softmax(const Tensor& logits_row) {
    std::vector<double> out(logits_row.vec());
    double mx = out[0];
    for (double v : out) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : out) z += std::exp(v - mx);
    const double lz = std::log(z) + mx;
    for (auto& v : out) v -= lz;
    return out;
}

}  // namespace detail

// Greedy argmax decode for one example; ties go to the lowest token id.
// Returns content token ids (no BOS/EOS).
inline std::vector<std::size_t> decode_greedy(const Decoder& dec,
                                              const EmbeddingTable& table,
                                              const Var& context_and_z,
                                              std::size_t max_len) {
    if (max_len < 1) {
        throw std::invalid_argument("decode_greedy: max_len must be >= 1");
    }
    std::vector<Var> states = dec.init_states(context_and_z);
    std::vector<std::size_t> out;
    std::size_t token = Vocab::kBos;
    while (out.size() < max_len) {
        Var top = dec.stack.step(table.lookup({token}), states);
        Var proj = dec.out_proj.apply(top);
        const Tensor& logits = proj->value;
        // PAD and BOS are never generated; ties go to the lowest eligible id.
        std::size_t best = Vocab::kEos;
        for (std::size_t v = best + 1; v < logits.size(); ++v) {
            if (logits[v] > logits[best]) best = v;
        }
        if (best == Vocab::kEos) break;
        out.push_back(best);
        token = best;
    }
    return out;
}

struct BeamHypothesis {
    std::vector<std::size_t> tokens;  // content tokens, no BOS/EOS
    double score = 0.0;               // mean per-token log-prob
    double sum_logprob = 0.0;
    std::size_t emitted = 0;          // tokens scored, EOS included
    std::vector<Var> states;
    std::size_t last_token = Vocab::kBos;
    bool finished = false;
};

// Length-normalized beam search; ties broken by (score, token sequence).
inline std::vector<BeamHypothesis> decode_beam(const Decoder& dec,
                                               const EmbeddingTable& table,
                                               const Var& context_and_z,
                                               std::size_t beam_size,
                                               std::size_t n_best,
                                               std::size_t max_len) {
    if (n_best > beam_size) {
        throw std::invalid_argument("decode_beam: n_best " + std::to_string(n_best) +
                                    " > beam_size " + std::to_string(beam_size));
    }
    if (max_len < 1) {
        throw std::invalid_argument("decode_beam: max_len must be >= 1");
    }
    auto better = [](const BeamHypothesis& a, const BeamHypothesis& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tokens < b.tokens;
    };

    std::vector<BeamHypothesis> live(1);
    live[0].states = dec.init_states(context_and_z);
    std::vector<BeamHypothesis> finished;

    for (std::size_t step = 0; step <= max_len && !live.empty(); ++step) {
        std::vector<BeamHypothesis> candidates;
        for (auto& hyp : live) {
            std::vector<Var> states = hyp.states;
            Var top = dec.stack.step(table.lookup({hyp.last_token}), states);
            const auto logp = detail::log_softmax(dec.out_proj.apply(top)->value);
            for (std::size_t v = 0; v < logp.size(); ++v) {
                if (v == Vocab::kPad || v == Vocab::kBos) continue;
                BeamHypothesis next = hyp;
                next.states = states;
                next.sum_logprob += logp[v];
                next.emitted += 1;
                next.score = next.sum_logprob / static_cast<double>(next.emitted);
                if (v == Vocab::kEos) {
                    next.finished = true;
                } else {
                    next.tokens.push_back(v);
                    next.last_token = v;
                }
                candidates.push_back(std::move(next));
            }
        }
        std::sort(candidates.begin(), candidates.end(), better);
        if (candidates.size() > beam_size) candidates.resize(beam_size);
        live.clear();
        for (auto& c : candidates) {
            if (c.finished || c.tokens.size() >= max_len) {
                // EOS or length cap retires the hypothesis
                if (finished.size() < beam_size) finished.push_back(std::move(c));
            } else {
                live.push_back(std::move(c));
            }
        }
        if (finished.size() >= beam_size) break;
    }
    for (auto& h : live) {
        if (finished.size() < beam_size) finished.push_back(std::move(h));
    }
    std::sort(finished.begin(), finished.end(), better);
    if (finished.size() > n_best) finished.resize(n_best);
    return finished;
}

}  // namespace slcvae
