#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slcvae/checkpoint.hpp"
#include "slcvae/log.hpp"
#include "slcvae/model.hpp"

namespace slcvae {

// Linear ramp 0 -> 1 over anneal_steps; anneal_steps <= 0 means always 1.
inline double kla_schedule(std::uint64_t step, std::int64_t anneal_steps) {
    if (anneal_steps <= 0) return 1.0;
    return std::min(1.0, static_cast<double>(step) / static_cast<double>(anneal_steps));
}

// Deterministic 90/10 train/validation split over examples (by item, so all
// targets of one source land on the same side).
inline void split_examples(const std::vector<OneToManyExample>& all, std::uint64_t seed,
                           std::vector<OneToManyExample>& train,
                           std::vector<OneToManyExample>& val) {
    std::vector<std::size_t> idx(all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    const std::size_t n_val = std::max<std::size_t>(1, all.size() / 10);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        (i < n_val ? val : train).push_back(all[idx[i]]);
    }
}

// Runs the alternating two-phase schedule over a TrainState. Per-epoch rng
// streams are derived from (seed, epoch), so a resumed run replays the exact
// stream of an uninterrupted one.
class Trainer {
public:
    Trainer(TrainState& state, const std::vector<OneToManyExample>& examples)
        : state_(state) {
        if (examples.empty()) {
            throw std::invalid_argument("train: empty dataset");
        }
        split_examples(examples, state_.config.seed ^ 0x5eedu, train_examples_,
                       val_examples_);
        train_pairs_ = flatten(train_examples_, state_.vocab);
        val_pairs_ = flatten(val_examples_, state_.vocab);
        if (state_.resolved_kla_steps < 0) {
            if (state_.config.kla_anneal_steps >= 0) {
                state_.resolved_kla_steps = state_.config.kla_anneal_steps;
            } else {
                // default: one epoch of batches
                state_.resolved_kla_steps = static_cast<std::int64_t>(
                    (train_pairs_.size() + state_.config.batch_size - 1) /
                    state_.config.batch_size);
            }
        }
    }

    // One optimizer step on {phi, theta, beta}; labeling params frozen.
    LossBreakdown cvae_phase_step(const Batch& batch, Rng& rng) {
        Model& model = *state_.model;
        const double kla = kla_schedule(state_.cvae_steps, state_.resolved_kla_steps);
        const double lambda = state_.config.lambda_max *
                              kla_schedule(state_.cvae_steps, state_.resolved_kla_steps);
        model.set_trainable_cvae_phase();
        zero_grads();
        auto fwd = model.cvae_objective(batch, kla, lambda, rng);
        check_divergence(fwd.breakdown);
        backward(fwd.total);
        state_.adam.step(model.cvae_params());
        zero_grads();
        state_.cvae_steps += 1;
        state_.global_step += 1;
        return fwd.breakdown;
    }

    // One optimizer step on gamma; decoder, encoders and prior frozen.
    double labeling_phase_step(const Batch& batch, Rng& rng) {
        Model& model = *state_.model;
        if (model.config().mode != Mode::Slcvae) {
            throw std::logic_error("labeling_phase_step: mode " +
                                   to_string(model.config().mode) +
                                   " has no labeling phase");
        }
        model.set_trainable_label_phase();
        zero_grads();
        Var loss = model.labeling_objective(batch, rng);
        const double value = loss->value.item();
        if (!std::isfinite(value)) {
            throw std::runtime_error("labeling_phase_step: labeling loss diverged (" +
                                     std::to_string(value) + ")");
        }
        backward(loss);
        state_.adam.step(model.label_params());
        zero_grads();
        state_.label_steps += 1;
        state_.global_step += 1;
        return value;
    }

    // Trains up to config.epochs (resumes from epochs_done).
    void run() {
        const TrainConfig& cfg = state_.config;
        for (std::uint64_t epoch = state_.epochs_done; epoch < cfg.epochs; ++epoch) {
            run_epoch(epoch);
            state_.epochs_done = epoch + 1;
            log_epoch(epoch);
        }
    }

    const std::vector<OneToManyExample>& validation_examples() const {
        return val_examples_;
    }
    const std::vector<Pair>& validation_pairs() const { return val_pairs_; }

    // Mean validation loss components at current parameters (no word dropout,
    // fixed noise stream).
    LossBreakdown validation_loss() {
        Model& model = *state_.model;
        Rng rng(state_.config.seed ^ 0x7a1u);
        const TrainConfig& saved = state_.config;
        const std::vector<Pair>& pairs = val_pairs_;
        LossBreakdown sum;
        std::size_t n = 0;
        const double kla = kla_schedule(state_.cvae_steps, state_.resolved_kla_steps);
        const double lambda = state_.config.lambda_max * kla;
        for (std::size_t from = 0; from < pairs.size(); from += saved.batch_size) {
            Batch b = make_batch(pairs, from,
                                 std::min(saved.batch_size, pairs.size() - from));
            auto fwd = model.cvae_objective(b, kla, lambda, /*wd_rate=*/0.0, rng);
            sum.recon += fwd.breakdown.recon;
            sum.kl += fwd.breakdown.kl;
            sum.exp += fwd.breakdown.exp;
            sum.bow += fwd.breakdown.bow;
            sum.total += fwd.breakdown.total;
            ++n;
        }
        if (n > 0) {
            sum.recon /= n; sum.kl /= n; sum.exp /= n; sum.bow /= n; sum.total /= n;
        }
        sum.kla_weight = kla;
        sum.lambda_weight = lambda;
        return sum;
    }

private:
    void run_epoch(std::uint64_t epoch) {
        const TrainConfig& cfg = state_.config;
        Rng rng = Rng(cfg.seed).fork(0xe90c0000ULL + epoch);
        std::vector<Batch> batches = batchify(train_pairs_, cfg.batch_size, rng);
        if (cfg.mode != Mode::Slcvae) {
            for (const Batch& b : batches) cvae_phase_step(b, rng);
            return;
        }
        std::size_t i = 0;
        while (i < batches.size()) {
            for (std::size_t k = 0; k < cfg.m_cvae_steps && i < batches.size(); ++k)
                cvae_phase_step(batches[i++], rng);
            for (std::size_t k = 0; k < cfg.n_label_steps && i < batches.size(); ++k)
                labeling_phase_step(batches[i++], rng);
        }
    }

    void log_epoch(std::uint64_t epoch) {
        LossBreakdown val = validation_loss();
        std::ostringstream os;
        os << "epoch " << epoch << " val total=" << val.total << " recon=" << val.recon
           << " kl=" << val.kl << " exp=" << val.exp << " bow=" << val.bow
           << " kla=" << val.kla_weight;
        log_info(os.str());
    }

    void zero_grads() {
        for (Parameter* p : state_.model->all_params()) p->zero_grad();
    }

    static void check_divergence(const LossBreakdown& b) {
        const char* bad = nullptr;
        if (!std::isfinite(b.recon)) bad = "reconstruction";
        else if (!std::isfinite(b.kl)) bad = "kl";
        else if (!std::isfinite(b.exp)) bad = "expressiveness";
        else if (!std::isfinite(b.bow)) bad = "bow";
        if (bad) {
            throw std::runtime_error(std::string("cvae_phase_step: ") + bad +
                                     " loss diverged (non-finite)");
        }
    }

    TrainState& state_;
    std::vector<OneToManyExample> train_examples_, val_examples_;
    std::vector<Pair> train_pairs_, val_pairs_;
};

// Fresh training state for a config and dataset.
inline TrainState init_state(const TrainConfig& config,
                             const std::vector<OneToManyExample>& examples,
                             std::size_t min_count = 1) {
    config.validate();
    if (examples.empty()) {
        throw std::invalid_argument("train: empty dataset");
    }
    TrainState state;
    state.config = config;
    state.vocab = build_vocab(examples, min_count);
    state.adam = Adam(config.lr);
    state.model = std::make_unique<Model>(config, state.vocab.size(),
                                          Rng(config.seed).fork(0x1217));
    return state;
}

// End-to-end: build vocab, train config.epochs epochs, return the state.
inline TrainState train(const TrainConfig& config,
                        const std::vector<OneToManyExample>& examples) {
    TrainState state = init_state(config, examples);
    Trainer trainer(state, examples);
    trainer.run();
    return state;
}

}  // namespace slcvae
