#pragma once

#include <string>
#include <vector>

#include "slcvae/config.hpp"
#include "slcvae/corpus.hpp"
#include "slcvae/latent.hpp"
#include "slcvae/seq_nn.hpp"

namespace slcvae {

constexpr std::size_t kNumRnnLayers = 2;

// The full generative model for one mode. Parameter names are prefixed
// "cvae." for the {encoder, recognition, prior, decoder} set and "label."
// for the labeling network, which owns its own embeddings and encoders so
// the two training phases touch disjoint parameters.
class Model {
public:
    Model(TrainConfig config, std::size_t vocab_size, Rng init_rng)
        : config_(std::move(config)), vocab_size_(vocab_size) {
        config_.validate();
        const std::size_t e = config_.embed_dim;
        const std::size_t h = config_.hidden_dim;
        const std::size_t d = config_.latent_dim;
        const Mode mode = config_.mode;

        embed_ = EmbeddingTable(store_, "cvae.embed", vocab_size, e, init_rng);
        source_encoder_ = BiEncoder(store_, "cvae.src_enc", e, h, kNumRnnLayers, init_rng);
        if (has_latent(mode)) {
            target_encoder_ =
                BiEncoder(store_, "cvae.tgt_enc", e, h, kNumRnnLayers, init_rng);
            recognition_ = GaussianHead(store_, "cvae.recognition", 4 * h, d, init_rng);
            prior_ = GaussianHead(store_, "cvae.prior", 2 * h, d, init_rng);
        }
        const std::size_t context_dim = has_latent(mode) ? 2 * h + d : 2 * h;
        decoder_ = Decoder(store_, "cvae.decoder", e, context_dim, h, kNumRnnLayers,
                           vocab_size, init_rng);
        if (mode == Mode::CvaeBow) {
            bow_proj_ = Linear(store_, "cvae.bow", d + 2 * h, vocab_size, init_rng);
        }
        if (mode == Mode::Slcvae) {
            label_embed_ =
                EmbeddingTable(store_, "label.embed", vocab_size, e, init_rng);
            label_source_encoder_ =
                BiEncoder(store_, "label.src_enc", e, h, kNumRnnLayers, init_rng);
            label_target_encoder_ =
                BiEncoder(store_, "label.tgt_enc", e, h, kNumRnnLayers, init_rng);
            label_head_ = Linear(store_, "label.head", 4 * h, d, init_rng);
        }
    }

    const TrainConfig& config() const { return config_; }
    std::size_t vocab_size() const { return vocab_size_; }
    ParamStore& store() { return store_; }
    const ParamStore& store() const { return store_; }

    std::vector<Parameter*> all_params() const { return store_.all(); }

    // {phi, theta, beta}: everything the CVAE phase updates.
    std::vector<Parameter*> cvae_params() const { return with_prefix("cvae."); }

    // gamma: the labeling network.
    std::vector<Parameter*> label_params() const { return with_prefix("label."); }

    // Toggles trainability so backward() drops gradients outside the set.
    void set_trainable_cvae_phase() { set_trainable(true, false); }
    void set_trainable_label_phase() { set_trainable(false, true); }
    void set_trainable_all() { set_trainable(true, true); }

    // ---- forward paths ----

    Var encode_source(const Batch& batch) const {
        return encode_bidirectional(batch.source_ids, batch.source_lens, embed_,
                                    source_encoder_);
    }

    Var encode_target(const Batch& batch) const {
        return encode_bidirectional(batch.target_ids, batch.target_lens, embed_,
                                    target_encoder_);
    }

    GaussianParams recognition(const Var& x_enc, const Var& c_enc) const {
        return recognition_forward(x_enc, c_enc, recognition_);
    }

    GaussianParams prior(const Var& c_enc) const {
        return prior_forward(c_enc, prior_);
    }

    // z_label through the labeling network's own encoders.
    Var label(const Batch& batch) const {
        Var c = encode_bidirectional(batch.source_ids, batch.source_lens, label_embed_,
                                     label_source_encoder_);
        Var x = encode_bidirectional(batch.target_ids, batch.target_lens, label_embed_,
                                     label_target_encoder_);
        return labeling_forward(x, c, label_head_);
    }

    Var decoder_context(const Var& c_enc, const Var& z) const {
        return has_latent(config_.mode) ? concat_cols(c_enc, z) : c_enc;
    }

    TeacherForcedResult reconstruct(const Var& c_enc, const Var& z, const Batch& batch,
                                    double wd_rate, Rng& rng) const {
        return decode_teacher_forced(decoder_, embed_, decoder_context(c_enc, z),
                                     batch.target_ids, batch.target_lens, wd_rate, rng);
    }

    const Decoder& decoder() const { return decoder_; }
    const EmbeddingTable& embedding() const { return embed_; }
    const Linear& bow_projection() const { return bow_proj_; }
    const BiEncoder& source_encoder() const { return source_encoder_; }

    struct CvaeForward {
        Var total;       // scalar to backprop
        LossBreakdown breakdown;
    };

    // The CVAE-phase objective: reconstruction + kla * KL (+ lambda * exp in
    // slcvae mode, + bow in cvae-bow mode). z_label is detached here.
    CvaeForward cvae_objective(const Batch& batch, double kla_weight,
                               double lambda_weight, Rng& rng) const {
        return cvae_objective(batch, kla_weight, lambda_weight, config_.wd_rate, rng);
    }

    CvaeForward cvae_objective(const Batch& batch, double kla_weight,
                               double lambda_weight, double wd_rate, Rng& rng) const {
        const std::size_t b = batch.size();
        Var c_enc = encode_source(batch);

        Var total;
        double kl_val = 0.0, exp_val = 0.0, bow_val = 0.0;
        Var z;  // sampled latent
        if (has_latent(config_.mode)) {
            Var x_enc = encode_target(batch);
            GaussianParams q = recognition(x_enc, c_enc);
            GaussianParams p = prior(c_enc);
            Var eps = constant(randn({b, config_.latent_dim}, rng));
            z = reparameterize(q, eps);
            Var kl = mean(kl_diag_gaussian_rows(q, p));
            kl_val = kl->value.item();
            total = scale(kl, kla_weight);
            if (config_.mode == Mode::Slcvae) {
                Var z_label = detach(label(batch));
                Var exp_loss = mean(expressiveness_loss_rows(z, z_label));
                exp_val = exp_loss->value.item();
                total = add(total, scale(exp_loss, lambda_weight));
            }
            if (config_.mode == Mode::CvaeBow) {
                Var bow = bow_loss(z, c_enc, bow_proj_, batch.target_ids,
                                   batch.target_lens);
                bow_val = bow->value.item();
                total = add(total, bow);
            }
        }
        TeacherForcedResult recon = reconstruct(c_enc, z, batch, wd_rate, rng);
        total = total ? add(recon.loss, total) : recon.loss;

        CvaeForward out;
        out.total = total;
        out.breakdown = slcvae_loss(recon.loss->value.item(), kl_val, exp_val, bow_val,
                                    kla_weight,
                                    config_.mode == Mode::Slcvae ? lambda_weight : 0.0);
        return out;
    }

    // The labeling-phase objective: reconstruction from z_label with the
    // decoder read but frozen; no word dropout.
    Var labeling_objective(const Batch& batch, Rng& rng) const {
        if (config_.mode != Mode::Slcvae) {
            throw std::logic_error("labeling_objective: only defined in slcvae mode");
        }
        Var c_enc = encode_source(batch);
        Var z_label = label(batch);
        return reconstruct(c_enc, z_label, batch, 0.0, rng).loss;
    }

private:
    std::vector<Parameter*> with_prefix(const std::string& prefix) const {
        std::vector<Parameter*> out;
        for (Parameter* p : store_.all()) {
            if (p->name.rfind(prefix, 0) == 0) out.push_back(p);
        }
        return out;
    }

    void set_trainable(bool cvae, bool label) {
        for (Parameter* p : with_prefix("cvae.")) p->trainable = cvae;
        for (Parameter* p : with_prefix("label.")) p->trainable = label;
    }

    TrainConfig config_;
    std::size_t vocab_size_;
    ParamStore store_;

    EmbeddingTable embed_;
    BiEncoder source_encoder_;
    BiEncoder target_encoder_;
    GaussianHead recognition_;
    GaussianHead prior_;
    Decoder decoder_;
    Linear bow_proj_;

    EmbeddingTable label_embed_;
    BiEncoder label_source_encoder_;
    BiEncoder label_target_encoder_;
    Linear label_head_;
};

}  // namespace slcvae
