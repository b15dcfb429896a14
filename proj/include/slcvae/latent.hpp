#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "slcvae/autodiff.hpp"
#include "slcvae/seq_nn.hpp"

namespace slcvae {

constexpr double kLogvarClampLo = -10.0;
constexpr double kLogvarClampHi = 10.0;

// Diagonal Gaussian as mu / log-variance rows [B x d]. Logvar is clamped at
// construction, so exp() never overflows downstream.
struct GaussianParams {
    Var mu;
    Var logvar;

    std::size_t dim() const { return mu->value.cols(); }
};

// Single affine head producing (mu, logvar) from an input summary.
struct GaussianHead {
    Linear proj;  // [in] -> [2d]
    std::size_t latent_dim = 0;

    GaussianHead() = default;
    GaussianHead(ParamStore& store, const std::string& name, std::size_t in,
                 std::size_t latent, Rng& rng)
        : proj(store, name, in, 2 * latent, rng), latent_dim(latent) {}

    GaussianParams apply(const Var& x) const {
        Var both = proj.apply(x);
        return {slice_cols(both, 0, latent_dim),
                clamp(slice_cols(both, latent_dim, latent_dim), kLogvarClampLo,
                      kLogvarClampHi)};
    }

    void collect(std::vector<Parameter*>& out) const { proj.collect(out); }
};

// q(z|x,c): affine on concat(target summary, context summary).
inline GaussianParams recognition_forward(const Var& x_enc, const Var& c_enc,
                                          const GaussianHead& head) {
    return head.apply(concat_cols(x_enc, c_enc));
}

// p(z|c): affine on the context summary alone.
inline GaussianParams prior_forward(const Var& c_enc, const GaussianHead& head) {
    return head.apply(c_enc);
}

// z = mu + exp(logvar / 2) * eps.
inline Var reparameterize(const GaussianParams& g, const Var& eps) {
    if (eps->value.cols() != g.dim() || eps->value.rows() != g.mu->value.rows()) {
        throw std::invalid_argument("reparameterize: eps " + eps->value.shape_str() +
                                    " vs gaussian " + g.mu->value.shape_str());
    }
    return add(g.mu, mul(exp_v(scale(g.logvar, 0.5)), eps));
}

// Closed-form KL(q || p) between diagonal Gaussians, summed over dimensions,
// one value per row -> [B].
inline Var kl_diag_gaussian_rows(const GaussianParams& q, const GaussianParams& p) {
    if (q.dim() != p.dim()) {
        throw std::invalid_argument("kl_diag_gaussian: dim mismatch " +
                                    std::to_string(q.dim()) + " vs " +
                                    std::to_string(p.dim()));
    }
    // 0.5 * sum(lv_p - lv_q + (var_q + (mu_q - mu_p)^2) / var_p - 1)
    Var dmu = sub(q.mu, p.mu);
    Var inner = mul(add(exp_v(q.logvar), mul(dmu, dmu)), exp_v(scale(p.logvar, -1.0)));
    Var terms = add(sub(p.logvar, q.logvar), inner);
    Tensor minus_one(terms->value.shape());
    minus_one.fill(-1.0);
    return scale(sum_rows(add(terms, constant(std::move(minus_one)))), 0.5);
}

inline Var kl_diag_gaussian(const GaussianParams& q, const GaussianParams& p) {
    return mean(kl_diag_gaussian_rows(q, p));
}

// ||z - z_label||^2 per row -> [B]. The caller detaches z_label in the CVAE
// phase; no gradient reaches the labeling network through this term.
inline Var expressiveness_loss_rows(const Var& z, const Var& z_label) {
    check_same_shape(z->value, z_label->value, "expressiveness_loss");
    Var d = sub(z, z_label);
    return sum_rows(mul(d, d));
}

inline Var expressiveness_loss(const Var& z, const Var& z_label) {
    return mean(expressiveness_loss_rows(z, z_label));
}

// Bag-of-words auxiliary loss: one affine map of concat(z, c_enc) to vocab
// logits, cross-entropy against every content token of the target, mean over
// tokens then over batch.
inline Var bow_loss(const Var& z, const Var& c_enc, const Linear& bow_proj,
                    const std::vector<std::vector<std::size_t>>& target_ids,
                    const std::vector<std::size_t>& target_lens) {
    const std::size_t batch = target_ids.size();
    std::size_t max_content = 0;
    std::vector<double> counts(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
        if (target_lens[b] < 3) {
            throw std::invalid_argument("bow_loss: target row " + std::to_string(b) +
                                        " has no content tokens");
        }
        counts[b] = static_cast<double>(target_lens[b] - 2);
        max_content = std::max(max_content, target_lens[b] - 2);
    }
    Var logits = bow_proj.apply(concat_cols(z, c_enc));
    Var total;
    for (std::size_t j = 0; j < max_content; ++j) {
        // content tokens sit at framed positions 1 .. len-2
        std::vector<std::size_t> gold(batch);
        for (std::size_t b = 0; b < batch; ++b) {
            gold[b] = (j + 1 <= target_lens[b] - 2) ? target_ids[b][j + 1]
                                                    : static_cast<std::size_t>(-1);
        }
        Var ce = softmax_cross_entropy_rows(logits, gold);
        total = total ? add(total, ce) : ce;
    }
    std::vector<double> weights(batch);
    for (std::size_t b = 0; b < batch; ++b)
        weights[b] = 1.0 / (counts[b] * static_cast<double>(batch));
    return dot_const(total, weights);
}

// Deterministic latent label head: affine concat(x_enc, c_enc) -> [B x d].
inline Var labeling_forward(const Var& x_enc, const Var& c_enc, const Linear& head) {
    return head.apply(concat_cols(x_enc, c_enc));
}

// Per-batch loss components with their schedule weights.
struct LossBreakdown {
    double recon = 0.0;
    double kl = 0.0;
    double exp = 0.0;
    double bow = 0.0;
    double kla_weight = 1.0;
    double lambda_weight = 0.0;
    double total = 0.0;
};

// total = recon + kla * kl + lambda * exp + bow, components recorded.
inline LossBreakdown slcvae_loss(double recon, double kl, double exp, double bow,
                                 double kla_weight, double lambda_weight) {
    LossBreakdown b;
    b.recon = recon;
    b.kl = kl;
    b.exp = exp;
    b.bow = bow;
    b.kla_weight = kla_weight;
    b.lambda_weight = lambda_weight;
    b.total = recon + kla_weight * kl + lambda_weight * exp + bow;
    return b;
}

}  // namespace slcvae
