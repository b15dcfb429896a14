#pragma once

#include <functional>
#include <string>
#include <vector>

#include "slcvae/gradcheck.hpp"
#include "slcvae/model.hpp"
#include "slcvae/train.hpp"

namespace slcvae {

// Finite-difference verification of the whole differentiation stack, from
// elementary ops up to the full two-phase objective. This is the project's
// primary correctness instrument; the CLI exposes it as `gradcheck`.
struct GradCheckReport {
    double elementary = 0.0;   // worst over matmul/activations/cross-entropy
    double gru_cell = 0.0;     // one seeded GRU cell step
    double full_cvae = 0.0;    // full SLCVAE objective, CVAE-phase params
    double full_labeling = 0.0;  // labeling objective, labeling params

    double worst() const {
        return std::max(std::max(elementary, gru_cell),
                        std::max(full_cvae, full_labeling));
    }
};

namespace diag_detail {

inline double run_case(const std::function<Var()>& forward,
                       const std::vector<Parameter*>& params, double eps = 1e-5) {
    for (Parameter* p : params) p->zero_grad();
    backward(forward());
    return grad_check([&] { return forward()->value.item(); }, params, eps);
}

}  // namespace diag_detail

inline double gradcheck_elementary_ops(std::uint64_t seed = 42) {
    Rng rng(seed);
    ParamStore store;
    Parameter& a = store.create("a", {3, 4}, 0.5, rng);
    Parameter& b = store.create("b", {4, 5}, 0.5, rng);
    std::vector<Parameter*> params{&a, &b};
    double worst = 0.0;

    auto check = [&](const std::function<Var()>& f) {
        worst = std::max(worst, diag_detail::run_case(f, params));
    };

    check([&] { return sum(matmul(leaf(a), leaf(b))); });
    check([&] { return sum(sigmoid(matmul(leaf(a), leaf(b)))); });
    check([&] { return sum(tanh_v(matmul(leaf(a), leaf(b)))); });
    check([&] { return sum(exp_v(scale(matmul(leaf(a), leaf(b)), 0.25))); });
    check([&] { return sum(mul(leaf(b), leaf(b))); });
    check([&] { return sum(sub(leaf(a), scale(leaf(a), 2.0))); });
    check([&] { return sum(clamp(leaf(a), -0.25, 0.25)); });
    check([&] { return sum(slice_cols(concat_cols(leaf(a), leaf(a)), 2, 4)); });
    check([&] {
        Var logits = matmul(leaf(a), leaf(b));  // [3 x 5]
        return sum(softmax_cross_entropy_rows(logits, {1, 4, 0}));
    });
    check([&] { return mean(sum_rows(mul(leaf(a), leaf(a)))); });
    return worst;
}

inline double gradcheck_gru_cell(std::uint64_t seed = 43) {
    Rng rng(seed);
    ParamStore store;
    GruCellParams cell(store, "cell", 5, 7, rng);
    Parameter& x = store.create("x", {2, 5}, 0.8, rng);
    Parameter& h = store.create("h", {2, 7}, 0.8, rng);
    std::vector<Parameter*> params = store.all();
    return diag_detail::run_case(
        [&] {
            Var out = gru_cell(leaf(x), leaf(h), cell);
            return sum(mul(out, out));
        },
        params);
}

// Full SLCVAE objective on one tiny batch with the noise stream frozen by
// re-seeding per evaluation.
inline GradCheckReport gradcheck_full(std::uint64_t seed = 44) {
    GradCheckReport report;
    report.elementary = gradcheck_elementary_ops(seed);
    report.gru_cell = gradcheck_gru_cell(seed + 1);

    auto examples = synth_generate(6, 2, seed);
    TrainConfig cfg;
    cfg.mode = Mode::Slcvae;
    cfg.embed_dim = 6;
    cfg.hidden_dim = 6;
    cfg.latent_dim = 4;
    cfg.wd_rate = 0.3;
    cfg.seed = seed;
    Vocab vocab = build_vocab(examples);
    Model model(cfg, vocab.size(), Rng(seed).fork(9));
    std::vector<Pair> pairs = flatten(examples, vocab);
    Batch batch = make_batch(pairs, 0, 3);

    {
        model.set_trainable_cvae_phase();
        auto forward = [&] {
            Rng noise(seed + 2);
            return model.cvae_objective(batch, 0.7, 0.9, noise).total;
        };
        for (Parameter* p : model.all_params()) p->zero_grad();
        backward(forward());
        report.full_cvae =
            grad_check([&] { return forward()->value.item(); }, model.cvae_params(),
                       2e-3, 64, seed);
    }
    {
        model.set_trainable_label_phase();
        auto forward = [&] {
            Rng noise(seed + 3);
            return model.labeling_objective(batch, noise);
        };
        for (Parameter* p : model.all_params()) p->zero_grad();
        backward(forward());
        report.full_labeling =
            grad_check([&] { return forward()->value.item(); }, model.label_params(),
                       2e-3, 64, seed);
    }
    model.set_trainable_all();
    return report;
}

}  // namespace slcvae
