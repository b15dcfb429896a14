#pragma once

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "slcvae/slcvae.hpp"

namespace slcvae::cli {

namespace detail {

inline void add_train_flags(CLI::App* cmd, TrainConfig& cfg, std::string& mode_str) {
    cmd->add_option("--mode", mode_str, "seq2seq|cvae|cvae-bow|slcvae");
    cmd->add_option("--seed", cfg.seed, "root seed; all randomness derives from it");
    cmd->add_option("--epochs", cfg.epochs, "training epochs");
    cmd->add_option("--lr", cfg.lr, "Adam learning rate");
    cmd->add_option("--batch", cfg.batch_size, "batch size");
    cmd->add_option("--kla-steps", cfg.kla_anneal_steps,
                    "KL anneal steps; <0 = one epoch of batches");
    cmd->add_option("--wd-rate", cfg.wd_rate, "word dropout rate in [0,1]");
    cmd->add_option("--lambda-max", cfg.lambda_max, "expressiveness weight ceiling");
    cmd->add_option("--m", cfg.m_cvae_steps, "CVAE-phase steps per iteration");
    cmd->add_option("--n-label", cfg.n_label_steps, "labeling-phase steps per iteration");
    cmd->add_option("--embed", cfg.embed_dim, "embedding dimension");
    cmd->add_option("--hidden", cfg.hidden_dim, "RNN hidden dimension");
    cmd->add_option("--latent", cfg.latent_dim, "latent dimension");
}

inline std::string join_tokens(const Vocab& vocab, const std::vector<std::size_t>& ids) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += vocab.token(ids[i]);
    }
    return out;
}

}  // namespace detail

inline int run(const std::vector<std::string>& argv) {
    CLI::App app{"SLCVAE: self-labeling CVAE for one-to-many sequence generation"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic one-to-many corpus");
    std::string synth_out;
    std::size_t synth_items = 500, synth_targets = 4;
    std::uint64_t synth_seed = 7;
    synth->add_option("--out", synth_out, "output JSONL path")->required();
    synth->add_option("--items", synth_items, "number of source items");
    synth->add_option("--targets-per-item", synth_targets, "targets per item");
    synth->add_option("--seed", synth_seed, "generator seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model");
    std::string train_data, train_out, train_mode = "slcvae", train_resume;
    TrainConfig cfg;
    train_cmd->add_option("--data", train_data, "JSONL training corpus")->required();
    train_cmd->add_option("--out", train_out, "checkpoint output path")->required();
    train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
    detail::add_train_flags(train_cmd, cfg, train_mode);

    // generate
    auto* gen = app.add_subcommand("generate", "decode hypotheses for each input source");
    std::string gen_model, gen_data, gen_out, gen_decode = "greedy";
    std::size_t gen_n = 10;
    std::uint64_t gen_seed = 1;
    std::size_t gen_max_len = 24;
    gen->add_option("--model", gen_model, "checkpoint path")->required();
    gen->add_option("--data", gen_data, "JSONL corpus providing sources")->required();
    gen->add_option("--out", gen_out, "output path (default stdout)");
    gen->add_option("--decode", gen_decode, "greedy | beam:B | noise:SIGMA");
    gen->add_option("--n", gen_n, "hypotheses per source");
    gen->add_option("--seed", gen_seed, "sampling seed");
    gen->add_option("--max-len", gen_max_len, "maximum generated length");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "compute metrics for a trained model");
    std::string eval_model, eval_data, eval_report, eval_decode = "greedy";
    std::size_t eval_n = 10, eval_max_len = 24;
    std::uint64_t eval_seed = 1;
    eval_cmd->add_option("--model", eval_model, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_data, "JSONL evaluation corpus")->required();
    eval_cmd->add_option("--report", eval_report, "JSON report output path");
    eval_cmd->add_option("--decode", eval_decode, "greedy | beam:B | noise:SIGMA");
    eval_cmd->add_option("--n", eval_n, "hypotheses per source");
    eval_cmd->add_option("--seed", eval_seed, "sampling seed");
    eval_cmd->add_option("--max-len", eval_max_len, "maximum generated length");

    // gradcheck
    auto* gc = app.add_subcommand(
        "gradcheck", "finite-difference verification of every gradient path");
    std::uint64_t gc_seed = 42;
    gc->add_option("--seed", gc_seed, "suite seed");

    std::vector<std::string> args(argv.rbegin(), argv.rend());
    if (!args.empty()) args.pop_back();  // program name
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*synth) {
            auto examples = synth_generate(synth_items, synth_targets, synth_seed);
            save_jsonl(examples, synth_out);
            std::cout << "wrote " << examples.size() << " items to " << synth_out << '\n';
            return 0;
        }
        if (*train_cmd) {
            cfg.mode = mode_from_string(train_mode);
            auto examples = load_jsonl(train_data);
            log_info("train config: " + to_json(cfg).dump());
            TrainState state;
            if (!train_resume.empty()) {
                state = load_checkpoint(train_resume);
                state.config.epochs = cfg.epochs;  // allow extending a run
            } else {
                state = init_state(cfg, examples);
            }
            Trainer trainer(state, examples);
            trainer.run();
            save_checkpoint(state, train_out);
            LossBreakdown val = trainer.validation_loss();
            std::cout << "trained " << state.epochs_done << " epochs, val total="
                      << val.total << " recon=" << val.recon << " kl=" << val.kl
                      << "; wrote " << train_out << '\n';
            return 0;
        }
        if (*gen) {
            TrainState state = load_checkpoint(gen_model);
            auto examples = load_jsonl(gen_data);
            DecodeSpec spec = parse_decode_spec(gen_decode);
            Rng rng(gen_seed);
            std::ostream* out = &std::cout;
            std::ofstream file;
            if (!gen_out.empty()) {
                file.open(gen_out);
                if (!file) throw std::runtime_error("generate: cannot open " + gen_out);
                out = &file;
            }
            for (const auto& ex : examples) {
                auto hyps = generate_hypotheses(*state.model,
                                                state.vocab.encode(ex.source), gen_n,
                                                spec, gen_max_len, rng);
                for (const auto& h : hyps)
                    *out << detail::join_tokens(state.vocab, h) << '\n';
            }
            return 0;
        }
        if (*eval_cmd) {
            TrainState state = load_checkpoint(eval_model);
            auto examples = load_jsonl(eval_data);
            DecodeSpec spec = parse_decode_spec(eval_decode);
            MetricsReport report = evaluate(*state.model, state.vocab, examples, eval_n,
                                            spec, eval_seed, eval_max_len);
            const std::string dumped = to_json(report).dump(2);
            if (!eval_report.empty()) save_report(report, eval_report);
            std::cout << dumped << '\n';
            return 0;
        }
        if (*gc) {
            GradCheckReport report = gradcheck_full(gc_seed);
            std::cout << "elementary ops  max rel err: " << report.elementary << '\n'
                      << "gru cell        max rel err: " << report.gru_cell << '\n'
                      << "slcvae loss     max rel err: " << report.full_cvae << '\n'
                      << "labeling loss   max rel err: " << report.full_labeling << '\n';
            const bool ok = report.elementary < 1e-4 && report.gru_cell < 1e-4 &&
                            report.full_cvae < 1e-3 && report.full_labeling < 1e-3;
            std::cout << (ok ? "PASS" : "FAIL") << '\n';
            return ok ? 0 : 2;
        }
    } catch (const std::exception& e) {
        log_error(e.what());
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

inline int run(int argc, char** argv) {
    return run(std::vector<std::string>(argv, argv + argc));
}

}  // namespace slcvae::cli
