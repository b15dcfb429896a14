#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "slcvae/checkpoint.hpp"
#include "slcvae/latent.hpp"
#include "slcvae/model.hpp"

namespace slcvae {

// ---- sentence-level BLEU ----

namespace bleu_detail {

template <typename Seq>
inline std::map<std::vector<std::size_t>, std::size_t> ngram_counts(const Seq& toks,
                                                                    std::size_t n) {
    std::map<std::vector<std::size_t>, std::size_t> counts;
    if (toks.size() >= n) {
        for (std::size_t i = 0; i + n <= toks.size(); ++i) {
            std::vector<std::size_t> g(toks.begin() + static_cast<std::ptrdiff_t>(i),
                                       toks.begin() + static_cast<std::ptrdiff_t>(i + n));
            ++counts[g];
        }
    }
    return counts;
}

}  // namespace bleu_detail

// d(r, h): mean of BLEU-1..3 clipped precisions (add-one smoothed for n >= 2)
// times the brevity penalty. Empty hypothesis scores 0.
inline double sentence_bleu(const std::vector<std::size_t>& reference,
                            const std::vector<std::size_t>& hypothesis) {
    if (hypothesis.empty()) return 0.0;
    double precisions = 0.0;
    for (std::size_t n = 1; n <= 3; ++n) {
        const auto href = bleu_detail::ngram_counts(reference, n);
        const auto hhyp = bleu_detail::ngram_counts(hypothesis, n);
        std::size_t total = 0, clipped = 0;
        for (const auto& [gram, count] : hhyp) {
            total += count;
            auto it = href.find(gram);
            if (it != href.end()) clipped += std::min(count, it->second);
        }
        double p;
        if (n == 1) {
            p = total > 0 ? static_cast<double>(clipped) / static_cast<double>(total) : 0.0;
        } else {
            p = static_cast<double>(clipped + 1) / static_cast<double>(total + 1);
        }
        precisions += p;
    }
    const double bp = std::exp(std::min(
        0.0, 1.0 - static_cast<double>(reference.size()) /
                       static_cast<double>(hypothesis.size())));
    return bp * precisions / 3.0;
}

// precision(c) = sum_i max_j d(r_j, h_i) / N
inline double bleu_precision(const std::vector<std::vector<std::size_t>>& references,
                             const std::vector<std::vector<std::size_t>>& hypotheses) {
    if (hypotheses.empty()) {
        throw std::invalid_argument("bleu_precision: empty hypothesis set");
    }
    if (references.empty()) {
        throw std::invalid_argument("bleu_precision: empty reference set");
    }
    double sum = 0.0;
    for (const auto& h : hypotheses) {
        double best = 0.0;
        for (const auto& r : references) best = std::max(best, sentence_bleu(r, h));
        sum += best;
    }
    return sum / static_cast<double>(hypotheses.size());
}

// recall(c) = sum_j max_i d(r_j, h_i) / M_c
inline double bleu_recall(const std::vector<std::vector<std::size_t>>& references,
                          const std::vector<std::vector<std::size_t>>& hypotheses) {
    if (references.empty()) {
        throw std::invalid_argument("bleu_recall: empty reference set");
    }
    if (hypotheses.empty()) {
        throw std::invalid_argument("bleu_recall: empty hypothesis set");
    }
    double sum = 0.0;
    for (const auto& r : references) {
        double best = 0.0;
        for (const auto& h : hypotheses) best = std::max(best, sentence_bleu(r, h));
        sum += best;
    }
    return sum / static_cast<double>(references.size());
}

// Unique n-grams across all hypotheses over total generated tokens. The
// denominator is tokens for every n, matching the normalization this metric
// family uses.
inline double distinct_n(const std::vector<std::vector<std::size_t>>& hypotheses,
                         std::size_t n) {
    if (n < 1) {
        throw std::invalid_argument("distinct_n: n must be >= 1");
    }
    std::set<std::vector<std::size_t>> unique;
    std::size_t tokens = 0;
    for (const auto& h : hypotheses) {
        tokens += h.size();
        for (std::size_t i = 0; i + n <= h.size(); ++i) {
            unique.insert(std::vector<std::size_t>(
                h.begin() + static_cast<std::ptrdiff_t>(i),
                h.begin() + static_cast<std::ptrdiff_t>(i + n)));
        }
    }
    if (tokens == 0) return 0.0;
    return static_cast<double>(unique.size()) / static_cast<double>(tokens);
}

// ---- model-level evaluation ----

struct MetricsReport {
    double bleu_precision = 0.0;
    double bleu_recall = 0.0;
    double distinct_1 = 0.0;
    double distinct_2 = 0.0;
    double mean_kl = 0.0;
    std::size_t n_hypotheses = 0;
    std::size_t sources = 0;
    std::string decode_spec;
    std::uint64_t seed = 0;
};

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["bleu_precision"] = r.bleu_precision;
    j["bleu_recall"] = r.bleu_recall;
    j["distinct_1"] = r.distinct_1;
    j["distinct_2"] = r.distinct_2;
    j["mean_kl"] = r.mean_kl;
    j["n"] = r.n_hypotheses;
    j["sources"] = r.sources;
    j["decode_spec"] = r.decode_spec;
    j["seed"] = r.seed;
    return j;
}

inline void save_report(const MetricsReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("save_report: cannot open " + path);
    }
    out << to_json(r).dump(2) << '\n';
}

struct DecodeSpec {
    enum class Kind { Greedy, Beam, Noise } kind = Kind::Greedy;
    std::size_t beam_size = 10;
    double sigma = 0.0;

    std::string str() const {
        switch (kind) {
            case Kind::Greedy: return "greedy";
            case Kind::Beam: return "beam:" + std::to_string(beam_size);
            case Kind::Noise: {
                std::ostringstream os;
                os << "noise:" << sigma;
                return os.str();
            }
        }
        return "?";
    }
};

inline DecodeSpec parse_decode_spec(const std::string& s) {
    DecodeSpec spec;
    if (s == "greedy") {
        spec.kind = DecodeSpec::Kind::Greedy;
    } else if (s.rfind("beam:", 0) == 0) {
        spec.kind = DecodeSpec::Kind::Beam;
        spec.beam_size = std::stoul(s.substr(5));
        if (spec.beam_size < 1) throw std::invalid_argument("decode: beam size must be >= 1");
    } else if (s.rfind("noise:", 0) == 0) {
        spec.kind = DecodeSpec::Kind::Noise;
        spec.sigma = std::stod(s.substr(6));
        if (spec.sigma < 0) throw std::invalid_argument("decode: sigma must be >= 0");
    } else {
        throw std::invalid_argument("decode: expected greedy | beam:B | noise:SIGMA, got " +
                                    s);
    }
    return spec;
}

namespace eval_detail {

inline Batch source_only_batch(const std::vector<std::size_t>& src_ids) {
    Batch b;
    b.source_ids.push_back(src_ids);
    b.source_lens.push_back(src_ids.size());
    return b;
}

}  // namespace eval_detail

// Mean KL(q(z|x,c) || p(z|c)) in nats over every flattened (source, target)
// pair of the dataset. The KL-vanishing diagnostic.
inline double kl_monitor(const Model& model, const Vocab& vocab,
                         const std::vector<OneToManyExample>& examples) {
    if (!has_latent(model.config().mode)) {
        throw std::logic_error("kl_monitor: seq2seq mode has no latent variable");
    }
    std::vector<Pair> pairs = flatten(examples, vocab);
    if (pairs.empty()) {
        throw std::invalid_argument("kl_monitor: empty dataset");
    }
    double total = 0.0;
    std::size_t n = 0;
    const std::size_t chunk = 64;
    for (std::size_t from = 0; from < pairs.size(); from += chunk) {
        Batch b = make_batch(pairs, from, std::min(chunk, pairs.size() - from));
        Var c_enc = model.encode_source(b);
        Var x_enc = model.encode_target(b);
        GaussianParams q = model.recognition(x_enc, c_enc);
        GaussianParams p = model.prior(c_enc);
        Var kl = kl_diag_gaussian_rows(q, p);
        for (std::size_t i = 0; i < kl->value.size(); ++i) total += kl->value[i];
        n += kl->value.size();
    }
    return total / static_cast<double>(n);
}

// N hypotheses for one source. Latent modes sample z from the prior network
// and decode greedily; seq2seq uses N-best beam or N noisy encodings.
inline std::vector<std::vector<std::size_t>> generate_hypotheses(
    const Model& model, const std::vector<std::size_t>& src_ids, std::size_t n,
    const DecodeSpec& spec, std::size_t max_len, Rng& rng) {
    Batch b = eval_detail::source_only_batch(src_ids);
    std::vector<std::vector<std::size_t>> hyps;
    if (has_latent(model.config().mode)) {
        Var c_enc = model.encode_source(b);
        GaussianParams p = model.prior(c_enc);
        for (std::size_t i = 0; i < n; ++i) {
            Var eps = constant(randn({1, model.config().latent_dim}, rng));
            Var z = reparameterize(p, eps);
            hyps.push_back(decode_greedy(model.decoder(), model.embedding(),
                                         model.decoder_context(c_enc, z), max_len));
        }
        return hyps;
    }
    switch (spec.kind) {
        case DecodeSpec::Kind::Beam: {
            Var c_enc = model.encode_source(b);
            auto beams = decode_beam(model.decoder(), model.embedding(),
                                     model.decoder_context(c_enc, {}),
                                     std::max(spec.beam_size, n), n, max_len);
            for (auto& h : beams) hyps.push_back(std::move(h.tokens));
            // beam may retire fewer than n hypotheses on tiny vocabularies
            while (hyps.size() < n) hyps.push_back(hyps.empty() ? std::vector<std::size_t>{} : hyps.back());
            return hyps;
        }
        case DecodeSpec::Kind::Noise: {
            for (std::size_t i = 0; i < n; ++i) {
                Var c_enc = encode_with_noise(b.source_ids, b.source_lens,
                                              model.embedding(), model.source_encoder(),
                                              spec.sigma, rng);
                hyps.push_back(decode_greedy(model.decoder(), model.embedding(),
                                             model.decoder_context(c_enc, {}), max_len));
            }
            return hyps;
        }
        case DecodeSpec::Kind::Greedy: {
            Var c_enc = model.encode_source(b);
            auto out = decode_greedy(model.decoder(), model.embedding(),
                                     model.decoder_context(c_enc, {}), max_len);
            for (std::size_t i = 0; i < n; ++i) hyps.push_back(out);
            return hyps;
        }
    }
    return hyps;
}

// Full metric sweep over a grouped one-to-many dataset.
inline MetricsReport evaluate(const Model& model, const Vocab& vocab,
                              const std::vector<OneToManyExample>& examples,
                              std::size_t n, const DecodeSpec& spec, std::uint64_t seed,
                              std::size_t max_len = 24) {
    if (n < 1) {
        throw std::invalid_argument("evaluate: n must be >= 1");
    }
    if (examples.empty()) {
        throw std::invalid_argument("evaluate: empty dataset");
    }
    Rng rng(seed);
    MetricsReport report;
    report.n_hypotheses = n;
    report.sources = examples.size();
    report.decode_spec = spec.str();
    report.seed = seed;

    std::vector<std::vector<std::size_t>> all_hyps;
    double prec_sum = 0.0, rec_sum = 0.0;
    for (const auto& ex : examples) {
        std::vector<std::vector<std::size_t>> refs;
        for (const auto& t : ex.targets) refs.push_back(vocab.encode(t));
        auto hyps = generate_hypotheses(model, vocab.encode(ex.source), n, spec,
                                        max_len, rng);
        prec_sum += bleu_precision(refs, hyps);
        rec_sum += bleu_recall(refs, hyps);
        for (auto& h : hyps) all_hyps.push_back(std::move(h));
    }
    report.bleu_precision = prec_sum / static_cast<double>(examples.size());
    report.bleu_recall = rec_sum / static_cast<double>(examples.size());
    report.distinct_1 = distinct_n(all_hyps, 1);
    report.distinct_2 = distinct_n(all_hyps, 2);
    report.mean_kl =
        has_latent(model.config().mode) ? kl_monitor(model, vocab, examples) : 0.0;
    return report;
}

}  // namespace slcvae
