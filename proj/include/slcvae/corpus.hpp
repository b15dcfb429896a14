#pragma once

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "slcvae/rng.hpp"

namespace slcvae {

using TokenSeq = std::vector<std::string>;

struct OneToManyExample {
    TokenSeq source;
    std::vector<TokenSeq> targets;

    bool operator==(const OneToManyExample& o) const {
        return source == o.source && targets == o.targets;
    }
};

inline TokenSeq tokenize(const std::string& text) {
    TokenSeq out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
        for (auto& ch : tok) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        out.push_back(tok);
    }
    return out;
}

// ---- vocabulary ----

class Vocab {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kBos = 1;
    static constexpr std::size_t kEos = 2;
    static constexpr std::size_t kUnk = 3;

    Vocab() {
        for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
    }

    std::size_t add(const std::string& token) {
        auto it = token_to_id_.find(token);
        if (it != token_to_id_.end()) return it->second;
        const std::size_t id = id_to_token_.size();
        token_to_id_.emplace(token, id);
        id_to_token_.push_back(token);
        return id;
    }

    std::size_t id(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    const std::string& token(std::size_t id) const { return id_to_token_.at(id); }
    std::size_t size() const { return id_to_token_.size(); }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    std::vector<std::size_t> encode(const TokenSeq& toks) const {
        std::vector<std::size_t> out;
        out.reserve(toks.size());
        for (const auto& t : toks) out.push_back(id(t));
        return out;
    }

    TokenSeq decode(const std::vector<std::size_t>& ids) const {
        TokenSeq out;
        out.reserve(ids.size());
        for (std::size_t i : ids) out.push_back(token(i));
        return out;
    }

private:
    std::unordered_map<std::string, std::size_t> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Frequency >= min_count over sources and targets; id order is frequency
// descending, then lexicographic, after the 4 reserved ids.
inline Vocab build_vocab(const std::vector<OneToManyExample>& examples,
                         std::size_t min_count = 1) {
    if (examples.empty()) {
        throw std::invalid_argument("build_vocab: empty example list");
    }
    std::map<std::string, std::size_t> freq;
    for (const auto& ex : examples) {
        for (const auto& t : ex.source) ++freq[t];
        for (const auto& tgt : ex.targets)
            for (const auto& t : tgt) ++freq[t];
    }
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, count] : items) {
        if (count >= min_count) v.add(tok);
    }
    return v;
}

// ---- synthetic one-to-many corpus ----

namespace synth_detail {

struct Slot {
    const char* name;
    std::vector<const char*> values;
};

inline const std::vector<Slot>& slots() {
    static const std::vector<Slot> s = {
        {"category", {"dress", "shirt", "skirt", "coat", "sweater", "jeans"}},
        {"color", {"red", "blue", "green", "black", "white", "yellow"}},
        {"material", {"linen", "cotton", "silk", "wool", "denim", "leather"}},
        {"style", {"casual", "elegant", "vintage", "sporty", "classic", "modern"}},
        {"season", {"summer", "winter", "spring", "autumn", "holiday"}},
    };
    return s;
}

// Each template realizes the item from a different angle so targets for one
// source stay lexically diverse. {0}=category {1}=color {2}=material
// {3}=style {4}=season
inline const std::vector<const char*>& templates() {
    static const std::vector<const char*> t = {
        "this {1} {0} is made of soft {2}",
        "a {3} {0} in {1} perfect for {4}",
        "enjoy the {2} feel of this {3} {0}",
        "our {4} pick a {1} {2} {0}",
        "wear this {0} for a truly {3} look",
        "fresh {1} tones make this {0} shine in {4}",
        "crafted from {2} this {0} keeps you comfortable",
        "the {3} cut and {1} shade suit any {4} day",
    };
    return t;
}

inline TokenSeq fill_template(const char* tpl, const std::vector<const char*>& vals) {
    std::string out;
    for (const char* p = tpl; *p; ++p) {
        if (*p == '{' && p[1] && p[2] == '}') {
            out += vals[static_cast<std::size_t>(p[1] - '0')];
            p += 2;
        } else {
            out += *p;
        }
    }
    return tokenize(out);
}

}  // namespace synth_detail

// Deterministic stand-in for a one-to-many product corpus: keyword-stacked
// attribute sources, template-realized targets.
inline std::vector<OneToManyExample> synth_generate(std::size_t n_items,
                                                    std::size_t targets_per_item,
                                                    std::uint64_t seed) {
    if (n_items < 1 || targets_per_item < 1) {
        throw std::invalid_argument("synth_generate: n_items and targets_per_item must be >= 1");
    }
    using namespace synth_detail;
    Rng rng(seed);
    std::vector<OneToManyExample> out;
    out.reserve(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        std::vector<const char*> vals;
        OneToManyExample ex;
        for (const auto& slot : slots()) {
            const char* v = slot.values[rng.below(slot.values.size())];
            vals.push_back(v);
            ex.source.push_back(v);
        }
        std::vector<std::size_t> tpl_order(templates().size());
        for (std::size_t k = 0; k < tpl_order.size(); ++k) tpl_order[k] = k;
        rng.shuffle(tpl_order);
        for (std::size_t k = 0; k < targets_per_item; ++k) {
            ex.targets.push_back(
                fill_template(templates()[tpl_order[k % tpl_order.size()]], vals));
        }
        out.push_back(std::move(ex));
    }
    return out;
}

// ---- JSONL I/O ----

inline std::vector<OneToManyExample> load_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("load_jsonl: cannot open " + path);
    }
    std::vector<OneToManyExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("load_jsonl: " + path + ":" + std::to_string(lineno) +
                                     ": " + e.what());
        }
        if (!j.is_object() || !j.contains("source") || !j.contains("targets") ||
            !j["targets"].is_array()) {
            throw std::runtime_error("load_jsonl: " + path + ":" + std::to_string(lineno) +
                                     ": expected {\"source\": str, \"targets\": [str...]}");
        }
        OneToManyExample ex;
        ex.source = tokenize(j["source"].get<std::string>());
        for (const auto& t : j["targets"]) {
            ex.targets.push_back(tokenize(t.get<std::string>()));
        }
        if (ex.targets.empty()) {
            throw std::runtime_error("load_jsonl: " + path + ":" + std::to_string(lineno) +
                                     ": empty targets");
        }
        out.push_back(std::move(ex));
    }
    return out;
}

inline void save_jsonl(const std::vector<OneToManyExample>& examples,
                       const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("save_jsonl: cannot open " + path);
    }
    auto join = [](const TokenSeq& toks) {
        std::string s;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) s += ' ';
            s += toks[i];
        }
        return s;
    };
    for (const auto& ex : examples) {
        nlohmann::ordered_json j;
        j["source"] = join(ex.source);
        auto targets = nlohmann::ordered_json::array();
        for (const auto& t : ex.targets) targets.push_back(join(t));
        j["targets"] = std::move(targets);
        out << j.dump() << '\n';
    }
}

// ---- batching ----

struct Pair {
    std::vector<std::size_t> source;  // unframed ids
    std::vector<std::size_t> target;  // unframed ids (no BOS/EOS)
};

struct Batch {
    // Padded id matrices. Targets are framed with BOS/EOS before padding.
    std::vector<std::vector<std::size_t>> source_ids;
    std::vector<std::size_t> source_lens;
    std::vector<std::vector<std::size_t>> target_ids;
    std::vector<std::size_t> target_lens;  // framed lengths

    std::size_t size() const { return source_ids.size(); }
};

// Flattens one-to-many examples into (source, single-target) training pairs.
inline std::vector<Pair> flatten(const std::vector<OneToManyExample>& examples,
                                 const Vocab& vocab) {
    std::vector<Pair> out;
    for (const auto& ex : examples) {
        auto src = vocab.encode(ex.source);
        for (const auto& tgt : ex.targets) {
            out.push_back({src, vocab.encode(tgt)});
        }
    }
    return out;
}

inline Batch make_batch(const std::vector<Pair>& pairs, std::size_t from,
                        std::size_t count) {
    Batch b;
    std::size_t max_src = 1, max_tgt = 2;
    for (std::size_t i = 0; i < count; ++i) {
        const Pair& p = pairs[from + i];
        max_src = std::max(max_src, p.source.size());
        max_tgt = std::max(max_tgt, p.target.size() + 2);
    }
    for (std::size_t i = 0; i < count; ++i) {
        const Pair& p = pairs[from + i];
        std::vector<std::size_t> src = p.source;
        b.source_lens.push_back(src.size());
        src.resize(max_src, Vocab::kPad);
        b.source_ids.push_back(std::move(src));

        std::vector<std::size_t> tgt;
        tgt.push_back(Vocab::kBos);
        tgt.insert(tgt.end(), p.target.begin(), p.target.end());
        tgt.push_back(Vocab::kEos);
        b.target_lens.push_back(tgt.size());
        tgt.resize(max_tgt, Vocab::kPad);
        b.target_ids.push_back(std::move(tgt));
    }
    return b;
}

inline std::vector<Batch> batchify(std::vector<Pair> pairs, std::size_t batch_size,
                                   Rng& rng) {
    if (batch_size < 1) {
        throw std::invalid_argument("batchify: batch_size must be >= 1");
    }
    rng.shuffle(pairs);
    std::vector<Batch> out;
    for (std::size_t from = 0; from < pairs.size(); from += batch_size) {
        out.push_back(make_batch(pairs, from, std::min(batch_size, pairs.size() - from)));
    }
    return out;
}

}  // namespace slcvae
