#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <functional>

#include "slcvae/adam.hpp"
#include "slcvae/gradcheck.hpp"
#include "slcvae/seq_nn.hpp"

using namespace slcvae;

namespace {

// Seeded toy decoder: small dims, vocab 8.
struct ToyDecoder {
    ParamStore store;
    EmbeddingTable table;
    Decoder dec;
    std::size_t vocab = 8;

    explicit ToyDecoder(std::uint64_t seed) {
        Rng rng(seed);
        table = EmbeddingTable(store, "embed", vocab, 4, rng);
        dec = Decoder(store, "dec", 4, 6, 5, 2, vocab, rng);
    }

    Var context(std::uint64_t seed = 1) const {
        Rng rng(seed);
        return constant(randn({1, 6}, rng));
    }
};

}  // namespace

TEST_CASE("gru_cell algebra with zero parameters") {
    ParamStore store;
    Rng rng(1);
    GruCellParams cell(store, "cell", 3, 4, rng);
    for (Parameter* p : store.all()) p->value.fill(0.0);

    Tensor h_prev({1, 4}, {1.0, -2.0, 0.5, 3.0});
    Var h = gru_cell(constant(Tensor({1, 3})), constant(h_prev), cell);
    // z = sigmoid(0) = 0.5, candidate = tanh(0) = 0 -> h = 0.5 * h_prev
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(h->value[i] == Catch::Approx(0.5 * h_prev[i]));

    Var h0 = gru_cell(constant(Tensor({1, 3})), constant(Tensor({1, 4})), cell);
    for (std::size_t i = 0; i < 4; ++i) CHECK(h0->value[i] == 0.0);
}

TEST_CASE("gru_cell dimension mismatch") {
    ParamStore store;
    Rng rng(2);
    GruCellParams cell(store, "cell", 3, 4, rng);
    CHECK_THROWS_AS(gru_cell(constant(Tensor({1, 5})), constant(Tensor({1, 4})), cell),
                    std::invalid_argument);
}

TEST_CASE("gru_cell gradients pass grad_check") {
    ParamStore store;
    Rng rng(3);
    GruCellParams cell(store, "cell", 3, 4, rng);
    Parameter& x = store.create("x", {2, 3}, 0.8, rng);
    Parameter& h = store.create("h", {2, 4}, 0.8, rng);
    auto forward = [&] {
        Var out = gru_cell(leaf(x), leaf(h), cell);
        return sum(mul(out, out));
    };
    for (Parameter* p : store.all()) p->zero_grad();
    backward(forward());
    CHECK(grad_check([&] { return forward()->value.item(); }, store.all(), 1e-5) < 1e-4);
}

TEST_CASE("encode_bidirectional handles length-1 and rejects empty") {
    ParamStore store;
    Rng rng(4);
    EmbeddingTable table(store, "embed", 10, 3, rng);
    BiEncoder enc(store, "enc", 3, 4, 2, rng);

    Var summary = encode_bidirectional({{5}}, {1}, table, enc);
    CHECK(summary->value.shape() == std::vector<std::size_t>{1, 8});

    CHECK_THROWS_AS(encode_bidirectional({{5}}, {0}, table, enc), std::invalid_argument);
    CHECK_THROWS_AS(encode_bidirectional({{12}}, {1}, table, enc), std::out_of_range);
}

TEST_CASE("palindrome with shared weights gives equal summaries") {
    ParamStore store;
    Rng rng(5);
    EmbeddingTable table(store, "embed", 10, 3, rng);
    BiEncoder enc(store, "enc", 3, 4, 2, rng);
    // copy forward weights into backward stack
    for (std::size_t l = 0; l < 2; ++l) {
        const auto& f = enc.forward.layers[l];
        const auto& b = enc.backward_.layers[l];
        b.gates.weight->value = f.gates.weight->value;
        b.gates.bias->value = f.gates.bias->value;
        b.candidate.weight->value = f.candidate.weight->value;
        b.candidate.bias->value = f.candidate.bias->value;
    }
    Var summary = encode_bidirectional({{4, 7, 4}}, {3}, table, enc);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(summary->value[i] == Catch::Approx(summary->value[4 + i]).margin(1e-12));
}

TEST_CASE("encoder summary is deterministic and padding-invariant") {
    ParamStore store;
    Rng rng(6);
    EmbeddingTable table(store, "embed", 10, 3, rng);
    BiEncoder enc(store, "enc", 3, 4, 2, rng);
    Var a = encode_bidirectional({{1, 2, 3}}, {3}, table, enc);
    Var b = encode_bidirectional({{1, 2, 3}}, {3}, table, enc);
    Var padded = encode_bidirectional({{1, 2, 3, 0, 0}}, {3}, table, enc);
    for (std::size_t i = 0; i < a->value.size(); ++i) {
        CHECK(a->value[i] == b->value[i]);
        CHECK(a->value[i] == Catch::Approx(padded->value[i]).margin(1e-12));
    }
}

TEST_CASE("teacher forcing: uniform logits give ln V") {
    ToyDecoder toy(7);
    // zero out the output projection so logits are uniform
    toy.dec.out_proj.weight->value.fill(0.0);
    toy.dec.out_proj.bias->value.fill(0.0);
    Rng rng(1);
    // target: BOS a b c EOS  (length 5, 4 predicted steps)
    auto result = decode_teacher_forced(toy.dec, toy.table, toy.context(),
                                        {{1, 4, 5, 6, 2}}, {5}, 0.0, rng);
    CHECK(result.loss->value.item() == Catch::Approx(std::log(8.0)).margin(1e-6));
}

TEST_CASE("teacher forcing validates framing and wd_rate") {
    ToyDecoder toy(8);
    Rng rng(1);
    CHECK_THROWS_AS(decode_teacher_forced(toy.dec, toy.table, toy.context(),
                                          {{4, 5, 2}}, {3}, 0.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(decode_teacher_forced(toy.dec, toy.table, toy.context(),
                                          {{1, 4, 5}}, {3}, 0.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(decode_teacher_forced(toy.dec, toy.table, toy.context(),
                                          {{1, 4, 2}}, {3}, 1.5, rng),
                    std::invalid_argument);
}

TEST_CASE("word dropout extremes") {
    // wd_rate 1: every fed token after BOS is UNK. Check by comparing the
    // loss against manually feeding UNK.
    ToyDecoder toy(9);
    Rng rng1(2);
    auto dropped = decode_teacher_forced(toy.dec, toy.table, toy.context(),
                                         {{1, 4, 5, 2}}, {4}, 1.0, rng1);
    Rng rng2(3);
    auto manual = decode_teacher_forced(toy.dec, toy.table, toy.context(),
                                        {{1, 3, 3, 2}}, {4}, 0.0, rng2);
    // same inputs fed (UNK, UNK), same gold -> different gold though: gold
    // differs (4,5,2 vs 3,3,2), so compare per-step logits instead.
    REQUIRE(dropped.step_logits.size() == manual.step_logits.size());
    // step 0 feeds BOS in both; steps 1,2 feed UNK in both
    for (std::size_t t = 0; t < 3; ++t) {
        for (std::size_t i = 0; i < toy.vocab; ++i) {
            CHECK(dropped.step_logits[t]->value[i] ==
                  Catch::Approx(manual.step_logits[t]->value[i]).margin(1e-12));
        }
    }

    // wd_rate 0 feeds the exact gold prefix: loss is rng-independent
    Rng ra(4), rb(5);
    auto a = decode_teacher_forced(toy.dec, toy.table, toy.context(), {{1, 4, 5, 2}},
                                   {4}, 0.0, ra);
    auto b = decode_teacher_forced(toy.dec, toy.table, toy.context(), {{1, 4, 5, 2}},
                                   {4}, 0.0, rb);
    CHECK(a.loss->value.item() == b.loss->value.item());
}

TEST_CASE("greedy decoding basics") {
    ToyDecoder toy(10);
    // bias logits heavily toward EOS
    toy.dec.out_proj.weight->value.fill(0.0);
    toy.dec.out_proj.bias->value.fill(0.0);
    toy.dec.out_proj.bias->value[Vocab::kEos] = 100.0;
    CHECK(decode_greedy(toy.dec, toy.table, toy.context(), 10).empty());

    ToyDecoder toy2(11);
    auto one = decode_greedy(toy2.dec, toy2.table, toy2.context(), 1);
    CHECK(one.size() <= 1);

    auto x = decode_greedy(toy2.dec, toy2.table, toy2.context(), 16);
    auto y = decode_greedy(toy2.dec, toy2.table, toy2.context(), 16);
    CHECK(x == y);
    CHECK(x.size() <= 16);
}

TEST_CASE("beam search degenerates to greedy at B=1") {
    for (std::uint64_t seed : {12u, 13u, 14u, 15u}) {
        ToyDecoder toy(seed);
        auto greedy = decode_greedy(toy.dec, toy.table, toy.context(), 12);
        auto beams = decode_beam(toy.dec, toy.table, toy.context(), 1, 1, 12);
        REQUIRE(beams.size() == 1);
        CHECK(beams[0].tokens == greedy);
    }
}

TEST_CASE("beam search matches exhaustive enumeration on a toy model") {
    // Two-step toy: enumerate every sequence of content tokens with length
    // <= 2 (each step may also end in EOS) and score by mean log-prob.
    ToyDecoder toy(16);
    const std::size_t max_len = 2;
    const std::size_t B = 8;

    struct Scored {
        std::vector<std::size_t> tokens;
        double score;
    };
    std::vector<Scored> all;

    // brute force over token sequences; EOS terminates
    std::function<void(std::vector<std::size_t>, std::vector<Var>, std::size_t, double,
                       std::size_t)>
        expand = [&](std::vector<std::size_t> prefix, std::vector<Var> states,
                     std::size_t last, double logp_sum, std::size_t emitted) {
            std::vector<Var> next_states = states;
            Var top = toy.dec.stack.step(toy.table.lookup({last}), next_states);
            Var proj = toy.dec.out_proj.apply(top);
            const Tensor& logits = proj->value;
            // independent log-softmax
            double mx = logits[0];
            for (std::size_t v = 1; v < logits.size(); ++v) mx = std::max(mx, logits[v]);
            double z = 0.0;
            for (std::size_t v = 0; v < logits.size(); ++v) z += std::exp(logits[v] - mx);
            for (std::size_t v = 0; v < logits.size(); ++v) {
                if (v == Vocab::kPad || v == Vocab::kBos) continue;
                const double lp = logits[v] - mx - std::log(z);
                if (v == Vocab::kEos) {
                    all.push_back({prefix, (logp_sum + lp) / (emitted + 1.0)});
                } else {
                    auto tokens = prefix;
                    tokens.push_back(v);
                    if (tokens.size() >= max_len) {
                        all.push_back({tokens, (logp_sum + lp) / (emitted + 1.0)});
                    } else {
                        expand(tokens, next_states, v, logp_sum + lp, emitted + 1);
                    }
                }
            }
        };
    expand({}, toy.dec.init_states(toy.context()), Vocab::kBos, 0.0, 0);

    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.tokens < b.tokens;
    });

    auto beams = decode_beam(toy.dec, toy.table, toy.context(), B, 4, max_len);
    REQUIRE(beams.size() == 4);
    for (std::size_t i = 0; i < beams.size(); ++i) {
        CHECK(beams[i].tokens == all[i].tokens);
        CHECK(beams[i].score == Catch::Approx(all[i].score).margin(1e-12));
    }
}

TEST_CASE("beam N=B=10 returns sorted hypotheses") {
    ToyDecoder toy(17);
    auto beams = decode_beam(toy.dec, toy.table, toy.context(), 10, 10, 12);
    REQUIRE(beams.size() == 10);
    for (std::size_t i = 1; i < beams.size(); ++i)
        CHECK(beams[i - 1].score >= beams[i].score);
    for (const auto& b : beams) CHECK(b.tokens.size() <= 12);
    CHECK_THROWS_AS(decode_beam(toy.dec, toy.table, toy.context(), 2, 3, 12),
                    std::invalid_argument);
}

TEST_CASE("noise encoding statistics") {
    ParamStore store;
    Rng rng(18);
    EmbeddingTable table(store, "embed", 10, 3, rng);
    BiEncoder enc(store, "enc", 3, 4, 2, rng);
    std::vector<std::vector<std::size_t>> ids{{1, 2, 3}};
    std::vector<std::size_t> lens{3};

    Var clean = encode_bidirectional(ids, lens, table, enc);
    Rng noise_rng(19);
    Var zero_noise = encode_with_noise(ids, lens, table, enc, 0.0, noise_rng);
    for (std::size_t i = 0; i < clean->value.size(); ++i)
        CHECK(zero_noise->value[i] == clean->value[i]);

    Var n1 = encode_with_noise(ids, lens, table, enc, 0.5, noise_rng);
    Var n2 = encode_with_noise(ids, lens, table, enc, 0.5, noise_rng);
    bool differ = false;
    for (std::size_t i = 0; i < n1->value.size(); ++i)
        if (n1->value[i] != n2->value[i]) differ = true;
    CHECK(differ);

    // empirical std of (noisy - clean) across many draws
    const double sigma = 0.5;
    const std::size_t draws = 10000;
    double sumsq = 0.0;
    std::size_t count = 0;
    Rng stat_rng(20);
    for (std::size_t k = 0; k < draws / 100; ++k) {
        Var noisy = encode_with_noise(ids, lens, table, enc, sigma, stat_rng);
        for (std::size_t i = 0; i < noisy->value.size(); ++i) {
            const double d = noisy->value[i] - clean->value[i];
            sumsq += d * d;
            ++count;
        }
    }
    const double std_hat = std::sqrt(sumsq / count);
    // 3 sigma bound on the sample std with ~800 samples
    CHECK(std::abs(std_hat - sigma) < 3.0 * sigma / std::sqrt(2.0 * count));
}

TEST_CASE("sanity overfit: 1-token vocabulary saturates to zero loss") {
    // vocab: 4 reserved + 1 token; the decoder must learn "emit token 4 then EOS"
    ParamStore store;
    Rng rng(21);
    EmbeddingTable table(store, "embed", 5, 4, rng);
    Decoder dec(store, "dec", 4, 6, 6, 2, 5, rng);
    Var ctx = constant(Tensor({1, 6}));

    Adam adam(0.05);
    double loss_val = 1e9;
    for (int step = 0; step < 800 && loss_val > 1e-6; ++step) {
        for (Parameter* p : store.all()) p->zero_grad();
        Rng r(0);
        auto res = decode_teacher_forced(dec, table, ctx, {{1, 4, 2}}, {3}, 0.0, r);
        loss_val = res.loss->value.item();
        backward(res.loss);
        adam.step(store.all());
    }
    CHECK(loss_val < 1e-3);
}
