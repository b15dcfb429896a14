#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <set>

#include "slcvae/corpus.hpp"

using namespace slcvae;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/slcvae_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("synth_generate basic shapes") {
    auto one = synth_generate(1, 1, 3);
    REQUIRE(one.size() == 1);
    CHECK(one[0].targets.size() == 1);
    CHECK(!one[0].source.empty());

    CHECK_THROWS_AS(synth_generate(0, 1, 3), std::invalid_argument);
    CHECK_THROWS_AS(synth_generate(1, 0, 3), std::invalid_argument);
}

TEST_CASE("synth_generate is deterministic") {
    auto a = synth_generate(20, 4, 99);
    auto b = synth_generate(20, 4, 99);
    CHECK(a == b);
    auto c = synth_generate(20, 4, 100);
    CHECK(a != c);
}

TEST_CASE("synth corpus consistency scan") {
    auto corpus = synth_generate(500, 4, 7);
    std::size_t pairs = 0;
    for (const auto& ex : corpus) {
        pairs += ex.targets.size();
        std::set<std::string> src(ex.source.begin(), ex.source.end());
        for (const auto& tgt : ex.targets) {
            bool shares = false;
            for (const auto& tok : tgt) {
                if (src.count(tok)) shares = true;
            }
            CHECK(shares);  // every target carries at least one source attribute
        }
    }
    CHECK(pairs == 2000);
}

TEST_CASE("synth targets are lexically diverse per source") {
    auto corpus = synth_generate(50, 4, 11);
    for (const auto& ex : corpus) {
        std::set<std::vector<std::string>> unique(ex.targets.begin(), ex.targets.end());
        CHECK(unique.size() == ex.targets.size());
    }
}

TEST_CASE("jsonl round trip") {
    TempFile f("roundtrip.jsonl");
    auto corpus = synth_generate(30, 3, 5);
    save_jsonl(corpus, f.path);
    auto loaded = load_jsonl(f.path);
    CHECK(loaded == corpus);
}

TEST_CASE("load_jsonl parses and lowercases") {
    TempFile f("parse.jsonl");
    {
        std::ofstream out(f.path);
        out << R"({"source":"a B","targets":["C d"]})" << "\n";
    }
    auto ex = load_jsonl(f.path);
    REQUIRE(ex.size() == 1);
    CHECK(ex[0].source == TokenSeq{"a", "b"});
    CHECK(ex[0].targets[0] == TokenSeq{"c", "d"});
}

TEST_CASE("load_jsonl of empty file gives empty list") {
    TempFile f("empty.jsonl");
    { std::ofstream out(f.path); }
    CHECK(load_jsonl(f.path).empty());
}

TEST_CASE("load_jsonl errors carry line numbers") {
    TempFile f("bad.jsonl");
    {
        std::ofstream out(f.path);
        out << R"({"source":"a","targets":["b"]})" << "\n";
        out << "{nonsense\n";
    }
    CHECK_THROWS_WITH(load_jsonl(f.path), Catch::Matchers::ContainsSubstring(":2"));

    TempFile g("badtargets.jsonl");
    {
        std::ofstream out(g.path);
        out << R"({"source":"a","targets":[]})" << "\n";
    }
    CHECK_THROWS_WITH(load_jsonl(g.path), Catch::Matchers::ContainsSubstring("targets"));
}

TEST_CASE("build_vocab ordering and reserved ids") {
    std::vector<OneToManyExample> ex{{{"b", "a", "b"}, {{"a"}}}};
    Vocab v = build_vocab(ex, 1);
    CHECK(v.size() == 6);
    CHECK(v.token(Vocab::kPad) == "<pad>");
    CHECK(v.token(Vocab::kBos) == "<bos>");
    CHECK(v.token(Vocab::kEos) == "<eos>");
    CHECK(v.token(Vocab::kUnk) == "<unk>");
    // frequency: a=2? b=2... a appears in source once + target once = 2; b twice.
    // tie broken lexicographically
    CHECK(v.token(4) == "a");
    CHECK(v.token(5) == "b");

    Vocab reserved_only = build_vocab(ex, 1000000);
    CHECK(reserved_only.size() == 4);
}

TEST_CASE("build_vocab is order independent") {
    auto corpus = synth_generate(50, 3, 13);
    auto shuffled = corpus;
    Rng rng(77);
    rng.shuffle(shuffled);
    Vocab a = build_vocab(corpus);
    Vocab b = build_vocab(shuffled);
    CHECK(a.tokens() == b.tokens());
}

TEST_CASE("vocab id/token bijection") {
    auto corpus = synth_generate(100, 4, 17);
    Vocab v = build_vocab(corpus);
    for (std::size_t id = 0; id < v.size(); ++id) {
        CHECK(v.id(v.token(id)) == id);
    }
    CHECK(v.id("nonexistent-token") == Vocab::kUnk);
}

TEST_CASE("flatten preserves pair count") {
    auto corpus = synth_generate(40, 4, 19);
    Vocab v = build_vocab(corpus);
    std::size_t expected = 0;
    for (const auto& ex : corpus) expected += ex.targets.size();
    CHECK(flatten(corpus, v).size() == expected);
}

TEST_CASE("batchify sizes, framing and determinism") {
    std::vector<OneToManyExample> ex{
        {{"a"}, {{"b"}, {"a", "b"}}},
        {{"b", "a"}, {{"a"}}},
    };
    Vocab v = build_vocab(ex);
    auto pairs = flatten(ex, v);
    REQUIRE(pairs.size() == 3);

    Rng r1(5), r2(5);
    auto batches1 = batchify(pairs, 2, r1);
    auto batches2 = batchify(pairs, 2, r2);
    REQUIRE(batches1.size() == 2);
    CHECK(batches1[0].size() == 2);
    CHECK(batches1[1].size() == 1);
    for (std::size_t i = 0; i < batches1.size(); ++i) {
        CHECK(batches1[i].source_ids == batches2[i].source_ids);
        CHECK(batches1[i].target_ids == batches2[i].target_ids);
    }
    for (const auto& b : batches1) {
        for (std::size_t row = 0; row < b.size(); ++row) {
            CHECK(b.target_ids[row][0] == Vocab::kBos);
            CHECK(b.target_ids[row][b.target_lens[row] - 1] == Vocab::kEos);
            for (std::size_t i = b.target_lens[row]; i < b.target_ids[row].size(); ++i)
                CHECK(b.target_ids[row][i] == Vocab::kPad);
        }
    }
    CHECK_THROWS_AS(batchify(pairs, 0, r1), std::invalid_argument);
}
