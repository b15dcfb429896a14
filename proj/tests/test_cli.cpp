#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "slcvae/cli.hpp"

using namespace slcvae;

namespace {

int run_cli(std::initializer_list<std::string> args) {
    std::vector<std::string> argv{"slcvae"};
    argv.insert(argv.end(), args.begin(), args.end());
    return cli::run(argv);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

const char* kCorpus = "/tmp/slcvae_cli_corpus.jsonl";

void make_corpus() {
    static bool done = false;
    if (done) return;
    REQUIRE(run_cli({"synth", "--out", kCorpus, "--items", "12",
                     "--targets-per-item", "2", "--seed", "3"}) == 0);
    done = true;
}

}  // namespace

TEST_CASE("usage errors exit with code 1") {
    CHECK(run_cli({}) == 1);
    CHECK(run_cli({"no-such-command"}) == 1);
    CHECK(run_cli({"synth"}) == 1);                       // missing --out
    CHECK(run_cli({"train", "--data", "x.jsonl"}) == 1);  // missing --out
    CHECK(run_cli({"synth", "--out", "/tmp/x.jsonl", "--bogus-flag"}) == 1);
}

TEST_CASE("runtime failures exit with code 2") {
    CHECK(run_cli({"train", "--data", "/tmp/slcvae_missing.jsonl", "--out",
                   "/tmp/slcvae_cli_nope.bin", "--epochs", "1"}) == 2);
    make_corpus();
    CHECK(run_cli({"eval", "--model", "/tmp/slcvae_missing_model.bin", "--data",
                   kCorpus}) == 2);
    CHECK(run_cli({"train", "--data", kCorpus, "--out", "/tmp/slcvae_cli_nope.bin",
                   "--mode", "banana"}) == 2);
}

TEST_CASE("synth writes a loadable corpus of the requested size") {
    make_corpus();
    auto examples = load_jsonl(kCorpus);
    CHECK(examples.size() == 12);
    for (const auto& ex : examples) CHECK(ex.targets.size() == 2);

    // same seed, same bytes
    const char* again = "/tmp/slcvae_cli_corpus2.jsonl";
    REQUIRE(run_cli({"synth", "--out", again, "--items", "12", "--targets-per-item",
                     "2", "--seed", "3"}) == 0);
    CHECK(slurp(kCorpus) == slurp(again));
}

TEST_CASE("train is reproducible and eval emits the report schema") {
    make_corpus();
    const char* m1 = "/tmp/slcvae_cli_m1.bin";
    const char* m2 = "/tmp/slcvae_cli_m2.bin";
    auto train_args = [&](const char* out) {
        return run_cli({"train", "--data", kCorpus, "--out", out, "--mode", "slcvae",
                        "--epochs", "2", "--batch", "8", "--embed", "6", "--hidden",
                        "6", "--latent", "3", "--seed", "5"});
    };
    REQUIRE(train_args(m1) == 0);
    REQUIRE(train_args(m2) == 0);
    CHECK(slurp(m1) == slurp(m2));

    const char* report_path = "/tmp/slcvae_cli_report.json";
    REQUIRE(run_cli({"eval", "--model", m1, "--data", kCorpus, "--report", report_path,
                     "--n", "3", "--seed", "9"}) == 0);
    std::ifstream in(report_path);
    nlohmann::json report = nlohmann::json::parse(in);
    for (const char* key : {"bleu_precision", "bleu_recall", "distinct_1", "distinct_2",
                            "mean_kl", "n", "sources", "decode_spec", "seed"}) {
        CHECK(report.contains(key));
    }
    CHECK(report["n"] == 3);
    CHECK(report["sources"] == 12);

    // report files are byte-identical across reruns
    const char* report2 = "/tmp/slcvae_cli_report2.json";
    REQUIRE(run_cli({"eval", "--model", m1, "--data", kCorpus, "--report", report2,
                     "--n", "3", "--seed", "9"}) == 0);
    CHECK(slurp(report_path) == slurp(report2));
}

TEST_CASE("generate writes n lines per source") {
    make_corpus();
    const char* model = "/tmp/slcvae_cli_s2s.bin";
    REQUIRE(run_cli({"train", "--data", kCorpus, "--out", model, "--mode", "seq2seq",
                     "--epochs", "1", "--batch", "8", "--embed", "6", "--hidden", "6",
                     "--seed", "6"}) == 0);
    const char* out = "/tmp/slcvae_cli_gen.txt";
    REQUIRE(run_cli({"generate", "--model", model, "--data", kCorpus, "--out", out,
                     "--decode", "beam:10", "--n", "10"}) == 0);
    CHECK(count_lines(slurp(out)) == 12 * 10);

    // latent model: sampling path, still n lines per source
    const char* latent = "/tmp/slcvae_cli_m1.bin";
    if (std::ifstream(latent).good()) {
        const char* out2 = "/tmp/slcvae_cli_gen2.txt";
        REQUIRE(run_cli({"generate", "--model", latent, "--data", kCorpus, "--out",
                         out2, "--n", "4", "--seed", "11"}) == 0);
        CHECK(count_lines(slurp(out2)) == 12 * 4);
    }
}

TEST_CASE("train resume extends a checkpoint") {
    make_corpus();
    const char* half = "/tmp/slcvae_cli_half.bin";
    const char* full = "/tmp/slcvae_cli_full.bin";
    const char* resumed = "/tmp/slcvae_cli_resumed.bin";
    auto base = [&](const char* out, const char* epochs,
                    std::initializer_list<std::string> extra) {
        std::vector<std::string> argv{"slcvae", "train",  "--data", kCorpus,
                                      "--out",  out,      "--mode", "cvae",
                                      "--epochs", epochs, "--batch", "8",
                                      "--embed", "6",     "--hidden", "6",
                                      "--latent", "3",    "--seed", "8"};
        argv.insert(argv.end(), extra.begin(), extra.end());
        return cli::run(argv);
    };
    REQUIRE(base(full, "2", {}) == 0);
    REQUIRE(base(half, "1", {}) == 0);
    REQUIRE(base(resumed, "2", {"--resume", half}) == 0);
    CHECK(slurp(resumed) == slurp(full));
}
