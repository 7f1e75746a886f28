#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "sdil/checkpoint.hpp"
#include "sdil/metrics.hpp"

using namespace sdil;
using namespace sdil::harness;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/sdil_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RunConfig fixture_run_config(const grid::Corpus& corpus) {
    RunConfig cfg;
    cfg.state_dim = corpus.state_dim;
    cfg.n_actions = corpus.n_actions;
    cfg.window = 2;
    cfg.skills = 3;
    cfg.skill_dim = 4;
    cfg.seed = 17;
    return cfg;
}

} // namespace

TEST_CASE("config parsing") {
    SUBCASE("keys, comments and whitespace") {
        RunConfig cfg = RunConfig::from_string(
            "# a comment\n"
            "lambda = 0.5\n"
            "epochs = 12   # trailing comment\n"
            "env = doorkey\n"
            "kd_log = true\n"
            "\n",
            "<test>");
        CHECK(cfg.lambda == doctest::Approx(0.5));
        CHECK(cfg.epochs == 12);
        CHECK(cfg.env == "doorkey");
        CHECK(cfg.kd_log);
        CHECK(cfg.epsilon == doctest::Approx(0.1)); // untouched default
    }
    SUBCASE("unknown keys are rejected with a location") {
        try {
            RunConfig::from_string("lambda = 1\nbogus = 3\n", "<test>");
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("<test>:2") != std::string::npos);
            CHECK(std::string(e.what()).find("bogus") != std::string::npos);
        }
    }
    SUBCASE("malformed values are rejected") {
        CHECK_THROWS_AS(RunConfig::from_string("lambda = abc\n", "<t>"), ParseError);
        CHECK_THROWS_AS(RunConfig::from_string("epochs = 1.5\n", "<t>"), ParseError);
        CHECK_THROWS_AS(RunConfig::from_string("just a line\n", "<t>"), ParseError);
        CHECK_THROWS_AS(RunConfig::from_string("kd_log = maybe\n", "<t>"), ParseError);
    }
    SUBCASE("round-trip through to_string") {
        RunConfig cfg;
        cfg.lambda = 0.75;
        cfg.seed = 12345;
        cfg.state_dim = 40;
        cfg.n_actions = 4;
        RunConfig back = RunConfig::from_string(cfg.to_string(), "<echo>");
        CHECK(back.lambda == cfg.lambda);
        CHECK(back.seed == cfg.seed);
        CHECK(back.state_dim == cfg.state_dim);
        CHECK(back.to_string() == cfg.to_string());
    }
}

TEST_CASE("checkpoint round-trip") {
    grid::Corpus corpus = fixtures::disjoint_region_corpus(6, 6, 5, 7);
    RunConfig cfg = fixture_run_config(corpus);
    policy::PolicyStack model(cfg.model_config(), cfg.seed);
    model.s_op = {0.25f, -1.0f, 1.0f};
    model.s_pref = {0.1f, -0.5f, 0.9f};

    discovery::OptimalityTable table;
    table.s_op = model.s_op;
    table.transition_score.assign(60, 0.5f);
    table.refresh_epoch = 4;

    TempFile f1("ck1.sdil");
    TempFile f2("ck2.sdil");
    save_checkpoint(model, &table, cfg, f1.path);

    SUBCASE("save -> load -> save is byte identical") {
        CheckpointBundle b = load_checkpoint(f1.path);
        save_checkpoint(*b.model, &b.table, b.config, f2.path);
        CHECK(slurp(f1.path) == slurp(f2.path));
        CHECK(b.seed == cfg.seed);
        CHECK(b.table.refresh_epoch == 4);
        CHECK(b.table.transition_score.size() == 60);
        CHECK(b.model->s_op == model.s_op);
    }
    SUBCASE("loaded parameters are bitwise equal") {
        CheckpointBundle b = load_checkpoint(f1.path);
        auto pa = model.all_params();
        auto pb = b.model->all_params();
        REQUIRE(pa.size() == pb.size());
        for (std::size_t i = 0; i < pa.size(); ++i) {
            REQUIRE(pa[i]->value.size() == pb[i]->value.size());
            for (std::int64_t j = 0; j < pa[i]->value.size(); ++j)
                CHECK(pa[i]->value[j] == pb[i]->value[j]);
        }
    }
    SUBCASE("corrupted magic is rejected") {
        std::string data = slurp(f1.path);
        data[0] = 'X';
        std::ofstream out(f2.path, std::ios::binary);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(f2.path), ParseError);
    }
    SUBCASE("bad version is rejected") {
        std::string data = slurp(f1.path);
        data[4] = 9;
        std::ofstream out(f2.path, std::ios::binary);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(f2.path), ParseError);
    }
    SUBCASE("truncated files are rejected") {
        std::string data = slurp(f1.path);
        for (std::size_t keep : {data.size() - 5, data.size() / 2, std::size_t{10}}) {
            std::ofstream out(f2.path, std::ios::binary);
            out.write(data.data(), static_cast<std::streamsize>(keep));
            out.close();
            CHECK_THROWS_AS(load_checkpoint(f2.path), ParseError);
        }
    }
    SUBCASE("payload corruption fails the checksum") {
        std::string data = slurp(f1.path);
        data[data.size() / 2] ^= 0x40;
        std::ofstream out(f2.path, std::ios::binary);
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.close();
        CHECK_THROWS_AS(load_checkpoint(f2.path), ParseError);
    }
}

TEST_CASE("loaded checkpoints evaluate identically") {
    grid::Corpus corpus = fixtures::disjoint_region_corpus(10, 10, 6, 8);
    RunConfig cfg = fixture_run_config(corpus);
    grid::CorpusSplits splits = corpus.make_splits(cfg.seed);
    policy::PolicyStack model(cfg.model_config(), cfg.seed);

    TempFile f("ck_eval.sdil");
    save_checkpoint(model, nullptr, cfg, f.path);
    CheckpointBundle b = load_checkpoint(f.path);

    MetricsReport r1 = evaluate(model, corpus, splits, nullptr, 0, cfg.seed);
    MetricsReport r2 = evaluate(*b.model, corpus, splits, nullptr, 0, cfg.seed);
    CHECK(r1.accuracy == r2.accuracy);
    CHECK(r1.macro_f1 == r2.macro_f1);
    CHECK(r1.dist_clean == r2.dist_clean);
    CHECK(r1.dist_noisy == r2.dist_noisy);
}

TEST_CASE("crc32 matches the standard test vector") {
    const char* s = "123456789";
    CHECK(crc32(reinterpret_cast<const unsigned char*>(s), 9) == 0xcbf43926u);
}
