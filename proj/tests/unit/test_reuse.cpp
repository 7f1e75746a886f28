#include <doctest.h>

#include <cmath>
#include <cstring>

#include "fixtures.hpp"
#include "sdil/discovery.hpp"
#include "sdil/metrics.hpp"
#include "sdil/reuse.hpp"

using namespace sdil;
using namespace sdil::reuse;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using policy::ModelConfig;
using policy::PolicyStack;

namespace {

ModelConfig fixture_config(const grid::Corpus& corpus) {
    ModelConfig cfg;
    cfg.state_dim = corpus.state_dim;
    cfg.n_actions = corpus.n_actions;
    cfg.window = 2;
    cfg.n_skills = 4;
    cfg.skill_dim = 6;
    cfg.hidden1 = 16;
    cfg.hidden2 = 12;
    return cfg;
}

std::vector<unsigned char> param_bytes(std::vector<diff::Parameter*> params) {
    std::vector<unsigned char> out;
    for (diff::Parameter* p : params) {
        const auto* raw = reinterpret_cast<const unsigned char*>(p->value.data());
        out.insert(out.end(), raw, raw + p->value.size() * sizeof(float));
    }
    return out;
}

} // namespace

TEST_CASE("kd loss worked values") {
    SUBCASE("perfect student gives -1") {
        Tape tape;
        Tensor probs({3, 4}, 0.0f);
        for (int r = 0; r < 3; ++r) probs.at(r, 2) = 1.0f;
        Var l = kd_loss(tape, tape.input(probs), {2, 2, 2}, false);
        CHECK(tape.value64(l) == doctest::Approx(-1.0));
    }
    SUBCASE("uniform student over K=4 gives -0.25") {
        Tape tape;
        Tensor probs({2, 4}, 0.25f);
        Var l = kd_loss(tape, tape.input(probs), {0, 3}, false);
        CHECK(tape.value64(l) == doctest::Approx(-0.25));
    }
    SUBCASE("two transitions at 0.6 and 0.2 give -0.4") {
        Tape tape;
        Tensor probs({2, 4}, 0.1f);
        probs.at(0, 1) = 0.6f;
        probs.at(1, 0) = 0.2f;
        Var l = kd_loss(tape, tape.input(probs), {1, 0}, false);
        CHECK(tape.value64(l) == doctest::Approx(-0.4).epsilon(1e-6));
    }
    SUBCASE("always within [-1, 0]") {
        Rng rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor probs({4, 3});
            std::vector<int> teacher;
            for (int r = 0; r < 4; ++r) {
                double sum = 0.0;
                for (int c = 0; c < 3; ++c) {
                    probs.at(r, c) = static_cast<float>(rng.uniform01());
                    sum += probs.at(r, c);
                }
                for (int c = 0; c < 3; ++c)
                    probs.at(r, c) = static_cast<float>(probs.at(r, c) / sum);
                teacher.push_back(rng.index(3));
            }
            Tape tape;
            Var l = kd_loss(tape, tape.input(probs), teacher, false);
            CHECK(tape.value64(l) <= 0.0);
            CHECK(tape.value64(l) >= -1.0);
        }
    }
    SUBCASE("log variant matches -mean log p") {
        Tape tape;
        Tensor probs({2, 2}, 0.5f);
        Var l = kd_loss(tape, tape.input(probs), {0, 1}, true);
        CHECK(tape.value64(l) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    }
}

TEST_CASE("collect_negatives thresholding") {
    policy::Dataset ds;
    ds.clean = {0, 0, 0, 1};
    ds.actions = {0, 0, 0, 0};
    SUBCASE("only scores strictly below the threshold") {
        std::vector<float> scores{-0.9f, 0.0f, 0.8f, 1.0f};
        std::vector<int> neg = collect_negatives(ds, scores, -0.5);
        CHECK(neg == std::vector<int>{0});
    }
    SUBCASE("theta = -1 selects nothing (scores are >= -1)") {
        std::vector<float> scores{-1.0f, -0.99f, 0.0f, 1.0f};
        CHECK(collect_negatives(ds, scores, -1.0).empty());
    }
    SUBCASE("clean transitions are never selected") {
        std::vector<float> scores{-0.9f, -0.9f, -0.9f, -0.9f};
        std::vector<int> neg = collect_negatives(ds, scores, 0.5);
        CHECK(neg == std::vector<int>{0, 1, 2});
    }
    SUBCASE("raising the threshold never removes a member") {
        std::vector<float> scores{-0.9f, -0.3f, 0.4f, 1.0f};
        std::vector<int> prev;
        for (double theta : {-1.0, -0.5, 0.0, 0.5, 1.1}) {
            std::vector<int> cur = collect_negatives(ds, scores, theta);
            for (int idx : prev) CHECK(std::count(cur.begin(), cur.end(), idx) == 1);
            prev = cur;
        }
    }
}

TEST_CASE("adversarial loss worked values") {
    SUBCASE("probability one on every bad action gives 0") {
        Tape tape;
        Tensor probs({3, 4}, 0.0f);
        for (int r = 0; r < 3; ++r) probs.at(r, 1) = 1.0f;
        Var l = adversarial_loss(tape, tape.input(probs), {1, 1, 1});
        CHECK(tape.value64(l) == doctest::Approx(0.0));
    }
    SUBCASE("p = e^-2 everywhere gives -2") {
        Tape tape;
        Tensor probs({2, 3}, static_cast<float>(std::exp(-2.0)));
        Var l = adversarial_loss(tape, tape.input(probs), {0, 2});
        CHECK(tape.value64(l) == doctest::Approx(-2.0).epsilon(1e-6));
    }
    SUBCASE("the 1e-6 floor prevents -inf") {
        Tape tape;
        Tensor probs({1, 2}, 0.0f);
        probs.at(0, 1) = 1.0f;
        Var l = adversarial_loss(tape, tape.input(probs), {0});
        CHECK(tape.value64(l) == doctest::Approx(std::log(1e-6)).epsilon(1e-6));
        CHECK(std::isfinite(tape.value64(l)));
    }
}

TEST_CASE("reuse step 1 keeps g, pi_low and f_bi bitwise frozen") {
    grid::Corpus corpus = fixtures::conflict_corpus(12, 12, 8, 77);
    ModelConfig cfg = fixture_config(corpus);
    grid::CorpusSplits splits = corpus.make_splits(11);
    PolicyStack model(cfg, 200);

    // Cheap discovery pass to populate the optimality table.
    discovery::DiscoveryConfig dc;
    dc.epochs = 3;
    dc.pu_interval = 1;
    dc.batch = 16;
    dc.seed = 5;
    discovery::DiscoveryResult disc = discovery::run_discovery(corpus, splits, model, dc);
    REQUIRE_FALSE(disc.aborted);

    std::vector<diff::Parameter*> frozen_group = model.pi_low.params();
    frozen_group.push_back(&model.prototypes);
    for (diff::Parameter* p : model.f_bi.params()) frozen_group.push_back(p);
    std::vector<unsigned char> before = param_bytes(frozen_group);
    std::vector<unsigned char> uni_before = param_bytes(model.uni_params());

    ReuseConfig rc;
    rc.max_epochs = 3;
    rc.batch = 16;
    rc.seed = 6;
    ReuseStepResult s1 = reuse_step1(corpus, splits, model, rc);
    CHECK(s1.epochs >= 1);
    CHECK(param_bytes(frozen_group) == before);
    CHECK(param_bytes(model.uni_params()) != uni_before);

    // Step 2 unfreezes the group but must still never touch f_bi.
    std::vector<unsigned char> fbi_before = param_bytes(model.f_bi.params());
    ReuseStepResult s2 = reuse_step2(corpus, splits, model, disc.table, rc);
    CHECK(s2.epochs >= 1);
    CHECK(param_bytes(model.f_bi.params()) == fbi_before);
}

TEST_CASE("empty negative set reduces step 2 to pure imitation") {
    grid::Corpus corpus = fixtures::conflict_corpus(8, 8, 6, 80);
    ModelConfig cfg = fixture_config(corpus);
    grid::CorpusSplits splits = corpus.make_splits(13);

    discovery::OptimalityTable table;
    table.s_op.assign(static_cast<std::size_t>(cfg.n_skills), 0.0f);
    policy::Dataset full = discovery::full_dataset(corpus, cfg);
    table.transition_score.assign(static_cast<std::size_t>(full.size()), 0.5f);

    ReuseConfig rc;
    rc.max_epochs = 2;
    rc.batch = 16;
    rc.seed = 4;
    rc.theta_neg = -1.0; // nothing scores below -1

    PolicyStack m1(cfg, 300), m2(cfg, 300);
    ReuseResult r1 = run_reuse(corpus, splits, m1, table, rc);

    // Same run with a different theta that also yields an empty set must be
    // bitwise identical (the adversarial branch never fires).
    rc.theta_neg = -0.999;
    ReuseResult r2 = run_reuse(corpus, splits, m2, table, rc);
    CHECK(r1.negatives == 0);
    CHECK(r2.negatives == 0);
    CHECK(param_bytes(m1.all_params()) == param_bytes(m2.all_params()));
}

TEST_CASE("reuse improves clean-policy agreement on the conflict corpus") {
    // Clean follows policy A, noisy contradicts it on the same states, so
    // phase 1 cannot resolve the conflict but phase 2 can.
    const int seeds[] = {1, 2, 3};
    double gain_sum = 0.0;
    for (int seed : seeds) {
        grid::Corpus corpus = fixtures::conflict_corpus(20, 20, 8, 500 + seed);
        ModelConfig cfg = fixture_config(corpus);
        grid::CorpusSplits splits = corpus.make_splits(seed);
        PolicyStack model(cfg, 400 + seed);

        discovery::DiscoveryConfig dc;
        dc.epochs = 8;
        dc.pu_interval = 2;
        dc.batch = 32;
        dc.seed = seed;
        discovery::DiscoveryResult disc = discovery::run_discovery(corpus, splits, model, dc);
        REQUIRE_FALSE(disc.aborted);

        policy::Dataset test_ds = policy::build_dataset(corpus, splits.clean.test, cfg);
        std::vector<int> rows = policy::all_rows(test_ds);
        auto accuracy = [&](policy::EncoderMode mode) {
            std::vector<int> preds = harness::predict_actions(model, test_ds, rows, mode);
            int hit = 0;
            for (std::size_t i = 0; i < rows.size(); ++i)
                if (preds[i] == test_ds.actions[static_cast<std::size_t>(rows[i])]) ++hit;
            return static_cast<double>(hit) / static_cast<double>(rows.size());
        };
        const double phase1_acc = accuracy(policy::EncoderMode::Bi);

        ReuseConfig rc;
        rc.max_epochs = 10;
        rc.batch = 32;
        rc.seed = seed;
        ReuseResult rr = run_reuse(corpus, splits, model, disc.table, rc);
        REQUIRE_FALSE(rr.aborted);
        const double final_acc = accuracy(policy::EncoderMode::Uni);
        gain_sum += final_acc - phase1_acc;
    }
    CHECK(gain_sum / 3.0 >= 0.02);
}
