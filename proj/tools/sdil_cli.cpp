// Command-line front end: demonstration generation, the two training
// phases, evaluation, skill analyses and the behavior-cloning baseline.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "sdil/analysis.hpp"
#include "sdil/baseline.hpp"
#include "sdil/checkpoint.hpp"
#include "sdil/config.hpp"
#include "sdil/corpus.hpp"
#include "sdil/discovery.hpp"
#include "sdil/metrics.hpp"
#include "sdil/reuse.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitTraining = 2;

void print_line(const std::string& line) { std::cout << line << '\n'; }

sdil::harness::RunConfig load_config(const std::string& path, const sdil::grid::Corpus& corpus) {
    sdil::harness::RunConfig cfg = path.empty() ? sdil::harness::RunConfig{}
                                                : sdil::harness::RunConfig::from_file(path);
    if (cfg.state_dim == 0) cfg.state_dim = corpus.state_dim;
    if (cfg.n_actions == 0) cfg.n_actions = corpus.n_actions;
    SDIL_REQUIRE(cfg.state_dim == corpus.state_dim && cfg.n_actions == corpus.n_actions,
                 "config dimensions disagree with the corpus");
    return cfg;
}

int cmd_gen_demos(const std::string& env_name, int n_clean, int n_noisy, std::uint64_t seed,
                  const std::string& out) {
    sdil::grid::Env env = sdil::grid::Env::by_name(env_name);
    sdil::grid::CorpusGenConfig gen;
    gen.n_clean = n_clean;
    gen.n_noisy = n_noisy;
    sdil::grid::Corpus corpus = sdil::grid::generate_corpus(env, gen, seed);
    sdil::grid::write_corpus(corpus, out);
    std::cout << "wrote " << corpus.trajectories.size() << " trajectories ("
              << corpus.transition_count() << " transitions) to " << out << '\n';
    return kExitOk;
}

int cmd_train_discover(const std::string& corpus_path, const std::string& config_path,
                       const std::string& out) {
    sdil::grid::Corpus corpus = sdil::grid::read_corpus(corpus_path);
    sdil::harness::RunConfig cfg = load_config(config_path, corpus);
    cfg.corpus = corpus_path;
    sdil::grid::CorpusSplits splits = corpus.make_splits(cfg.seed);
    sdil::policy::PolicyStack model(cfg.model_config(), cfg.seed);
    sdil::discovery::DiscoveryResult result =
        sdil::discovery::run_discovery(corpus, splits, model, cfg.discovery_config(), print_line);
    sdil::harness::save_checkpoint(model, &result.table, cfg, out);
    if (result.aborted) {
        std::cerr << "training aborted: " << result.error
                  << " (last good checkpoint written to " << out << ")\n";
        return kExitTraining;
    }
    std::cout << "checkpoint written to " << out << '\n';
    return kExitOk;
}

int cmd_train_reuse(const std::string& corpus_path, const std::string& ckpt_path,
                    const std::string& config_path, const std::string& out) {
    sdil::grid::Corpus corpus = sdil::grid::read_corpus(corpus_path);
    sdil::harness::CheckpointBundle bundle = sdil::harness::load_checkpoint(ckpt_path);
    sdil::harness::RunConfig cfg =
        config_path.empty() ? bundle.config : load_config(config_path, corpus);
    SDIL_REQUIRE(cfg.state_dim == corpus.state_dim && cfg.n_actions == corpus.n_actions,
                 "checkpoint/corpus dimension mismatch");
    sdil::grid::CorpusSplits splits = corpus.make_splits(cfg.seed);
    sdil::reuse::ReuseResult result = sdil::reuse::run_reuse(
        corpus, splits, *bundle.model, bundle.table, cfg.reuse_config(), print_line);
    sdil::harness::save_checkpoint(*bundle.model, &bundle.table, cfg, out);
    if (result.aborted) {
        std::cerr << "training aborted: " << result.error
                  << " (last good checkpoint written to " << out << ")\n";
        return kExitTraining;
    }
    std::cout << "checkpoint written to " << out << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_path, int rollouts) {
    sdil::harness::CheckpointBundle bundle = sdil::harness::load_checkpoint(ckpt_path);
    sdil::grid::Corpus corpus = sdil::grid::read_corpus(corpus_path);
    sdil::grid::CorpusSplits splits = corpus.make_splits(bundle.config.seed);
    if (rollouts < 0) rollouts = bundle.config.rollouts;

    std::unique_ptr<sdil::grid::Env> env;
    try {
        auto candidate = std::make_unique<sdil::grid::Env>(
            sdil::grid::Env::by_name(bundle.config.env));
        if (candidate->state_dim() == corpus.state_dim &&
            candidate->n_actions() == corpus.n_actions)
            env = std::move(candidate);
    } catch (const sdil::ContractError&) {
        // Unknown env name: corpus-only evaluation.
    }
    sdil::harness::MetricsReport report = sdil::harness::evaluate(
        *bundle.model, corpus, splits, env.get(), env ? rollouts : 0, bundle.config.seed);
    std::cout << report.to_string();
    return kExitOk;
}

int cmd_analyze(const std::string& ckpt_path, const std::string& env_name,
                const std::string& corpus_path, const std::string& out_dir, int n_rollouts) {
    sdil::harness::CheckpointBundle bundle = sdil::harness::load_checkpoint(ckpt_path);
    sdil::grid::Env env = sdil::grid::Env::by_name(env_name);
    SDIL_REQUIRE(env.state_dim() == bundle.config.state_dim &&
                     env.n_actions() == bundle.config.n_actions,
                 "env does not match the checkpoint dimensions");
    std::filesystem::create_directories(out_dir);
    for (int k = 0; k < bundle.model->cfg.n_skills; ++k) {
        sdil::harness::SkillMap map =
            sdil::harness::export_skill_map(*bundle.model, env, k, n_rollouts, bundle.config.seed);
        sdil::harness::write_skill_map(map, out_dir + "/skill_map_" + std::to_string(k) + ".tsv");
    }
    sdil::harness::write_skill_ranking(*bundle.model, out_dir + "/skill_ranking.tsv");
    if (!corpus_path.empty()) {
        sdil::grid::Corpus corpus = sdil::grid::read_corpus(corpus_path);
        sdil::harness::export_embeddings(*bundle.model, corpus, out_dir + "/embeddings.tsv");
        sdil::harness::write_selection_distributions(*bundle.model, corpus,
                                                     out_dir + "/selection_distribution.tsv");
    }
    std::cout << "analysis written to " << out_dir << '\n';
    return kExitOk;
}

int cmd_baseline(const std::string& corpus_path, const std::string& setting,
                 const std::string& config_path, int rollouts) {
    sdil::grid::Corpus corpus = sdil::grid::read_corpus(corpus_path);
    sdil::harness::RunConfig cfg = load_config(config_path, corpus);
    sdil::grid::CorpusSplits splits = corpus.make_splits(cfg.seed);
    sdil::harness::BcConfig bc_cfg;
    bc_cfg.lr = cfg.lr;
    bc_cfg.weight_decay = cfg.weight_decay;
    bc_cfg.batch = cfg.batch;
    bc_cfg.seed = cfg.seed;
    const auto mode = setting == "clean" ? sdil::harness::BcSetting::CleanOnly
                                         : sdil::harness::BcSetting::Mixed;
    sdil::harness::BcResult bc = sdil::harness::train_bc(corpus, splits, mode, bc_cfg);

    std::unique_ptr<sdil::grid::Env> env;
    try {
        auto candidate = std::make_unique<sdil::grid::Env>(
            sdil::grid::Env::by_name(cfg.env));
        if (candidate->state_dim() == corpus.state_dim &&
            candidate->n_actions() == corpus.n_actions)
            env = std::move(candidate);
    } catch (const sdil::ContractError&) {
    }
    if (rollouts < 0) rollouts = cfg.rollouts;
    sdil::harness::MetricsReport report = sdil::harness::evaluate_bc(
        bc, corpus, splits, env.get(), env ? rollouts : 0, cfg.seed);
    std::cout << "setting=" << setting << '\n' << report.to_string();
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Skill-disentangled imitation learning from mixed demonstrations"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-demos", "Generate a demonstration corpus");
    std::string gen_env = "fourroom", gen_out;
    int gen_clean = 200, gen_noisy = 200;
    std::uint64_t gen_seed = 1;
    gen->add_option("--env", gen_env, "fourroom|doorkey")->required();
    gen->add_option("--clean", gen_clean, "number of clean trajectories")->required();
    gen->add_option("--noisy", gen_noisy, "number of noisy trajectories")->required();
    gen->add_option("--seed", gen_seed, "generation seed")->required();
    gen->add_option("--out", gen_out, "output corpus path")->required();

    auto* disc = app.add_subcommand("train-discover", "Phase 1: skill discovery");
    std::string disc_corpus, disc_config, disc_out;
    disc->add_option("--corpus", disc_corpus)->required();
    disc->add_option("--config", disc_config, "run config file");
    disc->add_option("--out", disc_out, "output checkpoint")->required();

    auto* reuse_cmd = app.add_subcommand("train-reuse", "Phase 2: skill reuse");
    std::string reuse_corpus, reuse_ckpt, reuse_config, reuse_out;
    reuse_cmd->add_option("--corpus", reuse_corpus)->required();
    reuse_cmd->add_option("--ckpt", reuse_ckpt, "phase-1 checkpoint")->required();
    reuse_cmd->add_option("--config", reuse_config, "run config file");
    reuse_cmd->add_option("--out", reuse_out, "output checkpoint")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string eval_ckpt, eval_corpus;
    int eval_rollouts = -1;
    eval_cmd->add_option("--ckpt", eval_ckpt)->required();
    eval_cmd->add_option("--corpus", eval_corpus)->required();
    eval_cmd->add_option("--rollouts", eval_rollouts, "episodes for reward estimation");

    auto* analyze = app.add_subcommand("analyze-skills", "Export skill maps and embeddings");
    std::string an_ckpt, an_env = "fourroom", an_corpus, an_out;
    int an_rollouts = 50;
    analyze->add_option("--ckpt", an_ckpt)->required();
    analyze->add_option("--env", an_env, "fourroom|doorkey")->required();
    analyze->add_option("--corpus", an_corpus, "corpus for embedding export");
    analyze->add_option("--out", an_out, "output directory")->required();
    analyze->add_option("--rollouts", an_rollouts, "rollouts per skill map");

    auto* bc = app.add_subcommand("baseline-bc", "Behavior-cloning baseline");
    std::string bc_corpus, bc_setting, bc_config;
    int bc_rollouts = -1;
    bc->add_option("--corpus", bc_corpus)->required();
    bc->add_option("--setting", bc_setting, "clean|mixed")
        ->required()
        ->check(CLI::IsMember({"clean", "mixed"}));
    bc->add_option("--config", bc_config, "run config file");
    bc->add_option("--rollouts", bc_rollouts, "episodes for reward estimation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen_demos(gen_env, gen_clean, gen_noisy, gen_seed, gen_out);
        if (disc->parsed()) return cmd_train_discover(disc_corpus, disc_config, disc_out);
        if (reuse_cmd->parsed())
            return cmd_train_reuse(reuse_corpus, reuse_ckpt, reuse_config, reuse_out);
        if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_corpus, eval_rollouts);
        if (analyze->parsed())
            return cmd_analyze(an_ckpt, an_env, an_corpus, an_out, an_rollouts);
        if (bc->parsed()) return cmd_baseline(bc_corpus, bc_setting, bc_config, bc_rollouts);
    } catch (const sdil::NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitTraining;
    } catch (const sdil::ContractError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const sdil::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const sdil::GenerationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitTraining;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
