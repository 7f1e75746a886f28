// Python bindings for the main operations: corpus generation and I/O, the
// two training phases, evaluation, the BC baseline and a few numeric
// primitives used by the smoke tests.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>

#include "sdil/analysis.hpp"
#include "sdil/baseline.hpp"
#include "sdil/checkpoint.hpp"
#include "sdil/config.hpp"
#include "sdil/corpus.hpp"
#include "sdil/discovery.hpp"
#include "sdil/metrics.hpp"
#include "sdil/reuse.hpp"

namespace py = pybind11;
using namespace sdil;

namespace {

struct PyModel {
    std::unique_ptr<policy::PolicyStack> model;
    discovery::OptimalityTable table;
    harness::RunConfig config;
};

harness::RunConfig fill_dims(harness::RunConfig cfg, const grid::Corpus& corpus) {
    if (cfg.state_dim == 0) cfg.state_dim = corpus.state_dim;
    if (cfg.n_actions == 0) cfg.n_actions = corpus.n_actions;
    SDIL_REQUIRE(cfg.state_dim == corpus.state_dim && cfg.n_actions == corpus.n_actions,
                 "config dimensions disagree with the corpus");
    return cfg;
}

py::dict report_to_dict(const harness::MetricsReport& r) {
    py::dict d;
    d["accuracy"] = r.accuracy;
    d["macro_f1"] = r.macro_f1;
    if (r.reward_episodes > 0) {
        d["reward_mean"] = r.reward_mean;
        d["reward_std"] = r.reward_std;
        d["reward_episodes"] = r.reward_episodes;
    }
    d["skill_dist_clean"] = r.dist_clean;
    d["skill_dist_noisy"] = r.dist_noisy;
    return d;
}

const grid::Env* env_for(const harness::RunConfig& cfg, const grid::Corpus& corpus,
                         std::unique_ptr<grid::Env>& holder) {
    try {
        auto env = std::make_unique<grid::Env>(grid::Env::by_name(cfg.env));
        if (env->state_dim() == corpus.state_dim && env->n_actions() == corpus.n_actions) {
            holder = std::move(env);
            return holder.get();
        }
    } catch (const ContractError&) {
    }
    return nullptr;
}

} // namespace

PYBIND11_MODULE(_sdil, m) {
    m.doc() = "Skill-disentangled imitation learning from mixed demonstrations";
    m.attr("__version__") = "0.1.0";

    py::register_exception<ContractError>(m, "ContractViolation", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericFailure", PyExc_ArithmeticError);
    py::register_exception<ParseError>(m, "ParseFailure", PyExc_ValueError);
    py::register_exception<GenerationError>(m, "GenerationFailure", PyExc_RuntimeError);

    // ---- numeric primitives ----
    m.def("softplus", [](double x) {
        diff::Tape tape;
        diff::Var v = tape.input(diff::Tensor::scalar(static_cast<float>(x)));
        return tape.value64(tape.softplus_mean(v, 1.0));
    });
    m.def("gumbel_samples", [](std::uint64_t seed, int n) {
        Rng rng(seed);
        std::vector<double> out(static_cast<std::size_t>(n));
        for (double& v : out) v = rng.gumbel();
        return out;
    });
    m.def(
        "match_skill",
        [](py::array_t<float, py::array::c_style | py::array::forcecast> z,
           py::array_t<float, py::array::c_style | py::array::forcecast> protos) {
            SDIL_REQUIRE(z.ndim() == 1 && protos.ndim() == 2, "expected z[d], protos[K,d]");
            SDIL_REQUIRE(z.shape(0) == protos.shape(1), "embedding width mismatch");
            policy::ModelConfig cfg;
            cfg.state_dim = 1;
            cfg.n_actions = 1;
            cfg.n_skills = static_cast<int>(protos.shape(0));
            cfg.skill_dim = static_cast<int>(protos.shape(1));
            policy::PolicyStack model(cfg, 0);
            std::copy(protos.data(), protos.data() + protos.size(),
                      model.prototypes.value.data());
            diff::Tensor zt({1, cfg.skill_dim});
            std::copy(z.data(), z.data() + z.size(), zt.data());
            diff::Tensor p = policy::match_probs_eval(model, zt);
            std::vector<double> out(static_cast<std::size_t>(cfg.n_skills));
            for (int k = 0; k < cfg.n_skills; ++k) out[static_cast<std::size_t>(k)] = p.at(0, k);
            return out;
        },
        py::arg("z"), py::arg("prototypes"),
        "Inverse-distance matching probabilities over the prototype bank");

    // ---- corpus ----
    py::class_<grid::Corpus>(m, "Corpus")
        .def_readonly("state_dim", &grid::Corpus::state_dim)
        .def_readonly("n_actions", &grid::Corpus::n_actions)
        .def("__len__", [](const grid::Corpus& c) { return c.trajectories.size(); })
        .def("transition_count", &grid::Corpus::transition_count)
        .def("n_clean", [](const grid::Corpus& c) { return c.clean_indices().size(); })
        .def("n_noisy", [](const grid::Corpus& c) { return c.noisy_indices().size(); })
        .def("save", [](const grid::Corpus& c, const std::string& path) {
            grid::write_corpus(c, path);
        });
    m.def("load_corpus", &grid::read_corpus, py::arg("path"));
    m.def(
        "gen_demos",
        [](const std::string& env_name, int n_clean, int n_noisy, std::uint64_t seed) {
            grid::Env env = grid::Env::by_name(env_name);
            grid::CorpusGenConfig gen;
            gen.n_clean = n_clean;
            gen.n_noisy = n_noisy;
            return grid::generate_corpus(env, gen, seed);
        },
        py::arg("env"), py::arg("n_clean"), py::arg("n_noisy"), py::arg("seed"),
        "Generate a demonstration corpus from a gridworld expert planner");

    // ---- config ----
    py::class_<harness::RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_readwrite("lambda_", &harness::RunConfig::lambda)
        .def_readwrite("epsilon", &harness::RunConfig::epsilon)
        .def_readwrite("window", &harness::RunConfig::window)
        .def_readwrite("skills", &harness::RunConfig::skills)
        .def_readwrite("skill_dim", &harness::RunConfig::skill_dim)
        .def_readwrite("zeta_step", &harness::RunConfig::zeta_step)
        .def_readwrite("epochs", &harness::RunConfig::epochs)
        .def_readwrite("pu_interval", &harness::RunConfig::pu_interval)
        .def_readwrite("batch", &harness::RunConfig::batch)
        .def_readwrite("lr", &harness::RunConfig::lr)
        .def_readwrite("weight_decay", &harness::RunConfig::weight_decay)
        .def_readwrite("theta_neg", &harness::RunConfig::theta_neg)
        .def_readwrite("temperature", &harness::RunConfig::temperature)
        .def_readwrite("seed", &harness::RunConfig::seed)
        .def_readwrite("env", &harness::RunConfig::env)
        .def_readwrite("rollouts", &harness::RunConfig::rollouts)
        .def_readwrite("kd_log", &harness::RunConfig::kd_log)
        .def("__str__", &harness::RunConfig::to_string);
    m.def("load_config", &harness::RunConfig::from_file, py::arg("path"));

    // ---- model / training ----
    py::class_<PyModel>(m, "Model")
        .def_property_readonly("skills",
                               [](const PyModel& pm) { return pm.model->cfg.n_skills; })
        .def_property_readonly("s_op", [](const PyModel& pm) { return pm.model->s_op; })
        .def("save",
             [](PyModel& pm, const std::string& path) {
                 harness::save_checkpoint(*pm.model, &pm.table, pm.config, path);
             })
        .def("evaluate", [](PyModel& pm, const grid::Corpus& corpus, int rollouts) {
            grid::CorpusSplits splits = corpus.make_splits(pm.config.seed);
            std::unique_ptr<grid::Env> holder;
            const grid::Env* env = env_for(pm.config, corpus, holder);
            harness::MetricsReport r = harness::evaluate(
                *pm.model, corpus, splits, env, env != nullptr ? rollouts : 0,
                pm.config.seed);
            return report_to_dict(r);
        }, py::arg("corpus"), py::arg("rollouts") = 0);

    m.def("load_model", [](const std::string& path) {
        harness::CheckpointBundle b = harness::load_checkpoint(path);
        PyModel pm;
        pm.model = std::move(b.model);
        pm.table = std::move(b.table);
        pm.config = b.config;
        return pm;
    });

    m.def(
        "train_discover",
        [](const grid::Corpus& corpus, harness::RunConfig cfg, bool verbose) {
            cfg = fill_dims(cfg, corpus);
            grid::CorpusSplits splits = corpus.make_splits(cfg.seed);
            PyModel pm;
            pm.model = std::make_unique<policy::PolicyStack>(cfg.model_config(), cfg.seed);
            pm.config = cfg;
            discovery::MetricsSink sink;
            if (verbose) sink = [](const std::string& line) { py::print(line); };
            discovery::DiscoveryResult r =
                discovery::run_discovery(corpus, splits, *pm.model, cfg.discovery_config(), sink);
            if (r.aborted) throw NumericError(r.error);
            pm.table = std::move(r.table);
            return pm;
        },
        py::arg("corpus"), py::arg("config") = harness::RunConfig{}, py::arg("verbose") = false);

    m.def(
        "train_reuse",
        [](const grid::Corpus& corpus, PyModel& pm, bool verbose) {
            grid::CorpusSplits splits = corpus.make_splits(pm.config.seed);
            discovery::MetricsSink sink;
            if (verbose) sink = [](const std::string& line) { py::print(line); };
            reuse::ReuseResult r = reuse::run_reuse(corpus, splits, *pm.model, pm.table,
                                                    pm.config.reuse_config(), sink);
            if (r.aborted) throw NumericError(r.error);
            py::dict d;
            d["epochs_step1"] = r.epochs_step1;
            d["epochs_step2"] = r.epochs_step2;
            d["negatives"] = r.negatives;
            return d;
        },
        py::arg("corpus"), py::arg("model"), py::arg("verbose") = false);

    m.def(
        "bc_baseline",
        [](const grid::Corpus& corpus, const std::string& setting, harness::RunConfig cfg,
           int rollouts) {
            cfg = fill_dims(cfg, corpus);
            grid::CorpusSplits splits = corpus.make_splits(cfg.seed);
            harness::BcConfig bc;
            bc.lr = cfg.lr;
            bc.weight_decay = cfg.weight_decay;
            bc.batch = cfg.batch;
            bc.seed = cfg.seed;
            harness::BcResult result = harness::train_bc(
                corpus, splits,
                setting == "clean" ? harness::BcSetting::CleanOnly : harness::BcSetting::Mixed,
                bc);
            std::unique_ptr<grid::Env> holder;
            const grid::Env* env = env_for(cfg, corpus, holder);
            harness::MetricsReport r = harness::evaluate_bc(
                result, corpus, splits, env, env != nullptr ? rollouts : 0, cfg.seed);
            return report_to_dict(r);
        },
        py::arg("corpus"), py::arg("setting"), py::arg("config") = harness::RunConfig{},
        py::arg("rollouts") = 0);
}
