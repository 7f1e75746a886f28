#include "sdil/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "sdil/discovery.hpp"

namespace sdil::harness {

using diff::Tensor;

SkillMap export_skill_map(const PolicyStack& model, const grid::Env& env, int skill,
                          int n_rollouts, std::uint64_t seed) {
    SDIL_REQUIRE(skill >= 0 && skill < model.cfg.n_skills, "skill index out of range");
    PinnedSkillAgent agent(model, skill);
    const policy::ModelConfig& cfg = model.cfg;

    // Per-cell action tallies, restricted to visits where the bi module
    // itself would pick this skill (computed post-hoc from s_{t+1}).
    std::map<int, std::map<int, int>> tally;
    Tensor bi_input({1, cfg.bi_input_dim()});
    for (int ep = 0; ep < n_rollouts; ++ep) {
        Rng ep_rng(seed + static_cast<std::uint64_t>(ep));
        grid::State state = env.initial_state(env.sample_start(ep_rng));
        WindowBuffer window(cfg.window, env.state_dim(), env.n_actions());
        for (int step = 1; step <= env.max_steps(); ++step) {
            const int action = agent.act(env, state, window);
            grid::StepResult r = env.step(state, action, step);
            std::vector<float> cur = env.features(state);
            std::vector<float> next = env.features(r.next);
            window.write_bi(bi_input.data(), cur, next);
            Tensor z = policy::encode_eval(model, bi_input, policy::EncoderMode::Bi);
            Tensor probs = policy::match_probs_eval(model, z);
            if (policy::argmax_row(probs, 0) == skill)
                ++tally[env.cell_index(state.agent)][action];
            window.push(cur, action);
            state = r.next;
            if (r.done) break;
        }
    }

    SkillMap map;
    map.skill = skill;
    for (const auto& [cell, actions] : tally) {
        SkillMapCell c;
        c.row = cell / env.width();
        c.col = cell % env.width();
        int total = 0, best = -1;
        for (const auto& [action, count] : actions) {
            total += count;
            if (best < 0 || count > actions.at(best)) best = action;
        }
        c.action = best;
        c.visits = total;
        c.consistency = static_cast<double>(actions.at(best)) / static_cast<double>(total);
        map.cells.push_back(c);
    }
    return map;
}

std::vector<int> skill_ranking(const PolicyStack& model) {
    std::vector<int> order(static_cast<std::size_t>(model.cfg.n_skills));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return model.s_op[static_cast<std::size_t>(a)] > model.s_op[static_cast<std::size_t>(b)];
    });
    return order;
}

void write_skill_map(const SkillMap& map, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << "row\tcol\taction\tconsistency\tvisits\n";
    for (const SkillMapCell& c : map.cells)
        out << c.row << '\t' << c.col << '\t' << c.action << '\t' << c.consistency << '\t'
            << c.visits << '\n';
}

void write_skill_ranking(const PolicyStack& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << "rank\tskill\ts_op\ts_pref\ts_qual\n";
    std::vector<int> order = skill_ranking(model);
    for (std::size_t r = 0; r < order.size(); ++r) {
        const std::size_t k = static_cast<std::size_t>(order[r]);
        out << r + 1 << '\t' << order[r] << '\t' << model.s_op[k] << '\t' << model.s_pref[k]
            << '\t' << model.s_qual[k] << '\n';
    }
}

void export_embeddings(const PolicyStack& model, const grid::Corpus& corpus,
                       const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    policy::Dataset ds = discovery::full_dataset(corpus, model.cfg);
    Tensor z = policy::encode_eval(model, ds.bi_inputs, policy::EncoderMode::Bi);
    Tensor probs = policy::match_probs_eval(model, z);
    char buf[64];
    for (int r = 0; r < ds.size(); ++r) {
        const grid::Trajectory& traj =
            corpus.trajectories[static_cast<std::size_t>(ds.traj_index[static_cast<std::size_t>(r)])];
        out << traj.id << '\t' << (traj.clean ? "clean" : "noisy") << '\t'
            << ds.step_index[static_cast<std::size_t>(r)] << '\t'
            << ds.actions[static_cast<std::size_t>(r)] << '\t' << policy::argmax_row(probs, r)
            << '\t';
        for (int d = 0; d < z.cols(); ++d) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(z.at(r, d)));
            if (d) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

std::vector<EmbeddingRow> read_embeddings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open embeddings file '" + path + "'");
    std::vector<EmbeddingRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            std::size_t tab = line.find('\t', pos);
            fields.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
            if (tab == std::string::npos) break;
            pos = tab + 1;
        }
        if (fields.size() != 6)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 6 fields");
        EmbeddingRow row;
        row.traj_id = std::stoi(fields[0]);
        row.clean = fields[1] == "clean";
        row.step = std::stoi(fields[2]);
        row.action = std::stoi(fields[3]);
        row.skill = std::stoi(fields[4]);
        const char* p = fields[5].c_str();
        while (*p) {
            char* end = nullptr;
            row.embedding.push_back(std::strtof(p, &end));
            if (end == p)
                throw ParseError(path + ":" + std::to_string(line_no) + ": bad embedding literal");
            p = end;
            if (*p == ',') ++p;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_selection_distributions(const PolicyStack& model, const grid::Corpus& corpus,
                                   const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    auto emit = [&](const char* label, const std::vector<int>& trajs) {
        if (trajs.empty()) return;
        policy::Dataset ds = policy::build_dataset(corpus, trajs, model.cfg);
        std::vector<double> dist = skill_selection_distribution(
            model, ds, policy::all_rows(ds), policy::EncoderMode::Bi);
        out << label;
        for (double v : dist) out << '\t' << v;
        out << '\n';
    };
    emit("clean", corpus.clean_indices());
    emit("noisy", corpus.noisy_indices());
}

} // namespace sdil::harness
