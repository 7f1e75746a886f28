#include "sdil/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sdil::grid {

std::vector<int> Corpus::clean_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < trajectories.size(); ++i)
        if (trajectories[i].clean) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> Corpus::noisy_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < trajectories.size(); ++i)
        if (!trajectories[i].clean) out.push_back(static_cast<int>(i));
    return out;
}

std::int64_t Corpus::transition_count() const {
    std::int64_t n = 0;
    for (const auto& t : trajectories) n += static_cast<std::int64_t>(t.steps.size());
    return n;
}

namespace {

SplitIndices split_set(std::vector<int> idx, Rng& rng) {
    rng.shuffle(idx);
    const int n = static_cast<int>(idx.size());
    const int n_train = static_cast<int>(std::floor(0.3 * n + 0.5));
    const int n_val = static_cast<int>(std::floor(0.2 * n + 0.5));
    SplitIndices s;
    s.train.assign(idx.begin(), idx.begin() + n_train);
    s.val.assign(idx.begin() + n_train, idx.begin() + std::min(n, n_train + n_val));
    s.test.assign(idx.begin() + std::min(n, n_train + n_val), idx.end());
    return s;
}

} // namespace

CorpusSplits Corpus::make_splits(std::uint64_t seed) const {
    Rng rng(seed ^ 0x5d1lu);
    CorpusSplits out;
    out.clean = split_set(clean_indices(), rng);
    out.noisy = split_set(noisy_indices(), rng);
    return out;
}

Corpus generate_corpus(const Env& env, const CorpusGenConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    Corpus corpus;
    corpus.state_dim = env.state_dim();
    corpus.n_actions = env.n_actions();
    int next_id = 0;
    for (int i = 0; i < cfg.n_clean; ++i) {
        Trajectory t = plan_expert(env, env.sample_start(rng));
        t.id = next_id++;
        corpus.trajectories.push_back(std::move(t));
    }
    const int n_decoy = static_cast<int>(std::floor(cfg.decoy_fraction * cfg.n_noisy + 0.5));
    for (int i = 0; i < cfg.n_noisy; ++i) {
        NoisyMode mode = i < n_decoy ? NoisyMode::DecoyGoal : NoisyMode::RandomWalk;
        Trajectory t = generate_noisy(env, env.sample_start(rng), mode, rng);
        t.id = next_id++;
        corpus.trajectories.push_back(std::move(t));
    }
    return corpus;
}

void write_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    out << "SDILCORPUS 1 " << corpus.state_dim << ' ' << corpus.n_actions << '\n';
    char buf[64];
    for (const Trajectory& traj : corpus.trajectories) {
        for (std::size_t s = 0; s < traj.steps.size(); ++s) {
            const Transition& tr = traj.steps[s];
            out << traj.id << '\t' << (traj.clean ? "clean" : "noisy") << '\t' << s << '\t'
                << tr.action << '\t';
            for (std::size_t i = 0; i < tr.state.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(tr.state[i]));
                if (i) out << ',';
                out << buf;
            }
            out << '\n';
        }
    }
    if (!out) throw ParseError("write failed for '" + path + "'");
}

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line_no, const std::string& why) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + why);
}

} // namespace

Corpus read_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open corpus file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
    std::istringstream hdr(line);
    std::string magic;
    int version = 0;
    Corpus corpus;
    hdr >> magic >> version >> corpus.state_dim >> corpus.n_actions;
    if (!hdr || magic != "SDILCORPUS") parse_fail(path, 1, "bad header '" + line + "'");
    if (version != 1) parse_fail(path, 1, "unsupported corpus version");
    if (corpus.state_dim <= 0 || corpus.n_actions <= 0)
        parse_fail(path, 1, "nonpositive dimensions in header");

    int line_no = 1;
    int cur_id = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) parse_fail(path, line_no, "empty line");
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            std::size_t tab = line.find('\t', pos);
            fields.push_back(line.substr(pos, tab == std::string::npos ? tab : tab - pos));
            if (tab == std::string::npos) break;
            pos = tab + 1;
        }
        if (fields.size() != 5) parse_fail(path, line_no, "expected 5 tab-separated fields");

        int traj_id = 0, step = 0, action = 0;
        try {
            traj_id = std::stoi(fields[0]);
            step = std::stoi(fields[2]);
            action = std::stoi(fields[3]);
        } catch (const std::exception&) {
            parse_fail(path, line_no, "non-integer id/step/action");
        }
        bool clean;
        if (fields[1] == "clean") clean = true;
        else if (fields[1] == "noisy") clean = false;
        else parse_fail(path, line_no, "label must be clean|noisy");
        if (action < 0 || action >= corpus.n_actions)
            parse_fail(path, line_no, "action id out of range");

        Transition tr;
        tr.action = action;
        tr.state.reserve(static_cast<std::size_t>(corpus.state_dim));
        const char* p = fields[4].c_str();
        while (*p) {
            char* end = nullptr;
            float v = std::strtof(p, &end);
            if (end == p) parse_fail(path, line_no, "bad state literal");
            tr.state.push_back(v);
            p = end;
            if (*p == ',') ++p;
            else if (*p != '\0') parse_fail(path, line_no, "bad state separator");
        }
        if (static_cast<int>(tr.state.size()) != corpus.state_dim)
            parse_fail(path, line_no, "state width does not match header");

        if (traj_id != cur_id) {
            Trajectory t;
            t.id = traj_id;
            t.clean = clean;
            corpus.trajectories.push_back(std::move(t));
            cur_id = traj_id;
        }
        Trajectory& traj = corpus.trajectories.back();
        if (traj.clean != clean) parse_fail(path, line_no, "label changed mid-trajectory");
        if (static_cast<int>(traj.steps.size()) != step)
            parse_fail(path, line_no, "non-consecutive step index");
        traj.steps.push_back(std::move(tr));
    }
    return corpus;
}

} // namespace sdil::grid
