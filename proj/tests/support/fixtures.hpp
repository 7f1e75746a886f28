#pragma once

// Synthetic corpora with known generating policies, used wherever a test
// needs an oracle for what the model should recover.

#include "sdil/corpus.hpp"
#include "sdil/rng.hpp"

namespace fixtures {

inline std::vector<float> one_hot(int idx, int width) {
    std::vector<float> v(static_cast<std::size_t>(width), 0.0f);
    v[static_cast<std::size_t>(idx)] = 1.0f;
    return v;
}

// Clean trajectories follow policy A on cells [0, region); noisy follow
// policy B on cells [region, 2*region). The state regions are disjoint, so
// raw-state clustering separates the sets perfectly.
//   A: a = cell % 4,        next = (cell + 1) % region
//   B: a = 3 - (cell % 4),  next = region + (cell - region + 1) % region
inline sdil::grid::Corpus disjoint_region_corpus(int n_clean, int n_noisy, int traj_len,
                                                 std::uint64_t seed, int region = 20) {
    sdil::Rng rng(seed);
    sdil::grid::Corpus corpus;
    corpus.state_dim = 2 * region;
    corpus.n_actions = 4;
    int id = 0;
    for (int i = 0; i < n_clean + n_noisy; ++i) {
        const bool clean = i < n_clean;
        sdil::grid::Trajectory traj;
        traj.id = id++;
        traj.clean = clean;
        int cell = clean ? rng.index(static_cast<std::size_t>(region))
                         : region + rng.index(static_cast<std::size_t>(region));
        for (int t = 0; t < traj_len; ++t) {
            sdil::grid::Transition tr;
            tr.state = one_hot(cell, corpus.state_dim);
            tr.action = clean ? cell % 4 : 3 - (cell % 4);
            traj.steps.push_back(std::move(tr));
            cell = clean ? (cell + 1) % region : region + (cell - region + 1) % region;
        }
        corpus.trajectories.push_back(std::move(traj));
    }
    return corpus;
}

// Clean and noisy trajectories move over the same cells with the same
// dynamics but contradictory actions, so nothing in the input separates
// them; only the set label does. Phase-1 training on the union cannot
// resolve the conflict, phase-2 adaptation to the clean set can.
//   clean: a = cell % 4;  noisy: a = (cell % 4 + 2) % 4;  next = cell+1 mod n
inline sdil::grid::Corpus conflict_corpus(int n_clean, int n_noisy, int traj_len,
                                          std::uint64_t seed, int cells = 20) {
    sdil::Rng rng(seed);
    sdil::grid::Corpus corpus;
    corpus.state_dim = cells;
    corpus.n_actions = 4;
    int id = 0;
    for (int i = 0; i < n_clean + n_noisy; ++i) {
        const bool clean = i < n_clean;
        sdil::grid::Trajectory traj;
        traj.id = id++;
        traj.clean = clean;
        int cell = rng.index(static_cast<std::size_t>(cells));
        for (int t = 0; t < traj_len; ++t) {
            sdil::grid::Transition tr;
            tr.state = one_hot(cell, corpus.state_dim);
            tr.action = clean ? cell % 4 : (cell % 4 + 2) % 4;
            traj.steps.push_back(std::move(tr));
            cell = (cell + 1) % cells;
        }
        corpus.trajectories.push_back(std::move(traj));
    }
    return corpus;
}

// Ground-truth action of the clean generating policy for a state row.
inline int clean_policy_action(const std::vector<float>& state) {
    for (std::size_t i = 0; i < state.size(); ++i)
        if (state[i] > 0.5f) return static_cast<int>(i) % 4;
    return 0;
}

} // namespace fixtures
