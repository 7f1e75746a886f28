#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdil/gridworld.hpp"
#include "sdil/rng.hpp"

namespace sdil::grid {

// Trajectory indices (into Corpus::trajectories) of one demonstration set.
struct SplitIndices {
    std::vector<int> train;
    std::vector<int> val;
    std::vector<int> test;
};

struct CorpusSplits {
    SplitIndices clean;
    SplitIndices noisy;
};

struct Corpus {
    int state_dim = 0;
    int n_actions = 0;
    std::vector<Trajectory> trajectories;

    std::vector<int> clean_indices() const;
    std::vector<int> noisy_indices() const;
    std::int64_t transition_count() const;

    // Seeded 3:2:5 train/val/test split per set, by trajectory count.
    CorpusSplits make_splits(std::uint64_t seed) const;
};

struct CorpusGenConfig {
    int n_clean = 200;
    int n_noisy = 200;
    double decoy_fraction = 0.7; // remaining noisy trajectories are random walks
};

Corpus generate_corpus(const Env& env, const CorpusGenConfig& cfg, std::uint64_t seed);

// Line-delimited UTF-8 corpus file. Header: "SDILCORPUS 1 <state_dim>
// <n_actions>", then one line per transition:
//   <traj_id>\t<clean|noisy>\t<step_index>\t<action_id>\t<s_0,s_1,...>
// with state components as decimal literals. Trailing newline required.
void write_corpus(const Corpus& corpus, const std::string& path);
Corpus read_corpus(const std::string& path);

} // namespace sdil::grid
