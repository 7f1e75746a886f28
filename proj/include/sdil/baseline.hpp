#pragma once

#include <cstdint>
#include <string>

#include "sdil/metrics.hpp"

namespace sdil::harness {

enum class BcSetting { CleanOnly, Mixed };

struct BcConfig {
    double lr = 1e-3;
    double weight_decay = 5e-4;
    int batch = 64;
    int max_epochs = 50;
    int patience = 5;
    int hidden1 = 128;
    int hidden2 = 64;
    std::uint64_t seed = 1;
};

struct BcResult {
    policy::Mlp net; // state -> action logits
    int epochs = 0;
    double val_nll = 0.0;
};

// Flat behavior cloning on (s_t -> a_t) transitions of the train split
// (clean only, or clean + noisy). Early-stops on the clean-validation NLL
// and keeps the best weights.
BcResult train_bc(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                  BcSetting setting, const BcConfig& cfg);

// Accuracy / macro-F1 on the clean test split plus rollout reward when an
// env is supplied.
MetricsReport evaluate_bc(const BcResult& bc, const grid::Corpus& corpus,
                          const grid::CorpusSplits& splits, const grid::Env* env, int rollouts,
                          std::uint64_t seed);

} // namespace sdil::harness
