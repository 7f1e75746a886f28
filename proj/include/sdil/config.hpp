#pragma once

#include <cstdint>
#include <string>

#include "sdil/discovery.hpp"
#include "sdil/reuse.hpp"

namespace sdil::harness {

// Run configuration, read from "key = value" files ('#' starts a comment,
// unknown keys are rejected). Defaults follow the reference setup where it
// states them; everything else is a pinned project default.
struct RunConfig {
    double lambda = 1.0;
    double epsilon = 0.1;
    int window = 5;
    int skills = 8;
    int skill_dim = 16;
    double zeta_step = 0.05;
    int epochs = 50;
    int pu_interval = 5;
    int batch = 64;
    double lr = 1e-3;
    double weight_decay = 5e-4;
    double theta_neg = -0.5;
    double temperature = 1.0;
    std::uint64_t seed = 1;
    std::string env = "fourroom";
    std::string corpus;
    int rollouts = 1000;
    bool kd_log = false;
    // Filled from the corpus at training time; stored so checkpoints can
    // rebuild the model without the corpus.
    int state_dim = 0;
    int n_actions = 0;

    static RunConfig from_file(const std::string& path);
    static RunConfig from_string(const std::string& text, const std::string& origin);
    std::string to_string() const;

    policy::ModelConfig model_config() const;
    discovery::DiscoveryConfig discovery_config() const;
    reuse::ReuseConfig reuse_config() const;
};

} // namespace sdil::harness
