#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <string>
#include <vector>

#include "sdil/config.hpp"
#include "sdil/gridworld.hpp"
#include "sdil/policy.hpp"

namespace sdil::harness {

using policy::Dataset;
using policy::EncoderMode;
using policy::PolicyStack;

struct ActionMetrics {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

// Accuracy and macro-F1 (unweighted mean of per-class F1; classes absent
// from both predictions and labels are excluded).
ActionMetrics action_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// rollouts
// ---------------------------------------------------------------------------

// Look-back history for online (rollout-time) encoder inputs.
class WindowBuffer {
public:
    WindowBuffer(int window, int state_dim, int n_actions);
    void reset();
    void push(const std::vector<float>& state, int action);
    // Fills a uni-encoder input row: window slots ++ current state.
    void write_uni(float* dst, const std::vector<float>& current) const;
    // Bi-encoder row additionally takes the next state.
    void write_bi(float* dst, const std::vector<float>& current,
                  const std::vector<float>& next) const;

private:
    int window_, state_dim_, n_actions_;
    std::deque<std::pair<std::vector<float>, int>> hist_;
};

class Agent {
public:
    virtual ~Agent() = default;
    virtual void begin_episode() {}
    virtual int act(const grid::Env& env, const grid::State& state,
                    const WindowBuffer& window) = 0;
    // Look-back slots the rollout loop must maintain for this agent.
    virtual int window_size() const { return 0; }
};

// Deployed policy: uni encoder -> match -> argmax skill -> greedy action.
class SdilAgent : public Agent {
public:
    explicit SdilAgent(const PolicyStack& model);
    int act(const grid::Env& env, const grid::State& state, const WindowBuffer& window) override;
    int window_size() const override { return model_.cfg.window; }

private:
    const PolicyStack& model_;
};

// Low-level policy with the skill variable pinned to prototype k.
class PinnedSkillAgent : public Agent {
public:
    PinnedSkillAgent(const PolicyStack& model, int skill);
    int act(const grid::Env& env, const grid::State& state, const WindowBuffer& window) override;

private:
    const PolicyStack& model_;
    std::vector<float> proto_;
};

// Flat behavior-cloning policy (state -> action logits).
class MlpAgent : public Agent {
public:
    explicit MlpAgent(const policy::Mlp& net);
    int act(const grid::Env& env, const grid::State& state, const WindowBuffer& window) override;

private:
    const policy::Mlp& net_;
};

class RandomAgent : public Agent {
public:
    explicit RandomAgent(std::uint64_t seed) : rng_(seed) {}
    void begin_episode() override {}
    int act(const grid::Env& env, const grid::State&, const WindowBuffer&) override {
        return rng_.index(env.n_actions());
    }

private:
    Rng rng_;
};

struct RolloutStats {
    double mean = 0.0;
    double stddev = 0.0;
    int episodes = 0;
};

// Greedy evaluation rollouts; episode i uses the Rng stream seed + i for
// its start cell, aggregation runs in episode-index order.
RolloutStats rollout_reward(Agent& agent, const grid::Env& env, int n_episodes,
                            std::uint64_t seed);

// ---------------------------------------------------------------------------
// dataset-side evaluation
// ---------------------------------------------------------------------------

// Greedy action predictions with noise-free argmax skill selection.
std::vector<int> predict_actions(const PolicyStack& model, const Dataset& ds,
                                 const std::vector<int>& rows, EncoderMode mode);

// Unweighted mean of p(z_t = z^k) over the given rows.
std::vector<double> skill_selection_distribution(const PolicyStack& model, const Dataset& ds,
                                                 const std::vector<int>& rows, EncoderMode mode);

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double reward_mean = 0.0;
    double reward_std = 0.0;
    int reward_episodes = 0;
    std::vector<double> dist_clean;
    std::vector<double> dist_noisy;

    std::string to_string() const;
};

// Accuracy / macro-F1 on the clean test split (uni path), rollout reward in
// `env` (when provided) and per-set skill-selection distributions (bi path).
MetricsReport evaluate(const PolicyStack& model, const grid::Corpus& corpus,
                       const grid::CorpusSplits& splits, const grid::Env* env, int rollouts,
                       std::uint64_t seed);

} // namespace sdil::harness
