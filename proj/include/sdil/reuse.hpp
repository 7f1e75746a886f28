#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdil/discovery.hpp"

namespace sdil::reuse {

using discovery::Dataset;
using discovery::MetricsSink;
using discovery::OptimalityTable;
using policy::PolicyStack;

// Rows of `ds` from the noisy set whose propagated optimality score is
// strictly below the threshold. Clean rows are never selected (they score
// exactly 1).
std::vector<int> collect_negatives(const Dataset& ds, std::span<const float> scores,
                                   double threshold);

// L_KD = -mean p(z_t = teacher_t) over the batch (the config can switch to
// the log-probability variant). Teacher indices come from the frozen bi
// encoder via noise-free argmax.
diff::Var kd_loss(diff::Tape& tape, diff::Var student_probs, std::vector<int> teacher,
                  bool log_variant);

// L_adv = mean log p(a_t | s_t, z_t) over a negative batch, probabilities
// floored at 1e-6. Minimizing pushes recorded bad actions down.
diff::Var adversarial_loss(diff::Tape& tape, diff::Var action_probs, std::vector<int> actions);

struct ReuseConfig {
    double lr = 1e-3;
    double weight_decay = 5e-4;
    double temperature = 1.0;
    int batch = 64;
    int max_epochs = 50; // cap per step
    int patience = 5;    // epochs without validation improvement
    double theta_neg = -0.5;
    bool kd_log_variant = false;
    std::uint64_t seed = 1;
};

struct ReuseStepResult {
    int epochs = 0;
    double val_nll = 0.0;
};

struct ReuseResult {
    int epochs_step1 = 0;
    int epochs_step2 = 0;
    double val_nll_step1 = 0.0;
    double val_nll_step2 = 0.0;
    int negatives = 0;
    bool aborted = false;
    std::string error;
};

// Step 1: freeze g and pi_low (and f_bi, T), train only f_uni on D^clean
// with L_imi + L_KD. Early-stops on clean-validation imitation loss
// (patience, epoch cap) and keeps the best-validation weights.
ReuseStepResult reuse_step1(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                            PolicyStack& model, const ReuseConfig& cfg,
                            const MetricsSink& sink = nullptr);

// Step 2: unfreeze {f_uni, g, pi_low} and fine-tune with L_imi + L_adv,
// the adversarial term running over D^neg (noisy train transitions whose
// propagated score falls below theta_neg). Same stopping rule.
ReuseStepResult reuse_step2(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                            PolicyStack& model, const OptimalityTable& table,
                            const ReuseConfig& cfg, const MetricsSink& sink = nullptr,
                            int* negatives_out = nullptr);

// Full phase 2: step 1 then step 2, with numeric-failure rollback.
ReuseResult run_reuse(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                      PolicyStack& model, const OptimalityTable& table, const ReuseConfig& cfg,
                      const MetricsSink& sink = nullptr);

// Mean NLL of recorded actions with noise-free argmax skill selection
// (validation / reporting path).
double eval_nll(const PolicyStack& model, const Dataset& ds, const std::vector<int>& rows,
                policy::EncoderMode mode);

} // namespace sdil::reuse
