#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdil/adam.hpp"
#include "sdil/clustering.hpp"
#include "sdil/policy.hpp"

namespace sdil::discovery {

using policy::Dataset;
using policy::PolicyStack;

// Per-skill selection statistics and optimality scores, plus the scores
// propagated to individual transitions (indexed like the dataset rows the
// table was computed over). Clean transitions always score exactly 1.
struct OptimalityTable {
    std::vector<float> p_clean;
    std::vector<float> p_noisy;
    std::vector<float> s_pref;
    std::vector<float> s_qual;
    std::vector<float> s_op;
    std::vector<float> transition_score;
    int refresh_epoch = -1;
    int refresh_count = 0;

    int n_skills() const { return static_cast<int>(s_op.size()); }
};

// Per-skill scores from selection distributions and action-prediction
// quality:
//   p^{z,set}_k  = mean over set transitions of p(z_t = z^k)
//   s^pref_k     = (p^{z,clean}_k - p^{z,noisy}_k) / (p^{z,clean}_k + 1e-8)
//   s^qual_k     = selection-probability-weighted mean of p(a_t | s_t, z^k)
//   s^op_k       = min-max of s^pref_k * s^qual_k onto [-1,1] (all-equal -> 0)
// `selection_probs` must be (N x K) matching ds rows.
OptimalityTable make_optimality_table(const Dataset& ds, const diff::Tensor& selection_probs,
                                      const diff::Tensor& action_quality);

// Convenience: runs the bi encoder and pi_low over `ds` and builds the table,
// including per-transition scores.
OptimalityTable estimate_skill_optimality(const Dataset& ds, const PolicyStack& model);

// score = 1 for clean transitions, sum_k p(z_t=z^k) * s^op_k otherwise.
float propagate_optimality(std::span<const float> selection_probs, bool clean,
                           std::span<const float> s_op);

// Positive / negative pair rows for one anchor. Positives are drawn
// uniformly from the anchor's cluster after the optimality filter
// |score_j - score_anchor| <= 2*(1-epsilon); when the filtered pool is
// empty the anchor itself serves as its positive pair. Negatives come
// uniformly from the other clusters, unfiltered.
struct PairSample {
    std::vector<int> positives;
    std::vector<int> negatives;
};

PairSample sample_pairs(int anchor_row, const ClusterAssignment& clusters,
                        std::span<const float> scores, double epsilon, int n_pos, int n_neg,
                        Rng& rng);

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// L_mi = mean_anchor [ mean_pos sp(-T(s,a,z+)) + mean_neg sp(T(s,a,z-)) ]
// from raw compatibility outputs (pair counts must be uniform per anchor).
diff::Var mi_loss_from_scores(diff::Tape& tape, diff::Var t_pos, diff::Var t_neg);

// One batch of the skill-discovery update with everything stochastic
// materialized up front so steps can be replayed in tests.
struct StepBatch {
    std::vector<int> anchors;
    std::vector<int> positives; // anchors.size() * n_pos, anchor-major
    std::vector<int> negatives; // anchors.size() * n_neg, anchor-major
    diff::Tensor g_anchor;      // Gumbel noise, (b x K)
    diff::Tensor g_pos;         // (b*n_pos x K)
    diff::Tensor g_neg;         // (b*n_neg x K)
};

struct StepLosses {
    double imitation = 0.0;
    double mutual_info = 0.0;
};

// Alg. 2 update: first the compatibility estimator T is stepped to tighten
// the JSD bound on L_mi, then {f_bi, g, pi_low} descend L_imi + lambda*L_mi
// with T held fixed, in that order.
StepLosses discovery_step(PolicyStack& model, const Dataset& ds, const StepBatch& batch,
                          double lambda, double temperature, diff::Adam& model_opt,
                          diff::Adam& compat_opt);

// Both batch losses without any update (validation / probing).
StepLosses eval_step_losses(PolicyStack& model, const Dataset& ds, const StepBatch& batch,
                            double temperature);

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

struct DiscoveryConfig {
    int epochs = 50;
    int pu_interval = 5; // optimality refresh period (epochs)
    double lambda = 1.0;
    double epsilon = 0.1;
    int batch = 64;
    int n_pos = 4;
    int n_neg = 4;
    double lr = 1e-3;
    double weight_decay = 5e-4;
    double temperature = 1.0;
    double zeta_step = 0.05;
    int kmeans_iters = 20;
    std::uint64_t seed = 1;
};

using MetricsSink = std::function<void(const std::string&)>;

struct DiscoveryResult {
    OptimalityTable table;       // over the full corpus dataset
    double final_imitation = 0.0;
    double final_mutual_info = 0.0;
    int epochs_run = 0;
    bool aborted = false;        // numeric failure; model restored to last good state
    std::string error;
};

// Phase-1 training over the train split of both demonstration sets.
// Emits one metrics line per epoch: "epoch=<n> L_imi=<v> L_mi=<v> sop=...".
DiscoveryResult run_discovery(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                              PolicyStack& model, const DiscoveryConfig& cfg,
                              const MetricsSink& sink = nullptr);

// Dataset over every trajectory of the corpus (table/report building).
Dataset full_dataset(const grid::Corpus& corpus, const policy::ModelConfig& cfg);
// Dataset over the train split (clean then noisy trajectories).
Dataset train_dataset(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                      const policy::ModelConfig& cfg);
// Scores of `target` rows looked up from a full-corpus table by
// (trajectory, step).
std::vector<float> scores_for(const Dataset& target, const Dataset& full_ds,
                              const OptimalityTable& table);

} // namespace sdil::discovery
