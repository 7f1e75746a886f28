#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdil/corpus.hpp"
#include "sdil/tape.hpp"

namespace sdil::policy {

using diff::Parameter;
using diff::Tape;
using diff::Tensor;
using diff::Var;

struct ModelConfig {
    int state_dim = 0;
    int n_actions = 0;
    int window = 5;    // look-back window M
    int n_skills = 8;  // K prototypes
    int skill_dim = 16;
    int hidden1 = 128;
    int hidden2 = 64;

    int uni_input_dim() const { return window * (state_dim + n_actions) + state_dim; }
    int bi_input_dim() const { return uni_input_dim() + state_dim; }
};

// Two hidden tanh layers, linear head.
struct Mlp {
    Parameter w1, b1, w2, b2, w3, b3;

    void init(const std::string& name, int in, int h1, int h2, int out, Rng& rng);
    std::vector<Parameter*> params();
    void set_trainable(bool on);
};

enum class EncoderMode { Bi, Uni };
enum class SelectMode { StraightThrough, Soft };

// The full parameter stack: skill encoders f_bi / f_uni, prototype bank g,
// skill-conditioned policy pi_low and MI compatibility estimator T, plus
// the per-skill statistics filled in by the discovery phase.
struct PolicyStack {
    ModelConfig cfg;
    Mlp f_bi;
    Mlp f_uni;
    Mlp pi_low; // input: state ++ skill embedding -> action logits
    Mlp compat; // input: state ++ action one-hot ++ skill embedding -> scalar
    Parameter prototypes; // K x d_z, init U(-0.1, 0.1)

    // Per-skill statistics (selection distributions and optimality scores).
    std::vector<float> p_clean, p_noisy, s_pref, s_qual, s_op;

    PolicyStack(ModelConfig cfg, std::uint64_t seed);

    std::vector<Parameter*> all_params();
    std::vector<Parameter*> discovery_params(); // f_bi, prototypes, pi_low
    std::vector<Parameter*> compat_params();
    std::vector<Parameter*> uni_params();
    std::vector<Parameter*> reuse2_params(); // f_uni, prototypes, pi_low
};

// ---------------------------------------------------------------------------
// Tape-side forward builders (training path)
// ---------------------------------------------------------------------------

Var mlp_apply(Tape& tape, Mlp& mlp, Var x);

// Encoder over a prebuilt input matrix (batch x input_dim). The mode picks
// the parameter set and checks the expected input width.
Var encode_skill(Tape& tape, PolicyStack& model, Var inputs, EncoderMode mode);

// Inverse-distance skill matching: p_k = (1/D(z', z^k)) / sum_i 1/D(z', z^i)
// with D the Euclidean distance floored at 1e-8.
Var match_skill(Tape& tape, PolicyStack& model, Var z_prime);

struct Selection {
    Var soft;   // Gumbel-softmax surrogate (batch x K)
    Var onehot; // hard one-hot in StraightThrough mode, == soft otherwise
};

// Gumbel-softmax selection over matching probabilities. `gumbel_noise`
// must be a (batch x K) tensor of standard Gumbel draws.
Selection select_skill(Tape& tape, Var probs, const Tensor& gumbel_noise,
                       double temperature, SelectMode mode);

// Action logits of pi_low given states (batch x d_s) and skill embeddings
// (batch x d_z).
Var action_logits(Tape& tape, PolicyStack& model, Var states, Var skills);

// Compatibility score T(s, a, z) -> (batch x 1).
Var compatibility(Tape& tape, PolicyStack& model, Var states, Var action_onehot, Var skills);

struct Dataset;

// Full hierarchy pass for a batch of dataset rows: encode, match, select,
// fetch the selected prototype, score actions.
struct HierarchyOut {
    Var match_probs; // (b x K)
    Var selection;   // one-hot (or soft surrogate) selection
    Var skills;      // (b x d_z) selected embeddings
    Var logits;      // (b x |A|) action logits
};

HierarchyOut hierarchy_forward(Tape& tape, PolicyStack& model, const Dataset& ds,
                               const std::vector<int>& rows, const Tensor& gumbel_noise,
                               double temperature, EncoderMode enc_mode, SelectMode sel_mode);

// ---------------------------------------------------------------------------
// Forward-only evaluation path (no tape, no noise)
// ---------------------------------------------------------------------------

Tensor mlp_eval(const Mlp& mlp, const Tensor& x);
Tensor encode_eval(const PolicyStack& model, const Tensor& inputs, EncoderMode mode);
// Matching probabilities for a batch of embeddings.
Tensor match_probs_eval(const PolicyStack& model, const Tensor& z_prime);
// Row of the prototype bank.
std::vector<float> prototype(const PolicyStack& model, int k);
// Softmax action distribution of pi_low.
Tensor action_probs_eval(const PolicyStack& model, const Tensor& states, const Tensor& skills);

int argmax_row(const Tensor& t, int row);

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

// Window layout (oldest -> newest): M slots of [state ++ action one-hot],
// zero-padded where t - M + j < 0, then s_t, then (bi mode) s_{t+1}; the
// trailing transition of a trajectory uses a zero vector for s_{t+1}.
void write_encoder_input(float* dst, const grid::Trajectory& traj, int t,
                         const ModelConfig& cfg, EncoderMode mode);

// Cached per-transition features for a trajectory subset.
struct Dataset {
    std::vector<int> traj_index;  // into corpus.trajectories
    std::vector<int> step_index;
    std::vector<char> clean;
    std::vector<int> actions;
    Tensor states;     // N x d_s
    Tensor uni_inputs; // N x uni_input_dim
    Tensor bi_inputs;  // N x bi_input_dim
    int size() const { return static_cast<int>(actions.size()); }
};

Dataset build_dataset(const grid::Corpus& corpus, const std::vector<int>& traj_indices,
                      const ModelConfig& cfg);

std::vector<int> all_rows(const Dataset& ds);

Tensor one_hot_rows(const std::vector<int>& ids, int width);

} // namespace sdil::policy
