#pragma once

// 64-bit reference forward passes, independent of the float tape. All the
// gradient checks in this tree compare analytic float gradients against
// central finite differences computed through these functions.

#include <cstdint>
#include <functional>
#include <vector>

#include "sdil/policy.hpp"

namespace refd {

using DVec = std::vector<double>;
// Row-major matrix as nested rows.
using DMat = std::vector<std::vector<double>>;

DMat from_tensor(const sdil::diff::Tensor& t);
sdil::diff::Tensor to_tensor(const DMat& m);

// ---- elementwise / structural ----
DMat affine(const DMat& x, const DMat& w, const DVec& b);
DMat tanh_m(const DMat& x);
DMat relu(const DMat& x);
DMat softplus_m(const DMat& x);
DMat softmax_rows(const DMat& x);
DMat log_softmax_rows(const DMat& x);
DMat concat_cols(const std::vector<DMat>& parts);
double mean_all(const DMat& x);
DVec sqdist_rows(const DMat& a, const DMat& b);
DMat pairwise_dist(const DMat& z, const DMat& p, double floor);
DMat reciprocal(const DMat& x);
DMat row_normalize(const DMat& x);

// ---- fused reductions ----
double cross_entropy_mean(const DMat& logits, const std::vector<int>& labels);
double pick_mean(const DMat& x, const std::vector<int>& labels);
double log_pick_mean(const DMat& x, const std::vector<int>& labels, double floor);
double softplus_mean(const DMat& x, double sign);

// ---- model mirror ----
struct RefMlp {
    DMat w1; DVec b1;
    DMat w2; DVec b2;
    DMat w3; DVec b3;
    DMat operator()(const DMat& x) const;
};

struct RefModel {
    RefMlp f_bi, f_uni, pi_low, compat;
    DMat protos;

    static RefModel from(sdil::policy::PolicyStack& model);
    // Flattened parameter coordinates in PolicyStack::all_params() order.
    std::vector<double*> coords();

    DMat encode(const DMat& inputs, sdil::policy::EncoderMode mode) const;
    DMat match_probs(const DMat& z) const;
    // Gumbel-softmax surrogate (soft selection).
    DMat soft_select(const DMat& probs, const DMat& noise, double temperature) const;
    DMat action_logits(const DMat& states, const DMat& skills) const;
    DVec compat_scores(const DMat& states, const DMat& actions_onehot, const DMat& skills) const;
};

// ---- loss references (soft selection path, pinned noise) ----
double imitation_loss(const RefModel& m, const DMat& enc_inputs, const DMat& states,
                      const std::vector<int>& actions, const DMat& noise, double temperature,
                      sdil::policy::EncoderMode mode);
double mi_loss(const RefModel& m, const DMat& pos_inputs, const DMat& neg_inputs,
               const DMat& pos_anchor_states, const DMat& pos_anchor_actions,
               const DMat& neg_anchor_states, const DMat& neg_anchor_actions,
               const DMat& pos_noise, const DMat& neg_noise, double temperature);
double kd_loss(const RefModel& m, const DMat& enc_inputs, const std::vector<int>& teacher,
               bool log_variant);
double adv_loss(const RefModel& m, const DMat& enc_inputs, const DMat& states,
                const std::vector<int>& actions, const DMat& noise, double temperature);

// ---- finite differences ----
double central_diff(const std::function<double()>& f, double* coord, double h);
// Relative error with a small floor to keep near-zero gradients meaningful.
double rel_err(double analytic, double reference);

} // namespace refd
