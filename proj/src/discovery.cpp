#include "sdil/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sdil::discovery {

using diff::Adam;
using diff::AdamConfig;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using policy::EncoderMode;
using policy::SelectMode;

// ---------------------------------------------------------------------------
// optimality table
// ---------------------------------------------------------------------------

OptimalityTable make_optimality_table(const Dataset& ds, const Tensor& selection_probs,
                                      const Tensor& action_quality) {
    const int n = ds.size();
    const int k = selection_probs.cols();
    SDIL_REQUIRE(selection_probs.rows() == n && action_quality.rows() == n &&
                     action_quality.cols() == k,
                 "optimality: matrix shapes do not match the dataset");

    OptimalityTable table;
    table.p_clean.assign(static_cast<std::size_t>(k), 0.0f);
    table.p_noisy.assign(static_cast<std::size_t>(k), 0.0f);
    table.s_pref.assign(static_cast<std::size_t>(k), 0.0f);
    table.s_qual.assign(static_cast<std::size_t>(k), 0.0f);
    table.s_op.assign(static_cast<std::size_t>(k), 0.0f);

    std::int64_t n_clean = 0, n_noisy = 0;
    std::vector<double> sum_clean(static_cast<std::size_t>(k), 0.0);
    std::vector<double> sum_noisy(static_cast<std::size_t>(k), 0.0);
    std::vector<double> qual_num(static_cast<std::size_t>(k), 0.0);
    std::vector<double> qual_den(static_cast<std::size_t>(k), 0.0);
    for (int r = 0; r < n; ++r) {
        const bool clean = ds.clean[static_cast<std::size_t>(r)] != 0;
        (clean ? n_clean : n_noisy) += 1;
        for (int c = 0; c < k; ++c) {
            const double p = selection_probs.at(r, c);
            (clean ? sum_clean : sum_noisy)[static_cast<std::size_t>(c)] += p;
            qual_num[static_cast<std::size_t>(c)] += p * action_quality.at(r, c);
            qual_den[static_cast<std::size_t>(c)] += p;
        }
    }
    if (n_clean == 0 || n_noisy == 0)
        throw GenerationError("optimality estimation needs both demonstration sets");

    std::vector<double> product(static_cast<std::size_t>(k), 0.0);
    constexpr double kDelta = 1e-8;
    for (int c = 0; c < k; ++c) {
        const double pc = sum_clean[static_cast<std::size_t>(c)] / static_cast<double>(n_clean);
        const double pn = sum_noisy[static_cast<std::size_t>(c)] / static_cast<double>(n_noisy);
        const double pref = (pc - pn) / (pc + kDelta);
        const double qual = qual_den[static_cast<std::size_t>(c)] > 0.0
                                ? qual_num[static_cast<std::size_t>(c)] /
                                      qual_den[static_cast<std::size_t>(c)]
                                : 0.0;
        table.p_clean[static_cast<std::size_t>(c)] = static_cast<float>(pc);
        table.p_noisy[static_cast<std::size_t>(c)] = static_cast<float>(pn);
        table.s_pref[static_cast<std::size_t>(c)] = static_cast<float>(pref);
        table.s_qual[static_cast<std::size_t>(c)] = static_cast<float>(qual);
        product[static_cast<std::size_t>(c)] = pref * qual;
    }

    const auto [lo_it, hi_it] = std::minmax_element(product.begin(), product.end());
    const double lo = *lo_it, hi = *hi_it;
    if (hi - lo > 0.0) {
        for (int c = 0; c < k; ++c)
            table.s_op[static_cast<std::size_t>(c)] = static_cast<float>(
                2.0 * (product[static_cast<std::size_t>(c)] - lo) / (hi - lo) - 1.0);
    } // all-equal products: every s_op stays 0

    table.transition_score.assign(static_cast<std::size_t>(n), 0.0f);
    for (int r = 0; r < n; ++r) {
        std::span<const float> row{
            selection_probs.data() + static_cast<std::size_t>(r) * k, static_cast<std::size_t>(k)};
        table.transition_score[static_cast<std::size_t>(r)] =
            propagate_optimality(row, ds.clean[static_cast<std::size_t>(r)] != 0, table.s_op);
    }
    return table;
}

namespace {

// p(a_t | s_t, z^k) for every row and every prototype -> (N x K).
Tensor action_quality_matrix(const Dataset& ds, const PolicyStack& model) {
    const int n = ds.size();
    const int k = model.cfg.n_skills;
    Tensor out({n, k});
    for (int c = 0; c < k; ++c) {
        std::vector<float> proto = policy::prototype(model, c);
        Tensor skills({n, model.cfg.skill_dim});
        for (int r = 0; r < n; ++r)
            std::copy(proto.begin(), proto.end(),
                      skills.data() + static_cast<std::size_t>(r) * model.cfg.skill_dim);
        Tensor probs = policy::action_probs_eval(model, ds.states, skills);
        for (int r = 0; r < n; ++r)
            out.at(r, c) = probs.at(r, ds.actions[static_cast<std::size_t>(r)]);
    }
    return out;
}

Tensor selection_probs_bi(const Dataset& ds, const PolicyStack& model) {
    Tensor z = policy::encode_eval(model, ds.bi_inputs, EncoderMode::Bi);
    return policy::match_probs_eval(model, z);
}

} // namespace

OptimalityTable estimate_skill_optimality(const Dataset& ds, const PolicyStack& model) {
    return make_optimality_table(ds, selection_probs_bi(ds, model),
                                 action_quality_matrix(ds, model));
}

float propagate_optimality(std::span<const float> selection_probs, bool clean,
                           std::span<const float> s_op) {
    if (clean) return 1.0f;
    SDIL_REQUIRE(selection_probs.size() == s_op.size(), "propagate: width mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < s_op.size(); ++k)
        acc += static_cast<double>(selection_probs[k]) * s_op[k];
    return static_cast<float>(acc);
}

// ---------------------------------------------------------------------------
// pair mining
// ---------------------------------------------------------------------------

PairSample sample_pairs(int anchor_row, const ClusterAssignment& clusters,
                        std::span<const float> scores, double epsilon, int n_pos, int n_neg,
                        Rng& rng) {
    SDIL_REQUIRE(anchor_row >= 0 &&
                     anchor_row < static_cast<int>(clusters.cluster_of.size()),
                 "anchor row out of range");
    const int cluster = clusters.cluster_of[static_cast<std::size_t>(anchor_row)];
    const float anchor_score = scores[static_cast<std::size_t>(anchor_row)];
    const double width = 2.0 * (1.0 - epsilon);

    std::vector<int> pool;
    for (int row : clusters.members[static_cast<std::size_t>(cluster)]) {
        if (row == anchor_row) continue;
        if (std::abs(static_cast<double>(scores[static_cast<std::size_t>(row)]) - anchor_score) <=
            width)
            pool.push_back(row);
    }
    if (pool.empty()) pool.push_back(anchor_row); // self-positive fallback

    PairSample out;
    out.positives.reserve(static_cast<std::size_t>(n_pos));
    for (int i = 0; i < n_pos; ++i)
        out.positives.push_back(pool[rng.index(pool.size())]);

    std::size_t n_other = clusters.cluster_of.size() -
                          clusters.members[static_cast<std::size_t>(cluster)].size();
    out.negatives.reserve(static_cast<std::size_t>(n_neg));
    if (n_other == 0) {
        // Degenerate clustering: fall back to any other row.
        for (int i = 0; i < n_neg; ++i) {
            int row = static_cast<int>(rng.below(clusters.cluster_of.size()));
            out.negatives.push_back(row);
        }
        return out;
    }
    for (int i = 0; i < n_neg; ++i) {
        // Index into the complement of the anchor's cluster, by walking the
        // cluster member lists in order.
        std::size_t target = rng.below(n_other);
        int chosen = -1;
        for (std::size_t c = 0; c < clusters.members.size(); ++c) {
            if (static_cast<int>(c) == cluster) continue;
            const auto& m = clusters.members[c];
            if (target < m.size()) { chosen = m[target]; break; }
            target -= m.size();
        }
        out.negatives.push_back(chosen);
    }
    return out;
}

// ---------------------------------------------------------------------------
// losses & step
// ---------------------------------------------------------------------------

Var mi_loss_from_scores(Tape& tape, Var t_pos, Var t_neg) {
    return tape.add(tape.softplus_mean(t_pos, -1.0), tape.softplus_mean(t_neg, +1.0));
}

namespace {

Tensor gather_rows(const Tensor& src, const std::vector<int>& rows) {
    Tensor out({static_cast<int>(rows.size()), src.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const float* from = src.data() + static_cast<std::size_t>(rows[i]) * src.cols();
        std::copy(from, from + src.cols(), out.data() + i * static_cast<std::size_t>(src.cols()));
    }
    return out;
}

std::vector<int> gather_ints(const std::vector<int>& src, const std::vector<int>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(src[static_cast<std::size_t>(r)]);
    return out;
}

// Repeats every anchor row `times` times (anchor-major, matching pair order).
std::vector<int> repeat_rows(const std::vector<int>& anchors, int times) {
    std::vector<int> out;
    out.reserve(anchors.size() * static_cast<std::size_t>(times));
    for (int a : anchors)
        for (int i = 0; i < times; ++i) out.push_back(a);
    return out;
}

// Skill embeddings selected by the given rows: encode -> match -> gumbel
// straight-through -> one-hot * prototypes.
Var selected_skills(Tape& tape, PolicyStack& model, const Dataset& ds,
                    const std::vector<int>& rows, const Tensor& noise, double temperature) {
    Var inputs = tape.input(gather_rows(ds.bi_inputs, rows));
    Var z = policy::encode_skill(tape, model, inputs, EncoderMode::Bi);
    Var probs = policy::match_skill(tape, model, z);
    auto sel = policy::select_skill(tape, probs, noise, temperature,
                                    SelectMode::StraightThrough);
    return tape.matmul(sel.onehot, tape.leaf(model.prototypes));
}

Var mi_loss_for_batch(Tape& tape, PolicyStack& model, const Dataset& ds,
                      const StepBatch& batch, double temperature) {
    const int n_pos = static_cast<int>(batch.positives.size() / batch.anchors.size());
    const int n_neg = static_cast<int>(batch.negatives.size() / batch.anchors.size());
    Var z_pos = selected_skills(tape, model, ds, batch.positives, batch.g_pos, temperature);
    Var z_neg = selected_skills(tape, model, ds, batch.negatives, batch.g_neg, temperature);

    const std::vector<int> pos_anchor = repeat_rows(batch.anchors, n_pos);
    const std::vector<int> neg_anchor = repeat_rows(batch.anchors, n_neg);
    Var s_pos = tape.input(gather_rows(ds.states, pos_anchor));
    Var s_neg = tape.input(gather_rows(ds.states, neg_anchor));
    Var a_pos = tape.input(policy::one_hot_rows(gather_ints(ds.actions, pos_anchor),
                                                model.cfg.n_actions));
    Var a_neg = tape.input(policy::one_hot_rows(gather_ints(ds.actions, neg_anchor),
                                                model.cfg.n_actions));
    Var t_pos = policy::compatibility(tape, model, s_pos, a_pos, z_pos);
    Var t_neg = policy::compatibility(tape, model, s_neg, a_neg, z_neg);
    return mi_loss_from_scores(tape, t_pos, t_neg);
}

Var imitation_loss_for_batch(Tape& tape, PolicyStack& model, const Dataset& ds,
                             const std::vector<int>& rows, const Tensor& noise,
                             double temperature, EncoderMode mode) {
    policy::HierarchyOut fwd = policy::hierarchy_forward(
        tape, model, ds, rows, noise, temperature, mode, SelectMode::StraightThrough);
    return tape.cross_entropy_mean(fwd.logits, gather_ints(ds.actions, rows));
}

// Sets `trainable` on a parameter group for the lifetime of the scope.
class FreezeScope {
public:
    FreezeScope(std::vector<diff::Parameter*> params, bool trainable) {
        for (diff::Parameter* p : params) {
            saved_.emplace_back(p, p->trainable);
            p->trainable = trainable;
        }
    }
    ~FreezeScope() {
        for (auto& [p, was] : saved_) p->trainable = was;
    }

private:
    std::vector<std::pair<diff::Parameter*, bool>> saved_;
};

} // namespace

StepLosses eval_step_losses(PolicyStack& model, const Dataset& ds, const StepBatch& batch,
                            double temperature) {
    FreezeScope freeze_all(model.all_params(), false);
    Tape tape;
    Var imi = imitation_loss_for_batch(tape, model, ds, batch.anchors, batch.g_anchor,
                                       temperature, EncoderMode::Bi);
    Var mi = mi_loss_for_batch(tape, model, ds, batch, temperature);
    StepLosses out;
    out.imitation = tape.value64(imi);
    out.mutual_info = tape.value64(mi);
    return out;
}

StepLosses discovery_step(PolicyStack& model, const Dataset& ds, const StepBatch& batch,
                          double lambda, double temperature, Adam& model_opt,
                          Adam& compat_opt) {
    SDIL_REQUIRE(lambda >= 0.0, "lambda must be nonnegative");
    StepLosses out;

    // 1) Tighten the compatibility estimator on this batch; only T moves.
    {
        FreezeScope freeze_model(model.discovery_params(), false);
        FreezeScope freeze_uni(model.uni_params(), false);
        Tape tape;
        Var mi = mi_loss_for_batch(tape, model, ds, batch, temperature);
        tape.backward(mi);
        compat_opt.step();
    }

    // 2) Descend L_imi + lambda * L_mi over {f_bi, g, pi_low}, T fixed.
    {
        FreezeScope freeze_t(model.compat_params(), false);
        FreezeScope freeze_uni(model.uni_params(), false);
        Tape tape;
        Var imi = imitation_loss_for_batch(tape, model, ds, batch.anchors, batch.g_anchor,
                                           temperature, EncoderMode::Bi);
        Var loss = imi;
        if (lambda > 0.0) {
            Var mi = mi_loss_for_batch(tape, model, ds, batch, temperature);
            out.mutual_info = tape.value64(mi);
            loss = tape.add(imi, tape.scale(mi, lambda));
        } else {
            // Keep the reported L_mi meaningful in the lambda=0 ablation.
            Tape probe;
            FreezeScope freeze_all(model.discovery_params(), false);
            Var mi = mi_loss_for_batch(probe, model, ds, batch, temperature);
            out.mutual_info = probe.value64(mi);
        }
        out.imitation = tape.value64(imi);
        tape.backward(loss);
        model_opt.step();
    }
    return out;
}

// ---------------------------------------------------------------------------
// trainer
// ---------------------------------------------------------------------------

Dataset full_dataset(const grid::Corpus& corpus, const policy::ModelConfig& cfg) {
    std::vector<int> all(corpus.trajectories.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    return policy::build_dataset(corpus, all, cfg);
}

Dataset train_dataset(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                      const policy::ModelConfig& cfg) {
    std::vector<int> idx = splits.clean.train;
    idx.insert(idx.end(), splits.noisy.train.begin(), splits.noisy.train.end());
    return policy::build_dataset(corpus, idx, cfg);
}

namespace {

Tensor gumbel_matrix(Rng& rng, int rows, int cols) {
    Tensor out({rows, cols});
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(rng.gumbel());
    return out;
}

std::string format_metrics(int epoch, double imi, double mi, std::span<const float> sop) {
    std::ostringstream os;
    os << "epoch=" << epoch << " L_imi=" << imi << " L_mi=" << mi << " sop=";
    for (std::size_t i = 0; i < sop.size(); ++i) {
        if (i) os << ',';
        os << sop[i];
    }
    return os.str();
}

std::vector<Tensor> snapshot_params(std::vector<diff::Parameter*> params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (auto* p : params) out.push_back(p->value);
    return out;
}

void restore_params(std::vector<diff::Parameter*> params, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

} // namespace

std::vector<float> scores_for(const Dataset& train_ds, const Dataset& full_ds,
                              const OptimalityTable& table) {
    // full_ds rows are ordered by trajectory index, then step.
    std::vector<int> traj_offset(full_ds.traj_index.empty()
                                     ? 0
                                     : *std::max_element(full_ds.traj_index.begin(),
                                                         full_ds.traj_index.end()) + 1,
                                 -1);
    for (int r = 0; r < full_ds.size(); ++r) {
        const int ti = full_ds.traj_index[static_cast<std::size_t>(r)];
        if (traj_offset[static_cast<std::size_t>(ti)] < 0)
            traj_offset[static_cast<std::size_t>(ti)] = r;
    }
    std::vector<float> out(static_cast<std::size_t>(train_ds.size()), 0.0f);
    for (int r = 0; r < train_ds.size(); ++r) {
        const int ti = train_ds.traj_index[static_cast<std::size_t>(r)];
        const int row = traj_offset[static_cast<std::size_t>(ti)] +
                        train_ds.step_index[static_cast<std::size_t>(r)];
        out[static_cast<std::size_t>(r)] = table.transition_score[static_cast<std::size_t>(row)];
    }
    return out;
}

DiscoveryResult run_discovery(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                              PolicyStack& model, const DiscoveryConfig& cfg,
                              const MetricsSink& sink) {
    DiscoveryResult result;
    const int K = model.cfg.n_skills;

    Dataset ds = train_dataset(corpus, splits, model.cfg);
    Dataset full_ds = full_dataset(corpus, model.cfg);
    if (ds.size() < K) throw GenerationError("not enough training transitions");

    Rng rng(cfg.seed ^ 0xd15c0ull);
    Rng cluster_rng(cfg.seed ^ 0xc105e72ull);

    // State-space clustering computed once; the DEC side is refreshed from
    // encoder embeddings at every epoch start.
    KMeansResult pre = kmeans(ds.states, K, cfg.kmeans_iters, cluster_rng);
    ClusterAssignment pre_assign =
        make_assignment(ClusterSource::PrecomputedStates, 0.0, pre.assignment, K);

    // Initial table: neutral skill scores, clean transitions pinned to 1.
    result.table.p_clean.assign(static_cast<std::size_t>(K), 0.0f);
    result.table.p_noisy.assign(static_cast<std::size_t>(K), 0.0f);
    result.table.s_pref.assign(static_cast<std::size_t>(K), 0.0f);
    result.table.s_qual.assign(static_cast<std::size_t>(K), 0.0f);
    result.table.s_op.assign(static_cast<std::size_t>(K), 0.0f);
    result.table.transition_score.assign(static_cast<std::size_t>(full_ds.size()), 0.0f);
    for (int r = 0; r < full_ds.size(); ++r)
        if (full_ds.clean[static_cast<std::size_t>(r)])
            result.table.transition_score[static_cast<std::size_t>(r)] = 1.0f;
    std::vector<float> scores = scores_for(ds, full_ds, result.table);

    Adam model_opt(model.discovery_params(),
                   AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
    Adam compat_opt(model.compat_params(),
                    AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});

    std::vector<int> order(static_cast<std::size_t>(ds.size()));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    auto snap = snapshot_params(model.all_params());
    try {
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            const double zeta = std::min(1.0, cfg.zeta_step * epoch);
            ClusterAssignment dec_assign;
            if (zeta > 0.0) {
                Tensor emb = policy::encode_eval(model, ds.bi_inputs, EncoderMode::Bi);
                KMeansResult dec = kmeans(emb, K, cfg.kmeans_iters, cluster_rng);
                dec_assign =
                    make_assignment(ClusterSource::DecEmbeddings, zeta, dec.assignment, K);
            }

            rng.shuffle(order);
            double imi_sum = 0.0, mi_sum = 0.0;
            int n_batches = 0;
            for (std::size_t off = 0; off < order.size();
                 off += static_cast<std::size_t>(cfg.batch)) {
                StepBatch batch;
                const std::size_t end =
                    std::min(order.size(), off + static_cast<std::size_t>(cfg.batch));
                batch.anchors.assign(order.begin() + static_cast<std::ptrdiff_t>(off),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
                const ClusterAssignment& active =
                    (zeta > 0.0 && rng.bernoulli(zeta)) ? dec_assign : pre_assign;
                for (int a : batch.anchors) {
                    PairSample pairs = sample_pairs(a, active, scores, cfg.epsilon,
                                                    cfg.n_pos, cfg.n_neg, rng);
                    batch.positives.insert(batch.positives.end(), pairs.positives.begin(),
                                           pairs.positives.end());
                    batch.negatives.insert(batch.negatives.end(), pairs.negatives.begin(),
                                           pairs.negatives.end());
                }
                const int b = static_cast<int>(batch.anchors.size());
                batch.g_anchor = gumbel_matrix(rng, b, K);
                batch.g_pos = gumbel_matrix(rng, b * cfg.n_pos, K);
                batch.g_neg = gumbel_matrix(rng, b * cfg.n_neg, K);

                StepLosses losses = discovery_step(model, ds, batch, cfg.lambda,
                                                   cfg.temperature, model_opt, compat_opt);
                imi_sum += losses.imitation;
                mi_sum += losses.mutual_info;
                ++n_batches;
            }

            result.final_imitation = imi_sum / std::max(1, n_batches);
            result.final_mutual_info = mi_sum / std::max(1, n_batches);
            result.epochs_run = epoch + 1;

            if ((epoch + 1) % cfg.pu_interval == 0) {
                const int refreshes = result.table.refresh_count + 1;
                result.table = estimate_skill_optimality(full_ds, model);
                result.table.refresh_epoch = epoch;
                result.table.refresh_count = refreshes;
                scores = scores_for(ds, full_ds, result.table);
                model.p_clean = {result.table.p_clean.begin(), result.table.p_clean.end()};
                model.p_noisy = {result.table.p_noisy.begin(), result.table.p_noisy.end()};
                model.s_pref = {result.table.s_pref.begin(), result.table.s_pref.end()};
                model.s_qual = {result.table.s_qual.begin(), result.table.s_qual.end()};
                model.s_op = {result.table.s_op.begin(), result.table.s_op.end()};
            }
            if (sink)
                sink(format_metrics(epoch, result.final_imitation, result.final_mutual_info,
                                    result.table.s_op));
            snap = snapshot_params(model.all_params());
        }
    } catch (const NumericError& e) {
        restore_params(model.all_params(), snap);
        result.aborted = true;
        result.error = e.what();
    }
    return result;
}

} // namespace sdil::discovery
