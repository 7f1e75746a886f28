#include "sdil/reuse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace sdil::reuse {

using diff::Adam;
using diff::AdamConfig;
using diff::Parameter;
using diff::Tape;
using diff::Tensor;
using diff::Var;
using policy::EncoderMode;
using policy::SelectMode;

std::vector<int> collect_negatives(const Dataset& ds, std::span<const float> scores,
                                   double threshold) {
    SDIL_REQUIRE(scores.size() == static_cast<std::size_t>(ds.size()),
                 "collect_negatives: score count mismatch");
    std::vector<int> out;
    for (int r = 0; r < ds.size(); ++r) {
        if (ds.clean[static_cast<std::size_t>(r)]) continue;
        if (static_cast<double>(scores[static_cast<std::size_t>(r)]) < threshold)
            out.push_back(r);
    }
    return out;
}

Var kd_loss(Tape& tape, Var student_probs, std::vector<int> teacher, bool log_variant) {
    if (log_variant)
        return tape.neg(tape.log_pick_mean(student_probs, std::move(teacher), 1e-12));
    return tape.neg(tape.pick_mean(student_probs, std::move(teacher)));
}

Var adversarial_loss(Tape& tape, Var action_probs, std::vector<int> actions) {
    return tape.log_pick_mean(action_probs, std::move(actions), 1e-6);
}

double eval_nll(const PolicyStack& model, const Dataset& ds, const std::vector<int>& rows,
                EncoderMode mode) {
    SDIL_REQUIRE(!rows.empty(), "eval_nll: empty row set");
    const Tensor& src = mode == EncoderMode::Bi ? ds.bi_inputs : ds.uni_inputs;
    Tensor inputs({static_cast<int>(rows.size()), src.cols()});
    Tensor states({static_cast<int>(rows.size()), ds.states.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const float* f = src.data() + static_cast<std::size_t>(rows[i]) * src.cols();
        std::copy(f, f + src.cols(), inputs.data() + i * static_cast<std::size_t>(src.cols()));
        const float* s = ds.states.data() + static_cast<std::size_t>(rows[i]) * ds.states.cols();
        std::copy(s, s + ds.states.cols(),
                  states.data() + i * static_cast<std::size_t>(ds.states.cols()));
    }
    Tensor z = policy::encode_eval(model, inputs, mode);
    Tensor probs = policy::match_probs_eval(model, z);
    Tensor skills({static_cast<int>(rows.size()), model.cfg.skill_dim});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int k = policy::argmax_row(probs, static_cast<int>(i));
        std::vector<float> proto = policy::prototype(model, k);
        std::copy(proto.begin(), proto.end(),
                  skills.data() + i * static_cast<std::size_t>(model.cfg.skill_dim));
    }
    Tensor action_probs = policy::action_probs_eval(model, states, skills);
    double nll = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double p = std::max(
            static_cast<double>(action_probs.at(
                static_cast<int>(i), ds.actions[static_cast<std::size_t>(rows[i])])),
            1e-12);
        nll -= std::log(p);
    }
    return nll / static_cast<double>(rows.size());
}

namespace {

Tensor gumbel_matrix(Rng& rng, int rows, int cols) {
    Tensor out({rows, cols});
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(rng.gumbel());
    return out;
}

std::vector<int> gather_ints(const std::vector<int>& src, const std::vector<int>& rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(src[static_cast<std::size_t>(r)]);
    return out;
}

std::vector<Tensor> snapshot(std::vector<Parameter*> params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (auto* p : params) out.push_back(p->value);
    return out;
}

void restore(std::vector<Parameter*> params, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

// Teacher skill indices: noise-free argmax through the frozen bi encoder.
std::vector<int> teacher_indices(const PolicyStack& model, const Dataset& ds) {
    Tensor z = policy::encode_eval(model, ds.bi_inputs, EncoderMode::Bi);
    Tensor probs = policy::match_probs_eval(model, z);
    std::vector<int> out(static_cast<std::size_t>(ds.size()));
    for (int r = 0; r < ds.size(); ++r)
        out[static_cast<std::size_t>(r)] = policy::argmax_row(probs, r);
    return out;
}

struct Shuffler {
    std::vector<int> order;
    explicit Shuffler(int n) {
        order.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    }
    template <typename Fn>
    void epoch(Rng& rng, int batch, Fn&& body) {
        rng.shuffle(order);
        for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(batch)) {
            const std::size_t end =
                std::min(order.size(), off + static_cast<std::size_t>(batch));
            std::vector<int> rows(order.begin() + static_cast<std::ptrdiff_t>(off),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
            body(rows);
        }
    }
};

} // namespace

ReuseStepResult reuse_step1(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                            PolicyStack& model, const ReuseConfig& cfg,
                            const MetricsSink& sink) {
    SDIL_REQUIRE(!splits.clean.train.empty() && !splits.clean.val.empty(),
                 "reuse needs clean train and validation trajectories");
    Dataset ds_train = policy::build_dataset(corpus, splits.clean.train, model.cfg);
    Dataset ds_val = policy::build_dataset(corpus, splits.clean.val, model.cfg);
    const std::vector<int> val_rows = policy::all_rows(ds_val);
    const std::vector<int> teacher = teacher_indices(model, ds_train);
    const int K = model.cfg.n_skills;

    // Only f_uni trains; g, pi_low, f_bi and T stay frozen.
    std::vector<std::pair<Parameter*, bool>> saved;
    for (Parameter* p : model.all_params()) saved.emplace_back(p, p->trainable);
    for (Parameter* p : model.all_params()) p->trainable = false;
    for (Parameter* p : model.uni_params()) p->trainable = true;

    Rng rng(cfg.seed ^ 0x2e051ull);
    Adam opt(model.uni_params(), AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
    ReuseStepResult result;
    double best_val = std::numeric_limits<double>::infinity();
    auto best = snapshot(model.uni_params());
    int stale = 0;
    Shuffler loop(ds_train.size());

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double imi_sum = 0.0, kd_sum = 0.0;
        int batches = 0;
        loop.epoch(rng, cfg.batch, [&](const std::vector<int>& rows) {
            Tensor noise = gumbel_matrix(rng, static_cast<int>(rows.size()), K);
            Tape tape;
            policy::HierarchyOut fwd = policy::hierarchy_forward(
                tape, model, ds_train, rows, noise, cfg.temperature, EncoderMode::Uni,
                SelectMode::StraightThrough);
            Var imi = tape.cross_entropy_mean(fwd.logits, gather_ints(ds_train.actions, rows));
            Var kd = kd_loss(tape, fwd.match_probs, gather_ints(teacher, rows),
                             cfg.kd_log_variant);
            Var loss = tape.add(imi, kd);
            imi_sum += tape.value64(imi);
            kd_sum += tape.value64(kd);
            ++batches;
            tape.backward(loss);
            opt.step();
        });
        const double val = eval_nll(model, ds_val, val_rows, EncoderMode::Uni);
        result.epochs = epoch + 1;
        if (sink) {
            std::ostringstream os;
            os << "phase=reuse1 epoch=" << epoch << " L_imi=" << imi_sum / std::max(1, batches)
               << " L_KD=" << kd_sum / std::max(1, batches) << " val_nll=" << val;
            sink(os.str());
        }
        if (val < best_val) {
            best_val = val;
            best = snapshot(model.uni_params());
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    restore(model.uni_params(), best);
    result.val_nll = best_val;
    for (auto& [p, was] : saved) p->trainable = was;
    return result;
}

ReuseStepResult reuse_step2(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                            PolicyStack& model, const OptimalityTable& table,
                            const ReuseConfig& cfg, const MetricsSink& sink,
                            int* negatives_out) {
    SDIL_REQUIRE(!splits.clean.train.empty() && !splits.clean.val.empty(),
                 "reuse needs clean train and validation trajectories");
    Dataset ds_train = policy::build_dataset(corpus, splits.clean.train, model.cfg);
    Dataset ds_val = policy::build_dataset(corpus, splits.clean.val, model.cfg);
    const std::vector<int> val_rows = policy::all_rows(ds_val);
    const int K = model.cfg.n_skills;

    Dataset ds_neg_pool;
    std::vector<int> negatives;
    if (!splits.noisy.train.empty() && !table.transition_score.empty()) {
        Dataset full_ds = discovery::full_dataset(corpus, model.cfg);
        ds_neg_pool = policy::build_dataset(corpus, splits.noisy.train, model.cfg);
        std::vector<float> neg_scores = discovery::scores_for(ds_neg_pool, full_ds, table);
        negatives = collect_negatives(ds_neg_pool, neg_scores, cfg.theta_neg);
    }
    if (negatives_out != nullptr) *negatives_out = static_cast<int>(negatives.size());

    std::vector<std::pair<Parameter*, bool>> saved;
    for (Parameter* p : model.all_params()) saved.emplace_back(p, p->trainable);
    for (Parameter* p : model.all_params()) p->trainable = false;
    for (Parameter* p : model.reuse2_params()) p->trainable = true;

    Rng rng(cfg.seed ^ 0x2e052ull);
    Adam opt(model.reuse2_params(), AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});
    ReuseStepResult result;
    double best_val = std::numeric_limits<double>::infinity();
    auto best = snapshot(model.reuse2_params());
    int stale = 0;
    Shuffler loop(ds_train.size());

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double imi_sum = 0.0, adv_sum = 0.0;
        int batches = 0;
        loop.epoch(rng, cfg.batch, [&](const std::vector<int>& rows) {
            Tensor noise = gumbel_matrix(rng, static_cast<int>(rows.size()), K);
            Tape tape;
            policy::HierarchyOut fwd = policy::hierarchy_forward(
                tape, model, ds_train, rows, noise, cfg.temperature, EncoderMode::Uni,
                SelectMode::StraightThrough);
            Var imi = tape.cross_entropy_mean(fwd.logits, gather_ints(ds_train.actions, rows));
            Var loss = imi;
            if (!negatives.empty()) {
                std::vector<int> neg_rows;
                neg_rows.reserve(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i)
                    neg_rows.push_back(negatives[rng.index(negatives.size())]);
                Tensor neg_noise = gumbel_matrix(rng, static_cast<int>(neg_rows.size()), K);
                policy::HierarchyOut neg_fwd = policy::hierarchy_forward(
                    tape, model, ds_neg_pool, neg_rows, neg_noise, cfg.temperature,
                    EncoderMode::Uni, SelectMode::StraightThrough);
                Var adv = adversarial_loss(tape, tape.softmax_rows(neg_fwd.logits),
                                           gather_ints(ds_neg_pool.actions, neg_rows));
                adv_sum += tape.value64(adv);
                loss = tape.add(imi, adv);
            }
            imi_sum += tape.value64(imi);
            ++batches;
            tape.backward(loss);
            opt.step();
        });
        const double val = eval_nll(model, ds_val, val_rows, EncoderMode::Uni);
        result.epochs = epoch + 1;
        if (sink) {
            std::ostringstream os;
            os << "phase=reuse2 epoch=" << epoch << " L_imi=" << imi_sum / std::max(1, batches)
               << " L_adv=" << adv_sum / std::max(1, batches) << " val_nll=" << val;
            sink(os.str());
        }
        if (val < best_val) {
            best_val = val;
            best = snapshot(model.reuse2_params());
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    restore(model.reuse2_params(), best);
    result.val_nll = best_val;
    for (auto& [p, was] : saved) p->trainable = was;
    return result;
}

ReuseResult run_reuse(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                      PolicyStack& model, const OptimalityTable& table, const ReuseConfig& cfg,
                      const MetricsSink& sink) {
    ReuseResult result;
    auto last_good = snapshot(model.all_params());
    try {
        ReuseStepResult s1 = reuse_step1(corpus, splits, model, cfg, sink);
        result.epochs_step1 = s1.epochs;
        result.val_nll_step1 = s1.val_nll;
        ReuseStepResult s2 =
            reuse_step2(corpus, splits, model, table, cfg, sink, &result.negatives);
        result.epochs_step2 = s2.epochs;
        result.val_nll_step2 = s2.val_nll;
    } catch (const NumericError& e) {
        restore(model.all_params(), last_good);
        result.aborted = true;
        result.error = e.what();
    }
    return result;
}

} // namespace sdil::reuse
