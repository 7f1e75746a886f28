#include "sdil/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sdil/adam.hpp"

namespace sdil::harness {

using diff::Adam;
using diff::AdamConfig;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

struct FlatData {
    Tensor states;
    std::vector<int> actions;
};

FlatData flatten(const grid::Corpus& corpus, const std::vector<int>& trajs) {
    std::int64_t n = 0;
    for (int ti : trajs)
        n += static_cast<std::int64_t>(
            corpus.trajectories[static_cast<std::size_t>(ti)].steps.size());
    SDIL_REQUIRE(n > 0, "bc: empty transition set");
    FlatData out;
    out.states = Tensor({static_cast<int>(n), corpus.state_dim});
    out.actions.reserve(static_cast<std::size_t>(n));
    int row = 0;
    for (int ti : trajs) {
        for (const grid::Transition& tr :
             corpus.trajectories[static_cast<std::size_t>(ti)].steps) {
            std::copy(tr.state.begin(), tr.state.end(),
                      out.states.data() + static_cast<std::size_t>(row) * corpus.state_dim);
            out.actions.push_back(tr.action);
            ++row;
        }
    }
    return out;
}

double eval_nll(const policy::Mlp& net, const FlatData& data) {
    Tensor logits = policy::mlp_eval(net, data.states);
    double nll = 0.0;
    for (int r = 0; r < logits.rows(); ++r) {
        double m = logits.at(r, 0);
        for (int c = 1; c < logits.cols(); ++c)
            m = std::max(m, static_cast<double>(logits.at(r, c)));
        double s = 0.0;
        for (int c = 0; c < logits.cols(); ++c)
            s += std::exp(static_cast<double>(logits.at(r, c)) - m);
        nll += m + std::log(s) -
               static_cast<double>(logits.at(r, data.actions[static_cast<std::size_t>(r)]));
    }
    return nll / static_cast<double>(logits.rows());
}

} // namespace

BcResult train_bc(const grid::Corpus& corpus, const grid::CorpusSplits& splits,
                  BcSetting setting, const BcConfig& cfg) {
    std::vector<int> train_trajs = splits.clean.train;
    if (setting == BcSetting::Mixed)
        train_trajs.insert(train_trajs.end(), splits.noisy.train.begin(),
                           splits.noisy.train.end());
    FlatData train = flatten(corpus, train_trajs);
    FlatData val = flatten(corpus, splits.clean.val);

    BcResult result;
    Rng rng(cfg.seed ^ 0xbc17ull);
    result.net.init("bc", corpus.state_dim, cfg.hidden1, cfg.hidden2, corpus.n_actions, rng);
    Adam opt(result.net.params(), AdamConfig{cfg.lr, cfg.weight_decay, 0.9, 0.999, 1e-8});

    std::vector<int> order(train.actions.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best;
    for (diff::Parameter* p : result.net.params()) best.push_back(p->value);
    int stale = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t off = 0; off < order.size(); off += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t end =
                std::min(order.size(), off + static_cast<std::size_t>(cfg.batch));
            Tensor xb({static_cast<int>(end - off), corpus.state_dim});
            std::vector<int> yb;
            yb.reserve(end - off);
            for (std::size_t i = off; i < end; ++i) {
                const float* f = train.states.data() +
                                 static_cast<std::size_t>(order[i]) * corpus.state_dim;
                std::copy(f, f + corpus.state_dim,
                          xb.data() + (i - off) * static_cast<std::size_t>(corpus.state_dim));
                yb.push_back(train.actions[static_cast<std::size_t>(order[i])]);
            }
            Tape tape;
            Var logits = policy::mlp_apply(tape, result.net, tape.input(std::move(xb)));
            Var loss = tape.cross_entropy_mean(logits, std::move(yb));
            tape.backward(loss);
            opt.step();
        }
        result.epochs = epoch + 1;
        const double v = eval_nll(result.net, val);
        if (v < best_val) {
            best_val = v;
            best.clear();
            for (diff::Parameter* p : result.net.params()) best.push_back(p->value);
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    std::size_t i = 0;
    for (diff::Parameter* p : result.net.params()) p->value = best[i++];
    result.val_nll = best_val;
    return result;
}

MetricsReport evaluate_bc(const BcResult& bc, const grid::Corpus& corpus,
                          const grid::CorpusSplits& splits, const grid::Env* env, int rollouts,
                          std::uint64_t seed) {
    MetricsReport report;
    FlatData test = flatten(corpus, splits.clean.test);
    Tensor logits = policy::mlp_eval(bc.net, test.states);
    std::vector<int> preds(test.actions.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        preds[i] = policy::argmax_row(logits, static_cast<int>(i));
    ActionMetrics am = action_metrics(preds, test.actions);
    report.accuracy = am.accuracy;
    report.macro_f1 = am.macro_f1;
    if (env != nullptr && rollouts > 0) {
        MlpAgent agent(bc.net);
        RolloutStats rs = rollout_reward(agent, *env, rollouts, seed);
        report.reward_mean = rs.mean;
        report.reward_std = rs.stddev;
        report.reward_episodes = rs.episodes;
    }
    return report;
}

} // namespace sdil::harness
