#include "sdil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace sdil::harness {

using diff::Tensor;

ActionMetrics action_metrics(const std::vector<int>& predictions,
                             const std::vector<int>& labels) {
    SDIL_REQUIRE(!labels.empty() && predictions.size() == labels.size(),
                 "action_metrics: empty or mismatched inputs");
    std::set<int> classes;
    classes.insert(predictions.begin(), predictions.end());
    classes.insert(labels.begin(), labels.end());

    std::int64_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (predictions[i] == labels[i]) ++correct;

    double f1_sum = 0.0;
    for (int cls : classes) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const bool p = predictions[i] == cls;
            const bool l = labels[i] == cls;
            if (p && l) ++tp;
            else if (p) ++fp;
            else if (l) ++fn;
        }
        const double denom = static_cast<double>(2 * tp + fp + fn);
        f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp) / denom : 0.0;
    }
    ActionMetrics out;
    out.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    out.macro_f1 = f1_sum / static_cast<double>(classes.size());
    return out;
}

// ---------------------------------------------------------------------------
// window buffer & agents
// ---------------------------------------------------------------------------

WindowBuffer::WindowBuffer(int window, int state_dim, int n_actions)
    : window_(window), state_dim_(state_dim), n_actions_(n_actions) {}

void WindowBuffer::reset() { hist_.clear(); }

void WindowBuffer::push(const std::vector<float>& state, int action) {
    hist_.emplace_back(state, action);
    while (static_cast<int>(hist_.size()) > window_) hist_.pop_front();
}

void WindowBuffer::write_uni(float* dst, const std::vector<float>& current) const {
    const int slot = state_dim_ + n_actions_;
    const int total = window_ * slot + state_dim_;
    std::fill(dst, dst + total, 0.0f);
    const int pad = window_ - static_cast<int>(hist_.size());
    for (std::size_t i = 0; i < hist_.size(); ++i) {
        float* out = dst + static_cast<std::size_t>(pad + static_cast<int>(i)) * slot;
        std::copy(hist_[i].first.begin(), hist_[i].first.end(), out);
        out[state_dim_ + hist_[i].second] = 1.0f;
    }
    std::copy(current.begin(), current.end(),
              dst + static_cast<std::size_t>(window_) * slot);
}

void WindowBuffer::write_bi(float* dst, const std::vector<float>& current,
                            const std::vector<float>& next) const {
    write_uni(dst, current);
    const int slot = state_dim_ + n_actions_;
    std::copy(next.begin(), next.end(),
              dst + static_cast<std::size_t>(window_) * slot + state_dim_);
}

namespace {

int greedy_action_from_logits(const Tensor& logits) { return policy::argmax_row(logits, 0); }

} // namespace

SdilAgent::SdilAgent(const PolicyStack& model) : model_(model) {}

int SdilAgent::act(const grid::Env& env, const grid::State& state, const WindowBuffer& window) {
    const policy::ModelConfig& cfg = model_.cfg;
    Tensor input({1, cfg.uni_input_dim()});
    std::vector<float> feat = env.features(state);
    window.write_uni(input.data(), feat);
    Tensor z = policy::encode_eval(model_, input, EncoderMode::Uni);
    Tensor probs = policy::match_probs_eval(model_, z);
    const int k = policy::argmax_row(probs, 0);
    Tensor skill({1, cfg.skill_dim});
    std::vector<float> proto = policy::prototype(model_, k);
    std::copy(proto.begin(), proto.end(), skill.data());
    Tensor s({1, cfg.state_dim});
    std::copy(feat.begin(), feat.end(), s.data());
    Tensor ap = policy::action_probs_eval(model_, s, skill);
    return greedy_action_from_logits(ap);
}

PinnedSkillAgent::PinnedSkillAgent(const PolicyStack& model, int skill)
    : model_(model), proto_(policy::prototype(model, skill)) {}

int PinnedSkillAgent::act(const grid::Env& env, const grid::State& state, const WindowBuffer&) {
    Tensor s({1, model_.cfg.state_dim});
    std::vector<float> feat = env.features(state);
    std::copy(feat.begin(), feat.end(), s.data());
    Tensor skill({1, model_.cfg.skill_dim});
    std::copy(proto_.begin(), proto_.end(), skill.data());
    Tensor ap = policy::action_probs_eval(model_, s, skill);
    return greedy_action_from_logits(ap);
}

MlpAgent::MlpAgent(const policy::Mlp& net) : net_(net) {}

int MlpAgent::act(const grid::Env& env, const grid::State& state, const WindowBuffer&) {
    Tensor s({1, static_cast<int>(env.state_dim())});
    std::vector<float> feat = env.features(state);
    std::copy(feat.begin(), feat.end(), s.data());
    Tensor logits = policy::mlp_eval(net_, s);
    return greedy_action_from_logits(logits);
}

RolloutStats rollout_reward(Agent& agent, const grid::Env& env, int n_episodes,
                            std::uint64_t seed) {
    SDIL_REQUIRE(n_episodes >= 1, "need at least one episode");
    std::vector<double> rewards;
    rewards.reserve(static_cast<std::size_t>(n_episodes));
    for (int ep = 0; ep < n_episodes; ++ep) {
        Rng ep_rng(seed + static_cast<std::uint64_t>(ep));
        grid::State state = env.initial_state(env.sample_start(ep_rng));
        WindowBuffer window(std::max(1, agent.window_size()), env.state_dim(), env.n_actions());
        agent.begin_episode();
        double reward = 0.0;
        for (int step = 1; step <= env.max_steps(); ++step) {
            const int action = agent.act(env, state, window);
            grid::StepResult r = env.step(state, action, step);
            window.push(env.features(state), action);
            state = r.next;
            if (r.done) {
                reward = r.reward;
                break;
            }
        }
        rewards.push_back(reward);
    }
    RolloutStats out;
    out.episodes = n_episodes;
    double sum = 0.0;
    for (double r : rewards) sum += r;
    out.mean = sum / static_cast<double>(n_episodes);
    double ss = 0.0;
    for (double r : rewards) ss += (r - out.mean) * (r - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(n_episodes));
    return out;
}

// ---------------------------------------------------------------------------
// dataset-side evaluation
// ---------------------------------------------------------------------------

namespace {

Tensor gather(const Tensor& src, const std::vector<int>& rows) {
    Tensor out({static_cast<int>(rows.size()), src.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const float* f = src.data() + static_cast<std::size_t>(rows[i]) * src.cols();
        std::copy(f, f + src.cols(), out.data() + i * static_cast<std::size_t>(src.cols()));
    }
    return out;
}

} // namespace

std::vector<int> predict_actions(const PolicyStack& model, const Dataset& ds,
                                 const std::vector<int>& rows, EncoderMode mode) {
    SDIL_REQUIRE(!rows.empty(), "predict_actions: empty row set");
    Tensor inputs = gather(mode == EncoderMode::Bi ? ds.bi_inputs : ds.uni_inputs, rows);
    Tensor z = policy::encode_eval(model, inputs, mode);
    Tensor probs = policy::match_probs_eval(model, z);
    Tensor skills({static_cast<int>(rows.size()), model.cfg.skill_dim});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::vector<float> proto =
            policy::prototype(model, policy::argmax_row(probs, static_cast<int>(i)));
        std::copy(proto.begin(), proto.end(),
                  skills.data() + i * static_cast<std::size_t>(model.cfg.skill_dim));
    }
    Tensor states = gather(ds.states, rows);
    Tensor ap = policy::action_probs_eval(model, states, skills);
    std::vector<int> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out[i] = policy::argmax_row(ap, static_cast<int>(i));
    return out;
}

std::vector<double> skill_selection_distribution(const PolicyStack& model, const Dataset& ds,
                                                 const std::vector<int>& rows,
                                                 EncoderMode mode) {
    SDIL_REQUIRE(!rows.empty(), "selection distribution: empty row set");
    Tensor inputs = gather(mode == EncoderMode::Bi ? ds.bi_inputs : ds.uni_inputs, rows);
    Tensor z = policy::encode_eval(model, inputs, mode);
    Tensor probs = policy::match_probs_eval(model, z);
    std::vector<double> out(static_cast<std::size_t>(probs.cols()), 0.0);
    for (int r = 0; r < probs.rows(); ++r)
        for (int c = 0; c < probs.cols(); ++c)
            out[static_cast<std::size_t>(c)] += probs.at(r, c);
    for (double& v : out) v /= static_cast<double>(probs.rows());
    return out;
}

std::string MetricsReport::to_string() const {
    std::ostringstream os;
    os << "accuracy=" << accuracy << '\n' << "macro_f1=" << macro_f1 << '\n';
    if (reward_episodes > 0)
        os << "reward_mean=" << reward_mean << '\n'
           << "reward_std=" << reward_std << '\n'
           << "reward_episodes=" << reward_episodes << '\n';
    auto emit = [&os](const char* key, const std::vector<double>& v) {
        os << key << '=';
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) os << ',';
            os << v[i];
        }
        os << '\n';
    };
    if (!dist_clean.empty()) emit("skill_dist_clean", dist_clean);
    if (!dist_noisy.empty()) emit("skill_dist_noisy", dist_noisy);
    return os.str();
}

MetricsReport evaluate(const PolicyStack& model, const grid::Corpus& corpus,
                       const grid::CorpusSplits& splits, const grid::Env* env, int rollouts,
                       std::uint64_t seed) {
    MetricsReport report;
    SDIL_REQUIRE(!splits.clean.test.empty(), "evaluate: empty clean test split");
    Dataset test_ds = policy::build_dataset(corpus, splits.clean.test, model.cfg);
    std::vector<int> rows = policy::all_rows(test_ds);
    std::vector<int> preds = predict_actions(model, test_ds, rows, EncoderMode::Uni);
    std::vector<int> labels;
    labels.reserve(rows.size());
    for (int r : rows) labels.push_back(test_ds.actions[static_cast<std::size_t>(r)]);
    ActionMetrics am = action_metrics(preds, labels);
    report.accuracy = am.accuracy;
    report.macro_f1 = am.macro_f1;

    // Per-set selection distributions through the bi module.
    std::vector<int> clean_trajs = corpus.clean_indices();
    std::vector<int> noisy_trajs = corpus.noisy_indices();
    if (!clean_trajs.empty()) {
        Dataset ds = policy::build_dataset(corpus, clean_trajs, model.cfg);
        report.dist_clean =
            skill_selection_distribution(model, ds, policy::all_rows(ds), EncoderMode::Bi);
    }
    if (!noisy_trajs.empty()) {
        Dataset ds = policy::build_dataset(corpus, noisy_trajs, model.cfg);
        report.dist_noisy =
            skill_selection_distribution(model, ds, policy::all_rows(ds), EncoderMode::Bi);
    }

    if (env != nullptr && rollouts > 0) {
        SDIL_REQUIRE(env->state_dim() == corpus.state_dim &&
                         env->n_actions() == corpus.n_actions,
                     "evaluate: env does not match the corpus dimensions");
        SdilAgent agent(model);
        RolloutStats rs = rollout_reward(agent, *env, rollouts, seed);
        report.reward_mean = rs.mean;
        report.reward_std = rs.stddev;
        report.reward_episodes = rs.episodes;
    }
    return report;
}

} // namespace sdil::harness
