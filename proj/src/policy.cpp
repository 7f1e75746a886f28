#include "sdil/policy.hpp"

#include <Eigen/Core>

#include <cmath>

namespace sdil::policy {

namespace {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using Map = Eigen::Map<EMat>;

CMap as_mat(const Tensor& t) { return CMap(t.data(), t.rows(), t.cols()); }
Map as_mat(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

Tensor init_linear(int in, int out, Rng& rng) {
    Tensor w({in, out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::int64_t i = 0; i < w.size(); ++i)
        w[i] = static_cast<float>(rng.uniform(-bound, bound));
    return w;
}

Tensor init_bias(int in, int out, Rng& rng) {
    Tensor b({out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::int64_t i = 0; i < b.size(); ++i)
        b[i] = static_cast<float>(rng.uniform(-bound, bound));
    return b;
}

} // namespace

void Mlp::init(const std::string& name, int in, int h1, int h2, int out, Rng& rng) {
    w1 = Parameter(name + ".w1", init_linear(in, h1, rng));
    b1 = Parameter(name + ".b1", init_bias(in, h1, rng));
    w2 = Parameter(name + ".w2", init_linear(h1, h2, rng));
    b2 = Parameter(name + ".b2", init_bias(h1, h2, rng));
    w3 = Parameter(name + ".w3", init_linear(h2, out, rng));
    b3 = Parameter(name + ".b3", init_bias(h2, out, rng));
}

std::vector<Parameter*> Mlp::params() {
    return {&w1, &b1, &w2, &b2, &w3, &b3};
}

void Mlp::set_trainable(bool on) {
    for (Parameter* p : params()) p->trainable = on;
}

PolicyStack::PolicyStack(ModelConfig c, std::uint64_t seed) : cfg(c) {
    SDIL_REQUIRE(cfg.state_dim > 0 && cfg.n_actions > 0, "model needs env dimensions");
    SDIL_REQUIRE(cfg.n_skills >= 1, "need at least one skill");
    Rng rng(seed);
    f_bi.init("f_bi", cfg.bi_input_dim(), cfg.hidden1, cfg.hidden2, cfg.skill_dim, rng);
    f_uni.init("f_uni", cfg.uni_input_dim(), cfg.hidden1, cfg.hidden2, cfg.skill_dim, rng);
    prototypes = Parameter("prototypes", Tensor({cfg.n_skills, cfg.skill_dim}));
    for (std::int64_t i = 0; i < prototypes.value.size(); ++i)
        prototypes.value[i] = static_cast<float>(rng.uniform(-0.1, 0.1));
    pi_low.init("pi_low", cfg.state_dim + cfg.skill_dim, cfg.hidden1, cfg.hidden2,
                cfg.n_actions, rng);
    compat.init("compat", cfg.state_dim + cfg.n_actions + cfg.skill_dim, cfg.hidden1,
                cfg.hidden2, 1, rng);
    p_clean.assign(cfg.n_skills, 0.0f);
    p_noisy.assign(cfg.n_skills, 0.0f);
    s_pref.assign(cfg.n_skills, 0.0f);
    s_qual.assign(cfg.n_skills, 0.0f);
    s_op.assign(cfg.n_skills, 0.0f);
}

std::vector<Parameter*> PolicyStack::all_params() {
    std::vector<Parameter*> out;
    for (Mlp* m : {&f_bi, &f_uni, &pi_low, &compat})
        for (Parameter* p : m->params()) out.push_back(p);
    out.push_back(&prototypes);
    return out;
}

std::vector<Parameter*> PolicyStack::discovery_params() {
    std::vector<Parameter*> out = f_bi.params();
    out.push_back(&prototypes);
    for (Parameter* p : pi_low.params()) out.push_back(p);
    return out;
}

std::vector<Parameter*> PolicyStack::compat_params() { return compat.params(); }

std::vector<Parameter*> PolicyStack::uni_params() { return f_uni.params(); }

std::vector<Parameter*> PolicyStack::reuse2_params() {
    std::vector<Parameter*> out = f_uni.params();
    out.push_back(&prototypes);
    for (Parameter* p : pi_low.params()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// tape forward
// ---------------------------------------------------------------------------

Var mlp_apply(Tape& tape, Mlp& mlp, Var x) {
    Var h1 = tape.tanh_op(tape.affine(x, tape.leaf(mlp.w1), tape.leaf(mlp.b1)));
    Var h2 = tape.tanh_op(tape.affine(h1, tape.leaf(mlp.w2), tape.leaf(mlp.b2)));
    return tape.affine(h2, tape.leaf(mlp.w3), tape.leaf(mlp.b3));
}

Var encode_skill(Tape& tape, PolicyStack& model, Var inputs, EncoderMode mode) {
    const int width = tape.value(inputs).cols();
    if (mode == EncoderMode::Bi) {
        SDIL_REQUIRE(width == model.cfg.bi_input_dim(),
                     "bi encoder input width mismatch");
        return mlp_apply(tape, model.f_bi, inputs);
    }
    SDIL_REQUIRE(width == model.cfg.uni_input_dim(),
                 "uni encoder input width mismatch (was s_{t+1} supplied?)");
    return mlp_apply(tape, model.f_uni, inputs);
}

Var match_skill(Tape& tape, PolicyStack& model, Var z_prime) {
    Var protos = tape.leaf(model.prototypes);
    Var dist = tape.pairwise_dist(z_prime, protos, 1e-8);
    return tape.row_normalize(tape.reciprocal(dist));
}

Selection select_skill(Tape& tape, Var probs, const Tensor& gumbel_noise,
                       double temperature, SelectMode mode) {
    SDIL_REQUIRE(temperature > 0.0, "temperature must be positive");
    SDIL_REQUIRE(gumbel_noise.rows() == tape.value(probs).rows() &&
                     gumbel_noise.cols() == tape.value(probs).cols(),
                 "gumbel noise shape mismatch");
    Var logp = tape.log_floor(probs, 1e-12);
    Var noise = tape.input(gumbel_noise);
    Var logits = tape.scale(tape.add(logp, noise), 1.0 / temperature);
    Selection sel;
    sel.soft = tape.softmax_rows(logits);
    sel.onehot = (mode == SelectMode::StraightThrough) ? tape.st_hard(sel.soft) : sel.soft;
    return sel;
}

Var action_logits(Tape& tape, PolicyStack& model, Var states, Var skills) {
    std::vector<Var> parts{states, skills};
    return mlp_apply(tape, model.pi_low, tape.concat_cols(parts));
}

Var compatibility(Tape& tape, PolicyStack& model, Var states, Var action_onehot, Var skills) {
    std::vector<Var> parts{states, action_onehot, skills};
    return mlp_apply(tape, model.compat, tape.concat_cols(parts));
}

namespace {
Tensor gather_dataset_rows(const Tensor& src, const std::vector<int>& rows) {
    Tensor out({static_cast<int>(rows.size()), src.cols()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const float* from = src.data() + static_cast<std::size_t>(rows[i]) * src.cols();
        std::copy(from, from + src.cols(),
                  out.data() + i * static_cast<std::size_t>(src.cols()));
    }
    return out;
}
} // namespace

HierarchyOut hierarchy_forward(Tape& tape, PolicyStack& model, const Dataset& ds,
                               const std::vector<int>& rows, const Tensor& gumbel_noise,
                               double temperature, EncoderMode enc_mode, SelectMode sel_mode) {
    const Tensor& enc_src = enc_mode == EncoderMode::Bi ? ds.bi_inputs : ds.uni_inputs;
    Var inputs = tape.input(gather_dataset_rows(enc_src, rows));
    Var z = encode_skill(tape, model, inputs, enc_mode);
    HierarchyOut out;
    out.match_probs = match_skill(tape, model, z);
    Selection sel = select_skill(tape, out.match_probs, gumbel_noise, temperature, sel_mode);
    out.selection = sel.onehot;
    out.skills = tape.matmul(out.selection, tape.leaf(model.prototypes));
    Var states = tape.input(gather_dataset_rows(ds.states, rows));
    out.logits = action_logits(tape, model, states, out.skills);
    return out;
}

// ---------------------------------------------------------------------------
// forward-only evaluation
// ---------------------------------------------------------------------------

Tensor mlp_eval(const Mlp& mlp, const Tensor& x) {
    SDIL_REQUIRE(x.cols() == mlp.w1.value.rows(), "mlp_eval: input width mismatch");
    Tensor h1({x.rows(), mlp.w1.value.cols()});
    as_mat(h1).noalias() = as_mat(x) * as_mat(mlp.w1.value);
    as_mat(h1).rowwise() +=
        Eigen::Map<const Eigen::RowVectorXf>(mlp.b1.value.data(), mlp.b1.value.cols());
    for (std::int64_t i = 0; i < h1.size(); ++i) h1[i] = std::tanh(h1[i]);

    Tensor h2({x.rows(), mlp.w2.value.cols()});
    as_mat(h2).noalias() = as_mat(h1) * as_mat(mlp.w2.value);
    as_mat(h2).rowwise() +=
        Eigen::Map<const Eigen::RowVectorXf>(mlp.b2.value.data(), mlp.b2.value.cols());
    for (std::int64_t i = 0; i < h2.size(); ++i) h2[i] = std::tanh(h2[i]);

    Tensor out({x.rows(), mlp.w3.value.cols()});
    as_mat(out).noalias() = as_mat(h2) * as_mat(mlp.w3.value);
    as_mat(out).rowwise() +=
        Eigen::Map<const Eigen::RowVectorXf>(mlp.b3.value.data(), mlp.b3.value.cols());
    return out;
}

Tensor encode_eval(const PolicyStack& model, const Tensor& inputs, EncoderMode mode) {
    if (mode == EncoderMode::Bi) {
        SDIL_REQUIRE(inputs.cols() == model.cfg.bi_input_dim(),
                     "bi encoder input width mismatch");
        return mlp_eval(model.f_bi, inputs);
    }
    SDIL_REQUIRE(inputs.cols() == model.cfg.uni_input_dim(),
                 "uni encoder input width mismatch (was s_{t+1} supplied?)");
    return mlp_eval(model.f_uni, inputs);
}

Tensor match_probs_eval(const PolicyStack& model, const Tensor& z_prime) {
    const Tensor& protos = model.prototypes.value;
    const int B = z_prime.rows(), K = protos.rows(), D = protos.cols();
    SDIL_REQUIRE(z_prime.cols() == D, "embedding width mismatch");
    Tensor out({B, K});
    for (int b = 0; b < B; ++b) {
        double inv_sum = 0.0;
        for (int k = 0; k < K; ++k) {
            double s = 0.0;
            for (int d = 0; d < D; ++d) {
                const double diff =
                    static_cast<double>(z_prime.at(b, d)) - protos.at(k, d);
                s += diff * diff;
            }
            const double dist = std::max(std::sqrt(s), 1e-8);
            out.at(b, k) = static_cast<float>(1.0 / dist);
            inv_sum += 1.0 / dist;
        }
        for (int k = 0; k < K; ++k)
            out.at(b, k) = static_cast<float>(out.at(b, k) / inv_sum);
    }
    return out;
}

std::vector<float> prototype(const PolicyStack& model, int k) {
    SDIL_REQUIRE(k >= 0 && k < model.cfg.n_skills, "skill index out of range");
    const Tensor& protos = model.prototypes.value;
    std::vector<float> out(static_cast<std::size_t>(protos.cols()));
    for (int d = 0; d < protos.cols(); ++d) out[static_cast<std::size_t>(d)] = protos.at(k, d);
    return out;
}

Tensor action_probs_eval(const PolicyStack& model, const Tensor& states, const Tensor& skills) {
    SDIL_REQUIRE(states.rows() == skills.rows(), "batch size mismatch");
    Tensor joined({states.rows(), states.cols() + skills.cols()});
    for (int r = 0; r < states.rows(); ++r) {
        for (int c = 0; c < states.cols(); ++c) joined.at(r, c) = states.at(r, c);
        for (int c = 0; c < skills.cols(); ++c)
            joined.at(r, states.cols() + c) = skills.at(r, c);
    }
    Tensor logits = mlp_eval(model.pi_low, joined);
    for (int r = 0; r < logits.rows(); ++r) {
        float m = logits.at(r, 0);
        for (int c = 1; c < logits.cols(); ++c) m = std::max(m, logits.at(r, c));
        double s = 0.0;
        for (int c = 0; c < logits.cols(); ++c)
            s += std::exp(static_cast<double>(logits.at(r, c)) - m);
        for (int c = 0; c < logits.cols(); ++c)
            logits.at(r, c) = static_cast<float>(
                std::exp(static_cast<double>(logits.at(r, c)) - m) / s);
    }
    return logits;
}

int argmax_row(const Tensor& t, int row) {
    int best = 0;
    for (int c = 1; c < t.cols(); ++c)
        if (t.at(row, c) > t.at(row, best)) best = c;
    return best;
}

// ---------------------------------------------------------------------------
// feature assembly
// ---------------------------------------------------------------------------

void write_encoder_input(float* dst, const grid::Trajectory& traj, int t,
                         const ModelConfig& cfg, EncoderMode mode) {
    const int ds = cfg.state_dim;
    const int na = cfg.n_actions;
    const int slot = ds + na;
    const int T = static_cast<int>(traj.steps.size());
    SDIL_REQUIRE(t >= 0 && t < T, "transition index out of range");
    const int total = (mode == EncoderMode::Bi) ? cfg.bi_input_dim() : cfg.uni_input_dim();
    std::fill(dst, dst + total, 0.0f);

    for (int j = 0; j < cfg.window; ++j) {
        const int src = t - cfg.window + j;
        if (src < 0) continue; // zero padding before the trajectory start
        const grid::Transition& tr = traj.steps[static_cast<std::size_t>(src)];
        float* out = dst + static_cast<std::size_t>(j) * slot;
        std::copy(tr.state.begin(), tr.state.end(), out);
        out[ds + tr.action] = 1.0f;
    }
    const grid::Transition& cur = traj.steps[static_cast<std::size_t>(t)];
    std::copy(cur.state.begin(), cur.state.end(), dst + static_cast<std::size_t>(cfg.window) * slot);
    if (mode == EncoderMode::Bi && t + 1 < T) {
        const grid::Transition& nxt = traj.steps[static_cast<std::size_t>(t + 1)];
        std::copy(nxt.state.begin(), nxt.state.end(),
                  dst + static_cast<std::size_t>(cfg.window) * slot + ds);
    }
    // Trailing transition keeps a zero s_{t+1}: the resulting state is not
    // recorded in the corpus format.
}

Dataset build_dataset(const grid::Corpus& corpus, const std::vector<int>& traj_indices,
                      const ModelConfig& cfg) {
    SDIL_REQUIRE(corpus.state_dim == cfg.state_dim && corpus.n_actions == cfg.n_actions,
                 "corpus dimensions do not match the model config");
    std::int64_t n = 0;
    for (int ti : traj_indices)
        n += static_cast<std::int64_t>(corpus.trajectories[static_cast<std::size_t>(ti)].steps.size());
    SDIL_REQUIRE(n > 0, "dataset is empty");

    Dataset ds;
    ds.states = Tensor({static_cast<int>(n), cfg.state_dim});
    ds.uni_inputs = Tensor({static_cast<int>(n), cfg.uni_input_dim()});
    ds.bi_inputs = Tensor({static_cast<int>(n), cfg.bi_input_dim()});
    ds.traj_index.reserve(static_cast<std::size_t>(n));
    ds.step_index.reserve(static_cast<std::size_t>(n));
    ds.clean.reserve(static_cast<std::size_t>(n));
    ds.actions.reserve(static_cast<std::size_t>(n));

    int row = 0;
    for (int ti : traj_indices) {
        const grid::Trajectory& traj = corpus.trajectories[static_cast<std::size_t>(ti)];
        for (int t = 0; t < static_cast<int>(traj.steps.size()); ++t) {
            const grid::Transition& tr = traj.steps[static_cast<std::size_t>(t)];
            ds.traj_index.push_back(ti);
            ds.step_index.push_back(t);
            ds.clean.push_back(traj.clean ? 1 : 0);
            ds.actions.push_back(tr.action);
            std::copy(tr.state.begin(), tr.state.end(),
                      ds.states.data() + static_cast<std::size_t>(row) * cfg.state_dim);
            write_encoder_input(
                ds.uni_inputs.data() + static_cast<std::size_t>(row) * cfg.uni_input_dim(),
                traj, t, cfg, EncoderMode::Uni);
            write_encoder_input(
                ds.bi_inputs.data() + static_cast<std::size_t>(row) * cfg.bi_input_dim(),
                traj, t, cfg, EncoderMode::Bi);
            ++row;
        }
    }
    return ds;
}

std::vector<int> all_rows(const Dataset& ds) {
    std::vector<int> out(static_cast<std::size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) out[static_cast<std::size_t>(i)] = i;
    return out;
}

Tensor one_hot_rows(const std::vector<int>& ids, int width) {
    Tensor out({static_cast<int>(ids.size()), width}, 0.0f);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        SDIL_REQUIRE(ids[r] >= 0 && ids[r] < width, "one_hot: index out of range");
        out.at(static_cast<int>(r), ids[r]) = 1.0f;
    }
    return out;
}

} // namespace sdil::policy
