#include "sdil/tape.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>

namespace sdil::diff {

namespace {

using EMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

CMap as_mat(const Tensor& t) { return CMap(t.data(), t.rows(), t.cols()); }
Map as_mat(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

double softplus64(double v) {
    return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

double sigmoid64(double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

int row_argmax(const float* row, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i) {
        if (row[i] > row[best]) best = i;
    }
    return best;
}

} // namespace

void Tape::check_var(Var v) const {
    SDIL_REQUIRE(v.idx >= 0 && v.idx < static_cast<int>(nodes_.size()),
                 "var does not belong to this tape");
}

int Tape::push(Node n, const char* op_name) {
    if (!n.value.all_finite()) {
        throw NumericError(std::string("non-finite output of op ") + op_name);
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(int idx) {
    Node& n = nodes_[idx];
    if (n.grad.size() == 0) n.grad = Tensor(n.value.shape(), 0.0f);
    return n.grad;
}

Var Tape::leaf(Parameter& p) {
    Node n;
    n.value = p.value;
    n.needs_grad = p.trainable;
    n.param = &p;
    return {push(std::move(n), "leaf")};
}

Var Tape::input(Tensor t, bool requires_grad) {
    Node n;
    n.value = std::move(t);
    n.needs_grad = requires_grad;
    return {push(std::move(n), "input")};
}

double Tape::value64(Var v) const {
    check_var(v);
    const Node& n = node(v);
    if (n.has64) return n.v64;
    SDIL_REQUIRE(n.value.is_scalar(), "value64 requires a scalar node");
    return static_cast<double>(n.value[0]);
}

const Tensor& Tape::grad(Var v) const {
    check_var(v);
    SDIL_REQUIRE(node(v).grad.size() != 0, "no gradient recorded for this var");
    return node(v).grad;
}

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

Var Tape::affine(Var x, Var w, Var b) {
    check_var(x); check_var(w); check_var(b);
    const Tensor& xv = node(x).value;
    const Tensor& wv = node(w).value;
    const Tensor& bv = node(b).value;
    SDIL_REQUIRE(wv.rank() == 2, "affine: weight must be a matrix");
    SDIL_REQUIRE(xv.cols() == wv.rows(), "affine: inner dimensions mismatch " +
                 xv.shape_str() + " vs " + wv.shape_str());
    SDIL_REQUIRE(bv.rank() == 1 && bv.cols() == wv.cols(), "affine: bias shape mismatch");

    Tensor out({xv.rows(), wv.cols()});
    as_mat(out).noalias() = as_mat(xv) * as_mat(wv);
    as_mat(out).rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bv.data(), bv.cols());

    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad || node(w).needs_grad || node(b).needs_grad;
    n.backprop = [xi = x.idx, wi = w.idx, bi = b.idx](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.nodes_[xi].value;
        const Tensor& wv = t.nodes_[wi].value;
        if (t.nodes_[xi].needs_grad)
            as_mat(t.grad_buf(xi)).noalias() += as_mat(g) * as_mat(wv).transpose();
        if (t.nodes_[wi].needs_grad)
            as_mat(t.grad_buf(wi)).noalias() += as_mat(xv).transpose() * as_mat(g);
        if (t.nodes_[bi].needs_grad) {
            // Fixed-order 64-bit column reduction: Eigen's vectorized
            // partial redux reassociates depending on buffer alignment,
            // which breaks bitwise run-to-run reproducibility.
            Tensor& bg = t.grad_buf(bi);
            const int R = g.rows(), C = g.cols();
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int r = 0; r < R; ++r) acc += g.at(r, c);
                bg[c] += static_cast<float>(acc);
            }
        }
    };
    return {push(std::move(n), "affine")};
}

Var Tape::matmul(Var a, Var b) {
    check_var(a); check_var(b);
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    SDIL_REQUIRE(av.cols() == bv.rows(), "matmul: inner dimensions mismatch");

    Tensor out({av.rows(), bv.cols()});
    as_mat(out).noalias() = as_mat(av) * as_mat(bv);

    Node n;
    n.value = std::move(out);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.backprop = [ai = a.idx, bi = b.idx](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.nodes_[ai].needs_grad)
            as_mat(t.grad_buf(ai)).noalias() +=
                as_mat(g) * as_mat(t.nodes_[bi].value).transpose();
        if (t.nodes_[bi].needs_grad)
            as_mat(t.grad_buf(bi)).noalias() +=
                as_mat(t.nodes_[ai].value).transpose() * as_mat(g);
    };
    return {push(std::move(n), "matmul")};
}

Var Tape::add(Var a, Var b) {
    check_var(a); check_var(b);
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    SDIL_REQUIRE(av.same_shape(bv), "add: shape mismatch " + av.shape_str() +
                 " vs " + bv.shape_str());
    Tensor out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bv[i];

    Node n;
    n.value = std::move(out);
    if (node(a).has64 && node(b).has64) {
        n.has64 = true;
        n.v64 = node(a).v64 + node(b).v64;
    }
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.backprop = [ai = a.idx, bi = b.idx](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        for (int pi : {ai, bi}) {
            if (!t.nodes_[pi].needs_grad) continue;
            Tensor& pg = t.grad_buf(pi);
            for (std::int64_t i = 0; i < g.size(); ++i) pg[i] += g[i];
        }
    };
    return {push(std::move(n), "add")};
}

Var Tape::mul(Var a, Var b) {
    check_var(a); check_var(b);
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    SDIL_REQUIRE(av.same_shape(bv), "mul: shape mismatch");
    Tensor out = av;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bv[i];

    Node n;
    n.value = std::move(out);
    if (node(a).has64 && node(b).has64) {
        n.has64 = true;
        n.v64 = node(a).v64 * node(b).v64;
    }
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.backprop = [ai = a.idx, bi = b.idx](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        if (t.nodes_[ai].needs_grad) {
            Tensor& ag = t.grad_buf(ai);
            const Tensor& bv = t.nodes_[bi].value;
            for (std::int64_t i = 0; i < g.size(); ++i) ag[i] += g[i] * bv[i];
        }
        if (t.nodes_[bi].needs_grad) {
            Tensor& bg = t.grad_buf(bi);
            const Tensor& av = t.nodes_[ai].value;
            for (std::int64_t i = 0; i < g.size(); ++i) bg[i] += g[i] * av[i];
        }
    };
    return {push(std::move(n), "mul")};
}

Var Tape::scale(Var x, double c) {
    check_var(x);
    Tensor out = node(x).value;
    const float cf = static_cast<float>(c);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= cf;

    Node n;
    n.value = std::move(out);
    if (node(x).has64) {
        n.has64 = true;
        n.v64 = c * node(x).v64;
    }
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx, cf](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& xg = t.grad_buf(xi);
        for (std::int64_t i = 0; i < g.size(); ++i) xg[i] += cf * g[i];
    };
    return {push(std::move(n), "scale")};
}

Var Tape::tanh_op(Var x) {
    check_var(x);
    Tensor out = node(x).value;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor& xg = t.grad_buf(xi);
        for (std::int64_t i = 0; i < g.size(); ++i) xg[i] += g[i] * (1.0f - y[i] * y[i]);
    };
    return {push(std::move(n), "tanh")};
}

Var Tape::relu(Var x) {
    check_var(x);
    Tensor out = node(x).value;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0f ? out[i] : 0.0f;
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.nodes_[xi].value;
        Tensor& xg = t.grad_buf(xi);
        for (std::int64_t i = 0; i < g.size(); ++i)
            if (xv[i] > 0.0f) xg[i] += g[i];
    };
    return {push(std::move(n), "relu")};
}

Var Tape::softplus(Var x) {
    check_var(x);
    Tensor out = node(x).value;
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<float>(softplus64(out[i]));
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.nodes_[xi].value;
        Tensor& xg = t.grad_buf(xi);
        for (std::int64_t i = 0; i < g.size(); ++i)
            xg[i] += g[i] * static_cast<float>(sigmoid64(xv[i]));
    };
    return {push(std::move(n), "softplus")};
}

Var Tape::log_floor(Var x, double floor) {
    check_var(x);
    SDIL_REQUIRE(floor > 0.0, "log_floor: floor must be positive");
    Tensor out = node(x).value;
    const float ff = static_cast<float>(floor);
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = std::log(std::max(out[i], ff));
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx, ff](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.nodes_[xi].value;
        Tensor& xg = t.grad_buf(xi);
        for (std::int64_t i = 0; i < g.size(); ++i)
            if (xv[i] > ff) xg[i] += g[i] / xv[i];
    };
    return {push(std::move(n), "log_floor")};
}

Var Tape::sqrt_op(Var x) {
    check_var(x);
    Tensor out = node(x).value;
    for (std::int64_t i = 0; i < out.size(); ++i) {
        SDIL_REQUIRE(out[i] >= 0.0f, "sqrt: negative input");
        out[i] = std::sqrt(out[i]);
    }
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor& xg = t.grad_buf(xi);
        for (std::int64_t i = 0; i < g.size(); ++i)
            if (y[i] > 0.0f) xg[i] += g[i] / (2.0f * y[i]);
    };
    return {push(std::move(n), "sqrt")};
}

Var Tape::clamp_min(Var x, double floor) {
    check_var(x);
    Tensor out = node(x).value;
    const float ff = static_cast<float>(floor);
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], ff);
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx, ff](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& xv = t.nodes_[xi].value;
        Tensor& xg = t.grad_buf(xi);
        for (std::int64_t i = 0; i < g.size(); ++i)
            if (xv[i] > ff) xg[i] += g[i];
    };
    return {push(std::move(n), "clamp_min")};
}

Var Tape::reciprocal(Var x) {
    check_var(x);
    Tensor out = node(x).value;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 1.0f / out[i];
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor& xg = t.grad_buf(xi);
        for (std::int64_t i = 0; i < g.size(); ++i) xg[i] -= g[i] * y[i] * y[i];
    };
    return {push(std::move(n), "reciprocal")};
}

Var Tape::concat_cols(std::span<const Var> parts) {
    SDIL_REQUIRE(!parts.empty(), "concat: no inputs");
    int rows = -1, cols = 0;
    bool needs = false;
    for (Var p : parts) {
        check_var(p);
        const Tensor& v = node(p).value;
        if (rows < 0) rows = v.rows();
        SDIL_REQUIRE(v.rows() == rows, "concat: row count mismatch");
        cols += v.cols();
        needs = needs || node(p).needs_grad;
    }
    Tensor out({rows, cols});
    int off = 0;
    for (Var p : parts) {
        const Tensor& v = node(p).value;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < v.cols(); ++c)
                out.at(r, off + c) = v.at(r, c);
        off += v.cols();
    }
    std::vector<int> idxs;
    for (Var p : parts) idxs.push_back(p.idx);

    Node n;
    n.value = std::move(out);
    n.needs_grad = needs;
    n.backprop = [idxs](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        int off = 0;
        for (int pi : idxs) {
            const Tensor& v = t.nodes_[pi].value;
            if (t.nodes_[pi].needs_grad) {
                Tensor& pg = t.grad_buf(pi);
                for (int r = 0; r < v.rows(); ++r)
                    for (int c = 0; c < v.cols(); ++c)
                        pg.at(r, c) += g.at(r, off + c);
            }
            off += v.cols();
        }
    };
    return {push(std::move(n), "concat")};
}

Var Tape::softmax_rows(Var x) {
    check_var(x);
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    const int R = xv.rows(), C = xv.cols();
    for (int r = 0; r < R; ++r) {
        float* row = out.data() + static_cast<std::size_t>(r) * C;
        float m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += std::exp(static_cast<double>(row[c] - m));
        for (int c = 0; c < C; ++c)
            row[c] = static_cast<float>(std::exp(static_cast<double>(row[c] - m)) / s);
    }
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        Tensor& xg = t.grad_buf(xi);
        const int R = y.rows(), C = y.cols();
        for (int r = 0; r < R; ++r) {
            double dot = 0.0;
            for (int c = 0; c < C; ++c) dot += static_cast<double>(g.at(r, c)) * y.at(r, c);
            for (int c = 0; c < C; ++c)
                xg.at(r, c) += static_cast<float>(y.at(r, c) * (g.at(r, c) - dot));
        }
    };
    return {push(std::move(n), "softmax")};
}

Var Tape::log_softmax_rows(Var x) {
    check_var(x);
    const Tensor& xv = node(x).value;
    Tensor out = xv;
    const int R = xv.rows(), C = xv.cols();
    for (int r = 0; r < R; ++r) {
        float* row = out.data() + static_cast<std::size_t>(r) * C;
        float m = row[0];
        for (int c = 1; c < C; ++c) m = std::max(m, row[c]);
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += std::exp(static_cast<double>(row[c] - m));
        const double lse = static_cast<double>(m) + std::log(s);
        for (int c = 0; c < C; ++c)
            row[c] = static_cast<float>(static_cast<double>(row[c]) - lse);
    }
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value; // log-probs
        Tensor& xg = t.grad_buf(xi);
        const int R = y.rows(), C = y.cols();
        for (int r = 0; r < R; ++r) {
            double gsum = 0.0;
            for (int c = 0; c < C; ++c) gsum += g.at(r, c);
            for (int c = 0; c < C; ++c)
                xg.at(r, c) += static_cast<float>(
                    g.at(r, c) - std::exp(static_cast<double>(y.at(r, c))) * gsum);
        }
    };
    return {push(std::move(n), "log_softmax")};
}

Var Tape::sqdist_rows(Var a, Var b) {
    check_var(a); check_var(b);
    const Tensor& av = node(a).value;
    const Tensor& bv = node(b).value;
    SDIL_REQUIRE(av.same_shape(bv), "sqdist: shape mismatch");
    const int R = av.rows(), C = av.cols();
    Tensor out({R});
    for (int r = 0; r < R; ++r) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) {
            const double d = static_cast<double>(av.at(r, c)) - bv.at(r, c);
            s += d * d;
        }
        out[r] = static_cast<float>(s);
    }
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    n.backprop = [ai = a.idx, bi = b.idx](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& av = t.nodes_[ai].value;
        const Tensor& bv = t.nodes_[bi].value;
        const int R = av.rows(), C = av.cols();
        for (int r = 0; r < R; ++r) {
            for (int c = 0; c < C; ++c) {
                const float d = 2.0f * (av.at(r, c) - bv.at(r, c)) * g[r];
                if (t.nodes_[ai].needs_grad) t.grad_buf(ai).at(r, c) += d;
                if (t.nodes_[bi].needs_grad) t.grad_buf(bi).at(r, c) -= d;
            }
        }
    };
    return {push(std::move(n), "sqdist")};
}

Var Tape::pairwise_dist(Var z, Var p, double floor) {
    check_var(z); check_var(p);
    const Tensor& zv = node(z).value;
    const Tensor& pv = node(p).value;
    SDIL_REQUIRE(zv.cols() == pv.cols(), "pairwise_dist: embedding width mismatch");
    const int B = zv.rows(), K = pv.rows(), D = zv.cols();
    const float ff = static_cast<float>(floor);
    Tensor out({B, K});
    for (int b = 0; b < B; ++b) {
        for (int k = 0; k < K; ++k) {
            double s = 0.0;
            for (int d = 0; d < D; ++d) {
                const double diff = static_cast<double>(zv.at(b, d)) - pv.at(k, d);
                s += diff * diff;
            }
            out.at(b, k) = std::max(static_cast<float>(std::sqrt(s)), ff);
        }
    }
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(z).needs_grad || node(p).needs_grad;
    n.backprop = [zi = z.idx, pi = p.idx, ff](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& dist = t.nodes_[self].value;
        const Tensor& zv = t.nodes_[zi].value;
        const Tensor& pv = t.nodes_[pi].value;
        const int B = zv.rows(), K = pv.rows(), D = zv.cols();
        const bool gz = t.nodes_[zi].needs_grad;
        const bool gp = t.nodes_[pi].needs_grad;
        for (int b = 0; b < B; ++b) {
            for (int k = 0; k < K; ++k) {
                const float dv = dist.at(b, k);
                if (dv <= ff) continue; // clamped: zero local derivative
                const float coef = g.at(b, k) / dv;
                for (int d = 0; d < D; ++d) {
                    const float diff = (zv.at(b, d) - pv.at(k, d)) * coef;
                    if (gz) t.grad_buf(zi).at(b, d) += diff;
                    if (gp) t.grad_buf(pi).at(k, d) -= diff;
                }
            }
        }
    };
    return {push(std::move(n), "pairwise_dist")};
}

Var Tape::row_normalize(Var x) {
    check_var(x);
    const Tensor& xv = node(x).value;
    const int R = xv.rows(), C = xv.cols();
    Tensor out = xv;
    for (int r = 0; r < R; ++r) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += xv.at(r, c);
        SDIL_REQUIRE(s > 0.0, "row_normalize: nonpositive row sum");
        for (int c = 0; c < C; ++c)
            out.at(r, c) = static_cast<float>(xv.at(r, c) / s);
    }
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        const Tensor& xv = t.nodes_[xi].value;
        Tensor& xg = t.grad_buf(xi);
        const int R = y.rows(), C = y.cols();
        for (int r = 0; r < R; ++r) {
            double s = 0.0, dot = 0.0;
            for (int c = 0; c < C; ++c) {
                s += xv.at(r, c);
                dot += static_cast<double>(g.at(r, c)) * y.at(r, c);
            }
            for (int c = 0; c < C; ++c)
                xg.at(r, c) += static_cast<float>((g.at(r, c) - dot) / s);
        }
    };
    return {push(std::move(n), "row_normalize")};
}

Var Tape::st_hard(Var soft) {
    check_var(soft);
    const Tensor& sv = node(soft).value;
    const int R = sv.rows(), C = sv.cols();
    Tensor out({R, C}, 0.0f);
    for (int r = 0; r < R; ++r)
        out.at(r, row_argmax(sv.data() + static_cast<std::size_t>(r) * C, C)) = 1.0f;
    Node n;
    n.value = std::move(out);
    n.needs_grad = node(soft).needs_grad;
    n.backprop = [si = soft.idx](Tape& t, int self) {
        if (!t.nodes_[si].needs_grad) return;
        const Tensor& g = t.nodes_[self].grad;
        Tensor& sg = t.grad_buf(si);
        for (std::int64_t i = 0; i < g.size(); ++i) sg[i] += g[i];
    };
    return {push(std::move(n), "st_hard")};
}

Var Tape::mean_all(Var x) {
    check_var(x);
    const Tensor& xv = node(x).value;
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    acc /= static_cast<double>(xv.size());

    Node n;
    n.value = Tensor::scalar(static_cast<float>(acc));
    n.v64 = acc;
    n.has64 = true;
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const float g = t.nodes_[self].grad[0];
        Tensor& xg = t.grad_buf(xi);
        const float coef = g / static_cast<float>(xg.size());
        for (std::int64_t i = 0; i < xg.size(); ++i) xg[i] += coef;
    };
    return {push(std::move(n), "mean")};
}

Var Tape::cross_entropy_mean(Var logits, std::vector<int> labels) {
    check_var(logits);
    const Tensor& xv = node(logits).value;
    const int R = xv.rows(), C = xv.cols();
    SDIL_REQUIRE(static_cast<int>(labels.size()) == R, "cross_entropy: label count mismatch");
    double acc = 0.0;
    for (int r = 0; r < R; ++r) {
        SDIL_REQUIRE(labels[r] >= 0 && labels[r] < C, "cross_entropy: label out of range");
        double m = xv.at(r, 0);
        for (int c = 1; c < C; ++c) m = std::max(m, static_cast<double>(xv.at(r, c)));
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += std::exp(static_cast<double>(xv.at(r, c)) - m);
        acc += m + std::log(s) - static_cast<double>(xv.at(r, labels[r]));
    }
    acc /= static_cast<double>(R);

    Node n;
    n.value = Tensor::scalar(static_cast<float>(acc));
    n.v64 = acc;
    n.has64 = true;
    n.needs_grad = node(logits).needs_grad;
    n.backprop = [xi = logits.idx, labels = std::move(labels)](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const double g = static_cast<double>(t.nodes_[self].grad[0]);
        const Tensor& xv = t.nodes_[xi].value;
        Tensor& xg = t.grad_buf(xi);
        const int R = xv.rows(), C = xv.cols();
        const double coef = g / static_cast<double>(R);
        for (int r = 0; r < R; ++r) {
            double m = xv.at(r, 0);
            for (int c = 1; c < C; ++c) m = std::max(m, static_cast<double>(xv.at(r, c)));
            double s = 0.0;
            for (int c = 0; c < C; ++c) s += std::exp(static_cast<double>(xv.at(r, c)) - m);
            for (int c = 0; c < C; ++c) {
                const double p = std::exp(static_cast<double>(xv.at(r, c)) - m) / s;
                const double onehot = (c == labels[r]) ? 1.0 : 0.0;
                xg.at(r, c) += static_cast<float>(coef * (p - onehot));
            }
        }
    };
    return {push(std::move(n), "cross_entropy_mean")};
}

Var Tape::pick_mean(Var x, std::vector<int> labels) {
    check_var(x);
    const Tensor& xv = node(x).value;
    const int R = xv.rows(), C = xv.cols();
    SDIL_REQUIRE(static_cast<int>(labels.size()) == R, "pick_mean: label count mismatch");
    double acc = 0.0;
    for (int r = 0; r < R; ++r) {
        SDIL_REQUIRE(labels[r] >= 0 && labels[r] < C, "pick_mean: label out of range");
        acc += static_cast<double>(xv.at(r, labels[r]));
    }
    acc /= static_cast<double>(R);

    Node n;
    n.value = Tensor::scalar(static_cast<float>(acc));
    n.v64 = acc;
    n.has64 = true;
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx, labels = std::move(labels)](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const float g = t.nodes_[self].grad[0];
        Tensor& xg = t.grad_buf(xi);
        const float coef = g / static_cast<float>(labels.size());
        for (std::size_t r = 0; r < labels.size(); ++r)
            xg.at(static_cast<int>(r), labels[r]) += coef;
    };
    return {push(std::move(n), "pick_mean")};
}

Var Tape::log_pick_mean(Var x, std::vector<int> labels, double floor) {
    check_var(x);
    const Tensor& xv = node(x).value;
    const int R = xv.rows(), C = xv.cols();
    SDIL_REQUIRE(static_cast<int>(labels.size()) == R, "log_pick_mean: label count mismatch");
    SDIL_REQUIRE(floor > 0.0, "log_pick_mean: floor must be positive");
    double acc = 0.0;
    for (int r = 0; r < R; ++r) {
        SDIL_REQUIRE(labels[r] >= 0 && labels[r] < C, "log_pick_mean: label out of range");
        acc += std::log(std::max(static_cast<double>(xv.at(r, labels[r])), floor));
    }
    acc /= static_cast<double>(R);

    Node n;
    n.value = Tensor::scalar(static_cast<float>(acc));
    n.v64 = acc;
    n.has64 = true;
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx, labels = std::move(labels), floor](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const double g = static_cast<double>(t.nodes_[self].grad[0]);
        const Tensor& xv = t.nodes_[xi].value;
        Tensor& xg = t.grad_buf(xi);
        const double coef = g / static_cast<double>(labels.size());
        for (std::size_t r = 0; r < labels.size(); ++r) {
            const double p = static_cast<double>(xv.at(static_cast<int>(r), labels[r]));
            if (p > floor)
                xg.at(static_cast<int>(r), labels[r]) += static_cast<float>(coef / p);
        }
    };
    return {push(std::move(n), "log_pick_mean")};
}

Var Tape::softplus_mean(Var x, double sign) {
    check_var(x);
    const Tensor& xv = node(x).value;
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.size(); ++i)
        acc += softplus64(sign * static_cast<double>(xv[i]));
    acc /= static_cast<double>(xv.size());

    Node n;
    n.value = Tensor::scalar(static_cast<float>(acc));
    n.v64 = acc;
    n.has64 = true;
    n.needs_grad = node(x).needs_grad;
    n.backprop = [xi = x.idx, sign](Tape& t, int self) {
        if (!t.nodes_[xi].needs_grad) return;
        const double g = static_cast<double>(t.nodes_[self].grad[0]);
        const Tensor& xv = t.nodes_[xi].value;
        Tensor& xg = t.grad_buf(xi);
        const double coef = g * sign / static_cast<double>(xv.size());
        for (std::int64_t i = 0; i < xv.size(); ++i)
            xg[i] += static_cast<float>(coef * sigmoid64(sign * static_cast<double>(xv[i])));
    };
    return {push(std::move(n), "softplus_mean")};
}

void Tape::backward(Var loss) {
    check_var(loss);
    SDIL_REQUIRE(node(loss).value.is_scalar(), "backward requires a scalar loss");
    grad_buf(loss.idx)[0] = 1.0f;
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.grad.size() == 0) continue;
        if (n.backprop) n.backprop(*this, i);
        if (n.param && n.param->trainable) {
            Tensor& pg = n.param->grad;
            for (std::int64_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
        }
    }
}

} // namespace sdil::diff
