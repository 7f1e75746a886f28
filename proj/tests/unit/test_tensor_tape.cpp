#include <doctest.h>

#include <cmath>

#include "double_ref.hpp"
#include "sdil/rng.hpp"
#include "sdil/tape.hpp"

using namespace sdil;
using diff::Parameter;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

Tensor random_matrix(int rows, int cols, Rng& rng, double lo = -1.5, double hi = 1.5) {
    Tensor t({rows, cols});
    for (std::int64_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

// Checks the float gradient of `loss_of(tape, x_var)` against central
// finite differences of the 64-bit reference at every input coordinate.
template <typename BuildLoss, typename RefLoss>
void gradcheck_input(Tensor x, BuildLoss&& build, RefLoss&& ref, double tol = 1e-4) {
    Tape tape;
    Var xv = tape.input(x, /*requires_grad=*/true);
    Var loss = build(tape, xv);
    tape.backward(loss);
    const Tensor& g = tape.grad(xv);

    refd::DMat xd = refd::from_tensor(x);
    int checked = 0;
    for (std::size_t r = 0; r < xd.size(); ++r) {
        for (std::size_t c = 0; c < xd[r].size(); ++c) {
            const double fd = refd::central_diff([&] { return ref(xd); }, &xd[r][c], 1e-3);
            const double analytic = g.at(static_cast<int>(r), static_cast<int>(c));
            CAPTURE(r);
            CAPTURE(c);
            CHECK(refd::rel_err(analytic, fd) < tol);
            ++checked;
        }
    }
    CHECK(checked > 0);
}

} // namespace

TEST_CASE("tensor shape contracts") {
    CHECK_THROWS_AS(Tensor({0}), ContractError);
    CHECK_THROWS_AS(Tensor({2, -1}), ContractError);
    Tensor t({2, 3}, 1.0f);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.size() == 6);
    CHECK(t.shape_str() == "(2,3)");
}

TEST_CASE("forward op closed forms") {
    Tape tape;
    SUBCASE("softplus(0) = ln 2") {
        Var x = tape.input(Tensor::scalar(0.0f));
        Var y = tape.softplus(x);
        CHECK(tape.value(y)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
    }
    SUBCASE("softmax of a constant row is uniform") {
        for (float c : {-3.0f, 0.0f, 7.5f}) {
            Var x = tape.input(Tensor::row({c, c, c, c}));
            Var y = tape.softmax_rows(x);
            for (int i = 0; i < 4; ++i)
                CHECK(tape.value(y)[i] == doctest::Approx(0.25).epsilon(1e-6));
        }
    }
    SUBCASE("squared distance [1,2] vs [4,6] is 25") {
        Var a = tape.input(Tensor::row({1.0f, 2.0f}));
        Var b = tape.input(Tensor::row({4.0f, 6.0f}));
        Var d = tape.sqdist_rows(a, b);
        CHECK(tape.value(d)[0] == doctest::Approx(25.0));
    }
    SUBCASE("softmax rows sum to one") {
        Rng rng(7);
        Var x = tape.input(random_matrix(5, 9, rng, -4.0, 4.0));
        Var y = tape.softmax_rows(x);
        for (int r = 0; r < 5; ++r) {
            double s = 0.0;
            for (int c = 0; c < 9; ++c) {
                s += tape.value(y).at(r, c);
                CHECK(tape.value(y).at(r, c) >= 0.0f);
            }
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("shape mismatches are contract violations") {
    Tape tape;
    Var a = tape.input(Tensor({2, 3}, 1.0f));
    Var b = tape.input(Tensor({3, 2}, 1.0f));
    CHECK_THROWS_AS(tape.add(a, b), ContractError);
    CHECK_THROWS_AS(tape.mul(a, b), ContractError);
    Var w = tape.input(Tensor({4, 2}, 0.5f));
    Var bias = tape.input(Tensor({2}, 0.0f));
    CHECK_THROWS_AS(tape.affine(a, w, bias), ContractError);
}

TEST_CASE("non-finite values raise numeric errors") {
    Tape tape;
    Tensor bad({2}, 0.0f);
    bad[0] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(tape.input(bad), NumericError);

    // exp overflow inside an op is caught as well
    Var x = tape.input(Tensor::row({1e30f, 0.0f}));
    CHECK_THROWS_AS(tape.mul(x, x), NumericError);
}

TEST_CASE("backward requires a scalar") {
    Tape tape;
    Var x = tape.input(Tensor({2, 2}, 1.0f), true);
    Var y = tape.tanh_op(x);
    CHECK_THROWS_AS(tape.backward(y), ContractError);
}

TEST_CASE("backward: simple closed forms") {
    SUBCASE("d/dx x^2 at 3 is 6") {
        Tape tape;
        Var x = tape.input(Tensor::scalar(3.0f), true);
        Var y = tape.mul(x, x);
        tape.backward(y);
        CHECK(tape.grad(x)[0] == doctest::Approx(6.0));
    }
    SUBCASE("d/dx softplus at 0 is 1/2") {
        Tape tape;
        Var x = tape.input(Tensor::scalar(0.0f), true);
        Var y = tape.softplus(x);
        tape.backward(y);
        CHECK(tape.grad(x)[0] == doctest::Approx(0.5));
    }
}

TEST_CASE("per-op gradients match 64-bit central differences") {
    Rng rng(42);

    SUBCASE("tanh") {
        gradcheck_input(random_matrix(3, 4, rng),
                        [](Tape& t, Var x) { return t.mean_all(t.tanh_op(x)); },
                        [](const refd::DMat& x) { return refd::mean_all(refd::tanh_m(x)); });
    }
    SUBCASE("relu (inputs away from the kink)") {
        Tensor x = random_matrix(3, 4, rng);
        for (std::int64_t i = 0; i < x.size(); ++i)
            if (std::abs(x[i]) < 0.05f) x[i] = 0.1f;
        gradcheck_input(x, [](Tape& t, Var v) { return t.mean_all(t.relu(v)); },
                        [](const refd::DMat& m) { return refd::mean_all(refd::relu(m)); });
    }
    SUBCASE("softplus") {
        gradcheck_input(random_matrix(2, 5, rng),
                        [](Tape& t, Var x) { return t.mean_all(t.softplus(x)); },
                        [](const refd::DMat& x) { return refd::mean_all(refd::softplus_m(x)); });
    }
    SUBCASE("softmax + mul") {
        Tensor w = random_matrix(3, 5, rng);
        refd::DMat wd = refd::from_tensor(w);
        gradcheck_input(
            random_matrix(3, 5, rng),
            [&](Tape& t, Var x) { return t.mean_all(t.mul(t.softmax_rows(x), t.input(w))); },
            [&](const refd::DMat& x) {
                refd::DMat y = refd::softmax_rows(x);
                for (std::size_t r = 0; r < y.size(); ++r)
                    for (std::size_t c = 0; c < y[r].size(); ++c) y[r][c] *= wd[r][c];
                return refd::mean_all(y);
            });
    }
    SUBCASE("log_softmax picked") {
        std::vector<int> labels{1, 3, 0};
        gradcheck_input(
            random_matrix(3, 4, rng),
            [&](Tape& t, Var x) { return t.pick_mean(t.log_softmax_rows(x), labels); },
            [&](const refd::DMat& x) {
                return refd::pick_mean(refd::log_softmax_rows(x), labels);
            });
    }
    SUBCASE("affine") {
        Tensor w = random_matrix(4, 3, rng);
        Tensor b = random_matrix(1, 3, rng);
        Tensor brow = Tensor({3});
        for (int i = 0; i < 3; ++i) brow[i] = b[i];
        refd::DMat wd = refd::from_tensor(w);
        refd::DVec bd = refd::from_tensor(brow)[0];
        gradcheck_input(
            random_matrix(2, 4, rng),
            [&](Tape& t, Var x) {
                return t.mean_all(t.tanh_op(t.affine(x, t.input(w), t.input(brow))));
            },
            [&](const refd::DMat& x) {
                return refd::mean_all(refd::tanh_m(refd::affine(x, wd, bd)));
            });
    }
    SUBCASE("affine w.r.t. weights") {
        Tensor x = random_matrix(3, 4, rng);
        refd::DMat xd = refd::from_tensor(x);
        Tensor brow({3}, 0.1f);
        refd::DVec bd{0.1, 0.1, 0.1};
        gradcheck_input(
            random_matrix(4, 3, rng),
            [&](Tape& t, Var w) {
                return t.mean_all(t.tanh_op(t.affine(t.input(x), w, t.input(brow))));
            },
            [&](const refd::DMat& w) {
                return refd::mean_all(refd::tanh_m(refd::affine(xd, w, bd)));
            });
    }
    SUBCASE("pairwise_dist + reciprocal + row_normalize") {
        Tensor protos = random_matrix(4, 3, rng);
        refd::DMat pd = refd::from_tensor(protos);
        std::vector<int> labels{0, 2};
        gradcheck_input(
            random_matrix(2, 3, rng),
            [&](Tape& t, Var z) {
                Var probs = t.row_normalize(
                    t.reciprocal(t.pairwise_dist(z, t.input(protos), 1e-8)));
                return t.pick_mean(probs, labels);
            },
            [&](const refd::DMat& z) {
                return refd::pick_mean(
                    refd::row_normalize(refd::reciprocal(refd::pairwise_dist(z, pd, 1e-8))),
                    labels);
            });
    }
    SUBCASE("concat + matmul") {
        Tensor rhs = random_matrix(7, 2, rng);
        Tensor left = random_matrix(2, 3, rng);
        refd::DMat rhs_d = refd::from_tensor(rhs);
        refd::DMat left_d = refd::from_tensor(left);
        gradcheck_input(
            random_matrix(2, 4, rng),
            [&](Tape& t, Var x) {
                std::vector<Var> parts{t.input(left), x};
                return t.mean_all(t.matmul(t.concat_cols(parts), t.input(rhs)));
            },
            [&](const refd::DMat& x) {
                refd::DMat joined = refd::concat_cols({left_d, x});
                refd::DMat out(joined.size(), refd::DVec(2, 0.0));
                for (std::size_t r = 0; r < joined.size(); ++r)
                    for (std::size_t k = 0; k < 7; ++k)
                        for (std::size_t c = 0; c < 2; ++c)
                            out[r][c] += joined[r][k] * rhs_d[k][c];
                return refd::mean_all(out);
            });
    }
    SUBCASE("fused losses") {
        std::vector<int> labels{2, 0, 1};
        gradcheck_input(random_matrix(3, 4, rng),
                        [&](Tape& t, Var x) { return t.cross_entropy_mean(x, labels); },
                        [&](const refd::DMat& x) { return refd::cross_entropy_mean(x, labels); });
        gradcheck_input(random_matrix(3, 4, rng, 0.1, 2.0),
                        [&](Tape& t, Var x) { return t.log_pick_mean(x, labels, 1e-6); },
                        [&](const refd::DMat& x) { return refd::log_pick_mean(x, labels, 1e-6); });
        gradcheck_input(random_matrix(4, 2, rng),
                        [&](Tape& t, Var x) { return t.softplus_mean(x, -1.0); },
                        [&](const refd::DMat& x) { return refd::softplus_mean(x, -1.0); });
    }
    SUBCASE("sqrt + clamp + log chain") {
        gradcheck_input(
            random_matrix(2, 3, rng, 0.5, 4.0),
            [&](Tape& t, Var x) {
                return t.mean_all(t.log_floor(t.clamp_min(t.sqrt_op(x), 0.2), 1e-9));
            },
            [&](const refd::DMat& x) {
                refd::DMat y = x;
                for (auto& row : y)
                    for (double& v : row) v = std::log(std::max(std::sqrt(v), 0.2));
                return refd::mean_all(y);
            });
    }
}

TEST_CASE("two-layer tanh network matches finite differences") {
    Rng rng(11);
    Tensor w1 = random_matrix(5, 6, rng, -0.7, 0.7);
    Tensor b1 = random_matrix(1, 6, rng, -0.2, 0.2);
    Tensor w2 = random_matrix(6, 3, rng, -0.7, 0.7);
    Tensor b2 = random_matrix(1, 3, rng, -0.2, 0.2);
    Tensor b1row({6}), b2row({3});
    for (int i = 0; i < 6; ++i) b1row[i] = b1[i];
    for (int i = 0; i < 3; ++i) b2row[i] = b2[i];

    Parameter pw1("w1", w1), pb1("b1", b1row), pw2("w2", w2), pb2("b2", b2row);
    Tensor x = random_matrix(4, 5, rng);
    std::vector<int> labels{0, 2, 1, 2};

    Tape tape;
    Var h = tape.tanh_op(tape.affine(tape.input(x), tape.leaf(pw1), tape.leaf(pb1)));
    Var logits = tape.affine(h, tape.leaf(pw2), tape.leaf(pb2));
    Var loss = tape.cross_entropy_mean(logits, labels);
    tape.backward(loss);

    refd::DMat xd = refd::from_tensor(x);
    refd::DMat w1d = refd::from_tensor(w1);
    refd::DVec b1d = refd::from_tensor(b1)[0];
    refd::DMat w2d = refd::from_tensor(w2);
    refd::DVec b2d = refd::from_tensor(b2)[0];
    auto ref = [&] {
        return refd::cross_entropy_mean(
            refd::affine(refd::tanh_m(refd::affine(xd, w1d, b1d)), w2d, b2d), labels);
    };

    // Every coordinate of every parameter, h = 1e-3, 64-bit recompute.
    std::vector<std::pair<Parameter*, std::vector<double*>>> groups;
    std::vector<double*> w1c, b1c, w2c, b2c;
    for (auto& row : w1d) for (double& v : row) w1c.push_back(&v);
    for (double& v : b1d) b1c.push_back(&v);
    for (auto& row : w2d) for (double& v : row) w2c.push_back(&v);
    for (double& v : b2d) b2c.push_back(&v);
    groups = {{&pw1, w1c}, {&pb1, b1c}, {&pw2, w2c}, {&pb2, b2c}};

    double worst = 0.0;
    for (auto& [param, coords] : groups) {
        for (std::size_t i = 0; i < coords.size(); ++i) {
            const double fd = refd::central_diff(ref, coords[i], 1e-3);
            worst = std::max(worst,
                             refd::rel_err(param->grad[static_cast<std::int64_t>(i)], fd));
        }
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("straight-through selection") {
    SUBCASE("forward is the one-hot argmax of the surrogate") {
        Tape tape;
        Var soft = tape.input(Tensor::row({0.2f, 0.5f, 0.3f}));
        Var hard = tape.st_hard(soft);
        CHECK(tape.value(hard)[0] == 0.0f);
        CHECK(tape.value(hard)[1] == 1.0f);
        CHECK(tape.value(hard)[2] == 0.0f);
    }
    SUBCASE("backward equals the surrogate's finite differences") {
        // Linear functional of the straight-through output; its analytic
        // gradient must match finite differences of the same functional
        // applied to the soft surrogate.
        Rng rng(3);
        Tensor logits = random_matrix(3, 4, rng);
        Tensor w = random_matrix(3, 4, rng);
        refd::DMat wd = refd::from_tensor(w);
        gradcheck_input(
            logits,
            [&](Tape& t, Var x) {
                Var soft = t.softmax_rows(x);
                return t.mean_all(t.mul(t.st_hard(soft), t.input(w)));
            },
            [&](const refd::DMat& x) {
                refd::DMat y = refd::softmax_rows(x);
                for (std::size_t r = 0; r < y.size(); ++r)
                    for (std::size_t c = 0; c < y[r].size(); ++c) y[r][c] *= wd[r][c];
                return refd::mean_all(y);
            });
    }
}

TEST_CASE("fixed seed and evaluation order reproduce bitwise") {
    auto run = [] {
        Rng rng(99);
        Tensor x = random_matrix(6, 5, rng);
        Parameter w("w", random_matrix(5, 4, rng));
        Parameter b("b", Tensor({4}, 0.05f));
        Tape tape;
        Var y = tape.softmax_rows(tape.affine(tape.input(x), tape.leaf(w), tape.leaf(b)));
        Var loss = tape.cross_entropy_mean(y, {0, 1, 2, 3, 0, 1});
        tape.backward(loss);
        std::vector<float> out;
        out.push_back(tape.value(loss)[0]);
        for (std::int64_t i = 0; i < w.grad.size(); ++i) out.push_back(w.grad[i]);
        return out;
    };
    auto a = run();
    auto b = run();
    CHECK(a == b);
}
