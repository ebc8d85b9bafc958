#include <gtest/gtest.h>

#include <random>

#include "l2t/autodiff.hpp"
#include "test_util.hpp"

using namespace l2t;
namespace tu = l2t::testutil;

TEST(Ops, MatmulIdentity) {
    Tensor I({2, 2}, {1, 0, 0, 1});
    Tensor v({2, 1}, {3.5, -2.0});
    Tensor r = matmul(I, v);
    EXPECT_EQ(r.data(), v.data());
}

TEST(Ops, LeakyReluDefinition) {
    Tensor x({1, 2}, {-1.0, 2.0});
    Tensor r = leaky_relu(x, 0.01);
    EXPECT_DOUBLE_EQ(r.data()[0], -0.01);
    EXPECT_DOUBLE_EQ(r.data()[1], 2.0);
}

TEST(Ops, StableSoftmaxLargeInputs) {
    Tensor x({1, 2}, {1000.0, 1000.0});
    Tensor s = softmax_rows(x);
    EXPECT_NEAR(s.data()[0], 0.5, 1e-12);
    EXPECT_NEAR(s.data()[1], 0.5, 1e-12);
}

TEST(Ops, ShapeMismatchThrows) {
    Tensor a({2, 3}, std::vector<double>(6, 1.0));
    Tensor b({2, 2}, std::vector<double>(4, 1.0));
    EXPECT_THROW(matmul(a, b), AutodiffError);
    EXPECT_THROW(add(a, b), AutodiffError);
}

TEST(Ops, NonFiniteFailsFast) {
    Tape tape;
    Tensor x = tape.leaf({1}, {1000.0});
    EXPECT_THROW(l2t::exp(x), AutodiffError);
    Tensor z = tape.leaf({1}, {0.0});
    EXPECT_THROW(l2t::log(z), AutodiffError);
}

TEST(Grad, SumOfSquares) {
    Tape tape;
    Tensor x = tape.leaf({3}, {1, 2, 3});
    Tensor f = sum(square(x));
    Tensor g = grad(f, x);
    EXPECT_DOUBLE_EQ(g.data()[0], 2.0);
    EXPECT_DOUBLE_EQ(g.data()[1], 4.0);
    EXPECT_DOUBLE_EQ(g.data()[2], 6.0);
}

TEST(Grad, ConstantGivesExactZero) {
    Tape tape;
    Tensor x = tape.leaf({4}, {1, 2, 3, 4});
    Tensor c = tape.leaf({1}, {7.0});
    Tensor g = grad(sum(c), x);
    for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, SecondDerivativeOfCube) {
    // d2/dx2 x^3 = 6x = 12 at x=2.
    Tape tape;
    Tensor x = tape.leaf({1}, {2.0});
    Tensor f = sum(mul(square(x), x));
    Tensor g = grad(f, x);
    Tensor g2 = grad(sum(g), x);
    EXPECT_NEAR(g2.value(), 12.0, 1e-12);
}

TEST(Grad, NonScalarOutputThrows) {
    Tape tape;
    Tensor x = tape.leaf({2}, {1, 2});
    EXPECT_THROW(grad(square(x), x), AutodiffError);
}

// A scalar function touching every op in the set, used for the
// finite-difference sweep.
static Tensor everything_scalar(Tape& tape, const Tensor& x /* leaf (2,4) */) {
    Tensor w = tape.leaf({4, 3}, {0.3, -0.2, 0.5, 0.1, 0.4, -0.6, -0.3, 0.2, 0.7, 0.5, -0.1, 0.2});
    Tensor h = matmul(x, w);                         // (2,3)
    Tensor a = leaky_relu(h, 0.1);
    Tensor b = sigmoid(slice(h, 1, 0, 2));           // (2,2)
    Tensor c = l2t::tanh(slice(h, 1, 1, 2));
    Tensor d = concat({b, c}, 1);                    // (2,4)
    Tensor e = l2t::exp(scale(d, 0.3));
    Tensor f = l2t::log(add_scalar(square(e), 1.0));
    Tensor sm = softmax_rows(a);
    Tensor g = gather_cols(sm, {0, 2});              // (2,1)
    Tensor m1 = mean(f, 1);                          // (2,1)
    Tensor m0 = mean(transpose(f), 1);               // (4,1)
    Tensor t = add(mul(g, m1), sub(m1, div(g, add_scalar(m1, 2.0))));
    return add(add(sum(t), mean(sum(m0, 0))), sum(reshape(sm, {6, 1})));
}

TEST(Grad, FiniteDifferenceSweep) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        auto x0 = tu::random_vec(rng, 8);
        auto f = [&](const std::vector<double>& v) {
            Tape tape;
            Tensor x = tape.leaf({2, 4}, v);
            return everything_scalar(tape, x).value();
        };
        Tape tape;
        Tensor x = tape.leaf({2, 4}, x0);
        Tensor g = grad(everything_scalar(tape, x), x);
        auto fd = tu::fd_grad(f, x0);
        EXPECT_LT(tu::rel_err(g.data(), fd), 1e-6) << "trial " << trial;
    }
}

TEST(Grad, GradOfGradFiniteDifference) {
    // Check d/dx of <df/dx, u> against finite differences of the analytic
    // gradient.
    std::mt19937_64 rng(11);
    auto x0 = tu::random_vec(rng, 8);
    auto u = tu::random_vec(rng, 8, -1.0, 1.0);
    auto analytic_grad = [&](const std::vector<double>& v) {
        Tape tape;
        Tensor x = tape.leaf({2, 4}, v);
        return grad(everything_scalar(tape, x), x).data();
    };
    Tape tape;
    Tensor x = tape.leaf({2, 4}, x0);
    Tensor g = grad(everything_scalar(tape, x), x);
    Tensor gg = grad(sum(mul(g, Tensor({2, 4}, u))), x);
    auto H = tu::fd_hessian(analytic_grad, x0);
    // H is symmetric for a twice-differentiable map; <dg,u> differentiates the
    // first slot, i.e. rows of H weighted by u.
    std::vector<double> expect(8, 0.0);
    for (size_t i = 0; i < 8; ++i)
        for (size_t j = 0; j < 8; ++j) expect[j] += H[i][j] * u[i];
    EXPECT_LT(tu::rel_err(gg.data(), expect), 1e-5);
}

TEST(Hvp, DiagonalQuadratic) {
    Tape tape;
    Tensor x = tape.leaf({3}, {1.0, -2.0, 0.5});
    Tensor d({3}, {2.0, 3.0, 4.0});
    Tensor f = scale(sum(mul(d, square(x))), 0.5);
    Tensor v({3}, {1.0, 1.0, -1.0});
    Tensor r = hvp(f, x, v);
    EXPECT_NEAR(r.data()[0], 2.0, 1e-12);
    EXPECT_NEAR(r.data()[1], 3.0, 1e-12);
    EXPECT_NEAR(r.data()[2], -4.0, 1e-12);
}

TEST(Hvp, LinearFunctionGivesZero) {
    Tape tape;
    Tensor x = tape.leaf({3}, {1.0, 2.0, 3.0});
    Tensor f = sum(scale(x, 2.5));
    Tensor v({3}, {1.0, -1.0, 2.0});
    Tensor r = hvp(f, x, v);
    for (double z : r.data()) EXPECT_EQ(z, 0.0);
}

TEST(Hvp, MlpLossAgainstDenseFdHessian) {
    // 8-parameter MLP: 2->2 linear + bias, squared-error loss.
    std::mt19937_64 rng(23);
    auto theta0 = tu::random_vec(rng, 8, -1.0, 1.0);
    Tensor xin({2, 2}, {0.5, -1.0, 1.5, 0.25});
    Tensor target({2, 2}, {1.0, 0.0, 0.0, 1.0});

    auto loss_of = [&](Tape& tape, const Tensor& th) {
        Tensor w = reshape(slice(reshape(th, {8, 1}), 0, 0, 4), {2, 2});
        Tensor b = reshape(slice(reshape(th, {8, 1}), 0, 4, 2), {1, 2});
        Tensor p = l2t::tanh(add(matmul(xin, w), b));
        Tensor w2 = reshape(slice(reshape(th, {8, 1}), 0, 6, 2), {2, 1});
        Tensor q = matmul(p, w2);
        return sum(square(sub(concat({p, q}, 1), concat({target, Tensor({2, 1}, {0.3, -0.3})}, 1))));
    };
    auto analytic_grad = [&](const std::vector<double>& v) {
        Tape tape;
        Tensor th = tape.leaf({8}, v);
        return grad(loss_of(tape, th), th).data();
    };

    auto H = tu::fd_hessian(analytic_grad, theta0);
    auto v = tu::random_vec(rng, 8, -1.0, 1.0);
    auto expect = tu::matvec(H, v);

    Tape tape;
    Tensor th = tape.leaf({8}, theta0);
    Tensor r = hvp(loss_of(tape, th), th, Tensor({8}, v));
    EXPECT_LT(tu::rel_err(r.data(), expect), 1e-6);
}

TEST(Hvp, ShapeMismatchThrows) {
    Tape tape;
    Tensor x = tape.leaf({3}, {1, 2, 3});
    Tensor f = sum(square(x));
    EXPECT_THROW(hvp(f, x, Tensor({2}, {1, 1})), AutodiffError);
}

TEST(Tape, ReplayDeterminism) {
    std::mt19937_64 rng(31);
    Tape tape;
    Tensor x = tape.leaf({2, 4}, tu::random_vec(rng, 8));
    Tensor f = everything_scalar(tape, x);
    grad(f, x);  // grow the tape with adjoint ops too
    EXPECT_TRUE(tape.replay_matches());
}

TEST(Tape, UnreachableTensorsGetZeroGrad) {
    Tape tape;
    Tensor a = tape.leaf({2}, {1, 2});
    Tensor b = tape.leaf({2}, {3, 4});
    Tensor f = sum(square(a));
    auto gs = grad(f, {a, b});
    EXPECT_NE(gs[0].data()[0], 0.0);
    for (double v : gs[1].data()) EXPECT_EQ(v, 0.0);
}

TEST(Tape, TruncateAndMark) {
    Tape tape;
    Tensor a = tape.leaf({2}, {1, 2});
    int m = tape.mark();
    sum(square(a));
    EXPECT_GT(tape.mark(), m);
    tape.truncate(m);
    EXPECT_EQ(tape.mark(), m);
}
