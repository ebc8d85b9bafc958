#include <gtest/gtest.h>

#include <random>

#include "l2t/models.hpp"
#include "test_util.hpp"

using namespace l2t;
namespace tu = l2t::testutil;

namespace {

Tensor random_input(std::mt19937_64& rng, int64_t rows, int64_t cols) {
    return Tensor({rows, cols}, tu::random_vec(rng, rows * cols));
}

}  // namespace

TEST(Student, ZeroWeightsGiveZeroScores) {
    MlpSpec spec = student_mlp_spec(4, 3);
    ParamSet theta = mlp_zeros(spec);
    std::mt19937_64 rng(1);
    Tape tape;
    auto leaves = theta.as_leaves(tape);
    Tensor out = student_forward(spec, leaves, random_input(rng, 5, 4));
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Student, BatchIndependence) {
    MlpSpec spec = student_mlp_spec(6, 2);
    std::mt19937_64 rng(2);
    ParamSet theta = mlp_init(spec, rng);
    Tensor batch = random_input(rng, 25, 6);
    Tape tape;
    auto leaves = theta.as_leaves(tape);
    Tensor full = student_forward(spec, leaves, batch);
    std::vector<double> row7(batch.data().begin() + 7 * 6, batch.data().begin() + 8 * 6);
    Tensor single = student_forward(spec, leaves, Tensor({1, 6}, row7));
    for (int64_t j = 0; j < 2; ++j)
        EXPECT_DOUBLE_EQ(single.data()[j], full.data()[7 * 2 + j]);
}

TEST(Student, ShapeContract) {
    MlpSpec spec = student_mlp_spec(3, 4);
    std::mt19937_64 rng(3);
    ParamSet theta = mlp_init(spec, rng);
    Tape tape;
    auto leaves = theta.as_leaves(tape);
    Tensor out = student_forward(spec, leaves, random_input(rng, 7, 3));
    EXPECT_EQ(out.shape(), (Shape{7, 4}));
    for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_THROW(student_forward(spec, leaves, random_input(rng, 7, 5)), AutodiffError);
}

TEST(Dln, BinaryCaseIsExactlyDlnOfPair) {
    MlpSpec dln{2, {8}, 1};
    std::mt19937_64 rng(4);
    ParamSet phi = mlp_init(dln, rng);
    Tape tape;
    auto leaves = phi.as_leaves(tape);
    double p0 = 0.7, p1 = -0.4;
    Tensor loss = dln_loss(dln, leaves, Tensor({1, 2}, {p0, p1}), {0});
    Tensor direct = mlp_forward(dln, leaves, Tensor({1, 2}, {p0, p1}));
    EXPECT_DOUBLE_EQ(loss.value(), direct.data()[0]);
}

TEST(Dln, ZeroWeightKillsLossAndStudentGrads) {
    MlpSpec student = student_mlp_spec(3, 2);
    MlpSpec dln{2, {8}, 1};
    std::mt19937_64 rng(5);
    ParamSet theta = mlp_init(student, rng);
    ParamSet phi = mlp_init(dln, rng);
    Tape tape;
    auto th = theta.as_leaves(tape);
    auto ph = phi.as_leaves(tape);
    Tensor pred = student_forward(student, th, random_input(rng, 4, 3));
    Tensor loss = dln_loss(dln, ph, pred, {0, 1, 0, 1}, /*w=*/0.0);
    EXPECT_EQ(loss.value(), 0.0);
    for (const Tensor& g : grad(loss, th))
        for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(Dln, SymmetricDlnTreatsWrongClassesEqually) {
    // A DLN whose first-layer weight rows coincide depends only on p0+p1, so
    // swapping the two wrong-class scores must not change the loss.
    MlpSpec dln{2, {6}, 1};
    std::mt19937_64 rng(6);
    ParamSet phi = mlp_init(dln, rng);
    {
        std::vector<double> w = phi.values[0].data();
        for (int64_t j = 0; j < 6; ++j) w[6 + j] = w[j];
        phi.values[0] = Tensor({2, 6}, std::move(w));
    }
    Tape tape;
    auto ph = phi.as_leaves(tape);
    Tensor predA({2, 3}, {0.5, -0.3, 0.8, 0.1, 0.9, -0.2});
    Tensor predB({2, 3}, {0.5, 0.8, -0.3, 0.1, 0.9, -0.2});  // row 0 wrong scores swapped
    Tensor la = dln_loss(dln, ph, predA, {0, 1});
    Tensor lb = dln_loss(dln, ph, predB, {0, 1});
    EXPECT_NEAR(la.value(), lb.value(), 1e-12);
}

TEST(Dln, LabelOutOfRangeThrows) {
    MlpSpec dln{2, {4}, 1};
    std::mt19937_64 rng(7);
    ParamSet phi = mlp_init(dln, rng);
    Tape tape;
    auto ph = phi.as_leaves(tape);
    EXPECT_THROW(dln_loss(dln, ph, Tensor({1, 2}, {0.0, 0.0}), {2}), AutodiffError);
}

TEST(Dln, MixedHvpIsFinite) {
    MlpSpec student = student_mlp_spec(3, 2);
    MlpSpec dln{2, {6, 6}, 1};
    std::mt19937_64 rng(8);
    ParamSet theta = mlp_init(student, rng);
    ParamSet phi = mlp_init(dln, rng);
    Tape tape;
    auto th = theta.as_leaves(tape);
    auto ph = phi.as_leaves(tape);
    Tensor pred = student_forward(student, th, random_input(rng, 5, 3));
    Tensor loss = dln_loss(dln, ph, pred, {0, 1, 1, 0, 1});
    std::vector<Tensor> v;
    for (const auto& t : th) v.push_back(Tensor(t.shape(), tu::random_vec(rng, t.size())));
    for (const Tensor& r : hvp_mixed(loss, th, ph, v))
        for (double z : r.data()) EXPECT_TRUE(std::isfinite(z));
}

TEST(Dln, KaimingInitFiniteOnGrid) {
    MlpSpec dln = dln_spec_default();
    std::mt19937_64 rng(9);
    ParamSet phi = mlp_init(dln, rng);
    Tape tape;
    auto ph = phi.as_leaves(tape);
    std::vector<double> grid;
    for (int i = 0; i <= 12; ++i)
        for (int j = 0; j <= 12; ++j) {
            grid.push_back(-3.0 + 0.5 * i);
            grid.push_back(-3.0 + 0.5 * j);
        }
    Tensor out = mlp_forward(dln, ph, Tensor({13 * 13, 2}, grid));
    for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Teacher, ZeroNetworkGivesZeroUpdate) {
    TeacherSpec spec;
    spec.hidden = {4, 1};
    ParamSet params = teacher_zeros(spec);
    Tape tape;
    auto leaves = params.as_leaves(tape);
    Tensor g({5}, {0.1, -0.2, 0.3, 0.0, 1.5});
    auto [out, next] = teacher_step(spec, leaves, teacher_zero_state(spec, 5), g);
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(out.shape(), (Shape{5, 1}));
}

TEST(Teacher, SharedWeightsAreCoordinateWise) {
    TeacherSpec spec;
    spec.hidden = {3, 1};
    std::mt19937_64 rng(10);
    ParamSet params = teacher_init(spec, rng);
    Tape tape;
    auto leaves = params.as_leaves(tape);
    Tensor g({4}, {0.25, -0.7, 0.25, 0.9});  // coords 0 and 2 identical
    auto [out, next] = teacher_step(spec, leaves, teacher_zero_state(spec, 4), g);
    EXPECT_DOUBLE_EQ(out.data()[0], out.data()[2]);
}

TEST(Teacher, PermutationEquivariant) {
    TeacherSpec spec;
    spec.hidden = {3, 1};
    std::mt19937_64 rng(11);
    ParamSet params = teacher_init(spec, rng);
    std::vector<double> gv = tu::random_vec(rng, 6, -0.5, 0.5);
    std::vector<int64_t> perm{3, 0, 5, 1, 4, 2};

    TeacherSpec spec2 = spec;
    TeacherState st = teacher_zero_state(spec, 6);
    // run two steps so the carried state is nontrivial
    Tape tape;
    auto leaves = params.as_leaves(tape);
    auto [o1, s1] = teacher_step(spec, leaves, st, Tensor({6}, gv));
    auto [o2, s2] = teacher_step(spec, leaves, s1.detached(), Tensor({6}, gv));

    std::vector<double> gp(6);
    for (int i = 0; i < 6; ++i) gp[i] = gv[perm[i]];
    Tape tape2;
    auto leaves2 = params.as_leaves(tape2);
    auto [p1, ps1] = teacher_step(spec2, leaves2, teacher_zero_state(spec2, 6), Tensor({6}, gp));
    auto [p2, ps2] = teacher_step(spec2, leaves2, ps1.detached(), Tensor({6}, gp));
    for (int i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(p2.data()[i], o2.data()[perm[i]]);
}

TEST(Teacher, RandomInputsShapeAndFiniteness) {
    TeacherSpec spec;  // full 64/64/64/1 stack
    std::mt19937_64 rng(12);
    ParamSet params = teacher_init(spec, rng);
    Tape tape;
    auto leaves = params.as_leaves(tape);
    Tensor g({50}, tu::random_vec(rng, 50, -5.0, 5.0));
    auto [out, next] = teacher_step(spec, leaves, teacher_zero_state(spec, 50), g);
    EXPECT_EQ(out.shape(), (Shape{50, 1}));
    for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
    EXPECT_THROW(teacher_step(spec, leaves, teacher_zero_state(spec, 49), g), AutodiffError);
}

TEST(Ce, UniformScoresGiveLogC) {
    Tensor pred({3, 5}, std::vector<double>(15, 0.7));
    Tensor l = ce_loss(pred, {0, 2, 4});
    EXPECT_NEAR(l.value(), std::log(5.0), 1e-12);
}

TEST(Ce, MonotoneInCorrectScore) {
    double prev = 1e30;
    for (double s : {-2.0, 0.0, 1.0, 3.0, 10.0}) {
        Tensor pred({1, 3}, {s, 0.0, 0.0});
        double v = ce_loss(pred, {0}).value();
        EXPECT_LT(v, prev);
        prev = v;
    }
    // log-sum-exp keeps extreme margins bounded
    Tensor pred({1, 2}, {1000.0, -1000.0});
    EXPECT_TRUE(std::isfinite(ce_loss(pred, {0}).value()));
}

TEST(Ce, BatchMeanEqualsMeanOfPerExample) {
    std::mt19937_64 rng(13);
    Tensor pred({4, 3}, tu::random_vec(rng, 12));
    std::vector<int64_t> labels{0, 2, 1, 1};
    double batch = ce_loss(pred, labels).value();
    double acc = 0.0;
    for (int64_t i = 0; i < 4; ++i) {
        std::vector<double> row(pred.data().begin() + i * 3, pred.data().begin() + (i + 1) * 3);
        acc += ce_loss(Tensor({1, 3}, row), {labels[i]}).value();
    }
    EXPECT_NEAR(batch, acc / 4.0, 1e-12);
}

TEST(Ce, GradientIsSoftmaxMinusOnehot) {
    std::mt19937_64 rng(14);
    std::vector<double> pv = tu::random_vec(rng, 6);
    std::vector<int64_t> labels{1, 0};
    Tape tape;
    Tensor pred = tape.leaf({2, 3}, pv);
    Tensor g = grad(ce_loss(pred, labels), pred);
    Tensor sm = softmax_rows(Tensor({2, 3}, pv));
    for (int64_t i = 0; i < 2; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            double expect = (sm.data()[i * 3 + j] - (labels[i] == j ? 1.0 : 0.0)) / 2.0;
            EXPECT_NEAR(g.data()[i * 3 + j], expect, 1e-12);
        }
    // and against finite differences
    auto f = [&](const std::vector<double>& v) {
        return ce_loss(Tensor({2, 3}, v), labels).value();
    };
    EXPECT_LT(tu::rel_err(g.data(), tu::fd_grad(f, pv)), 1e-7);
}

TEST(Checkpoint, RoundTrip) {
    MlpSpec spec{3, {4}, 2};
    std::mt19937_64 rng(15);
    ParamSet p = mlp_init(spec, rng);
    std::string path = ::testing::TempDir() + "ckpt_roundtrip.l2td";
    save_checkpoint(path, p);
    ParamSet q = load_checkpoint(path);
    ASSERT_EQ(p.size(), q.size());
    for (size_t i = 0; i < p.size(); ++i) {
        EXPECT_EQ(p.names[i], q.names[i]);
        EXPECT_EQ(p.values[i].shape(), q.values[i].shape());
        EXPECT_EQ(p.values[i].data(), q.values[i].data());
    }
}

TEST(Checkpoint, BadMagicRejected) {
    std::string path = ::testing::TempDir() + "ckpt_bad.l2td";
    std::ofstream(path) << "NOPE garbage";
    EXPECT_THROW(load_checkpoint(path), CheckpointError);
}
