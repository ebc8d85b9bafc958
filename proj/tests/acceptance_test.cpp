// Acceptance gate: one check per criterion, each printing a single
// pass/fail line. Criteria 6-8 run the full loop on a 2-class 28x28 digit
// corpus stored and loaded in MNIST IDX format.

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "l2t/harness.hpp"
#include "test_util.hpp"

using namespace l2t;
namespace fs = std::filesystem;

namespace {

void report(int criterion, const std::string& name, bool pass) {
    std::cout << "[CRITERION " << criterion << "] " << (pass ? "PASS" : "FAIL") << " — " << name
              << std::endl;
    EXPECT_TRUE(pass) << "criterion " << criterion << ": " << name;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- tiny shared instance for the oracle criteria (1-3) ----
// student: linear 2->2, 6 parameters; DLN: 2->2->1, 9 parameters

struct TinyInstance {
    MlpSpec student{2, {}, 2};
    MlpSpec dln{2, {2}, 1};
    Dataset data = make_synthetic(SyntheticKind::Blobs, 30, 0.4, 19);
    ParamSet theta, phi;
    StageConfig cfg;
    std::vector<int64_t> val_idx{0, 1, 2, 3, 4, 5};
    std::vector<int64_t> pool;

    TinyInstance() {
        std::mt19937_64 rng(19);
        theta = mlp_init(student, rng);
        phi = mlp_init(dln, rng);
        cfg.eta = 0.05;
        cfg.train_batch = 4;
        cfg.seed = 19;
        for (int64_t i = 6; i < data.size(); ++i) pool.push_back(i);
    }

    double e_val(const ParamSet& ph, const ParamSet& th0, uint64_t stream_seed, int64_t n) const {
        IndexStream s(pool, stream_seed);
        auto r = student_stage(student, th0, &dln, &ph, data, s, n, cfg);
        Tape tape;
        std::vector<Tensor> th = r.theta.as_leaves(tape);
        Dataset val = data.subset(val_idx);
        return ce_loss(student_forward(student, th, val.features), val.labels).value();
    }
};

double fd_vs_rmd_error(const TinyInstance& t, int64_t n) {
    IndexStream s(t.pool, t.cfg.seed);
    auto r = student_stage(t.student, t.theta, &t.dln, &t.phi, t.data, s, n, t.cfg);
    RmdResult rmd = rmd_dln_grad(r.traj, t.student, t.dln, t.phi, t.data, t.val_idx, t.cfg);
    std::vector<double> flat = t.phi.flat(), fd(flat.size());
    const double h = 1e-5;
    for (size_t j = 0; j < flat.size(); ++j) {
        std::vector<double> up = flat, dn = flat;
        up[j] += h;
        dn[j] -= h;
        fd[j] = (t.e_val(t.phi.from_flat(up), t.theta, t.cfg.seed, n) -
                 t.e_val(t.phi.from_flat(dn), t.theta, t.cfg.seed, n)) /
                (2 * h);
    }
    std::vector<double> an;
    for (const auto& g : rmd.grad_phi) an.insert(an.end(), g.data().begin(), g.data().end());
    return testutil::rel_err(an, fd);
}

// ---- shared digit corpus and cached full runs (criteria 6-10) ----

const fs::path& corpus_dir() {
    static fs::path dir = [] {
        fs::path d = fs::path(::testing::TempDir()) / "l2t-acceptance-idx";
        fs::create_directories(d);
        Dataset train = make_digit_images(240, 4242, 0.8);
        Dataset test = make_digit_images(120, 4242 ^ 0x7e57ULL, 0.8);
        save_idx(train, 28, 28, (d / "train-images-idx3-ubyte").string(),
                 (d / "train-labels-idx1-ubyte").string());
        save_idx(test, 28, 28, (d / "t10k-images-idx3-ubyte").string(),
                 (d / "t10k-labels-idx1-ubyte").string());
        return d;
    }();
    return dir;
}

ExperimentConfig digit_config(uint64_t seed) {
    const fs::path& d = corpus_dir();
    ExperimentConfig c;
    c.dataset = "mnist";
    c.mnist_images = (d / "train-images-idx3-ubyte").string();
    c.mnist_labels = (d / "train-labels-idx1-ubyte").string();
    c.mnist_test_images = (d / "t10k-images-idx3-ubyte").string();
    c.mnist_test_labels = (d / "t10k-labels-idx1-ubyte").string();
    c.mnist_classes = {0, 1};
    c.student_hidden = {16};
    c.dln_hidden = {16, 16};
    c.teacher_hidden = {8, 1};
    c.stage.N = 5;
    c.stage.K = 10;
    c.stage.epochs = 5;
    c.stage.eta = 0.02;
    c.stage.gamma = 0.001;
    c.stage.train_batch = 8;
    c.stage.val_batch = 32;
    c.stage.seed = seed;
    c.warm_start_steps = 20000;
    return c;
}

RunResult digit_run(const ExperimentConfig& cfg) {
    static std::map<std::string, RunResult> cache;
    std::string key = config_echo(cfg);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    auto [train, test] = make_experiment_data(cfg);
    RunSpec spec = make_run_spec(cfg, train.input_dim(), train.classes);
    std::mt19937_64 rng(cfg.stage.seed);
    ParamSet theta = mlp_init(spec.student, rng);
    ParamSet phi = mlp_init(spec.dln, rng);
    ParamSet teacher = teacher_init(spec.teacher, rng);
    RunResult r = run_l2t_dln(spec, cfg.stage, train, test, theta, phi, teacher);
    cache[key] = r;
    return r;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

const std::vector<uint64_t> kSeeds{101, 202, 303, 404, 505};

}  // namespace

TEST(Acceptance, C1_HypergradientOracle) {
    auto t0 = std::chrono::steady_clock::now();
    TinyInstance t;
    double e1 = fd_vs_rmd_error(t, 1);
    double e3 = fd_vs_rmd_error(t, 3);
    double secs = seconds_since(t0);
    report(1, "rmd_dln_grad vs finite differences, N in {1,3}, rel err < 1e-4, < 10 s",
           e1 < 1e-4 && e3 < 1e-4 && secs < 10.0);
}

TEST(Acceptance, C2_TeacherHypergradientOracle) {
    auto t0 = std::chrono::steady_clock::now();
    TinyInstance t;
    t.cfg.N = 3;
    TeacherSpec tspec;
    tspec.hidden = {2, 1};  // reduced 2-unit LSTM
    std::mt19937_64 rng(23);
    ParamSet tparams = teacher_init(tspec, rng);
    TeacherState state = teacher_zero_state(tspec, t.phi.scalar_count());
    const double gamma = 0.05;

    IndexStream s1(t.pool, t.cfg.seed);
    auto r1 = student_stage(t.student, t.theta, &t.dln, &t.phi, t.data, s1, t.cfg.N, t.cfg);
    RmdResult rmd1 = rmd_dln_grad(r1.traj, t.student, t.dln, t.phi, t.data, t.val_idx, t.cfg);

    auto pipeline = [&](const ParamSet& tp) {
        Tape tape;
        DlnUpdateResult u = dln_update(tape, t.phi, rmd1.grad_phi, tspec, tp, state, gamma);
        std::vector<Tensor> vals;
        for (const auto& x : u.phi_prime) vals.push_back(x.detached());
        return t.e_val(t.phi.with_values(vals), r1.theta, t.cfg.seed + 9, t.cfg.N);
    };

    Tape tape;
    DlnUpdateResult upd = dln_update(tape, t.phi, rmd1.grad_phi, tspec, tparams, state, gamma);
    std::vector<Tensor> vals;
    for (const auto& x : upd.phi_prime) vals.push_back(x.detached());
    ParamSet phi_prime = t.phi.with_values(vals);
    IndexStream s2(t.pool, t.cfg.seed + 9);
    auto r2 = student_stage(t.student, r1.theta, &t.dln, &phi_prime, t.data, s2, t.cfg.N, t.cfg);
    std::vector<Tensor> gT =
        teacher_stage(r2.traj, t.student, t.dln, upd, phi_prime, t.data, t.val_idx, t.cfg);

    std::vector<double> flat = tparams.flat(), fd(flat.size());
    const double h = 1e-5;
    for (size_t j = 0; j < flat.size(); ++j) {
        std::vector<double> up = flat, dn = flat;
        up[j] += h;
        dn[j] -= h;
        fd[j] = (pipeline(tparams.from_flat(up)) - pipeline(tparams.from_flat(dn))) / (2 * h);
    }
    std::vector<double> an;
    for (const auto& g : gT) an.insert(an.end(), g.data().begin(), g.data().end());
    double err = testutil::rel_err(an, fd);
    double secs = seconds_since(t0);
    report(2, "teacher hypergradient vs two-stage finite differences, rel err < 1e-3, < 30 s",
           err < 1e-3 && secs < 30.0);
}

TEST(Acceptance, C3_OneStepIdentity) {
    TinyInstance t;
    t.cfg.N = 1;
    IndexStream s(t.pool, t.cfg.seed);
    auto r = student_stage(t.student, t.theta, &t.dln, &t.phi, t.data, s, 1, t.cfg);
    RmdResult rmd = rmd_dln_grad(r.traj, t.student, t.dln, t.phi, t.data, t.val_idx, t.cfg);

    Tape tape;
    std::vector<Tensor> th = t.theta.as_leaves(tape);
    std::vector<Tensor> ph = t.phi.as_leaves(tape);
    Dataset batch = t.data.subset(r.traj.batches[0]);
    Tensor loss = dln_loss(t.dln, ph, student_forward(t.student, th, batch.features),
                           batch.labels, t.cfg.w);
    std::vector<Tensor> g = grad(loss, th);
    std::vector<Tensor> theta1;
    for (size_t i = 0; i < th.size(); ++i) theta1.push_back(sub(th[i], scale(g[i], t.cfg.eta)));
    Dataset val = t.data.subset(t.val_idx);
    Tensor e = ce_loss(student_forward(t.student, theta1, val.features), val.labels);
    std::vector<Tensor> direct = grad(e, ph);

    std::vector<double> an, ref;
    for (const auto& x : rmd.grad_phi) an.insert(an.end(), x.data().begin(), x.data().end());
    for (const auto& x : direct) ref.insert(ref.end(), x.data().begin(), x.data().end());
    report(3, "N=1 RMD equals direct unrolled differentiation, rel err < 1e-10",
           testutil::rel_err(an, ref) < 1e-10);
}

TEST(Acceptance, C4_HvpCorrectness) {
    // 13-parameter scalar MLP: dense finite-difference Hessian oracle
    MlpSpec net{2, {3}, 1};
    std::mt19937_64 rng(29);
    ParamSet params = mlp_init(net, rng);
    Tensor input({3, 2}, {0.2, -0.5, 0.9, 0.1, -0.4, 0.7});
    std::function<std::vector<double>(const std::vector<double>&)> grad_flat =
        [&](const std::vector<double>& flat) {
            ParamSet p = params.from_flat(flat);
            Tape tape;
            std::vector<Tensor> ps = p.as_leaves(tape);
            std::vector<Tensor> g = grad(mean(l2t::tanh(mlp_forward(net, ps, input))), ps);
            std::vector<double> out;
            for (const auto& t : g) out.insert(out.end(), t.data().begin(), t.data().end());
            return out;
        };
    std::vector<double> x0 = params.flat();
    auto H = testutil::fd_hessian(grad_flat, x0);

    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    std::vector<double> v(x0.size());
    for (auto& e : v) e = ud(rng);
    std::vector<double> hv_ref = testutil::matvec(H, v);

    Tape tape;
    std::vector<Tensor> ps = params.as_leaves(tape);
    std::vector<Tensor> vts;
    size_t off = 0;
    for (const auto& t : params.values) {
        std::vector<double> chunk(v.begin() + off, v.begin() + off + t.size());
        vts.emplace_back(t.shape(), std::move(chunk));
        off += t.size();
    }
    Tensor fval = mean(l2t::tanh(mlp_forward(net, ps, input)));
    std::vector<Tensor> hv = hvp(fval, ps, vts);
    std::vector<double> hv_an;
    for (const auto& t : hv) hv_an.insert(hv_an.end(), t.data().begin(), t.data().end());
    double err_hvp = testutil::rel_err(hv_an, hv_ref);

    // mixed block: rows = first weight matrix (6 entries), cols = the rest
    int64_t n1 = params.values[0].size();
    std::vector<Tensor> p1{ps[0]};
    std::vector<Tensor> p2(ps.begin() + 1, ps.end());
    std::vector<Tensor> v1{vts[0]};
    std::vector<Tensor> mixed = hvp_mixed(fval, p1, p2, v1);
    std::vector<double> mixed_an;
    for (const auto& t : mixed) mixed_an.insert(mixed_an.end(), t.data().begin(), t.data().end());
    std::vector<double> mixed_ref;
    for (size_t r = n1; r < x0.size(); ++r) {
        double s = 0;
        for (int64_t c = 0; c < n1; ++c) s += H[r][c] * v[c];
        mixed_ref.push_back(s);
    }
    double err_mixed = testutil::rel_err(mixed_an, mixed_ref);
    report(4, "hvp and hvp_mixed vs dense finite-difference Hessian, rel err < 1e-6",
           err_hvp < 1e-6 && err_mixed < 1e-6);
}

TEST(Acceptance, C5_Conclusion1Sweep) {
    auto t0 = std::chrono::steady_clock::now();
    SweepResult res = run_saddle_sweep(100, 20260824);
    bool margins_ok = true;
    for (const auto& r : res.rows)
        if (!(r.margin >= -1e-10) || !(r.lambda_max > 1.0)) margins_ok = false;
    double secs = seconds_since(t0);
    report(5,
           "100 random strict saddles: bound margin >= -1e-10, escapes >= 95%, growth ratio "
           "within 5%, < 1 min",
           margins_ok && res.passes == 100 && res.escapes >= 95 && res.worst_ratio_err < 0.05 &&
               secs < 60.0);
}

TEST(Acceptance, C6_Table3LengthTrend) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> acc, ms_per_iter;
    for (int64_t n : {1, 5, 10}) {
        ExperimentConfig cfg = digit_config(7001);
        cfg.stage.N = n;
        RunResult r = digit_run(cfg);
        acc.push_back(r.final_test_acc);
        double total = 0;
        for (const auto& row : r.records) total += row.wall_ms;
        ms_per_iter.push_back(total / cfg.stage.K);
    }
    bool acc_trend = acc[0] <= acc[1] && acc[1] <= acc[2];
    bool time_trend = ms_per_iter[0] < ms_per_iter[1] && ms_per_iter[1] < ms_per_iter[2];
    double secs = seconds_since(t0);
    std::cout << "  accuracy over N in {1,5,10}: " << acc[0] << " " << acc[1] << " " << acc[2]
              << "; ms/teacher-iter: " << ms_per_iter[0] << " " << ms_per_iter[1] << " "
              << ms_per_iter[2] << std::endl;
    report(6,
           "accuracy non-decreasing and time per teacher iteration strictly increasing over N in "
           "{1,5,10}, < 15 min",
           acc_trend && time_trend && secs < 900.0);
}

TEST(Acceptance, C7_Table5OptimizerTrend) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> lstm_acc, sgd_acc;
    for (uint64_t s : kSeeds) {
        ExperimentConfig cfg = digit_config(s);
        cfg.optimizer = "lstm";
        lstm_acc.push_back(digit_run(cfg).final_test_acc);
        cfg.optimizer = "sgd";
        sgd_acc.push_back(digit_run(cfg).final_test_acc);
    }
    double secs = seconds_since(t0);
    std::cout << "  lstm:";
    for (double a : lstm_acc) std::cout << " " << a;
    std::cout << "; sgd:";
    for (double a : sgd_acc) std::cout << " " << a;
    std::cout << "\n  median accuracy: lstm " << median(lstm_acc) << ", sgd " << median(sgd_acc)
              << std::endl;
    report(7, "LSTM teacher median accuracy >= SGD-on-DLN baseline across 5 seeds, < 20 min",
           median(lstm_acc) >= median(sgd_acc) && secs < 1200.0);
}

TEST(Acceptance, C8_BaselineNonInferiority) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<double> lstm_acc, ce_acc;
    for (uint64_t s : kSeeds) {
        ExperimentConfig cfg = digit_config(s);
        cfg.optimizer = "lstm";
        lstm_acc.push_back(digit_run(cfg).final_test_acc);
        cfg.optimizer = "ce";  // fixed loss, identical 2KN step budget
        ce_acc.push_back(digit_run(cfg).final_test_acc);
    }
    double secs = seconds_since(t0);
    std::cout << "  lstm:";
    for (double a : lstm_acc) std::cout << " " << a;
    std::cout << "; ce:";
    for (double a : ce_acc) std::cout << " " << a;
    std::cout << "\n  median accuracy: lstm " << median(lstm_acc) << ", fixed CE " << median(ce_acc)
              << std::endl;
    report(8, "L2T-DLN median accuracy >= fixed-CE - 0.5 points under the same budget, < 15 min",
           median(lstm_acc) >= median(ce_acc) - 0.005 && secs < 900.0);
}

TEST(Acceptance, C9_SurfaceShape) {
    ExperimentConfig cfg = digit_config(7001);
    RunResult r = digit_run(cfg);
    MlpSpec dln{2, cfg.dln_hidden, 1};
    bool all_finite = true;
    for (size_t e = 0; e < r.dln_epoch_snapshots.size(); ++e) {
        try {
            dln_surface(dln, r.dln_epoch_snapshots[e], -3.0, 3.0, 41, e);  // throws on non-finite
        } catch (const HarnessError&) {
            all_finite = false;
        }
    }
    SurfaceGrid trained = dln_surface(dln, r.phi, -3.0, 3.0, 41, 0);
    double frac = surface_monotone_row_fraction(trained);
    std::cout << "  monotone row fraction of trained surface: " << frac << std::endl;
    report(9,
           "trained DLN surface non-increasing in correct score on >= 90% of rows; finite at "
           "every logged epoch",
           all_finite && frac >= 0.9);
}

TEST(Acceptance, C10_Determinism) {
    fs::path base = fs::path(::testing::TempDir()) / "l2t-acceptance-det";
    fs::remove_all(base);
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p, std::ios::binary);
        std::stringstream ss;
        ss << is.rdbuf();
        return ss.str();
    };
    ExperimentConfig cfg = digit_config(606);
    cfg.stage.K = 4;
    cfg.stage.epochs = 2;
    TrainOutcome a = cmd_train(cfg, (base / "a").string());
    TrainOutcome b = cmd_train(cfg, (base / "b").string());
    bool train_same = true;
    for (const char* f : {"run.csv", "manifest.json", "student.l2t", "dln.l2t", "teacher.l2t"})
        if (slurp(base / "a" / f) != slurp(base / "b" / f)) train_same = false;

    std::string sweep1, sweep2;
    {
        std::ostringstream os;
        write_sweep_csv(run_saddle_sweep(20, 55), os);
        sweep1 = os.str();
    }
    {
        std::ostringstream os;
        write_sweep_csv(run_saddle_sweep(20, 55), os);
        sweep2 = os.str();
    }
    MlpSpec dln{2, cfg.dln_hidden, 1};
    std::string js1 = surface_json(dln_surface(dln, a.run.phi, -3, 3, 21, 1));
    std::string js2 = surface_json(dln_surface(dln, b.run.phi, -3, 3, 21, 1));
    report(10, "repeated runs with the same seed produce byte-identical CSV/JSON artifacts",
           train_same && sweep1 == sweep2 && js1 == js2);
}
