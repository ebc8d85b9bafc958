#pragma once

// Experiment orchestration behind the CLI: train runs with artifacts,
// ablation sweeps, DLN surface export, gradient-check oracles, and the
// saddle sweep command. Everything here is deterministic given (config,
// seed); wall-clock timings go to separate timing files that are excluded
// from the byte-reproducibility contract.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <thread>

#include "l2t/config.hpp"
#include "l2t/engine.hpp"
#include "l2t/saddle.hpp"

namespace l2t {

class HarnessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kOutRootEnv = "L2T_OUT_ROOT";

inline std::string resolve_out_dir(const std::string& flag_out, const std::string& config_out) {
    if (!flag_out.empty()) return flag_out;
    if (!config_out.empty()) return config_out;
    if (const char* env = std::getenv(kOutRootEnv); env && *env) return env;
    return "out";
}

namespace detail {
inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw HarnessError("cannot open " + path.string() + " for writing");
    os << text;
}

inline std::string json_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += ch;
        }
    }
    return out;
}
}  // namespace detail

// config echo + seed + schema versions; every artifact's provenance record
inline std::string run_manifest(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "{\n";
    os << "  \"tool\": \"l2t\",\n";
    os << "  \"schema_version\": " << kSchemaVersion << ",\n";
    os << "  \"run_csv\": \"" << kRunRecordHeader << "\",\n";
    os << "  \"sweep_csv\": \"" << kSweepHeader << "\",\n";
    os << "  \"seed\": " << cfg.stage.seed << ",\n";
    os << "  \"config\": \"" << detail::json_escape(config_echo(cfg)) << "\"\n";
    os << "}\n";
    return os.str();
}

// ---- train ----

struct TrainOutcome {
    RunResult run;
    std::filesystem::path dir;
};

inline TrainOutcome cmd_train(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate_config(cfg);
    auto [train, test] = make_experiment_data(cfg);
    RunSpec spec = make_run_spec(cfg, train.input_dim(), train.classes);

    std::mt19937_64 rng(cfg.stage.seed);
    ParamSet theta = mlp_init(spec.student, rng);
    ParamSet phi = mlp_init(spec.dln, rng);
    ParamSet teacher = teacher_init(spec.teacher, rng);

    std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    detail::write_text(dir / "manifest.json", run_manifest(cfg));

    TrainOutcome out;
    out.dir = dir;
    try {
        out.run = run_l2t_dln(spec, cfg.stage, train, test, theta, phi, teacher);
    } catch (const std::exception& e) {
        // flush whatever rows exist before failing
        std::ofstream os(dir / "run.csv", std::ios::binary);
        write_run_record({}, os, false);
        throw HarnessError(std::string("train failed: ") + e.what());
    }

    {
        std::ofstream os(dir / "run.csv", std::ios::binary);
        write_run_record(out.run.records, os, /*include_wall=*/false);
    }
    {
        std::ofstream os(dir / "timing.csv", std::ios::binary);
        write_run_record(out.run.records, os, /*include_wall=*/true);
    }
    save_checkpoint((dir / "student.l2t").string(), out.run.theta);
    save_checkpoint((dir / "dln.l2t").string(), out.run.phi);
    save_checkpoint((dir / "teacher.l2t").string(), out.run.teacher);
    for (size_t i = 0; i < out.run.dln_epoch_snapshots.size(); ++i)
        save_checkpoint((dir / ("dln_epoch_" + std::to_string(i) + ".l2t")).string(),
                        out.run.dln_epoch_snapshots[i]);
    return out;
}

// ---- ablate ----

struct AblateRow {
    std::string axis, value;
    uint64_t seed = 0;
    std::string status;  // ok | failed
    double final_acc = 0;
    double ms_per_teacher_iter = 0;
};

inline ExperimentConfig apply_axis_value(ExperimentConfig cfg, const std::string& axis,
                                         const std::string& value) {
    if (axis == "ratio") apply_config_key(cfg, "val_ratio", value);
    else if (axis == "length") apply_config_key(cfg, "N", value);
    else if (axis == "optimizer") apply_config_key(cfg, "optimizer", value);
    else throw HarnessError("unknown ablation axis '" + axis + "'");
    return cfg;
}

// One isolated run per (value, replicate); failures recorded, sweep
// continues. Points run concurrently — each has its own seed and state.
inline std::vector<AblateRow> cmd_ablate(const ExperimentConfig& base, const std::string& axis,
                                         const std::vector<std::string>& values,
                                         int replicates = 1) {
    if (axis != "ratio" && axis != "length" && axis != "optimizer")
        throw HarnessError("unknown ablation axis '" + axis + "'");
    if (values.empty()) throw HarnessError("ablate: need at least one value");
    if (replicates < 1) throw HarnessError("ablate: replicates must be >= 1");
    struct Point {
        std::string value;
        uint64_t seed;
    };
    std::vector<Point> points;
    for (const auto& v : values)
        for (int r = 0; r < replicates; ++r)
            points.push_back({v, base.stage.seed + 1000003ULL * (points.size() + 1)});

    std::vector<AblateRow> rows(points.size());
    auto work = [&](size_t i) {
        AblateRow& row = rows[i];
        row.axis = axis;
        row.value = points[i].value;
        row.seed = points[i].seed;
        try {
            ExperimentConfig cfg = apply_axis_value(base, axis, points[i].value);
            cfg.stage.seed = points[i].seed;
            validate_config(cfg);
            auto [train, test] = make_experiment_data(cfg);
            RunSpec spec = make_run_spec(cfg, train.input_dim(), train.classes);
            std::mt19937_64 rng(cfg.stage.seed);
            ParamSet theta = mlp_init(spec.student, rng);
            ParamSet phi = mlp_init(spec.dln, rng);
            ParamSet teacher = teacher_init(spec.teacher, rng);
            RunResult res = run_l2t_dln(spec, cfg.stage, train, test, theta, phi, teacher);
            row.status = "ok";
            row.final_acc = res.final_test_acc;
            double total_ms = 0;
            for (const auto& rec : res.records) total_ms += rec.wall_ms;
            int64_t iters = std::max<int64_t>(1, cfg.stage.K);
            row.ms_per_teacher_iter = total_ms / iters;
        } catch (const std::exception& e) {
            row.status = std::string("failed: ") + e.what();
        }
    };
    std::vector<std::thread> threads;
    for (size_t i = 0; i < points.size(); ++i) threads.emplace_back(work, i);
    for (auto& t : threads) t.join();
    return rows;
}

inline void write_ablate_csv(const std::vector<AblateRow>& rows, std::ostream& os,
                             bool include_time = false) {
    os << "axis,value,seed,status,final_acc" << (include_time ? ",ms_per_teacher_iter" : "")
       << "\n";
    os.precision(17);
    for (const auto& r : rows) {
        os << r.axis << "," << r.value << "," << r.seed << "," << r.status << "," << r.final_acc;
        if (include_time) os << "," << r.ms_per_teacher_iter;
        os << "\n";
    }
}

// ---- surface ----

struct SurfaceGrid {
    int64_t epoch = 0;
    std::vector<double> x0, x1;          // correct-class / wrong-class score axes
    std::vector<std::vector<double>> z;  // z[i][j] = L(x0[j], x1[i])
};

inline SurfaceGrid dln_surface(const MlpSpec& dln, const ParamSet& phi, double lo, double hi,
                               int64_t res, int64_t epoch) {
    if (res < 2) throw HarnessError("surface: resolution must be >= 2");
    if (!(hi > lo)) throw HarnessError("surface: need max > min");
    SurfaceGrid g;
    g.epoch = epoch;
    for (int64_t i = 0; i < res; ++i) {
        double t = lo + (hi - lo) * i / (res - 1);
        g.x0.push_back(t);
        g.x1.push_back(t);
    }
    std::vector<double> flat(2 * res * res);
    for (int64_t i = 0; i < res; ++i)
        for (int64_t j = 0; j < res; ++j) {
            flat[2 * (i * res + j)] = g.x0[j];
            flat[2 * (i * res + j) + 1] = g.x1[i];
        }
    Tape tape;
    std::vector<Tensor> ph = phi.as_leaves(tape);
    Tensor out = mlp_forward(dln, ph, Tensor({res * res, 2}, std::move(flat)));
    for (int64_t i = 0; i < res; ++i) {
        std::vector<double> row(res);
        for (int64_t j = 0; j < res; ++j) {
            double v = out.data()[i * res + j];
            if (!std::isfinite(v)) throw HarnessError("surface: non-finite DLN value");
            row[j] = v;
        }
        g.z.push_back(std::move(row));
    }
    return g;
}

inline std::string surface_json(const SurfaceGrid& g) {
    std::ostringstream os;
    os.precision(17);
    auto arr = [&](const std::vector<double>& v) {
        os << "[";
        for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
        os << "]";
    };
    os << "{\"epoch\": " << g.epoch << ", \"x0\": ";
    arr(g.x0);
    os << ", \"x1\": ";
    arr(g.x1);
    os << ", \"z\": [";
    for (size_t i = 0; i < g.z.size(); ++i) {
        if (i) os << ",";
        arr(g.z[i]);
    }
    os << "]}\n";
    return os.str();
}

// fraction of grid rows on which the loss is non-increasing in the
// correct-class score (the Figure-3 shape property)
inline double surface_monotone_row_fraction(const SurfaceGrid& g, double tol = 1e-9) {
    int64_t good = 0;
    for (const auto& row : g.z) {
        bool ok = true;
        for (size_t j = 1; j < row.size(); ++j)
            if (row[j] > row[j - 1] + tol) {
                ok = false;
                break;
            }
        if (ok) ++good;
    }
    return static_cast<double>(good) / static_cast<double>(g.z.size());
}

inline SurfaceGrid cmd_surface(const std::string& checkpoint_path, const MlpSpec& dln, double lo,
                               double hi, int64_t res, int64_t epoch) {
    ParamSet phi = load_checkpoint(checkpoint_path);
    ParamSet expected = mlp_zeros(dln);
    if (phi.size() != expected.size()) throw HarnessError("surface: checkpoint/DLN shape mismatch");
    for (size_t i = 0; i < phi.size(); ++i)
        if (phi.values[i].shape() != expected.values[i].shape())
            throw HarnessError("surface: checkpoint/DLN shape mismatch at " + phi.names[i]);
    return dln_surface(dln, phi, lo, hi, res, epoch);
}

// ---- gradcheck ----

struct GradcheckItem {
    std::string name;
    double max_rel_err = 0;
    double tol = 0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckItem> items;
    bool all_pass() const {
        for (const auto& i : items)
            if (!i.pass) return false;
        return true;
    }
};

namespace detail {

inline double rel_err_vec(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0, den = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

}  // namespace detail

// All finite-difference oracles in one command. `corrupt` deliberately
// perturbs the named quantity so the negative control can be exercised.
inline GradcheckReport cmd_gradcheck(uint64_t seed = 17, const std::string& corrupt = "") {
    GradcheckReport report;
    auto push = [&](const std::string& name, double err, double tol) {
        report.items.push_back({name, err, tol, err < tol});
    };
    const double h = 1e-5;

    // scalar-output MLP for the op-level and hvp checks
    MlpSpec net{2, {3}, 1};
    std::mt19937_64 rng(seed);
    ParamSet params = mlp_init(net, rng);
    std::vector<double> x0 = params.flat();
    Tensor input({2, 2}, {0.3, -0.7, 1.1, 0.4});

    auto eval = [&](const std::vector<double>& flat) {
        ParamSet p = params.from_flat(flat);
        Tape tape;
        std::vector<Tensor> ps = p.as_leaves(tape);
        return mean(l2t::tanh(mlp_forward(net, ps, input))).value();
    };

    {  // first-order gradient vs central differences
        Tape tape;
        std::vector<Tensor> ps = params.as_leaves(tape);
        std::vector<Tensor> g = grad(mean(l2t::tanh(mlp_forward(net, ps, input))), ps);
        std::vector<double> an;
        for (const auto& t : g) an.insert(an.end(), t.data().begin(), t.data().end());
        std::vector<double> fd(an.size());
        for (size_t j = 0; j < fd.size(); ++j) {
            std::vector<double> up = x0, dn = x0;
            up[j] += h;
            dn[j] -= h;
            fd[j] = (eval(up) - eval(dn)) / (2 * h);
        }
        push("grad", detail::rel_err_vec(an, fd), 1e-6);
    }

    {  // hvp vs finite differences of the analytic gradient
        std::uniform_real_distribution<double> ud(-1.0, 1.0);
        std::vector<double> vdir(x0.size());
        for (auto& v : vdir) v = ud(rng);
        auto grad_at = [&](const std::vector<double>& flat) {
            ParamSet p = params.from_flat(flat);
            Tape tape;
            std::vector<Tensor> ps = p.as_leaves(tape);
            std::vector<Tensor> g = grad(mean(l2t::tanh(mlp_forward(net, ps, input))), ps);
            std::vector<double> out;
            for (const auto& t : g) out.insert(out.end(), t.data().begin(), t.data().end());
            return out;
        };
        std::vector<double> up = x0, dn = x0;
        for (size_t j = 0; j < x0.size(); ++j) {
            up[j] += h * vdir[j];
            dn[j] -= h * vdir[j];
        }
        std::vector<double> gu = grad_at(up), gd = grad_at(dn);
        std::vector<double> fd(x0.size());
        for (size_t j = 0; j < x0.size(); ++j) fd[j] = (gu[j] - gd[j]) / (2 * h);

        Tape tape;
        std::vector<Tensor> ps = params.as_leaves(tape);
        std::vector<Tensor> vts;
        size_t off = 0;
        for (const auto& t : params.values) {
            std::vector<double> chunk(vdir.begin() + off, vdir.begin() + off + t.size());
            vts.emplace_back(t.shape(), std::move(chunk));
            off += t.size();
        }
        std::vector<Tensor> hv =
            hvp(mean(l2t::tanh(mlp_forward(net, ps, input))), ps, vts);
        std::vector<double> an;
        for (const auto& t : hv) an.insert(an.end(), t.data().begin(), t.data().end());
        if (corrupt == "hvp" && !an.empty()) an[0] += 1e-3;
        push("hvp", detail::rel_err_vec(an, fd), 1e-6);
    }

    // tiny two-stage pipeline for the bilevel oracles
    MlpSpec student{2, {2}, 2};
    MlpSpec dln{2, {2}, 1};
    Dataset data = make_synthetic(SyntheticKind::Blobs, 24, 0.4, seed);
    std::mt19937_64 rng2(seed + 1);
    ParamSet theta = mlp_init(student, rng2);
    ParamSet phi = mlp_init(dln, rng2);
    StageConfig cfg;
    cfg.N = 3;
    cfg.eta = 0.05;
    cfg.train_batch = 4;
    cfg.seed = seed;
    std::vector<int64_t> val_idx{0, 1, 2, 3, 4, 5};
    std::vector<int64_t> pool;
    for (int64_t i = 6; i < data.size(); ++i) pool.push_back(i);

    auto e_val_of = [&](const ParamSet& ph, const ParamSet& th0, uint64_t stream_seed,
                        int64_t n) {
        IndexStream s(pool, stream_seed);
        auto r = student_stage(student, th0, &dln, &ph, data, s, n, cfg);
        Tape tape;
        std::vector<Tensor> th = r.theta.as_leaves(tape);
        Dataset val = data.subset(val_idx);
        return ce_loss(student_forward(student, th, val.features), val.labels).value();
    };

    {  // rmd_dln_grad vs finite differences
        IndexStream s(pool, cfg.seed);
        auto r = student_stage(student, theta, &dln, &phi, data, s, cfg.N, cfg);
        RmdResult rmd = rmd_dln_grad(r.traj, student, dln, phi, data, val_idx, cfg);
        std::vector<double> flat = phi.flat(), fd(flat.size());
        for (size_t j = 0; j < flat.size(); ++j) {
            std::vector<double> up = flat, dn = flat;
            up[j] += h;
            dn[j] -= h;
            fd[j] = (e_val_of(phi.from_flat(up), theta, cfg.seed, cfg.N) -
                     e_val_of(phi.from_flat(dn), theta, cfg.seed, cfg.N)) /
                    (2 * h);
        }
        std::vector<double> an;
        for (const auto& g : rmd.grad_phi) an.insert(an.end(), g.data().begin(), g.data().end());
        if (corrupt == "rmd" && !an.empty()) an[0] += 1e-3;
        push("rmd_dln_grad", detail::rel_err_vec(an, fd), 1e-4);
    }

    {  // N = 1: RMD equals direct differentiation of the unrolled step
        StageConfig c1 = cfg;
        c1.N = 1;
        IndexStream s(pool, c1.seed);
        auto r = student_stage(student, theta, &dln, &phi, data, s, 1, c1);
        RmdResult rmd = rmd_dln_grad(r.traj, student, dln, phi, data, val_idx, c1);
        Tape tape;
        std::vector<Tensor> th = theta.as_leaves(tape);
        std::vector<Tensor> ph = phi.as_leaves(tape);
        Dataset batch = data.subset(r.traj.batches[0]);
        Tensor loss = dln_loss(dln, ph, student_forward(student, th, batch.features),
                               batch.labels, c1.w);
        std::vector<Tensor> g = grad(loss, th);
        std::vector<Tensor> theta1;
        for (size_t t = 0; t < th.size(); ++t) theta1.push_back(sub(th[t], scale(g[t], c1.eta)));
        Dataset val = data.subset(val_idx);
        Tensor e = ce_loss(student_forward(student, theta1, val.features), val.labels);
        std::vector<Tensor> direct = grad(e, ph);
        std::vector<double> an, ref;
        for (const auto& t : rmd.grad_phi) an.insert(an.end(), t.data().begin(), t.data().end());
        for (const auto& t : direct) ref.insert(ref.end(), t.data().begin(), t.data().end());
        push("rmd_n1_identity", detail::rel_err_vec(an, ref), 1e-10);
    }

    {  // teacher hypergradient vs finite differences of the two-stage pipeline
        TeacherSpec tspec;
        tspec.hidden = {2, 1};
        std::mt19937_64 rng3(seed + 2);
        ParamSet tparams = teacher_init(tspec, rng3);
        TeacherState state = teacher_zero_state(tspec, phi.scalar_count());
        double gamma = 0.05;

        IndexStream s1(pool, cfg.seed);
        auto r1 = student_stage(student, theta, &dln, &phi, data, s1, cfg.N, cfg);
        RmdResult rmd1 = rmd_dln_grad(r1.traj, student, dln, phi, data, val_idx, cfg);

        auto pipeline = [&](const ParamSet& tp) {
            Tape tape;
            DlnUpdateResult u = dln_update(tape, phi, rmd1.grad_phi, tspec, tp, state, gamma);
            std::vector<Tensor> vals;
            for (const auto& t : u.phi_prime) vals.push_back(t.detached());
            return e_val_of(phi.with_values(vals), r1.theta, cfg.seed + 9, cfg.N);
        };

        Tape tape;
        DlnUpdateResult upd = dln_update(tape, phi, rmd1.grad_phi, tspec, tparams, state, gamma);
        std::vector<Tensor> vals;
        for (const auto& t : upd.phi_prime) vals.push_back(t.detached());
        ParamSet phi_prime = phi.with_values(vals);
        IndexStream s2(pool, cfg.seed + 9);
        auto r2 = student_stage(student, r1.theta, &dln, &phi_prime, data, s2, cfg.N, cfg);
        std::vector<Tensor> gT =
            teacher_stage(r2.traj, student, dln, upd, phi_prime, data, val_idx, cfg);

        std::vector<double> flat = tparams.flat(), fd(flat.size());
        for (size_t j = 0; j < flat.size(); ++j) {
            std::vector<double> up = flat, dn = flat;
            up[j] += h;
            dn[j] -= h;
            fd[j] = (pipeline(tparams.from_flat(up)) - pipeline(tparams.from_flat(dn))) / (2 * h);
        }
        std::vector<double> an;
        for (const auto& t : gT) an.insert(an.end(), t.data().begin(), t.data().end());
        if (corrupt == "teacher" && !an.empty()) an[0] += 1e-3;
        push("teacher_stage", detail::rel_err_vec(an, fd), 1e-3);
    }

    return report;
}

inline std::string gradcheck_text(const GradcheckReport& r) {
    std::ostringstream os;
    for (const auto& i : r.items)
        os << (i.pass ? "PASS" : "FAIL") << " " << i.name << " max_rel_err="
           << std::setprecision(3) << std::scientific << i.max_rel_err << " tol=" << i.tol
           << "\n";
    os << (r.all_pass() ? "gradcheck: all checks passed" : "gradcheck: FAILURES present") << "\n";
    return os.str();
}

// ---- saddle command ----

struct SaddleCmdResult {
    SweepResult sweep;
    int controls = 0;
    int controls_excluded = 0;  // positive-definite instances flagged non-saddle
    std::string summary;
};

inline SaddleCmdResult cmd_saddle(int instances, uint64_t seed, int controls = 5) {
    SaddleCmdResult res;
    res.sweep = run_saddle_sweep(instances, seed);
    res.controls = controls;
    std::mt19937_64 rng(seed ^ 0xC0117501ULL);
    std::uniform_real_distribution<double> ud(0.1, 1.0);
    for (int i = 0; i < controls; ++i) {
        QuadraticSaddle q = random_saddle(4, rng);
        // lift the spectrum to be positive definite: H + (|lambda_min| + margin) I
        double lm = q.lambda_min();
        q.H += (std::abs(lm) + ud(rng)) * Eigen::MatrixXd::Identity(q.dim(), q.dim());
        Conclusion1Report rep = check_conclusion1(q);
        if (!rep.is_strict_saddle) ++res.controls_excluded;
    }
    std::ostringstream os;
    os << "conclusion1: " << res.sweep.passes << "/" << instances << " pass; escapes: "
       << res.sweep.escapes << "/" << instances << "; worst growth-ratio error: "
       << std::setprecision(3) << res.sweep.worst_ratio_err << "; controls excluded: "
       << res.controls_excluded << "/" << res.controls << "\n";
    res.summary = os.str();
    return res;
}

}  // namespace l2t
