#pragma once

// Numerical verification of the alternating-gradient-descent saddle-escape
// analysis on quadratic instances: split the Hessian into the AGD update
// matrices M = I + eta*H_l, G = I - eta*H_u, compute lambda_max(M^-1 G),
// check it against the escape bound, and simulate the recursion.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace l2t {

class SaddleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Quadratic model f(v) = v^T H v / 2 around the stationary point v* = 0,
// with a two-block partition of the coordinates and an AGD step size.
struct QuadraticSaddle {
    Eigen::MatrixXd H;
    std::vector<int> block1, block2;
    double eta = 0.1;
    double gamma_c = 0.1;  // curvature parameter: lambda_min(H) <= -gamma_c

    int dim() const { return static_cast<int>(H.rows()); }

    void validate() const {
        int d = dim();
        if (H.cols() != d) throw SaddleError("H must be square");
        if ((H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + H.cwiseAbs().maxCoeff()))
            throw SaddleError("H must be symmetric");
        if (eta <= 0) throw SaddleError("eta must be positive");
        std::vector<char> seen(d, 0);
        for (int i : block1) {
            if (i < 0 || i >= d || seen[i]) throw SaddleError("invalid partition");
            seen[i] = 1;
        }
        for (int i : block2) {
            if (i < 0 || i >= d || seen[i]) throw SaddleError("invalid partition");
            seen[i] = 1;
        }
        for (char s : seen)
            if (!s) throw SaddleError("partition must cover all coordinates");
    }

    double lambda_min() const {
        return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().minCoeff();
    }
    bool is_strict_saddle() const { return lambda_min() <= -gamma_c; }

    // gradient-Lipschitz bound: spectral norm of H
    double lipschitz_C() const {
        auto ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues();
        return std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
    }

    // max blockwise Lipschitz constant: spectral norms of the diagonal blocks
    double lipschitz_Lmax() const {
        auto block_norm = [&](const std::vector<int>& idx) {
            if (idx.empty()) return 0.0;
            Eigen::MatrixXd B(idx.size(), idx.size());
            for (size_t i = 0; i < idx.size(); ++i)
                for (size_t j = 0; j < idx.size(); ++j) B(i, j) = H(idx[i], idx[j]);
            auto ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(B).eigenvalues();
            return std::max(std::abs(ev.minCoeff()), std::abs(ev.maxCoeff()));
        };
        return std::max(block_norm(block1), block_norm(block2));
    }
};

// H = H_u + H_l exactly: H_l keeps only the (block2, block1) cross entries,
// H_u gets both diagonal blocks and the (block1, block2) entries.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> split_hessian(const Eigen::MatrixXd& H,
                                                                 const std::vector<int>& block1,
                                                                 const std::vector<int>& block2) {
    int d = static_cast<int>(H.rows());
    std::vector<char> in2(d, 0);
    {
        std::vector<char> seen(d, 0);
        for (int i : block1) {
            if (i < 0 || i >= d || seen[i]) throw SaddleError("invalid partition");
            seen[i] = 1;
        }
        for (int i : block2) {
            if (i < 0 || i >= d || seen[i]) throw SaddleError("invalid partition");
            seen[i] = 1;
            in2[i] = 1;
        }
        for (char s : seen)
            if (!s) throw SaddleError("partition must cover all coordinates");
    }
    Eigen::MatrixXd Hl = Eigen::MatrixXd::Zero(d, d);
    Eigen::MatrixXd Hu = H;
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c)
            if (in2[r] && !in2[c]) {
                Hl(r, c) = H(r, c);
                Hu(r, c) = 0.0;
            }
    return {Hu, Hl};
}

inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> build_M_G(const Eigen::MatrixXd& Hu,
                                                             const Eigen::MatrixXd& Hl,
                                                             double eta) {
    if (eta < 0) throw SaddleError("eta must be non-negative");
    int d = static_cast<int>(Hu.rows());
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(d, d) + eta * Hl;
    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(d, d) - eta * Hu;
    // unit block-triangular up to a coordinate permutation
    double det = M.partialPivLu().determinant();
    if (std::abs(det - 1.0) > 1e-9) throw SaddleError("M is not unit-triangular");
    return {M, G};
}

struct EigenReport {
    double lambda_max = 0;
    bool has_nonreal = false;
};

// Largest real part of the spectrum of M^-1 G, via dense real Schur.
inline EigenReport max_eigenvalue(const Eigen::MatrixXd& M, const Eigen::MatrixXd& G) {
    Eigen::MatrixXd A = M.partialPivLu().solve(G);
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw SaddleError("eigenvalue iteration did not converge");
    EigenReport r;
    r.lambda_max = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < A.rows(); ++i) {
        auto ev = es.eigenvalues()(i);
        r.lambda_max = std::max(r.lambda_max, ev.real());
        if (std::abs(ev.imag()) > 1e-9 * (1.0 + std::abs(ev.real()))) r.has_nonreal = true;
    }
    return r;
}

struct Conclusion1Report {
    double lambda_max = 0;
    double rhs_bound = 0;  // 1 + eta*gamma_c / (1 + C/L_max)
    double margin = 0;
    double C = 0, Lmax = 0;
    bool is_strict_saddle = false;
    bool has_nonreal = false;
    bool pass = false;
};

inline Conclusion1Report check_conclusion1(const QuadraticSaddle& q) {
    q.validate();
    Conclusion1Report r;
    r.is_strict_saddle = q.is_strict_saddle();
    r.C = q.lipschitz_C();
    r.Lmax = q.lipschitz_Lmax();
    auto [Hu, Hl] = split_hessian(q.H, q.block1, q.block2);
    auto [M, G] = build_M_G(Hu, Hl, q.eta);
    EigenReport e = max_eigenvalue(M, G);
    r.lambda_max = e.lambda_max;
    r.has_nonreal = e.has_nonreal;
    r.rhs_bound = 1.0 + q.eta * q.gamma_c / (1.0 + r.C / r.Lmax);
    r.margin = r.lambda_max - r.rhs_bound;
    r.pass = r.is_strict_saddle && r.margin >= -1e-10;
    return r;
}

struct AgdTrace {
    std::vector<Eigen::VectorXd> iterates;
    std::vector<double> distances;
    bool escaped = false;
    bool overflow = false;
};

// One AGD sweep: block-1 gradient step, then block-2 step using the refreshed
// block 1. On the quadratic this is exactly the map v <- M^-1 G v.
inline Eigen::VectorXd agd_step(const QuadraticSaddle& q, Eigen::VectorXd v) {
    Eigen::VectorXd g = q.H * v;
    for (int i : q.block1) v(i) -= q.eta * g(i);
    g = q.H * v;
    for (int i : q.block2) v(i) -= q.eta * g(i);
    return v;
}

inline AgdTrace agd_simulate(const QuadraticSaddle& q, const Eigen::VectorXd& v0, int horizon,
                             double escape_dist = 0.1) {
    q.validate();
    if (v0.size() != q.dim()) throw SaddleError("v0 dimension mismatch");
    AgdTrace tr;
    Eigen::VectorXd v = v0;
    tr.iterates.push_back(v);
    tr.distances.push_back(v.norm());
    for (int t = 0; t < horizon; ++t) {
        v = agd_step(q, v);
        double d = v.norm();
        if (!std::isfinite(d)) {
            tr.overflow = true;
            tr.escaped = true;
            break;
        }
        tr.iterates.push_back(v);
        tr.distances.push_back(d);
        if (d >= escape_dist) {
            tr.escaped = true;
            break;
        }
    }
    return tr;
}

// Asymptotic per-step growth along the dominant escape direction, measured
// with renormalization so long products cannot overflow.
inline double measured_growth_ratio(const QuadraticSaddle& q, int iters = 400) {
    auto [Hu, Hl] = split_hessian(q.H, q.block1, q.block2);
    auto [M, G] = build_M_G(Hu, Hl, q.eta);
    Eigen::MatrixXd A = M.partialPivLu().solve(G);
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    int best = 0;
    for (int i = 1; i < A.rows(); ++i)
        if (es.eigenvalues()(i).real() > es.eigenvalues()(best).real()) best = i;
    Eigen::VectorXd v = es.eigenvectors().col(best).real();
    if (v.norm() == 0.0) throw SaddleError("degenerate escape direction");
    v.normalize();
    double ratio = 0;
    for (int t = 0; t < iters; ++t) {
        v = agd_step(q, v);
        ratio = v.norm();
        v /= ratio;
    }
    return ratio;
}

// ---- random instances and the Conclusion-1 sweep ----

inline QuadraticSaddle random_saddle(int d, std::mt19937_64& rng) {
    if (d < 2) throw SaddleError("need dim >= 2");
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    // random orthogonal basis from a QR factorization of a Gaussian matrix
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::MatrixXd Z(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) Z(i, j) = nd(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(Z);
    Eigen::MatrixXd Q = qr.householderQ();

    QuadraticSaddle q;
    q.gamma_c = 0.1 + 0.9 * ud(rng);
    Eigen::VectorXd ev(d);
    ev(0) = -q.gamma_c * (1.0 + 0.5 * ud(rng));  // enforce lambda_min <= -gamma_c
    for (int i = 1; i < d; ++i) ev(i) = -0.5 + 2.5 * ud(rng);
    q.H = Q * ev.asDiagonal() * Q.transpose();
    q.H = 0.5 * (q.H + q.H.transpose());  // symmetrize away roundoff
    for (int i = 0; i < d; ++i) (i < (d + 1) / 2 ? q.block1 : q.block2).push_back(i);
    double C = q.lipschitz_C();
    q.eta = (0.5 + 0.5 * ud(rng)) / C;  // eta <= 1/C
    return q;
}

struct SweepRow {
    int dim = 0;
    double eta = 0, gamma_c = 0, C = 0, Lmax = 0;
    double lambda_max = 0, rhs_bound = 0, margin = 0;
    bool escaped = false;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    int passes = 0;      // Conclusion-1 margin >= -1e-10
    int escapes = 0;     // simulation left the neighborhood
    double worst_ratio_err = 0;  // max relative gap, measured growth vs lambda_max
};

inline const char* kSweepHeader = "dim,eta,gamma_c,C,Lmax,lambda_max,rhs_bound,margin,escaped";

inline SweepResult run_saddle_sweep(int instances, uint64_t seed, int min_dim = 2,
                                    int max_dim = 10) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> dd(min_dim, max_dim);
    std::normal_distribution<double> nd(0.0, 1.0);
    SweepResult res;
    for (int n = 0; n < instances; ++n) {
        QuadraticSaddle q = random_saddle(dd(rng), rng);
        Conclusion1Report rep = check_conclusion1(q);

        Eigen::VectorXd v0(q.dim());
        for (int i = 0; i < q.dim(); ++i) v0(i) = nd(rng);
        v0 *= 1e-3 / v0.norm();
        AgdTrace tr = agd_simulate(q, v0, 20000);

        double ratio = measured_growth_ratio(q);
        res.worst_ratio_err = std::max(res.worst_ratio_err,
                                       std::abs(ratio - rep.lambda_max) / rep.lambda_max);

        SweepRow row;
        row.dim = q.dim();
        row.eta = q.eta;
        row.gamma_c = q.gamma_c;
        row.C = rep.C;
        row.Lmax = rep.Lmax;
        row.lambda_max = rep.lambda_max;
        row.rhs_bound = rep.rhs_bound;
        row.margin = rep.margin;
        row.escaped = tr.escaped;
        res.rows.push_back(row);
        if (rep.pass) ++res.passes;
        if (tr.escaped) ++res.escapes;
    }
    return res;
}

inline void write_sweep_csv(const SweepResult& res, std::ostream& os) {
    os << kSweepHeader << "\n";
    os.precision(17);
    for (const auto& r : res.rows)
        os << r.dim << "," << r.eta << "," << r.gamma_c << "," << r.C << "," << r.Lmax << ","
           << r.lambda_max << "," << r.rhs_bound << "," << r.margin << "," << (r.escaped ? 1 : 0)
           << "\n";
}

}  // namespace l2t
