#pragma once

// The three networks of the teaching loop: MLP student, the small MLP that
// acts as a learnable loss (DLN), and the coordinate-wise LSTM teacher, plus
// cross-entropy for validation error and fixed-loss baselines.

#include <random>
#include <span>
#include <utility>

#include "l2t/autodiff.hpp"
#include "l2t/checkpoint.hpp"

namespace l2t {

// ---- MLP (student and DLN share this shape) ----

struct MlpSpec {
    int64_t input_dim = 2;
    std::vector<int64_t> hidden;  // widths of hidden layers
    int64_t output_dim = 2;
    double slope = 0.01;  // leaky_relu slope on hidden layers; output is linear

    std::vector<int64_t> layer_dims() const {
        std::vector<int64_t> d{input_dim};
        d.insert(d.end(), hidden.begin(), hidden.end());
        d.push_back(output_dim);
        return d;
    }
};

inline MlpSpec student_mlp_spec(int64_t input_dim, int64_t classes) {
    return MlpSpec{input_dim, {32, 32}, classes};
}

// Default DLN: 5 fully-connected layers, 40-wide hidden, scalar output,
// consuming a (correct score, wrong score) pair.
inline MlpSpec dln_spec_default() { return MlpSpec{2, {40, 40, 40, 40}, 1}; }

// Kaiming-normal fan-in initialization with the leaky_relu gain; zero biases.
inline ParamSet mlp_init(const MlpSpec& spec, std::mt19937_64& rng) {
    ParamSet p;
    auto dims = spec.layer_dims();
    std::normal_distribution<double> nd(0.0, 1.0);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        int64_t fan_in = dims[l], fan_out = dims[l + 1];
        double gain = std::sqrt(2.0 / (1.0 + spec.slope * spec.slope));
        double sd = gain / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> w(fan_in * fan_out);
        for (auto& v : w) v = sd * nd(rng);
        p.add("w" + std::to_string(l), Tensor({fan_in, fan_out}, std::move(w)));
        p.add("b" + std::to_string(l), Tensor::zeros({1, fan_out}));
    }
    return p;
}

inline ParamSet mlp_zeros(const MlpSpec& spec) {
    ParamSet p;
    auto dims = spec.layer_dims();
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        p.add("w" + std::to_string(l), Tensor::zeros({dims[l], dims[l + 1]}));
        p.add("b" + std::to_string(l), Tensor::zeros({1, dims[l + 1]}));
    }
    return p;
}

// Raw scores, no softmax; x is (B, input_dim).
inline Tensor mlp_forward(const MlpSpec& spec, std::span<const Tensor> params, const Tensor& x) {
    if (x.shape().size() != 2 || x.shape()[1] != spec.input_dim)
        throw AutodiffError("mlp_forward: input shape " + shape_str(x.shape()) +
                            " does not match input_dim " + std::to_string(spec.input_dim));
    size_t layers = spec.hidden.size() + 1;
    if (params.size() != 2 * layers) throw AutodiffError("mlp_forward: wrong parameter count");
    Tensor h = x;
    for (size_t l = 0; l < layers; ++l) {
        h = add(matmul(h, params[2 * l]), params[2 * l + 1]);
        if (l + 1 < layers) h = leaky_relu(h, spec.slope);
    }
    return h;
}

inline Tensor student_forward(const MlpSpec& spec, std::span<const Tensor> theta, const Tensor& x) {
    return mlp_forward(spec, theta, x);
}

// ---- cross-entropy ----

inline void check_labels(const std::vector<int64_t>& labels, int64_t classes) {
    for (int64_t y : labels)
        if (y < 0 || y >= classes)
            throw AutodiffError("label out of range: " + std::to_string(y));
}

// Mean cross-entropy of stable-softmaxed scores; the validation error and the
// fixed-loss baseline.
inline Tensor ce_loss(const Tensor& predictions, const std::vector<int64_t>& labels) {
    int64_t C = predictions.shape()[1];
    check_labels(labels, C);
    Tensor lse = logsumexp_rows(predictions);           // (B,1)
    Tensor correct = gather_cols(predictions, labels);  // (B,1)
    return mean(sub(lse, correct));
}

inline double accuracy(const Tensor& predictions, const std::vector<int64_t>& labels) {
    int64_t B = predictions.shape()[0], C = predictions.shape()[1];
    int64_t hits = 0;
    for (int64_t i = 0; i < B; ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < C; ++j)
            if (predictions.data()[i * C + j] > predictions.data()[i * C + best]) best = j;
        if (best == labels[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(B);
}

// ---- DLN loss over 1-vs-1 pairs ----

// Decompose (B,C) predictions into C-1 two-column pair matrices, correct
// score first. Returns the stacked (B*(C-1), 2) input for the DLN.
inline Tensor pair_batch(const Tensor& predictions, const std::vector<int64_t>& labels) {
    int64_t B = predictions.shape()[0], C = predictions.shape()[1];
    check_labels(labels, C);
    if (C < 2) throw AutodiffError("pair_batch needs at least 2 classes");
    Tensor correct = gather_cols(predictions, labels);
    std::vector<Tensor> parts;
    parts.reserve(C - 1);
    for (int64_t k = 1; k < C; ++k) {
        // k-th wrong class of each row, in cyclic order after the label
        std::vector<int64_t> wrong(B);
        for (int64_t i = 0; i < B; ++i) wrong[i] = (labels[i] + k) % C;
        parts.push_back(concat({correct, gather_cols(predictions, wrong)}, 1));
    }
    return concat(parts, 0);
}

// Mean DLN output over all (correct, wrong) pairs, scaled by the example
// weight w.
inline Tensor dln_loss(const MlpSpec& dln, std::span<const Tensor> phi, const Tensor& predictions,
                       const std::vector<int64_t>& labels, double w = 1.0) {
    Tensor pairs = pair_batch(predictions, labels);
    Tensor out = mlp_forward(dln, phi, pairs);  // (P,1)
    return scale(mean(out), w);
}

// ---- coordinate-wise LSTM teacher ----

struct TeacherSpec {
    std::vector<int64_t> hidden{64, 64, 64, 1};
    bool preprocess = true;  // (clamped log-magnitude, sign) input encoding
    double p = 10.0;         // log clamp for the preprocessing

    int64_t input_channels() const { return preprocess ? 2 : 1; }
};

// Per layer: wx (in, 4H), wh (H, 4H), b (1, 4H); gate order [i, f, g, o].
inline ParamSet teacher_init(const TeacherSpec& spec, std::mt19937_64& rng, double init_scale = 0.1) {
    ParamSet p;
    std::uniform_real_distribution<double> ud(-init_scale, init_scale);
    int64_t in = spec.input_channels();
    for (size_t l = 0; l < spec.hidden.size(); ++l) {
        int64_t H = spec.hidden[l];
        auto randmat = [&](int64_t r, int64_t c) {
            std::vector<double> v(r * c);
            for (auto& x : v) x = ud(rng);
            return Tensor({r, c}, std::move(v));
        };
        p.add("wx" + std::to_string(l), randmat(in, 4 * H));
        p.add("wh" + std::to_string(l), randmat(H, 4 * H));
        p.add("b" + std::to_string(l), Tensor::zeros({1, 4 * H}));
        in = H;
    }
    return p;
}

inline ParamSet teacher_zeros(const TeacherSpec& spec) {
    ParamSet p;
    int64_t in = spec.input_channels();
    for (size_t l = 0; l < spec.hidden.size(); ++l) {
        int64_t H = spec.hidden[l];
        p.add("wx" + std::to_string(l), Tensor::zeros({in, 4 * H}));
        p.add("wh" + std::to_string(l), Tensor::zeros({H, 4 * H}));
        p.add("b" + std::to_string(l), Tensor::zeros({1, 4 * H}));
        in = H;
    }
    return p;
}

// One (h, c) pair per layer, each (P, H): the per-coordinate private state.
struct TeacherState {
    std::vector<Tensor> h, c;

    int64_t coords() const { return h.empty() ? 0 : h[0].shape()[0]; }

    TeacherState detached() const {
        TeacherState s;
        for (const auto& t : h) s.h.push_back(t.detached());
        for (const auto& t : c) s.c.push_back(t.detached());
        return s;
    }
};

inline TeacherState teacher_zero_state(const TeacherSpec& spec, int64_t coords) {
    TeacherState s;
    for (int64_t H : spec.hidden) {
        s.h.push_back(Tensor::zeros({coords, H}));
        s.c.push_back(Tensor::zeros({coords, H}));
    }
    return s;
}

// Standard learned-optimizer gradient encoding: (log|v|/p, sign v) when the
// magnitude is above e^-p, (-1, e^p v) below.
inline Tensor preprocess_gradient(const TeacherSpec& spec, const Tensor& grad_flat) {
    int64_t P = grad_flat.size();
    if (!spec.preprocess) {
        std::vector<double> raw(grad_flat.data());
        return Tensor({P, 1}, std::move(raw));
    }
    double thresh = std::exp(-spec.p);
    std::vector<double> enc(2 * P);
    for (int64_t i = 0; i < P; ++i) {
        double v = grad_flat.data()[i];
        if (std::abs(v) >= thresh) {
            enc[2 * i] = std::log(std::abs(v)) / spec.p;
            enc[2 * i + 1] = v > 0 ? 1.0 : -1.0;
        } else {
            enc[2 * i] = -1.0;
            enc[2 * i + 1] = std::exp(spec.p) * v;
        }
    }
    return Tensor({P, 2}, std::move(enc));
}

// One teacher step over all coordinates at once: the coordinate dimension is
// the batch dimension, so weight sharing across coordinates is structural.
// grad_phi is consumed as a constant; the computation is recorded so the
// output stays differentiable w.r.t. the teacher parameters and state.
inline std::pair<Tensor, TeacherState> teacher_step(const TeacherSpec& spec,
                                                    std::span<const Tensor> params,
                                                    const TeacherState& state,
                                                    const Tensor& grad_phi_flat) {
    if (params.size() != 3 * spec.hidden.size())
        throw AutodiffError("teacher_step: wrong parameter count");
    int64_t P = grad_phi_flat.size();
    if (state.coords() != P)
        throw AutodiffError("teacher_step: state has " + std::to_string(state.coords()) +
                            " coordinates, gradient has " + std::to_string(P));
    Tensor x = preprocess_gradient(spec, grad_phi_flat.detached());
    TeacherState next;
    for (size_t l = 0; l < spec.hidden.size(); ++l) {
        int64_t H = spec.hidden[l];
        const Tensor& wx = params[3 * l];
        const Tensor& wh = params[3 * l + 1];
        const Tensor& b = params[3 * l + 2];
        Tensor gates = add(add(matmul(x, wx), matmul(state.h[l], wh)), b);  // (P,4H)
        Tensor ig = sigmoid(slice(gates, 1, 0, H));
        Tensor fg = sigmoid(slice(gates, 1, H, H));
        Tensor gg = l2t::tanh(slice(gates, 1, 2 * H, H));
        Tensor og = sigmoid(slice(gates, 1, 3 * H, H));
        Tensor c = add(mul(fg, state.c[l]), mul(ig, gg));
        Tensor h = mul(og, l2t::tanh(c));
        next.c.push_back(c);
        next.h.push_back(h);
        x = h;
    }
    return {x, next};  // final layer width is the update channel
}

}  // namespace l2t
