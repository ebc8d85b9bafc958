#pragma once

// Deterministic dataset loading and the split-and-redivide protocol.
// Supports IDX-format image/label files (big-endian, magic 0x803/0x801),
// seeded synthetic 2-D fixtures, and a seeded generator of MNIST-format
// digit images for desk-scale classification runs.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2t/autodiff.hpp"

namespace l2t {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Dataset {
    Tensor features;  // (n, input_dim), values in [0,1] for image data
    std::vector<int64_t> labels;
    int64_t classes = 0;
    std::string provenance;

    int64_t size() const { return features.defined() ? features.shape()[0] : 0; }
    int64_t input_dim() const { return features.defined() ? features.shape()[1] : 0; }

    Dataset subset(const std::vector<int64_t>& idx) const {
        int64_t d = input_dim();
        std::vector<double> f(idx.size() * d);
        std::vector<int64_t> y(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            std::copy_n(features.data().begin() + idx[i] * d, d, f.begin() + i * d);
            y[i] = labels[idx[i]];
        }
        Dataset s;
        s.features = Tensor({static_cast<int64_t>(idx.size()), d}, std::move(f));
        s.labels = std::move(y);
        s.classes = classes;
        s.provenance = provenance;
        return s;
    }
};

// ---- IDX format ----

namespace detail {
inline uint32_t read_be32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated IDX file");
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}
inline void write_be32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
}  // namespace detail

constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

// Load paired IDX image/label files; pixels scaled by 1/255. An optional
// class filter keeps only the listed labels and remaps them to 0..k-1 in the
// order given.
inline Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                              const std::vector<int64_t>& class_filter = {},
                              int64_t max_n = -1) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw DataError("cannot open " + images_path);
    if (detail::read_be32(imgs) != kIdxImagesMagic)
        throw DataError("bad IDX image magic in " + images_path);
    int64_t n = detail::read_be32(imgs);
    int64_t rows = detail::read_be32(imgs);
    int64_t cols = detail::read_be32(imgs);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw DataError("cannot open " + labels_path);
    if (detail::read_be32(labs) != kIdxLabelsMagic)
        throw DataError("bad IDX label magic in " + labels_path);
    int64_t nl = detail::read_be32(labs);
    if (nl != n)
        throw DataError("IDX image/label count mismatch: " + std::to_string(n) + " vs " +
                        std::to_string(nl));

    int64_t dim = rows * cols;
    std::vector<unsigned char> pix(dim);
    std::vector<double> feats;
    std::vector<int64_t> labels;
    for (int64_t i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(pix.data()), dim);
        int lb = labs.get();
        if (!imgs || lb == EOF) throw DataError("truncated IDX data in " + images_path);
        int64_t remapped = lb;
        if (!class_filter.empty()) {
            auto it = std::find(class_filter.begin(), class_filter.end(), lb);
            if (it == class_filter.end()) continue;
            remapped = it - class_filter.begin();
        }
        if (max_n >= 0 && static_cast<int64_t>(labels.size()) >= max_n) break;
        for (int64_t j = 0; j < dim; ++j) feats.push_back(pix[j] / 255.0);
        labels.push_back(remapped);
    }
    Dataset d;
    int64_t kept = static_cast<int64_t>(labels.size());
    d.features = Tensor({kept, dim}, std::move(feats));
    d.labels = std::move(labels);
    d.classes = class_filter.empty() ? 10 : static_cast<int64_t>(class_filter.size());
    d.provenance = "mnist";
    return d;
}

// Write a dataset of [0,1]-scaled pixels back out as an IDX pair.
inline void save_idx(const Dataset& d, int64_t rows, int64_t cols, const std::string& images_path,
                     const std::string& labels_path) {
    if (rows * cols != d.input_dim()) throw DataError("save_idx: dims do not match feature width");
    std::ofstream imgs(images_path, std::ios::binary);
    std::ofstream labs(labels_path, std::ios::binary);
    if (!imgs || !labs) throw DataError("save_idx: cannot open output files");
    detail::write_be32(imgs, kIdxImagesMagic);
    detail::write_be32(imgs, static_cast<uint32_t>(d.size()));
    detail::write_be32(imgs, static_cast<uint32_t>(rows));
    detail::write_be32(imgs, static_cast<uint32_t>(cols));
    detail::write_be32(labs, kIdxLabelsMagic);
    detail::write_be32(labs, static_cast<uint32_t>(d.size()));
    for (int64_t i = 0; i < d.size(); ++i) {
        for (int64_t j = 0; j < d.input_dim(); ++j) {
            double v = d.features.data()[i * d.input_dim() + j];
            imgs.put(static_cast<char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
        }
        labs.put(static_cast<char>(d.labels[i]));
    }
}

// ---- synthetic fixtures ----

enum class SyntheticKind { Moons, Blobs };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "moons" || s == "synthetic-moons") return SyntheticKind::Moons;
    if (s == "blobs" || s == "synthetic-blobs") return SyntheticKind::Blobs;
    throw DataError("unknown synthetic dataset kind: " + s);
}

// Seeded 2-D two-class datasets; identical seed gives identical bytes.
inline Dataset make_synthetic(SyntheticKind kind, int64_t n, double noise, uint64_t seed) {
    if (n < 2) throw DataError("make_synthetic needs n >= 2");
    if (noise < 0) throw DataError("make_synthetic needs noise >= 0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> f;
    std::vector<int64_t> y;
    f.reserve(2 * n);
    for (int64_t i = 0; i < n; ++i) {
        int64_t cls = i % 2;
        double x0, x1;
        if (kind == SyntheticKind::Moons) {
            double t = 3.14159265358979323846 * ((i / 2) % 1000) / 999.0;
            if (cls == 0) {
                x0 = std::cos(t);
                x1 = std::sin(t);
            } else {
                x0 = 1.0 - std::cos(t);
                x1 = 0.5 - std::sin(t);
            }
        } else {
            double cx = cls == 0 ? -2.0 : 2.0;
            x0 = cx;
            x1 = cls == 0 ? -2.0 : 2.0;
        }
        f.push_back(x0 + noise * nd(rng));
        f.push_back(x1 + noise * nd(rng));
        y.push_back(cls);
    }
    Dataset d;
    d.features = Tensor({n, 2}, std::move(f));
    d.labels = std::move(y);
    d.classes = 2;
    d.provenance = kind == SyntheticKind::Moons ? "synthetic-moons" : "synthetic-blobs";
    return d;
}

// Seeded 28x28 renderings of the digits 0 and 1 with randomized geometry and
// pixel noise, in MNIST value range. Used where real MNIST files are not
// present; the output round-trips through the IDX loader.
inline Dataset make_digit_images(int64_t n, uint64_t seed, double noise = 0.08) {
    constexpr int64_t S = 28;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<double> feats(n * S * S, 0.0);
    std::vector<int64_t> labels(n);
    for (int64_t i = 0; i < n; ++i) {
        int64_t cls = i % 2;
        labels[i] = cls;
        double cx = 13.5 + 3.0 * (ud(rng) - 0.5);
        double cy = 13.5 + 3.0 * (ud(rng) - 0.5);
        double* img = feats.data() + i * S * S;
        if (cls == 0) {
            double rx = 5.5 + 3.0 * ud(rng), ry = 6.5 + 3.0 * ud(rng);
            double th = 0.10 + 0.10 * ud(rng);
            for (int64_t yy = 0; yy < S; ++yy)
                for (int64_t xx = 0; xx < S; ++xx) {
                    double dx = (xx - cx) / rx, dy = (yy - cy) / ry;
                    double r = std::sqrt(dx * dx + dy * dy);
                    img[yy * S + xx] = std::exp(-(r - 1.0) * (r - 1.0) / (2.0 * th * th));
                }
        } else {
            double slant = 0.5 * (ud(rng) - 0.5);
            double half = 7.0 + 3.0 * ud(rng);
            double th = 0.9 + 0.8 * ud(rng);
            for (int64_t yy = 0; yy < S; ++yy)
                for (int64_t xx = 0; xx < S; ++xx) {
                    double t = yy - cy;
                    if (std::abs(t) > half) continue;
                    double d = xx - (cx + slant * t);
                    img[yy * S + xx] = std::exp(-d * d / (2.0 * th * th));
                }
        }
        for (int64_t p = 0; p < S * S; ++p) {
            double v = img[p] + noise * nd(rng);
            // quantize to byte resolution so IDX round-trips are exact
            img[p] = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        }
    }
    Dataset d;
    d.features = Tensor({n, S * S}, std::move(feats));
    d.labels = std::move(labels);
    d.classes = 2;
    d.provenance = "digits-idx";
    return d;
}

inline void dump_csv(const Dataset& d, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open " + path);
    os << "x0,x1,label\n";
    for (int64_t i = 0; i < d.size(); ++i) {
        for (int64_t j = 0; j < d.input_dim(); ++j) os << (j ? "," : "") << d.features.data()[i * d.input_dim() + j];
        os << "," << d.labels[i] << "\n";
    }
}

// ---- split-and-redivide protocol ----

struct SplitState {
    uint64_t seed = 0;
    int64_t epoch = 0;
    double val_ratio = 0.5;
};

struct SplitView {
    std::vector<int64_t> train_idx, val_idx;
};

// Fresh seeded permutation per epoch; disjoint covering views honoring the
// ratio within rounding. Advances the epoch counter in the returned state.
inline std::pair<SplitView, SplitState> redivide(int64_t n, const SplitState& state) {
    if (state.val_ratio <= 0.0 || state.val_ratio >= 1.0)
        throw DataError("val_ratio must lie in (0,1)");
    std::vector<int64_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(state.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(state.epoch + 1)));
    std::shuffle(perm.begin(), perm.end(), rng);
    int64_t n_val = static_cast<int64_t>(std::llround(state.val_ratio * n));
    n_val = std::clamp<int64_t>(n_val, 1, n - 1);
    SplitView v;
    v.val_idx.assign(perm.begin(), perm.begin() + n_val);
    v.train_idx.assign(perm.begin() + n_val, perm.end());
    SplitState next = state;
    next.epoch += 1;
    return {v, next};
}

}  // namespace l2t
