#pragma once

// Named parameter sets and their flat binary checkpoint format:
//   magic "L2TD" | u32 version | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u64 dims... |
//               little-endian f64 data
// All integers little-endian.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2t/autodiff.hpp"

namespace l2t {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr uint32_t kCheckpointVersion = 1;

// Ordered list of named constant tensors; the plain-data form of every
// parameter vector (student, DLN, teacher) between tape lifetimes.
struct ParamSet {
    std::vector<std::string> names;
    std::vector<Tensor> values;

    size_t size() const { return values.size(); }
    int64_t scalar_count() const {
        int64_t n = 0;
        for (const auto& v : values) n += v.size();
        return n;
    }

    void add(std::string name, Tensor value) {
        names.push_back(std::move(name));
        values.push_back(std::move(value));
    }

    const Tensor& at(const std::string& name) const {
        for (size_t i = 0; i < names.size(); ++i)
            if (names[i] == name) return values[i];
        throw CheckpointError("no parameter named " + name);
    }

    // Instantiate every tensor as a leaf on the given tape, preserving order.
    std::vector<Tensor> as_leaves(Tape& tape) const {
        std::vector<Tensor> out;
        out.reserve(values.size());
        for (const auto& v : values) out.push_back(tape.leaf(v));
        return out;
    }

    // Rebuild from tensors of matching shapes (values are detached).
    ParamSet with_values(const std::vector<Tensor>& vals) const {
        if (vals.size() != values.size()) throw CheckpointError("parameter count mismatch");
        ParamSet p;
        p.names = names;
        for (size_t i = 0; i < vals.size(); ++i) {
            if (vals[i].shape() != values[i].shape())
                throw CheckpointError("parameter shape mismatch at " + names[i]);
            p.values.push_back(vals[i].detached());
        }
        return p;
    }

    std::vector<double> flat() const {
        std::vector<double> out;
        out.reserve(scalar_count());
        for (const auto& v : values) out.insert(out.end(), v.data().begin(), v.data().end());
        return out;
    }

    ParamSet from_flat(const std::vector<double>& flat_data) const {
        if (static_cast<int64_t>(flat_data.size()) != scalar_count())
            throw CheckpointError("flat length mismatch");
        ParamSet p;
        p.names = names;
        size_t off = 0;
        for (const auto& v : values) {
            std::vector<double> chunk(flat_data.begin() + off, flat_data.begin() + off + v.size());
            p.values.emplace_back(v.shape(), std::move(chunk));
            off += v.size();
        }
        return p;
    }
};

// x + a*g over matching param lists, as plain data.
inline ParamSet axpy(const ParamSet& x, double a, const std::vector<Tensor>& g) {
    std::vector<Tensor> out;
    out.reserve(x.values.size());
    for (size_t i = 0; i < x.values.size(); ++i) {
        std::vector<double> d = x.values[i].data();
        const auto& gd = g[i].data();
        for (size_t j = 0; j < d.size(); ++j) d[j] += a * gd[j];
        out.emplace_back(x.values[i].shape(), std::move(d));
    }
    return x.with_values(out);
}

inline double l2_norm(const std::vector<Tensor>& ts) {
    double s = 0.0;
    for (const auto& t : ts)
        for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

namespace detail {
template <class T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}
template <class T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw CheckpointError("truncated checkpoint");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ParamSet& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("cannot open " + path + " for writing");
    os.write("L2TD", 4);
    detail::write_le<uint32_t>(os, kCheckpointVersion);
    detail::write_le<uint32_t>(os, static_cast<uint32_t>(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        const auto& name = params.names[i];
        const auto& t = params.values[i];
        detail::write_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_le<uint32_t>(os, static_cast<uint32_t>(t.shape().size()));
        for (int64_t d : t.shape()) detail::write_le<uint64_t>(os, static_cast<uint64_t>(d));
        for (double v : t.data()) detail::write_le<double>(os, v);
    }
    if (!os) throw CheckpointError("write failure on " + path);
}

inline ParamSet load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "L2TD", 4) != 0)
        throw CheckpointError("bad checkpoint magic in " + path);
    uint32_t version = detail::read_le<uint32_t>(is);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    uint32_t count = detail::read_le<uint32_t>(is);
    ParamSet p;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t nlen = detail::read_le<uint32_t>(is);
        std::string name(nlen, '\0');
        is.read(name.data(), nlen);
        uint32_t rank = detail::read_le<uint32_t>(is);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d)
            shape[d] = static_cast<int64_t>(detail::read_le<uint64_t>(is));
        std::vector<double> data(numel(shape));
        for (auto& v : data) v = detail::read_le<double>(is);
        p.add(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return p;
}

}  // namespace l2t
