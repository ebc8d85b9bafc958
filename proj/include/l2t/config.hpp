#pragma once

// Flat `key = value` experiment configuration: parseable from file,
// overridable by flags, unknown keys rejected.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2t/data.hpp"
#include "l2t/engine.hpp"

namespace l2t {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    StageConfig stage;
    std::string dataset = "digits";  // digits | moons | blobs | mnist
    int64_t dataset_n = 600;
    int64_t test_n = 200;
    double noise = 0.08;
    std::string mnist_images, mnist_labels, mnist_test_images, mnist_test_labels;
    std::vector<int64_t> mnist_classes{0, 1};
    int64_t max_n = -1;
    std::vector<int64_t> student_hidden{32, 32};
    std::vector<int64_t> dln_hidden{40, 40, 40, 40};
    std::vector<int64_t> teacher_hidden{64, 64, 64, 1};
    bool teacher_preprocess = true;
    std::string optimizer = "lstm";  // lstm | sgd | adam | rmsprop | ce
    bool warm_start = true;
    int64_t warm_start_steps = 400;
    std::string out;
};

namespace detail {

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline int64_t to_i64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int64_t x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    }
}

inline uint64_t to_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

inline double to_f64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (...) {
        throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    }
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
}

inline std::vector<int64_t> to_i64_list(const std::string& key, const std::string& v) {
    std::vector<int64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(to_i64(key, item));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

}  // namespace detail

inline void apply_config_key(ExperimentConfig& c, const std::string& key,
                             const std::string& value) {
    using namespace detail;
    if (key == "N") c.stage.N = to_i64(key, value);
    else if (key == "K") c.stage.K = to_i64(key, value);
    else if (key == "eta") c.stage.eta = to_f64(key, value);
    else if (key == "gamma") c.stage.gamma = to_f64(key, value);
    else if (key == "adam_lr") c.stage.adam_lr = to_f64(key, value);
    else if (key == "w") c.stage.w = to_f64(key, value);
    else if (key == "val_ratio") c.stage.val_ratio = to_f64(key, value);
    else if (key == "train_batch") c.stage.train_batch = to_i64(key, value);
    else if (key == "val_batch") c.stage.val_batch = to_i64(key, value);
    else if (key == "epochs") c.stage.epochs = to_i64(key, value);
    else if (key == "seed") c.stage.seed = to_u64(key, value);
    else if (key == "fail_fast") c.stage.fail_fast = to_bool(key, value);
    else if (key == "dataset") c.dataset = value;
    else if (key == "dataset_n") c.dataset_n = to_i64(key, value);
    else if (key == "test_n") c.test_n = to_i64(key, value);
    else if (key == "noise") c.noise = to_f64(key, value);
    else if (key == "mnist_images") c.mnist_images = value;
    else if (key == "mnist_labels") c.mnist_labels = value;
    else if (key == "mnist_test_images") c.mnist_test_images = value;
    else if (key == "mnist_test_labels") c.mnist_test_labels = value;
    else if (key == "mnist_classes") c.mnist_classes = to_i64_list(key, value);
    else if (key == "max_n") c.max_n = to_i64(key, value);
    else if (key == "student_hidden") c.student_hidden = to_i64_list(key, value);
    else if (key == "dln_hidden") c.dln_hidden = to_i64_list(key, value);
    else if (key == "teacher_hidden") c.teacher_hidden = to_i64_list(key, value);
    else if (key == "teacher_preprocess") c.teacher_preprocess = to_bool(key, value);
    else if (key == "optimizer") c.optimizer = value;
    else if (key == "warm_start") c.warm_start = to_bool(key, value);
    else if (key == "warm_start_steps") c.warm_start_steps = to_i64(key, value);
    else if (key == "out") c.out = value;
    else throw ConfigError("unknown config key '" + key + "'");
}

inline ExperimentConfig parse_config_text(std::istream& is,
                                          ExperimentConfig base = ExperimentConfig{}) {
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        apply_config_key(base, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
    }
    return base;
}

inline ExperimentConfig load_config(const std::string& path,
                                    ExperimentConfig base = ExperimentConfig{}) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path);
    return parse_config_text(is, std::move(base));
}

inline void validate_config(const ExperimentConfig& c) {
    try {
        c.stage.validate();
    } catch (const EngineError& e) {
        throw ConfigError(e.what());
    }
    if (c.dataset != "digits" && c.dataset != "moons" && c.dataset != "blobs" &&
        c.dataset != "mnist")
        throw ConfigError("config key 'dataset': unknown dataset '" + c.dataset + "'");
    if (c.dataset == "mnist" && (c.mnist_images.empty() || c.mnist_labels.empty()))
        throw ConfigError("config keys 'mnist_images'/'mnist_labels' are required for dataset = mnist");
    if (c.dataset != "mnist" && c.dataset_n < 4)
        throw ConfigError("config key 'dataset_n': need at least 4 examples");
    run_mode_from_string(c.optimizer);  // throws EngineError on bad value
}

// Stable echo of the full configuration, used by manifests and determinism
// checks: sorted keys, fixed formatting.
inline std::string config_echo(const ExperimentConfig& c) {
    std::map<std::string, std::string> kv;
    auto num = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    auto list = [](const std::vector<int64_t>& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    kv["N"] = std::to_string(c.stage.N);
    kv["K"] = std::to_string(c.stage.K);
    kv["eta"] = num(c.stage.eta);
    kv["gamma"] = num(c.stage.gamma);
    kv["adam_lr"] = num(c.stage.adam_lr);
    kv["w"] = num(c.stage.w);
    kv["val_ratio"] = num(c.stage.val_ratio);
    kv["train_batch"] = std::to_string(c.stage.train_batch);
    kv["val_batch"] = std::to_string(c.stage.val_batch);
    kv["epochs"] = std::to_string(c.stage.epochs);
    kv["seed"] = std::to_string(c.stage.seed);
    kv["fail_fast"] = c.stage.fail_fast ? "true" : "false";
    kv["dataset"] = c.dataset;
    kv["dataset_n"] = std::to_string(c.dataset_n);
    kv["test_n"] = std::to_string(c.test_n);
    kv["noise"] = num(c.noise);
    kv["mnist_images"] = c.mnist_images;
    kv["mnist_labels"] = c.mnist_labels;
    kv["mnist_test_images"] = c.mnist_test_images;
    kv["mnist_test_labels"] = c.mnist_test_labels;
    kv["mnist_classes"] = list(c.mnist_classes);
    kv["max_n"] = std::to_string(c.max_n);
    kv["student_hidden"] = list(c.student_hidden);
    kv["dln_hidden"] = list(c.dln_hidden);
    kv["teacher_hidden"] = list(c.teacher_hidden);
    kv["teacher_preprocess"] = c.teacher_preprocess ? "true" : "false";
    kv["optimizer"] = c.optimizer;
    kv["warm_start"] = c.warm_start ? "true" : "false";
    kv["warm_start_steps"] = std::to_string(c.warm_start_steps);
    kv["out"] = c.out;
    std::string s;
    for (const auto& [k, v] : kv) s += k + " = " + v + "\n";
    return s;
}

// Datasets selected by the config; everything flows from the run seed.
inline std::pair<Dataset, Dataset> make_experiment_data(const ExperimentConfig& c) {
    if (c.dataset == "mnist") {
        Dataset train = load_mnist_idx(c.mnist_images, c.mnist_labels, c.mnist_classes, c.max_n);
        Dataset test = (c.mnist_test_images.empty() || c.mnist_test_labels.empty())
                           ? train
                           : load_mnist_idx(c.mnist_test_images, c.mnist_test_labels,
                                            c.mnist_classes, c.max_n);
        return {train, test};
    }
    if (c.dataset == "digits")
        return {make_digit_images(c.dataset_n, c.stage.seed, c.noise),
                make_digit_images(c.test_n, c.stage.seed ^ 0x7e57ULL, c.noise)};
    SyntheticKind k = synthetic_kind_from_string(c.dataset);
    return {make_synthetic(k, c.dataset_n, c.noise, c.stage.seed),
            make_synthetic(k, c.test_n, c.noise, c.stage.seed ^ 0x7e57ULL)};
}

inline RunSpec make_run_spec(const ExperimentConfig& c, int64_t input_dim, int64_t classes) {
    RunSpec spec;
    spec.student = MlpSpec{input_dim, c.student_hidden, classes};
    spec.dln = MlpSpec{2, c.dln_hidden, 1};
    spec.teacher.hidden = c.teacher_hidden;
    spec.teacher.preprocess = c.teacher_preprocess;
    spec.mode = run_mode_from_string(c.optimizer);
    spec.warm_start_dln = c.warm_start;
    spec.warm_start_steps = c.warm_start_steps;
    return spec;
}

}  // namespace l2t
