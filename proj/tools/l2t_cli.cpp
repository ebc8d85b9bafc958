// Command-line front end: train / ablate / surface / gradcheck / saddle,
// plus a datagen helper that materializes the IDX-format digit corpus.
// Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "l2t/harness.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "path to key = value config file");
    cmd->add_option("--out", o.out, "output directory");
    cmd->add_option("--seed", o.seed, "run seed (overrides config)")
        ->each([&o](const std::string&) { o.seed_set = true; });
}

l2t::ExperimentConfig load(const CommonOpts& o) {
    l2t::ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = l2t::load_config(o.config_path);
    if (o.seed_set) cfg.stage.seed = o.seed;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bilevel student/DLN/teacher training and analysis"};
    app.require_subcommand(1);

    CommonOpts train_o, ablate_o, surface_o, gradcheck_o, saddle_o, datagen_o;

    CLI::App* train = app.add_subcommand("train", "run the full teaching loop");
    add_common(train, train_o);

    CLI::App* ablate = app.add_subcommand("ablate", "sweep one ablation axis");
    add_common(ablate, ablate_o);
    std::string axis = "length", values_csv = "1,5,10";
    int replicates = 1;
    ablate->add_option("--axis", axis, "ratio | length | optimizer");
    ablate->add_option("--values", values_csv, "comma-separated axis values");
    ablate->add_option("--replicates", replicates, "runs per value (distinct seeds)");

    CLI::App* surface = app.add_subcommand("surface", "export the DLN loss surface");
    add_common(surface, surface_o);
    std::string checkpoint;
    double smin = -3.0, smax = 3.0;
    int64_t res = 41, epoch = 0;
    surface->add_option("--checkpoint", checkpoint, "DLN checkpoint path")->required();
    surface->add_option("--min", smin, "axis minimum");
    surface->add_option("--max", smax, "axis maximum");
    surface->add_option("--res", res, "grid resolution per axis");
    surface->add_option("--epoch", epoch, "epoch tag recorded in the JSON");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference oracles");
    add_common(gradcheck, gradcheck_o);
    std::string corrupt;
    gradcheck->add_option("--corrupt", corrupt,
                          "negative-control hook: corrupt the named quantity (hvp|rmd|teacher)");

    CLI::App* saddle = app.add_subcommand("saddle", "Conclusion-1 sweep over random saddles");
    add_common(saddle, saddle_o);
    int instances = 100, controls = 5;
    saddle->add_option("--instances", instances, "number of random strict-saddle instances");
    saddle->add_option("--controls", controls, "positive-definite control instances");

    CLI::App* datagen = app.add_subcommand("datagen", "write the digit corpus as IDX files");
    add_common(datagen, datagen_o);
    int64_t gen_n = 600, gen_test_n = 200;
    datagen->add_option("--n", gen_n, "training examples");
    datagen->add_option("--test-n", gen_test_n, "test examples");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            l2t::ExperimentConfig cfg = load(train_o);
            std::string dir = l2t::resolve_out_dir(train_o.out, cfg.out);
            l2t::TrainOutcome r = l2t::cmd_train(cfg, dir);
            std::cout << "wrote " << (r.dir / "run.csv").string() << "; final test accuracy "
                      << r.run.final_test_acc << "\n";
        } else if (*ablate) {
            l2t::ExperimentConfig cfg = load(ablate_o);
            l2t::validate_config(cfg);
            std::vector<std::string> values;
            std::stringstream ss(values_csv);
            std::string item;
            while (std::getline(ss, item, ',')) values.push_back(item);
            auto rows = l2t::cmd_ablate(cfg, axis, values, replicates);
            std::filesystem::path dir(l2t::resolve_out_dir(ablate_o.out, cfg.out));
            std::filesystem::create_directories(dir);
            {
                std::ofstream os(dir / "summary.csv", std::ios::binary);
                l2t::write_ablate_csv(rows, os, /*include_time=*/false);
            }
            {
                std::ofstream os(dir / "timing.csv", std::ios::binary);
                l2t::write_ablate_csv(rows, os, /*include_time=*/true);
            }
            int failures = 0;
            for (const auto& r : rows)
                if (r.status != "ok") ++failures;
            std::cout << "wrote " << (dir / "summary.csv").string() << " (" << rows.size()
                      << " runs, " << failures << " failed)\n";
        } else if (*surface) {
            l2t::ExperimentConfig cfg = load(surface_o);
            l2t::MlpSpec dln{2, cfg.dln_hidden, 1};
            l2t::SurfaceGrid g = l2t::cmd_surface(checkpoint, dln, smin, smax, res, epoch);
            std::filesystem::path dir(l2t::resolve_out_dir(surface_o.out, cfg.out));
            std::filesystem::create_directories(dir);
            std::filesystem::path path =
                dir / ("surface_epoch_" + std::to_string(epoch) + ".json");
            std::ofstream os(path, std::ios::binary);
            os << l2t::surface_json(g);
            std::cout << "wrote " << path.string() << "; monotone row fraction "
                      << l2t::surface_monotone_row_fraction(g) << "\n";
        } else if (*gradcheck) {
            l2t::ExperimentConfig cfg = load(gradcheck_o);
            l2t::GradcheckReport r = l2t::cmd_gradcheck(cfg.stage.seed + 17, corrupt);
            std::cout << l2t::gradcheck_text(r);
            if (!r.all_pass()) return 1;
        } else if (*saddle) {
            l2t::ExperimentConfig cfg = load(saddle_o);
            l2t::SaddleCmdResult r = l2t::cmd_saddle(instances, cfg.stage.seed, controls);
            std::filesystem::path dir(l2t::resolve_out_dir(saddle_o.out, cfg.out));
            std::filesystem::create_directories(dir);
            std::ofstream os(dir / "sweep.csv", std::ios::binary);
            l2t::write_sweep_csv(r.sweep, os);
            std::cout << r.summary;
        } else if (*datagen) {
            l2t::ExperimentConfig cfg = load(datagen_o);
            std::filesystem::path dir(l2t::resolve_out_dir(datagen_o.out, cfg.out));
            std::filesystem::create_directories(dir);
            l2t::Dataset trainset = l2t::make_digit_images(gen_n, cfg.stage.seed);
            l2t::Dataset testset = l2t::make_digit_images(gen_test_n, cfg.stage.seed ^ 0x7e57ULL);
            l2t::save_idx(trainset, 28, 28, (dir / "train-images-idx3-ubyte").string(),
                          (dir / "train-labels-idx1-ubyte").string());
            l2t::save_idx(testset, 28, 28, (dir / "t10k-images-idx3-ubyte").string(),
                          (dir / "t10k-labels-idx1-ubyte").string());
            std::cout << "wrote IDX files under " << dir.string() << "\n";
        }
    } catch (const l2t::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
