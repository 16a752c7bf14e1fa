// thermogyro: rotational odometry from ultra-low-resolution thermal frames
// fused with gyroscope readings. Subcommands cover synthetic dataset
// generation, training, cross-validated evaluation sweeps, complexity
// reports, drift traces and fusion-gain histograms.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "thermogyro/csv.hpp"
#include "thermogyro/dataset.hpp"
#include "thermogyro/errors.hpp"
#include "thermogyro/eval.hpp"
#include "thermogyro/model.hpp"
#include "thermogyro/simulator.hpp"
#include "thermogyro/trainer.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CommonFlags {
    std::string data;
    std::string out;
    std::uint64_t seed = 0;
    int nf = 3;
    int nr = 1;
    std::string variant = "fusion";
};

struct TrainFlags {
    double lr = 1e-3;
    int batch = 32;
    int epochs = 40;
    std::string loss = "berhu";
    bool no_shuffle = false;
    bool train_held_env_only = false;
};

struct SimFlags {
    std::string envs = "garden:6";
    int segments = 20;
    double segment_s = 4.0;
    int blobs = 8;
    double ambient = 20.0;
    double pixel_noise = 0.3;
    double gyro_noise = 0.0;
    double gyro_bias = 0.0;
    double fps = 8.0;
    double h_fov = 55.0;
    double v_fov = 35.0;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_model_shape = true) {
    cmd->fallthrough();
    cmd->add_option("--out", f.out, "Output directory")->required();
    cmd->add_option("--seed", f.seed, "Random seed");
    if (with_model_shape) {
        cmd->add_option("--nf", f.nf, "Consecutive input frames (channels)")
            ->check(CLI::Range(1, 32));
        cmd->add_option("--nr", f.nr, "Resolution subsampling factor")->check(CLI::Range(1, 3));
        cmd->add_option("--variant", f.variant, "Model variant")
            ->check(CLI::IsMember({"fusion", "thermal_only"}));
    }
}

void add_train(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--lr", f.lr, "Learning rate");
    cmd->add_option("--batch", f.batch, "Batch size")->check(CLI::PositiveNumber);
    cmd->add_option("--epochs", f.epochs, "Training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--loss", f.loss, "Training loss")->check(CLI::IsMember({"berhu", "mse"}));
    cmd->add_flag("--no-shuffle", f.no_shuffle, "Keep sample order fixed across epochs");
    cmd->add_flag("--train-held-env-only", f.train_held_env_only,
                  "Train folds only on the held-out environment's remaining acquisitions");
}

tg::TrainConfig make_train_config(const CommonFlags& c, const TrainFlags& t) {
    tg::TrainConfig cfg;
    cfg.lr = t.lr;
    cfg.batch = t.batch;
    cfg.epochs = t.epochs;
    cfg.seed = c.seed;
    cfg.shuffle = !t.no_shuffle;
    cfg.loss = t.loss == "mse" ? tg::LossKind::mse : tg::LossKind::berhu;
    return cfg;
}

// Every run leaves a flag echo next to its outputs so results stay
// attributable; content depends only on the flags, never on clock time.
void write_config_echo(const std::string& out_dir, const std::string& subcommand,
                       const nlohmann::ordered_json& flags) {
    nlohmann::ordered_json j;
    j["subcommand"] = subcommand;
    j["flags"] = flags;
    std::ofstream f(fs::path(out_dir) / "run_config.json", std::ios::binary);
    if (!f) throw tg::DataError("cannot write run_config.json in " + out_dir);
    f << j.dump(2) << '\n';
}

std::vector<int> parse_int_list(const std::string& csv, const char* what) {
    std::vector<int> out;
    std::string token;
    for (std::size_t i = 0; i <= csv.size(); ++i) {
        if (i == csv.size() || csv[i] == ',') {
            if (token.empty()) throw CLI::ValidationError(what, "empty element in list '" + csv + "'");
            out.push_back(std::stoi(token));
            token.clear();
        } else {
            token += csv[i];
        }
    }
    if (out.empty()) throw CLI::ValidationError(what, "empty list");
    return out;
}

std::vector<tg::SimEnvConfig> parse_envs(const std::string& spec, int blobs) {
    std::vector<tg::SimEnvConfig> envs;
    for (const auto& part : tg::split_line(spec, ',')) {
        const auto colon = part.find(':');
        tg::SimEnvConfig e;
        e.blobs = blobs;
        if (colon == std::string_view::npos) {
            e.name = std::string(part);
        } else {
            e.name = std::string(part.substr(0, colon));
            e.acquisitions = std::stoi(std::string(part.substr(colon + 1)));
        }
        if (e.name.empty() || e.acquisitions < 1)
            throw CLI::ValidationError("--envs", "bad environment spec '" + std::string(part) + "'");
        envs.push_back(std::move(e));
    }
    return envs;
}

std::string default_held_env(const tg::DatasetRoot& root, const std::string& requested) {
    if (!requested.empty()) return requested;
    if (root.acquisitions.empty()) throw tg::DataError("dataset has no acquisitions");
    return root.acquisitions.front().environment;
}

int run(int argc, char** argv) {
    CLI::App app{"Thermal-gyro fusion rotational odometry"};
    app.require_subcommand(1);
    // Plain key=value config file; flags given on the command line win.
    // Keys live in a [subcommand] section (or use dotted subcommand.key).
    app.set_config("--config", "", "Read defaults from a key=value config file");

    CommonFlags common;
    TrainFlags trainf;
    SimFlags simf;
    std::string held_env;
    std::string model_path;
    std::string nf_list = "2,3,4,5,6";
    std::string nr_list = "1,2,3";
    int acq_index = 0;
    int hist_bins = 20;

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
    add_common(sim, common, false);
    sim->add_option("--envs", simf.envs, "Environments as name:count[,name:count...]");
    sim->add_option("--segments", simf.segments, "Constant-speed segments per acquisition")
        ->check(CLI::PositiveNumber);
    sim->add_option("--segment-seconds", simf.segment_s, "Seconds per segment")
        ->check(CLI::PositiveNumber);
    sim->add_option("--blobs", simf.blobs, "Warm blobs per scene (clutter)")
        ->check(CLI::NonNegativeNumber);
    sim->add_option("--ambient", simf.ambient, "Ambient temperature, C");
    sim->add_option("--pixel-noise", simf.pixel_noise, "Per-pixel noise std, C")
        ->check(CLI::NonNegativeNumber);
    sim->add_option("--gyro-noise", simf.gyro_noise, "Gyro white noise std, deg/s")
        ->check(CLI::NonNegativeNumber);
    sim->add_option("--gyro-bias", simf.gyro_bias, "Constant gyro bias, deg/s");
    sim->add_option("--fps", simf.fps, "Frame rate")->check(CLI::PositiveNumber);
    sim->add_option("--h-fov", simf.h_fov, "Horizontal field of view, deg")
        ->check(CLI::PositiveNumber);
    sim->add_option("--v-fov", simf.v_fov, "Vertical field of view, deg")->check(CLI::PositiveNumber);

    auto* train_cmd = app.add_subcommand("train", "Train one model on a dataset");
    add_common(train_cmd, common);
    add_train(train_cmd, trainf);
    train_cmd->add_option("--data", common.data, "Dataset root (manifest.json)")->required();
    train_cmd->add_option("--exclude", held_env, "Environment to leave out of training");
    std::string init_model;
    train_cmd->add_option("--init-model", init_model,
                          "Warm-start from a weight file (a thermal_only file may seed a fusion "
                          "model's backbone and thermal head)");

    auto* kfold_cmd = app.add_subcommand("kfold", "Hold-one-acquisition-out cross validation");
    add_common(kfold_cmd, common);
    add_train(kfold_cmd, trainf);
    kfold_cmd->add_option("--data", common.data, "Dataset root")->required();
    kfold_cmd->add_option("--held-env", held_env, "Environment whose acquisitions rotate as test sets");

    auto* sweep_nf_cmd = app.add_subcommand("sweep-nf", "Frame-count sweep, both variants");
    add_common(sweep_nf_cmd, common, false);
    add_train(sweep_nf_cmd, trainf);
    sweep_nf_cmd->add_option("--data", common.data, "Dataset root")->required();
    sweep_nf_cmd->add_option("--held-env", held_env, "Held-out environment");
    sweep_nf_cmd->add_option("--nf-list", nf_list, "Frame counts to sweep");

    auto* sweep_nr_cmd = app.add_subcommand("sweep-nr", "Resolution sweep, both variants");
    add_common(sweep_nr_cmd, common, false);
    add_train(sweep_nr_cmd, trainf);
    sweep_nr_cmd->add_option("--data", common.data, "Dataset root")->required();
    sweep_nr_cmd->add_option("--held-env", held_env, "Held-out environment");
    sweep_nr_cmd->add_option("--nr-list", nr_list, "Subsampling factors to sweep");
    sweep_nr_cmd->add_option("--nf", common.nf, "Frame count used for the sweep")
        ->check(CLI::Range(1, 32));

    auto* complexity_cmd = app.add_subcommand("complexity", "Parameter and FLOP counts");
    add_common(complexity_cmd, common, false);
    complexity_cmd->add_option("--nf-list", nf_list, "Frame counts");
    complexity_cmd->add_option("--nr-list", nr_list, "Subsampling factors");
    complexity_cmd->add_option("--variant", common.variant, "Model variant")
        ->check(CLI::IsMember({"fusion", "thermal_only"}));

    auto* drift_cmd = app.add_subcommand("drift", "Integrated-angle comparison on one acquisition");
    add_common(drift_cmd, common, false);
    drift_cmd->add_option("--model", model_path, "Weight file")->required();
    drift_cmd->add_option("--data", common.data, "Dataset root")->required();
    drift_cmd->add_option("--acq-index", acq_index, "Acquisition index within the dataset")
        ->check(CLI::NonNegativeNumber);

    auto* hist_cmd = app.add_subcommand("kg-hist", "Fusion gain histogram over a dataset");
    add_common(hist_cmd, common, false);
    hist_cmd->add_option("--model", model_path, "Weight file")->required();
    hist_cmd->add_option("--data", common.data, "Dataset root")->required();
    hist_cmd->add_option("--bins", hist_bins, "Histogram bins")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help exits 0; anything else is a usage error.
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    fs::create_directories(common.out);

    if (sim->parsed()) {
        tg::SimConfig cfg;
        cfg.envs = parse_envs(simf.envs, simf.blobs);
        cfg.segments = simf.segments;
        cfg.segment_s = simf.segment_s;
        cfg.ambient_c = simf.ambient;
        cfg.camera.pixel_noise_c = simf.pixel_noise;
        cfg.camera.fps = simf.fps;
        cfg.camera.h_fov_deg = simf.h_fov;
        cfg.camera.v_fov_deg = simf.v_fov;
        cfg.gyro.bias_deg_s = simf.gyro_bias;
        cfg.gyro.noise_deg_s = simf.gyro_noise;
        cfg.seed = common.seed;
        const tg::DatasetRoot root = tg::generate_dataset(cfg, common.out);
        write_config_echo(common.out, "simulate",
                          {{"envs", simf.envs},
                           {"segments", simf.segments},
                           {"segment_seconds", simf.segment_s},
                           {"blobs", simf.blobs},
                           {"ambient", simf.ambient},
                           {"pixel_noise", simf.pixel_noise},
                           {"gyro_noise", simf.gyro_noise},
                           {"gyro_bias", simf.gyro_bias},
                           {"fps", simf.fps},
                           {"h_fov", simf.h_fov},
                           {"v_fov", simf.v_fov},
                           {"seed", common.seed},
                           {"out", common.out}});
        for (const auto& acq : root.acquisitions)
            std::printf("%s: %zu frames\n", acq.name.c_str(), acq.records.size());
        return 0;
    }

    if (train_cmd->parsed()) {
        const tg::DatasetRoot root = tg::load_dataset(common.data);
        std::vector<int> train_idx;
        for (int i = 0; i < static_cast<int>(root.acquisitions.size()); ++i) {
            if (held_env.empty() || root.acquisitions[static_cast<std::size_t>(i)].environment != held_env)
                train_idx.push_back(i);
        }
        const auto samples = tg::make_windows(root, common.nf, common.nr, {}, train_idx);
        if (samples.empty()) throw tg::DataError("no training windows (check --nf vs segment lengths)");

        tg::FusionModel model = tg::build_model(
            tg::ModelConfig::make(common.nf, common.nr, tg::variant_from_name(common.variant)),
            common.seed);
        if (!init_model.empty()) {
            const tg::FusionModel warm = tg::load_model(init_model);
            if (warm.config.n_frames != model.config.n_frames ||
                warm.config.subsample != model.config.subsample)
                throw tg::DataError("--init-model shape does not match --nf/--nr");
            if (warm.params.size() > model.params.size())
                throw tg::DataError("--init-model: cannot seed a thermal_only model from a fusion file");
            // thermal_only parameters are exactly the fusion prefix
            std::copy(warm.params.begin(), warm.params.end(), model.params.begin());
        }
        const tg::TrainResult res = tg::train(model, samples, make_train_config(common, trainf));

        tg::save_model(model, (fs::path(common.out) / "model.bin").string());
        tg::write_history_csv(res.epoch_loss, (fs::path(common.out) / "history.csv").string());
        write_config_echo(common.out, "train",
                          {{"data", common.data},
                           {"exclude", held_env},
                           {"init_model", init_model},
                           {"nf", common.nf},
                           {"nr", common.nr},
                           {"variant", common.variant},
                           {"lr", trainf.lr},
                           {"batch", trainf.batch},
                           {"epochs", trainf.epochs},
                           {"loss", trainf.loss},
                           {"shuffle", !trainf.no_shuffle},
                           {"seed", common.seed},
                           {"out", common.out}});
        std::printf("trained on %zu windows; final loss %.6g\n", samples.size(),
                    res.epoch_loss.back());
        return 0;
    }

    if (kfold_cmd->parsed()) {
        const tg::DatasetRoot root = tg::load_dataset(common.data);
        const std::string env = default_held_env(root, held_env);
        const tg::FoldReport report =
            tg::kfold(root, env, make_train_config(common, trainf), common.nf, common.nr,
                      tg::variant_from_name(common.variant), !trainf.train_held_env_only);
        tg::write_fold_report_json({report}, (fs::path(common.out) / "report.json").string());
        tg::write_fold_values_csv({report}, (fs::path(common.out) / "folds.csv").string());
        write_config_echo(common.out, "kfold",
                          {{"data", common.data},
                           {"held_env", env},
                           {"nf", common.nf},
                           {"nr", common.nr},
                           {"variant", common.variant},
                           {"lr", trainf.lr},
                           {"batch", trainf.batch},
                           {"epochs", trainf.epochs},
                           {"loss", trainf.loss},
                           {"shuffle", !trainf.no_shuffle},
                           {"train_all_envs", !trainf.train_held_env_only},
                           {"seed", common.seed},
                           {"out", common.out}});
        std::printf("%zu folds on %s: median MSE %.6g, IQR %.6g\n", report.fold_mse.size(),
                    env.c_str(), report.median, report.iqr);
        return 0;
    }

    if (sweep_nf_cmd->parsed() || sweep_nr_cmd->parsed()) {
        const bool is_nf = sweep_nf_cmd->parsed();
        const tg::DatasetRoot root = tg::load_dataset(common.data);
        const std::string env = default_held_env(root, held_env);
        const tg::TrainConfig cfg = make_train_config(common, trainf);
        std::vector<tg::FoldReport> reports;
        if (is_nf) {
            reports = tg::sweep_n_frames(root, env, cfg, parse_int_list(nf_list, "--nf-list"),
                                         !trainf.train_held_env_only);
        } else {
            reports = tg::sweep_subsample(root, env, cfg, parse_int_list(nr_list, "--nr-list"),
                                          common.nf, !trainf.train_held_env_only);
        }
        tg::write_fold_report_json(reports, (fs::path(common.out) / "report.json").string(), true);
        tg::write_fold_values_csv(reports, (fs::path(common.out) / "boxplot.csv").string());
        if (!is_nf) {
            std::vector<std::pair<int, int>> grid;
            for (int nr : parse_int_list(nr_list, "--nr-list")) grid.emplace_back(common.nf, nr);
            tg::write_complexity_csv(grid, tg::Variant::fusion,
                                     (fs::path(common.out) / "complexity.csv").string());
        }
        write_config_echo(common.out, is_nf ? "sweep-nf" : "sweep-nr",
                          {{"data", common.data},
                           {"held_env", env},
                           {"nf", is_nf ? nf_list : std::to_string(common.nf)},
                           {"nr", is_nf ? "1" : nr_list},
                           {"lr", trainf.lr},
                           {"batch", trainf.batch},
                           {"epochs", trainf.epochs},
                           {"loss", trainf.loss},
                           {"seed", common.seed},
                           {"out", common.out}});
        for (const auto& r : reports)
            std::printf("nf=%d nr=%d %s: median MSE %.6g, IQR %.6g\n", r.n_frames, r.subsample,
                        tg::variant_name(r.variant).c_str(), r.median, r.iqr);
        return 0;
    }

    if (complexity_cmd->parsed()) {
        std::vector<std::pair<int, int>> grid;
        for (int nf : parse_int_list(nf_list, "--nf-list"))
            for (int nr : parse_int_list(nr_list, "--nr-list")) grid.emplace_back(nf, nr);
        tg::write_complexity_csv(grid, tg::variant_from_name(common.variant),
                                 (fs::path(common.out) / "complexity.csv").string());
        write_config_echo(common.out, "complexity",
                          {{"nf_list", nf_list},
                           {"nr_list", nr_list},
                           {"variant", common.variant},
                           {"out", common.out}});
        for (const auto& [nf, nr] : grid) {
            const auto c = tg::count_complexity(
                tg::ModelConfig::make(nf, nr, tg::variant_from_name(common.variant)));
            std::printf("nf=%d nr=%d: %zu params, %zu FLOPs\n", nf, nr, c.total_params, c.total_flops);
        }
        return 0;
    }

    if (drift_cmd->parsed()) {
        const tg::FusionModel model = tg::load_model(model_path);
        const tg::DatasetRoot root = tg::load_dataset(common.data);
        if (acq_index >= static_cast<int>(root.acquisitions.size()))
            throw tg::DataError("acquisition index " + std::to_string(acq_index) +
                                " out of range (dataset has " +
                                std::to_string(root.acquisitions.size()) + ")");
        const tg::AngleTrace trace =
            tg::drift_trace(model, root.acquisitions[static_cast<std::size_t>(acq_index)]);
        tg::write_angle_trace_csv(trace, (fs::path(common.out) / "trace.csv").string());
        write_config_echo(common.out, "drift",
                          {{"model", model_path},
                           {"data", common.data},
                           {"acq_index", acq_index},
                           {"out", common.out}});
        std::printf("terminal angle error: gyro %.2f deg, fusion %.2f deg\n",
                    trace.gyro_deg.back() - trace.truth_deg.back(),
                    trace.fusion_deg.back() - trace.truth_deg.back());
        return 0;
    }

    if (hist_cmd->parsed()) {
        const tg::FusionModel model = tg::load_model(model_path);
        const tg::DatasetRoot root = tg::load_dataset(common.data);
        const auto samples = tg::make_windows(root, model.config.n_frames, model.config.subsample);
        if (samples.empty()) throw tg::DataError("dataset yields no windows for this model");
        const tg::GainHistogram hist = tg::gain_histogram(model, samples, hist_bins);
        tg::write_histogram_csv(hist, (fs::path(common.out) / "histogram.csv").string());
        write_config_echo(common.out, "kg-hist",
                          {{"model", model_path},
                           {"data", common.data},
                           {"bins", hist_bins},
                           {"out", common.out}});
        std::printf("%zu samples, mean gain %.4f\n", samples.size(), hist.mean_gain);
        return 0;
    }

    return kExitUsage;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const tg::NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    } catch (const tg::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "invalid input: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
}
