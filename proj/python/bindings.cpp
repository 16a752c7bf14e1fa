// Python bindings for the main operations: dataset simulation and loading,
// model building/training/evaluation, the cross-validation protocol, and
// the small numeric helpers worth poking at from a notebook.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "thermogyro/dataset.hpp"
#include "thermogyro/eval.hpp"
#include "thermogyro/loss.hpp"
#include "thermogyro/model.hpp"
#include "thermogyro/simulator.hpp"
#include "thermogyro/trainer.hpp"

namespace py = pybind11;

namespace {

tg::Variant parse_variant(const std::string& name) { return tg::variant_from_name(name); }

tg::TrainConfig make_train_config(double lr, int batch, int epochs, std::uint64_t seed, bool shuffle,
                                  const std::string& loss) {
    tg::TrainConfig cfg;
    cfg.lr = lr;
    cfg.batch = batch;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.shuffle = shuffle;
    cfg.loss = loss == "mse" ? tg::LossKind::mse : tg::LossKind::berhu;
    return cfg;
}

py::dict fold_report_dict(const tg::FoldReport& r) {
    py::dict d;
    d["n_frames"] = r.n_frames;
    d["subsample"] = r.subsample;
    d["variant"] = tg::variant_name(r.variant);
    d["held_out_env"] = r.held_out_env;
    d["fold_names"] = r.fold_names;
    d["fold_mse"] = r.fold_mse;
    d["fold_rmse_deg_s"] = r.fold_rmse_deg_s;
    d["median_mse"] = r.median;
    d["iqr_mse"] = r.iqr;
    return d;
}

// Stacks windows into numpy arrays: frames [n, nf, h, w], gyro [n], label [n].
py::tuple windows_as_arrays(const std::vector<tg::Sample>& samples) {
    if (samples.empty()) throw std::invalid_argument("dataset yields no windows");
    const auto& shape = samples[0].frames.shape;
    const std::size_t per = samples[0].frames.size();
    py::array_t<double> frames({static_cast<py::ssize_t>(samples.size()),
                                static_cast<py::ssize_t>(shape[0]), static_cast<py::ssize_t>(shape[1]),
                                static_cast<py::ssize_t>(shape[2])});
    py::array_t<double> gyro(static_cast<py::ssize_t>(samples.size()));
    py::array_t<double> label(static_cast<py::ssize_t>(samples.size()));
    double* fp = frames.mutable_data();
    double* gp = gyro.mutable_data();
    double* lp = label.mutable_data();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        std::copy(samples[i].frames.data.begin(), samples[i].frames.data.end(), fp + i * per);
        gp[i] = samples[i].gyro_speed;
        lp[i] = samples[i].label;
    }
    return py::make_tuple(frames, gyro, label);
}

tg::SimConfig sim_config_from_kwargs(const std::string& env, int acquisitions, int segments,
                                     double segment_s, int blobs, double ambient, double pixel_noise,
                                     double gyro_noise, double gyro_bias, double fps,
                                     std::uint64_t seed) {
    tg::SimConfig cfg;
    cfg.envs = {{env, acquisitions, blobs}};
    cfg.segments = segments;
    cfg.segment_s = segment_s;
    cfg.ambient_c = ambient;
    cfg.camera.pixel_noise_c = pixel_noise;
    cfg.camera.fps = fps;
    cfg.gyro.bias_deg_s = gyro_bias;
    cfg.gyro.noise_deg_s = gyro_noise;
    cfg.seed = seed;
    return cfg;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Thermal-gyro fusion rotational odometry core";

    m.def(
        "generate_dataset",
        [](const std::string& out_dir, const std::string& env, int acquisitions, int segments,
           double segment_s, int blobs, double ambient, double pixel_noise, double gyro_noise,
           double gyro_bias, double fps, std::uint64_t seed) {
            const tg::DatasetRoot root = tg::generate_dataset(
                sim_config_from_kwargs(env, acquisitions, segments, segment_s, blobs, ambient,
                                       pixel_noise, gyro_noise, gyro_bias, fps, seed),
                out_dir);
            std::vector<std::size_t> counts;
            for (const auto& a : root.acquisitions) counts.push_back(a.records.size());
            return counts;
        },
        py::arg("out_dir"), py::arg("env") = "garden", py::arg("acquisitions") = 6,
        py::arg("segments") = 20, py::arg("segment_seconds") = 4.0, py::arg("blobs") = 8,
        py::arg("ambient") = 20.0, py::arg("pixel_noise") = 0.3, py::arg("gyro_noise") = 0.0,
        py::arg("gyro_bias") = 0.0, py::arg("fps") = 8.0, py::arg("seed") = 0,
        "Write a synthetic dataset (manifest.json + CSVs); returns frame counts per acquisition.");

    m.def(
        "load_windows",
        [](const std::string& root_dir, int n_frames, int subsample) {
            const tg::DatasetRoot root = tg::load_dataset(root_dir);
            return windows_as_arrays(tg::make_windows(root, n_frames, subsample));
        },
        py::arg("root_dir"), py::arg("n_frames") = 3, py::arg("subsample") = 1,
        "Load a dataset root and return (frames, gyro, labels) numpy arrays of all windows.");

    m.def(
        "train",
        [](const std::string& data_dir, const std::string& model_out, int n_frames, int subsample,
           const std::string& variant, double lr, int batch, int epochs, std::uint64_t seed,
           bool shuffle, const std::string& loss, const std::string& exclude_env) {
            const tg::DatasetRoot root = tg::load_dataset(data_dir);
            std::vector<int> idx;
            for (int i = 0; i < static_cast<int>(root.acquisitions.size()); ++i) {
                if (exclude_env.empty() ||
                    root.acquisitions[static_cast<std::size_t>(i)].environment != exclude_env)
                    idx.push_back(i);
            }
            const auto samples = tg::make_windows(root, n_frames, subsample, {}, idx);
            tg::FusionModel model =
                tg::build_model(tg::ModelConfig::make(n_frames, subsample, parse_variant(variant)), seed);
            const tg::TrainResult res =
                tg::train(model, samples, make_train_config(lr, batch, epochs, seed, shuffle, loss));
            tg::save_model(model, model_out);
            return res.epoch_loss;
        },
        py::arg("data_dir"), py::arg("model_out"), py::arg("n_frames") = 3, py::arg("subsample") = 1,
        py::arg("variant") = "fusion", py::arg("lr") = 1e-3, py::arg("batch") = 32,
        py::arg("epochs") = 40, py::arg("seed") = 0, py::arg("shuffle") = true,
        py::arg("loss") = "berhu", py::arg("exclude_env") = "",
        "Train one model on a dataset root, save its weights, return the per-epoch loss history.");

    m.def(
        "evaluate",
        [](const std::string& model_path, const std::string& data_dir,
           std::optional<double> gain_override) {
            const tg::FusionModel model = tg::load_model(model_path);
            const tg::DatasetRoot root = tg::load_dataset(data_dir);
            const auto samples =
                tg::make_windows(root, model.config.n_frames, model.config.subsample);
            const tg::EvalResult r = tg::evaluate(model, samples, gain_override);
            py::dict d;
            d["mse"] = r.mse;
            d["rmse_deg_s"] = r.rmse_deg_s;
            d["samples"] = samples.size();
            return d;
        },
        py::arg("model_path"), py::arg("data_dir"), py::arg("gain_override") = std::nullopt,
        "Normalized test MSE (and RMSE in deg/s) of a saved model over a dataset root.");

    m.def(
        "predict",
        [](const std::string& model_path, const std::string& data_dir) {
            const tg::FusionModel model = tg::load_model(model_path);
            const tg::DatasetRoot root = tg::load_dataset(data_dir);
            const auto samples =
                tg::make_windows(root, model.config.n_frames, model.config.subsample);
            if (samples.empty()) throw std::invalid_argument("dataset yields no windows");
            py::array_t<double> fused(static_cast<py::ssize_t>(samples.size()));
            py::array_t<double> thermal(static_cast<py::ssize_t>(samples.size()));
            py::array_t<double> gain(static_cast<py::ssize_t>(samples.size()));
            py::array_t<double> labels(static_cast<py::ssize_t>(samples.size()));
            for (std::size_t i = 0; i < samples.size(); ++i) {
                const tg::ForwardTrace t = tg::forward(model, samples[i].frames);
                thermal.mutable_data()[i] = t.thermal_speed;
                gain.mutable_data()[i] = t.fusion_gain;
                fused.mutable_data()[i] =
                    model.config.variant == tg::Variant::fusion
                        ? tg::fuse(t.thermal_speed, t.fusion_gain, samples[i].gyro_speed)
                        : t.thermal_speed;
                labels.mutable_data()[i] = samples[i].label;
            }
            return py::make_tuple(fused, thermal, gain, labels);
        },
        py::arg("model_path"), py::arg("data_dir"),
        "Per-window predictions: (fused, thermal, gain, labels), normalized units.");

    m.def(
        "kfold",
        [](const std::string& data_dir, const std::string& held_env, int n_frames, int subsample,
           const std::string& variant, double lr, int batch, int epochs, std::uint64_t seed,
           bool train_all_envs) {
            const tg::DatasetRoot root = tg::load_dataset(data_dir);
            const tg::FoldReport r =
                tg::kfold(root, held_env, make_train_config(lr, batch, epochs, seed, true, "berhu"),
                          n_frames, subsample, parse_variant(variant), train_all_envs);
            return fold_report_dict(r);
        },
        py::arg("data_dir"), py::arg("held_env"), py::arg("n_frames") = 3, py::arg("subsample") = 1,
        py::arg("variant") = "fusion", py::arg("lr") = 1e-3, py::arg("batch") = 32,
        py::arg("epochs") = 40, py::arg("seed") = 0, py::arg("train_all_envs") = true,
        "Hold-one-acquisition-out cross validation; returns the fold report as a dict.");

    m.def(
        "count_params",
        [](int n_frames, int subsample, const std::string& variant) {
            return tg::count_params(tg::ModelConfig::make(n_frames, subsample, parse_variant(variant)));
        },
        py::arg("n_frames") = 3, py::arg("subsample") = 1, py::arg("variant") = "fusion");

    m.def(
        "count_complexity",
        [](int n_frames, int subsample, const std::string& variant) {
            const tg::ComplexityReport r =
                tg::count_complexity(tg::ModelConfig::make(n_frames, subsample, parse_variant(variant)));
            py::dict d;
            py::dict layers;
            for (const auto& l : r.layers) layers[l.name.c_str()] = py::make_tuple(l.params, 2 * l.macs);
            d["layers"] = layers;
            d["total_params"] = r.total_params;
            d["total_flops"] = r.total_flops;
            return d;
        },
        py::arg("n_frames") = 3, py::arg("subsample") = 1, py::arg("variant") = "fusion");

    m.def("fuse", &tg::fuse, py::arg("thermal_speed"), py::arg("gain"), py::arg("gyro_speed"),
          "Convex mix gain*thermal + (1-gain)*gyro.");
    m.def("berhu", &tg::berhu, py::arg("error"), py::arg("c"));
    m.def("berhu_grad", &tg::berhu_grad, py::arg("error"), py::arg("c"));
    m.def(
        "adaptive_threshold",
        [](const std::vector<double>& pred, const std::vector<double>& targ) {
            return tg::adaptive_threshold(pred, targ);
        },
        py::arg("predictions"), py::arg("targets"));
    m.def(
        "median_iqr",
        [](std::vector<double> values) {
            const tg::MedianIqr r = tg::median_iqr(std::move(values));
            return py::make_tuple(r.median, r.iqr);
        },
        py::arg("values"));
    m.def(
        "integrate_angle",
        [](const std::vector<double>& speeds, double dt) { return tg::integrate_angle(speeds, dt); },
        py::arg("speeds_deg_s"), py::arg("dt"));
    m.def(
        "gain_histogram",
        [](const std::string& model_path, const std::string& data_dir, int bins) {
            const tg::FusionModel model = tg::load_model(model_path);
            const tg::DatasetRoot root = tg::load_dataset(data_dir);
            const auto samples =
                tg::make_windows(root, model.config.n_frames, model.config.subsample);
            const tg::GainHistogram h = tg::gain_histogram(model, samples, bins);
            py::dict d;
            d["counts"] = h.counts;
            d["mean_gain"] = h.mean_gain;
            d["bins"] = h.bins;
            return d;
        },
        py::arg("model_path"), py::arg("data_dir"), py::arg("bins") = 20);

    m.attr("SPEED_SCALE_DEG_S") = tg::kSpeedScaleDegS;
    m.attr("__version__") = "0.1.0";
}
