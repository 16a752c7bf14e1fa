#include "thermogyro/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "thermogyro/csv.hpp"
#include "thermogyro/errors.hpp"

namespace tg {

namespace {

double quantile_sorted(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

nlohmann::ordered_json fold_report_to_json(const FoldReport& r) {
    nlohmann::ordered_json j;
    j["n_frames"] = r.n_frames;
    j["subsample"] = r.subsample;
    j["variant"] = variant_name(r.variant);
    j["held_out_env"] = r.held_out_env;
    j["folds"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < r.fold_mse.size(); ++i) {
        j["folds"].push_back({{"held_out", r.fold_names[i]},
                              {"mse", r.fold_mse[i]},
                              {"rmse_deg_s", r.fold_rmse_deg_s[i]}});
    }
    j["median_mse"] = r.median;
    j["iqr_mse"] = r.iqr;
    return j;
}

} // namespace

MedianIqr median_iqr(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median_iqr: empty input");
    std::sort(values.begin(), values.end());
    MedianIqr m;
    m.median = quantile_sorted(values, 0.5);
    m.iqr = quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25);
    return m;
}

FoldReport kfold(const DatasetRoot& root, const std::string& held_out_env, const TrainConfig& cfg,
                 int n_frames, int subsample, Variant variant, bool train_all_envs) {
    const std::vector<int> held = root.indices_of_environment(held_out_env);
    if (held.size() < 2)
        throw std::invalid_argument("kfold: environment '" + held_out_env +
                                    "' needs at least 2 acquisitions, has " + std::to_string(held.size()));

    FoldReport report;
    report.n_frames = n_frames;
    report.subsample = subsample;
    report.variant = variant;
    report.held_out_env = held_out_env;

    const NormalizationSpec norm;
    for (std::size_t fold = 0; fold < held.size(); ++fold) {
        const int test_idx = held[fold];
        std::vector<int> train_idx;
        for (int i = 0; i < static_cast<int>(root.acquisitions.size()); ++i) {
            if (i == test_idx) continue;
            if (!train_all_envs && root.acquisitions[i].environment != held_out_env) continue;
            train_idx.push_back(i);
        }

        const auto train_samples = make_windows(root, n_frames, subsample, norm, train_idx);
        const auto test_samples = make_windows(root, n_frames, subsample, norm, {test_idx});
        if (train_samples.empty() || test_samples.empty())
            throw std::invalid_argument("kfold: a fold has no usable windows (segments shorter than N_f?)");
        // Held-out provenance must not appear in the training pool.
        for (const Sample& s : train_samples) {
            if (s.acq_index == test_idx) throw std::runtime_error("kfold: test data leaked into training");
        }

        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = cfg.seed + fold;
        FusionModel model = build_model(ModelConfig::make(n_frames, subsample, variant), fold_cfg.seed);
        train(model, train_samples, fold_cfg);

        const EvalResult ev = evaluate(model, test_samples);
        report.fold_names.push_back(root.acquisitions[static_cast<std::size_t>(test_idx)].name);
        report.fold_mse.push_back(ev.mse);
        report.fold_rmse_deg_s.push_back(ev.rmse_deg_s);
    }

    const MedianIqr agg = median_iqr(report.fold_mse);
    report.median = agg.median;
    report.iqr = agg.iqr;
    return report;
}

std::vector<FoldReport> sweep_n_frames(const DatasetRoot& root, const std::string& held_out_env,
                                       const TrainConfig& cfg, const std::vector<int>& n_frames_list,
                                       bool train_all_envs) {
    std::vector<FoldReport> reports;
    for (int nf : n_frames_list) {
        for (Variant v : {Variant::thermal_only, Variant::fusion}) {
            reports.push_back(kfold(root, held_out_env, cfg, nf, 1, v, train_all_envs));
        }
    }
    return reports;
}

std::vector<FoldReport> sweep_subsample(const DatasetRoot& root, const std::string& held_out_env,
                                        const TrainConfig& cfg, const std::vector<int>& subsample_list,
                                        int n_frames, bool train_all_envs) {
    std::vector<FoldReport> reports;
    for (int nr : subsample_list) {
        for (Variant v : {Variant::thermal_only, Variant::fusion}) {
            reports.push_back(kfold(root, held_out_env, cfg, n_frames, nr, v, train_all_envs));
        }
    }
    return reports;
}

std::vector<double> integrate_angle(std::span<const double> speeds_deg_s, double dt) {
    std::vector<double> angle(speeds_deg_s.size() + 1, 0.0);
    double acc = 0.0;
    for (std::size_t i = 0; i < speeds_deg_s.size(); ++i) {
        acc += speeds_deg_s[i] * dt;
        angle[i + 1] = acc;
    }
    return angle;
}

AngleTrace drift_trace(const FusionModel& model, const Acquisition& acq) {
    const int nf = model.config.n_frames;
    const auto samples = make_windows(acq, nf, model.config.subsample, {}, 0);
    if (samples.empty()) throw std::invalid_argument("drift_trace: acquisition yields no windows");

    // Fused prediction of the window ending at each frame; the first
    // frames of a segment fall back on the segment's first window.
    const int n = static_cast<int>(acq.records.size());
    std::vector<double> fused(static_cast<std::size_t>(n),
                              std::numeric_limits<double>::quiet_NaN());
    for (const Sample& s : samples) {
        fused[static_cast<std::size_t>(s.start + nf - 1)] = denormalize_speed(predict(model, s));
    }
    for (const auto& [seg_begin, seg_end] : acq.segments()) {
        if (seg_begin + nf - 1 >= seg_end) continue;  // segment too short for any window
        const double first = fused[static_cast<std::size_t>(seg_begin + nf - 1)];
        for (int i = seg_begin; i < seg_begin + nf - 1; ++i) fused[static_cast<std::size_t>(i)] = first;
    }
    // Segments shorter than one window borrow the raw gyro reading.
    std::vector<double> truth(static_cast<std::size_t>(n)), gyro(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        truth[static_cast<std::size_t>(i)] = acq.records[static_cast<std::size_t>(i)].label_deg_s;
        gyro[static_cast<std::size_t>(i)] = acq.records[static_cast<std::size_t>(i)].gyro_deg_s;
        if (!std::isfinite(fused[static_cast<std::size_t>(i)]))
            fused[static_cast<std::size_t>(i)] = gyro[static_cast<std::size_t>(i)];
    }

    const double dt = 1.0 / acq.fps;
    AngleTrace trace;
    trace.truth_deg = integrate_angle(truth, dt);
    trace.gyro_deg = integrate_angle(gyro, dt);
    trace.fusion_deg = integrate_angle(fused, dt);
    trace.time_s.resize(trace.truth_deg.size());
    for (std::size_t i = 0; i < trace.time_s.size(); ++i) trace.time_s[i] = static_cast<double>(i) * dt;
    return trace;
}

GainHistogram gain_histogram(const FusionModel& model, const std::vector<Sample>& samples, int bins) {
    if (model.config.variant != Variant::fusion)
        throw std::invalid_argument("gain_histogram: model has no gain head");
    if (bins < 1) throw std::invalid_argument("gain_histogram: bins must be >= 1");
    if (samples.empty()) throw std::invalid_argument("gain_histogram: no samples");
    GainHistogram h;
    h.bins = bins;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    double sum = 0.0;
    for (const Sample& s : samples) {
        const double gain = forward(model, s.frames).fusion_gain;
        sum += gain;
        int b = static_cast<int>(gain * bins);
        b = std::clamp(b, 0, bins - 1);
        h.counts[static_cast<std::size_t>(b)] += 1;
    }
    h.mean_gain = sum / static_cast<double>(samples.size());
    return h;
}

void write_fold_report_json(const std::vector<FoldReport>& reports, const std::string& path,
                            bool with_complexity) {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const FoldReport& r : reports) {
        nlohmann::ordered_json entry = fold_report_to_json(r);
        if (with_complexity) {
            const ComplexityReport c =
                count_complexity(ModelConfig::make(r.n_frames, r.subsample, r.variant));
            entry["total_params"] = c.total_params;
            entry["total_flops"] = c.total_flops;
        }
        j.push_back(entry);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report: " + path);
    out << j.dump(2) << '\n';
}

void write_fold_values_csv(const std::vector<FoldReport>& reports, const std::string& path) {
    std::string buf = "n_frames,subsample,variant,fold,held_out,mse\n";
    for (const FoldReport& r : reports) {
        for (std::size_t i = 0; i < r.fold_mse.size(); ++i) {
            buf += std::to_string(r.n_frames);
            buf += ',';
            buf += std::to_string(r.subsample);
            buf += ',';
            buf += variant_name(r.variant);
            buf += ',';
            buf += std::to_string(i);
            buf += ',';
            buf += r.fold_names[i];
            buf += ',';
            append_double(buf, r.fold_mse[i]);
            buf += '\n';
        }
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write fold CSV: " + path);
    out << buf;
}

void write_complexity_csv(const std::vector<std::pair<int, int>>& nf_nr_grid, Variant variant,
                          const std::string& path) {
    std::string buf = "n_frames,subsample,variant,layer,params,macs,flops\n";
    for (const auto& [nf, nr] : nf_nr_grid) {
        const ComplexityReport c = count_complexity(ModelConfig::make(nf, nr, variant));
        for (const LayerCount& l : c.layers) {
            buf += std::to_string(nf) + "," + std::to_string(nr) + "," + variant_name(variant) + "," +
                   l.name + "," + std::to_string(l.params) + "," + std::to_string(l.macs) + "," +
                   std::to_string(2 * l.macs) + "\n";
        }
        buf += std::to_string(nf) + "," + std::to_string(nr) + "," + variant_name(variant) + ",total," +
               std::to_string(c.total_params) + "," + std::to_string(c.total_macs) + "," +
               std::to_string(c.total_flops) + "\n";
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write complexity CSV: " + path);
    out << buf;
}

void write_angle_trace_csv(const AngleTrace& trace, const std::string& path) {
    std::string buf = "time_s,truth_deg,gyro_deg,fusion_deg\n";
    for (std::size_t i = 0; i < trace.time_s.size(); ++i) {
        append_double(buf, trace.time_s[i]);
        buf += ',';
        append_double(buf, trace.truth_deg[i]);
        buf += ',';
        append_double(buf, trace.gyro_deg[i]);
        buf += ',';
        append_double(buf, trace.fusion_deg[i]);
        buf += '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write angle trace CSV: " + path);
    out << buf;
}

void write_histogram_csv(const GainHistogram& hist, const std::string& path) {
    std::string buf = "bin_lo,bin_hi,count\n";
    for (int b = 0; b < hist.bins; ++b) {
        append_double(buf, static_cast<double>(b) / hist.bins);
        buf += ',';
        append_double(buf, static_cast<double>(b + 1) / hist.bins);
        buf += ',';
        buf += std::to_string(hist.counts[static_cast<std::size_t>(b)]);
        buf += '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write histogram CSV: " + path);
    out << buf;
}

void write_history_csv(const std::vector<double>& epoch_loss, const std::string& path) {
    std::string buf = "epoch,loss\n";
    for (std::size_t i = 0; i < epoch_loss.size(); ++i) {
        buf += std::to_string(i);
        buf += ',';
        append_double(buf, epoch_loss[i]);
        buf += '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write history CSV: " + path);
    out << buf;
}

} // namespace tg
