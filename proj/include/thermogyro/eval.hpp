#pragma once

#include <string>
#include <utility>
#include <vector>

#include "thermogyro/dataset.hpp"
#include "thermogyro/model.hpp"
#include "thermogyro/trainer.hpp"

namespace tg {

// Quantiles by linear interpolation of order statistics at position
// p * (n - 1); IQR = Q3 - Q1.
struct MedianIqr {
    double median = 0.0;
    double iqr = 0.0;
};
MedianIqr median_iqr(std::vector<double> values);

// Hold-one-acquisition-out cross validation over one environment.
struct FoldReport {
    int n_frames = 0;
    int subsample = 0;
    Variant variant = Variant::fusion;
    std::string held_out_env;
    std::vector<std::string> fold_names;   // held-out acquisition per fold
    std::vector<double> fold_mse;          // normalized units
    std::vector<double> fold_rmse_deg_s;
    double median = 0.0;
    double iqr = 0.0;
};

// Each acquisition of `held_out_env` serves once as the test set; a fresh
// model seeded with base_seed + fold trains on every other acquisition
// (all environments by default, only the held-out environment's remainder
// when train_all_envs is false).
FoldReport kfold(const DatasetRoot& root, const std::string& held_out_env, const TrainConfig& cfg,
                 int n_frames, int subsample, Variant variant, bool train_all_envs = true);

// Frame-count sweep at native resolution, both variants per value.
std::vector<FoldReport> sweep_n_frames(const DatasetRoot& root, const std::string& held_out_env,
                                       const TrainConfig& cfg, const std::vector<int>& n_frames_list,
                                       bool train_all_envs = true);

// Resolution sweep at the best frame count, both variants per value.
std::vector<FoldReport> sweep_subsample(const DatasetRoot& root, const std::string& held_out_env,
                                        const TrainConfig& cfg, const std::vector<int>& subsample_list,
                                        int n_frames = 3, bool train_all_envs = true);

// Cumulative integration of per-step speeds: angle_k = sum_{i<k} w_i * dt,
// starting at 0; output has one more entry than `speeds_deg_s`.
std::vector<double> integrate_angle(std::span<const double> speeds_deg_s, double dt);

// Integrated angle over one acquisition for ground truth, raw gyro and the
// model's fused estimate, sharing one time base.
struct AngleTrace {
    std::vector<double> time_s;
    std::vector<double> truth_deg;
    std::vector<double> gyro_deg;
    std::vector<double> fusion_deg;
};

// Predicts speed per frame with the window ending at that frame (the first
// frames of a segment reuse the segment's first window) and integrates.
AngleTrace drift_trace(const FusionModel& model, const Acquisition& acq);

// Histogram of the fusion gain over `samples`: `bins` equal bins spanning
// [0, 1]; counts sum to the sample count.
struct GainHistogram {
    int bins = 20;
    std::vector<std::size_t> counts;
    double mean_gain = 0.0;
};
GainHistogram gain_histogram(const FusionModel& model, const std::vector<Sample>& samples, int bins = 20);

// --- report files -----------------------------------------------------------

void write_fold_report_json(const std::vector<FoldReport>& reports, const std::string& path,
                            bool with_complexity = false);
void write_fold_values_csv(const std::vector<FoldReport>& reports, const std::string& path);
void write_complexity_csv(const std::vector<std::pair<int, int>>& nf_nr_grid, Variant variant,
                          const std::string& path);
void write_angle_trace_csv(const AngleTrace& trace, const std::string& path);
void write_histogram_csv(const GainHistogram& hist, const std::string& path);
void write_history_csv(const std::vector<double>& epoch_loss, const std::string& path);

} // namespace tg
