#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "thermogyro/tensor.hpp"

namespace tg {

// Native sensor resolution.
inline constexpr int kFrameRows = 24;
inline constexpr int kFrameCols = 32;
inline constexpr int kFramePixels = kFrameRows * kFrameCols;

// Commanded speeds stay within +-200 deg/s; labels and gyro readings are
// divided by this to land in a nominal [-1, 1].
inline constexpr double kSpeedScaleDegS = 200.0;

// One 24x32 grid of temperatures in degrees C, row-major.
struct ThermalFrame {
    std::vector<double> pixels;

    ThermalFrame() : pixels(kFramePixels, 0.0) {}
    double& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * kFrameCols + c]; }
    double at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * kFrameCols + c]; }
};

// One time step of a recording: frame, gyro reading and the commanded
// ground-truth rotational speed, all at the acquisition frame rate.
struct Record {
    ThermalFrame frame;
    double gyro_deg_s = 0.0;
    double label_deg_s = 0.0;
};

// One continuous recording session at a fixed environment. Constant-speed
// segments are derived from label changes, so they survive a round trip
// through the on-disk format.
struct Acquisition {
    std::string environment;
    std::string name;        // file stem, unique within a dataset
    double fps = 8.0;
    std::vector<Record> records;

    // Half-open [start, end) index ranges of constant commanded speed.
    std::vector<std::pair<int, int>> segments() const;
};

struct DatasetRoot {
    std::vector<Acquisition> acquisitions;

    std::vector<int> indices_of_environment(const std::string& env) const;
};

// Frame preprocessing spec. Frames are per-frame standardized after block
// subsampling, which removes the scene's absolute temperature offset.
struct NormalizationSpec {
    double speed_scale = kSpeedScaleDegS;
    double std_floor = 1e-6;
};

// One training/inference unit.
struct Sample {
    Tensor frames;            // [N_f, H, W], subsampled + standardized
    double gyro_speed = 0.0;  // window-averaged gyro reading, normalized
    double label = 0.0;       // commanded speed, normalized
    int acq_index = -1;       // provenance: which acquisition
    int start = -1;           // provenance: window start frame
};

// --- canonical on-disk format ---------------------------------------------
// One CSV per acquisition: header `idx,label_deg_s,gyro_deg_s,p000..p767`,
// then one row per record, '.' decimal separator, LF line endings. A
// manifest.json at the dataset root lists the environments:
//   [{"environment": str, "fps": number, "files": [str, ...]}, ...]

void write_acquisition(const Acquisition& acq, const std::string& path);
Acquisition load_acquisition(const std::string& path, const std::string& environment = "",
                             double fps = 8.0);

void write_manifest(const DatasetRoot& root, const std::string& dir);
DatasetRoot load_dataset(const std::string& dir);

// --- preprocessing ---------------------------------------------------------

// Non-overlapping factor x factor block means; trailing rows/columns that
// do not fill a block are dropped (24x32 at factor 3 -> 8x10).
Tensor subsample_frame(const ThermalFrame& frame, int factor);

// Per-frame standardization; a constant frame maps to all zeros.
void normalize_frame(Tensor& frame, double std_floor = 1e-6);

// Mean of the window's gyro readings, in deg/s.
double gyro_average(std::span<const double> gyro_readings_deg_s);

double denormalize_speed(double normalized);

// All stride-1 windows of n_frames consecutive records that stay inside one
// constant-speed segment.
std::vector<Sample> make_windows(const Acquisition& acq, int n_frames, int subsample,
                                 const NormalizationSpec& norm = {}, int acq_index = -1);

// Windows over a subset of acquisitions (all of them when `only` is empty),
// tagged with their acquisition index.
std::vector<Sample> make_windows(const DatasetRoot& root, int n_frames, int subsample,
                                 const NormalizationSpec& norm = {},
                                 const std::vector<int>& only = {});

} // namespace tg
