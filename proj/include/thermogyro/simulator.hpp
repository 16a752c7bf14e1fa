#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thermogyro/dataset.hpp"
#include "thermogyro/rng.hpp"

namespace tg {

// Synthetic stand-in for the physical recording rig: a panoramic thermal
// scene sampled by a camera rotating in azimuth, plus a biased, noisy gyro.

// One Gaussian warm blob on the panorama.
struct Blob {
    double azimuth_deg = 0.0;
    double elevation_deg = 0.0;
    double width_deg = 10.0;    // shared sigma for azimuth and elevation
    double amplitude_c = 5.0;   // >= 0
};

// 360-degree-periodic azimuth temperature field: ambient + warm blobs.
struct Scene {
    double ambient_c = 20.0;
    std::vector<Blob> blobs;
    std::uint64_t seed = 0;

    double temperature_at(double azimuth_deg, double elevation_deg) const;
};

struct CameraSpec {
    double h_fov_deg = 55.0;
    double v_fov_deg = 35.0;
    int cols = kFrameCols;
    int rows = kFrameRows;
    double pixel_noise_c = 0.3;  // additive Gaussian, roughly sensor NETD
    double fps = 8.0;
};

struct GyroSpec {
    double bias_deg_s = 0.0;     // constant per acquisition
    double noise_deg_s = 0.0;    // white, per reading
};

struct SpeedSegment {
    double speed_deg_s = 0.0;    // within +-[20, 200]
    double duration_s = 0.0;
};
using SpeedSchedule = std::vector<SpeedSegment>;

// Blob parameters drawn from fixed ranges: centers uniform over the full
// panorama and vertical field of view, widths 5-40 deg, amplitudes 2-15 C.
Scene build_scene(std::uint64_t seed, int n_blobs, double ambient_c);

// Samples the scene at the camera's pixel directions around `azimuth_deg`
// and adds per-pixel noise from `rng`.
ThermalFrame render_frame(const Scene& scene, const CameraSpec& camera, double azimuth_deg, Rng& rng);

// Random schedule: `segments` entries of `segment_s` seconds each, speeds
// uniform over +-[20, 200] with consecutive speeds forced apart so segment
// boundaries stay recoverable from the labels.
SpeedSchedule random_schedule(int segments, double segment_s, Rng& rng);

// Integrates the schedule at 1/fps steps from a random start azimuth;
// deterministic in `seed`.
Acquisition simulate_acquisition(const Scene& scene, const CameraSpec& camera, const GyroSpec& gyro,
                                 const SpeedSchedule& schedule, std::uint64_t seed,
                                 const std::string& environment = "sim", const std::string& name = "sim_0");

// One environment of a generated dataset.
struct SimEnvConfig {
    std::string name = "garden";
    int acquisitions = 6;
    int blobs = 8;
};

struct SimConfig {
    std::vector<SimEnvConfig> envs = {{}};
    int segments = 20;
    double segment_s = 4.0;
    double ambient_c = 20.0;
    CameraSpec camera;
    GyroSpec gyro;
    std::uint64_t seed = 0;
};

// Writes manifest.json plus one CSV per acquisition into `out_dir`.
// Re-running with the same config reproduces byte-identical files.
DatasetRoot generate_dataset(const SimConfig& config, const std::string& out_dir);

} // namespace tg
