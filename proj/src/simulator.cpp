#include "thermogyro/simulator.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <stdexcept>

namespace fs = std::filesystem;

namespace tg {

namespace {

// Wraps an azimuth difference into [-180, 180).
double wrap_delta(double deg) {
    double d = std::fmod(deg + 180.0, 360.0);
    if (d < 0.0) d += 360.0;
    return d - 180.0;
}

} // namespace

double Scene::temperature_at(double azimuth_deg, double elevation_deg) const {
    double t = ambient_c;
    for (const Blob& b : blobs) {
        const double da = wrap_delta(azimuth_deg - b.azimuth_deg);
        const double de = elevation_deg - b.elevation_deg;
        const double s2 = 2.0 * b.width_deg * b.width_deg;
        t += b.amplitude_c * std::exp(-(da * da) / s2) * std::exp(-(de * de) / s2);
    }
    return t;
}

Scene build_scene(std::uint64_t seed, int n_blobs, double ambient_c) {
    if (n_blobs < 0) throw std::invalid_argument("build_scene: n_blobs must be >= 0");
    Scene scene;
    scene.ambient_c = ambient_c;
    scene.seed = seed;
    Rng rng(Rng::mix(seed, 0xb10b5));
    scene.blobs.reserve(static_cast<std::size_t>(n_blobs));
    for (int i = 0; i < n_blobs; ++i) {
        Blob b;
        b.azimuth_deg = rng.uniform(0.0, 360.0);
        b.elevation_deg = rng.uniform(-17.5, 17.5);
        b.width_deg = rng.uniform(5.0, 40.0);
        b.amplitude_c = rng.uniform(2.0, 15.0);
        scene.blobs.push_back(b);
    }
    return scene;
}

ThermalFrame render_frame(const Scene& scene, const CameraSpec& camera, double azimuth_deg, Rng& rng) {
    ThermalFrame frame;
    const int rows = camera.rows;
    const int cols = camera.cols;

    // Separable field: per-blob azimuth profile over columns and elevation
    // profile over rows, combined per pixel.
    const std::size_t k = scene.blobs.size();
    std::vector<double> az_profile(k * static_cast<std::size_t>(cols));
    std::vector<double> el_profile(k * static_cast<std::size_t>(rows));
    for (std::size_t bi = 0; bi < k; ++bi) {
        const Blob& b = scene.blobs[bi];
        const double s2 = 2.0 * b.width_deg * b.width_deg;
        for (int c = 0; c < cols; ++c) {
            const double az = azimuth_deg + ((c + 0.5) / cols - 0.5) * camera.h_fov_deg;
            const double da = wrap_delta(az - b.azimuth_deg);
            az_profile[bi * cols + c] = b.amplitude_c * std::exp(-(da * da) / s2);
        }
        for (int r = 0; r < rows; ++r) {
            const double el = ((r + 0.5) / rows - 0.5) * camera.v_fov_deg;
            const double de = el - b.elevation_deg;
            el_profile[bi * rows + r] = std::exp(-(de * de) / s2);
        }
    }
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            double t = scene.ambient_c;
            for (std::size_t bi = 0; bi < k; ++bi)
                t += el_profile[bi * rows + r] * az_profile[bi * cols + c];
            frame.at(r, c) = t;
        }
    }
    if (camera.pixel_noise_c > 0.0) {
        for (double& px : frame.pixels) px += rng.normal(0.0, camera.pixel_noise_c);
    }
    return frame;
}

SpeedSchedule random_schedule(int segments, double segment_s, Rng& rng) {
    if (segments < 1) throw std::invalid_argument("random_schedule: need at least one segment");
    if (segment_s <= 0.0) throw std::invalid_argument("random_schedule: segment duration must be > 0");
    SpeedSchedule schedule;
    schedule.reserve(static_cast<std::size_t>(segments));
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int i = 0; i < segments; ++i) {
        double speed = 0.0;
        do {
            const double magnitude = rng.uniform(20.0, 200.0);
            speed = rng.next_u64() & 1 ? magnitude : -magnitude;
        } while (std::isfinite(prev) && std::abs(speed - prev) < 5.0);
        schedule.push_back({speed, segment_s});
        prev = speed;
    }
    return schedule;
}

Acquisition simulate_acquisition(const Scene& scene, const CameraSpec& camera, const GyroSpec& gyro,
                                 const SpeedSchedule& schedule, std::uint64_t seed,
                                 const std::string& environment, const std::string& name) {
    if (schedule.empty()) throw std::invalid_argument("simulate_acquisition: empty schedule");
    for (const auto& seg : schedule) {
        if (seg.duration_s <= 0.0)
            throw std::invalid_argument("simulate_acquisition: segment durations must be > 0");
        if (std::abs(seg.speed_deg_s) > kSpeedScaleDegS)
            throw std::invalid_argument("simulate_acquisition: speed outside +-200 deg/s");
    }

    Acquisition acq;
    acq.environment = environment;
    acq.name = name;
    acq.fps = camera.fps;

    Rng rng(seed);
    const double dt = 1.0 / camera.fps;
    double azimuth = rng.uniform(0.0, 360.0);

    for (const auto& seg : schedule) {
        const int n_frames = static_cast<int>(std::llround(seg.duration_s * camera.fps));
        for (int i = 0; i < n_frames; ++i) {
            Record rec;
            rec.frame = render_frame(scene, camera, azimuth, rng);
            rec.gyro_deg_s = seg.speed_deg_s + gyro.bias_deg_s +
                             (gyro.noise_deg_s > 0.0 ? rng.normal(0.0, gyro.noise_deg_s) : 0.0);
            rec.label_deg_s = seg.speed_deg_s;
            acq.records.push_back(std::move(rec));
            azimuth += seg.speed_deg_s * dt;
        }
    }
    return acq;
}

DatasetRoot generate_dataset(const SimConfig& config, const std::string& out_dir) {
    fs::create_directories(out_dir);
    DatasetRoot root;
    for (std::size_t ei = 0; ei < config.envs.size(); ++ei) {
        const SimEnvConfig& env = config.envs[ei];
        const Scene scene = build_scene(Rng::mix(config.seed, 1000 + ei), env.blobs, config.ambient_c);
        for (int ai = 0; ai < env.acquisitions; ++ai) {
            const std::uint64_t acq_seed = Rng::mix(config.seed, ei * 10000 + static_cast<std::uint64_t>(ai));
            Rng sched_rng(Rng::mix(acq_seed, 0x5c4ed));
            const SpeedSchedule schedule = random_schedule(config.segments, config.segment_s, sched_rng);
            Acquisition acq = simulate_acquisition(scene, config.camera, config.gyro, schedule, acq_seed,
                                                   env.name, env.name + "_" + std::to_string(ai));
            write_acquisition(acq, (fs::path(out_dir) / (acq.name + ".csv")).string());
            root.acquisitions.push_back(std::move(acq));
        }
    }
    write_manifest(root, out_dir);
    return root;
}

} // namespace tg
