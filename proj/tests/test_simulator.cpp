#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "thermogyro/dataset.hpp"
#include "thermogyro/simulator.hpp"

using namespace tg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

double frame_variance(const ThermalFrame& f) {
    double mean = 0.0;
    for (double v : f.pixels) mean += v;
    mean /= static_cast<double>(f.pixels.size());
    double var = 0.0;
    for (double v : f.pixels) var += (v - mean) * (v - mean);
    return var / static_cast<double>(f.pixels.size());
}

} // namespace

TEST_CASE("zero-blob scene renders the constant ambient field") {
    const Scene scene = build_scene(1, 0, 20.0);
    CameraSpec cam;
    cam.pixel_noise_c = 0.0;
    Rng rng(1);
    const ThermalFrame f = render_frame(scene, cam, 123.0, rng);
    for (double px : f.pixels) CHECK(px == 20.0);
}

TEST_CASE("scenes are deterministic in the seed") {
    const Scene a = build_scene(42, 12, 18.0);
    const Scene b = build_scene(42, 12, 18.0);
    REQUIRE(a.blobs.size() == b.blobs.size());
    for (std::size_t i = 0; i < a.blobs.size(); ++i) {
        CHECK(a.blobs[i].azimuth_deg == b.blobs[i].azimuth_deg);
        CHECK(a.blobs[i].amplitude_c == b.blobs[i].amplitude_c);
    }
    const Scene c = build_scene(43, 12, 18.0);
    CHECK(a.blobs[0].azimuth_deg != c.blobs[0].azimuth_deg);
}

TEST_CASE("rendered frames are 360-degree periodic without noise") {
    const Scene scene = build_scene(7, 10, 20.0);
    CameraSpec cam;
    cam.pixel_noise_c = 0.0;
    Rng rng(1);
    for (double az : {0.0, 55.5, 200.0}) {
        const ThermalFrame a = render_frame(scene, cam, az, rng);
        const ThermalFrame b = render_frame(scene, cam, az + 360.0, rng);
        for (std::size_t i = 0; i < a.pixels.size(); ++i)
            CHECK(std::abs(a.pixels[i] - b.pixels[i]) < 1e-9);
    }
}

TEST_CASE("a blob centered on the camera azimuth peaks at the central columns") {
    Scene scene;
    scene.ambient_c = 20.0;
    scene.blobs.push_back({90.0, 0.0, 12.0, 10.0});
    CameraSpec cam;
    cam.pixel_noise_c = 0.0;
    Rng rng(1);
    const ThermalFrame f = render_frame(scene, cam, 90.0, rng);
    // column-wise max temperature should occur at one of the two center columns
    std::vector<double> col_max(static_cast<std::size_t>(cam.cols), -1e9);
    for (int r = 0; r < cam.rows; ++r)
        for (int c = 0; c < cam.cols; ++c)
            col_max[static_cast<std::size_t>(c)] = std::max(col_max[static_cast<std::size_t>(c)], f.at(r, c));
    const auto best = std::max_element(col_max.begin(), col_max.end()) - col_max.begin();
    CHECK((best == 15 || best == 16));
}

TEST_CASE("more blobs give more rendered spatial variance") {
    CameraSpec cam;
    cam.pixel_noise_c = 0.0;
    Rng rng(1);
    auto mean_variance = [&](int blobs) {
        const Scene scene = build_scene(5, blobs, 20.0);
        double acc = 0.0;
        int n = 0;
        for (double az = 0.0; az < 360.0; az += 30.0) {
            acc += frame_variance(render_frame(scene, cam, az, rng));
            ++n;
        }
        return acc / n;
    };
    CHECK(mean_variance(20) > mean_variance(3));
}

TEST_CASE("constant-speed frame sequence shifts columns by the expected amount") {
    // With w = fps * h_fov / cols deg/s, content moves exactly one column
    // per frame; verify via the best integer-shift correlation.
    const Scene scene = build_scene(11, 8, 20.0);
    CameraSpec cam;
    cam.pixel_noise_c = 0.0;
    GyroSpec gyro;
    const double speed = cam.fps * cam.h_fov_deg / cam.cols;  // one column per frame
    const Acquisition acq = simulate_acquisition(scene, cam, gyro, {{speed, 2.0}}, 3);
    REQUIRE(acq.records.size() >= 2);
    const ThermalFrame& f0 = acq.records[0].frame;
    const ThermalFrame& f1 = acq.records[1].frame;

    auto shift_error = [&](int shift) {
        double err = 0.0;
        int n = 0;
        for (int r = 0; r < cam.rows; ++r) {
            for (int c = 0; c + shift < cam.cols; ++c) {
                const double d = f1.at(r, c) - f0.at(r, c + shift);
                err += d * d;
                ++n;
            }
        }
        return err / n;
    };
    // frame 1 content equals frame 0 shifted by one column
    CHECK(shift_error(1) < shift_error(0));
    CHECK(shift_error(1) < shift_error(2));
    CHECK(shift_error(1) < 1e-6);
}

TEST_CASE("gyro bias is purely additive") {
    const Scene scene = build_scene(2, 3, 20.0);
    CameraSpec cam;
    cam.pixel_noise_c = 0.0;
    GyroSpec gyro;
    gyro.bias_deg_s = 2.0;
    gyro.noise_deg_s = 0.0;
    const Acquisition acq = simulate_acquisition(scene, cam, gyro, {{50.0, 1.0}}, 9);
    for (const auto& r : acq.records) CHECK(r.gyro_deg_s == doctest::Approx(52.0));
}

TEST_CASE("schedules map to frame counts and segment boundaries") {
    const Scene scene = build_scene(2, 3, 20.0);
    CameraSpec cam;
    GyroSpec gyro;
    SUBCASE("single segment") {
        const Acquisition acq = simulate_acquisition(scene, cam, gyro, {{100.0, 10.0}}, 4);
        CHECK(acq.records.size() == 80);
        for (const auto& r : acq.records) CHECK(r.label_deg_s == 100.0);
        CHECK(acq.segments().size() == 1);
    }
    SUBCASE("two segments record exactly one boundary") {
        const Acquisition acq =
            simulate_acquisition(scene, cam, gyro, {{100.0, 1.0}, {-60.0, 1.0}}, 4);
        const auto segs = acq.segments();
        REQUIRE(segs.size() == 2);
        CHECK(segs[0] == std::pair<int, int>{0, 8});
        CHECK(segs[1] == std::pair<int, int>{8, 16});
    }
    SUBCASE("empty schedule is rejected") {
        CHECK_THROWS_AS(simulate_acquisition(scene, cam, gyro, {}, 4), std::invalid_argument);
    }
}

TEST_CASE("zero noise and zero bias make the gyro average equal the label") {
    const Scene scene = build_scene(6, 3, 20.0);
    CameraSpec cam;
    cam.pixel_noise_c = 0.0;
    GyroSpec gyro;  // no bias, no noise
    const Acquisition acq = simulate_acquisition(scene, cam, gyro, {{77.0, 2.0}, {-30.0, 2.0}}, 5);
    const auto samples = make_windows(acq, 3, 1);
    for (const Sample& s : samples) CHECK(s.gyro_speed == doctest::Approx(s.label).epsilon(1e-12));
}

TEST_CASE("random schedules stay in range with distinct consecutive speeds") {
    Rng rng(21);
    const SpeedSchedule sched = random_schedule(40, 2.5, rng);
    REQUIRE(sched.size() == 40);
    for (std::size_t i = 0; i < sched.size(); ++i) {
        CHECK(std::abs(sched[i].speed_deg_s) >= 20.0);
        CHECK(std::abs(sched[i].speed_deg_s) <= 200.0);
        CHECK(sched[i].duration_s == 2.5);
        if (i) CHECK(std::abs(sched[i].speed_deg_s - sched[i - 1].speed_deg_s) >= 5.0);
    }
}

TEST_CASE("generate_dataset writes a loadable, reproducible dataset") {
    TempDir dir_a("tg_sim_gen_a");
    TempDir dir_b("tg_sim_gen_b");
    SimConfig cfg;
    cfg.envs = {{"garden", 2, 6}};
    cfg.segments = 3;
    cfg.segment_s = 1.0;
    cfg.gyro.bias_deg_s = 1.0;
    cfg.gyro.noise_deg_s = 0.5;
    cfg.seed = 77;

    const DatasetRoot out_a = generate_dataset(cfg, dir_a.path.string());
    CHECK(out_a.acquisitions.size() == 2);
    for (const auto& a : out_a.acquisitions) CHECK(a.records.size() == 24);  // 3 seg x 1 s x 8 fps

    const DatasetRoot loaded = load_dataset(dir_a.path.string());
    REQUIRE(loaded.acquisitions.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(loaded.acquisitions[i].name == out_a.acquisitions[i].name);
        CHECK(loaded.acquisitions[i].records.size() == out_a.acquisitions[i].records.size());
        for (std::size_t j = 0; j < loaded.acquisitions[i].records.size(); ++j) {
            CHECK(loaded.acquisitions[i].records[j].frame.pixels ==
                  out_a.acquisitions[i].records[j].frame.pixels);
        }
    }

    generate_dataset(cfg, dir_b.path.string());
    CHECK(slurp(dir_a.path / "manifest.json") == slurp(dir_b.path / "manifest.json"));
    CHECK(slurp(dir_a.path / "garden_0.csv") == slurp(dir_b.path / "garden_0.csv"));
    CHECK(slurp(dir_a.path / "garden_1.csv") == slurp(dir_b.path / "garden_1.csv"));
    CHECK(slurp(dir_a.path / "garden_0.csv") != slurp(dir_a.path / "garden_1.csv"));
}

TEST_CASE("multiple environments share one manifest") {
    TempDir dir("tg_sim_multi_env");
    SimConfig cfg;
    cfg.envs = {{"lab", 2, 2}, {"garden", 3, 10}};
    cfg.segments = 2;
    cfg.segment_s = 0.5;
    cfg.seed = 5;
    generate_dataset(cfg, dir.path.string());
    const DatasetRoot root = load_dataset(dir.path.string());
    CHECK(root.acquisitions.size() == 5);
    CHECK(root.indices_of_environment("lab").size() == 2);
    CHECK(root.indices_of_environment("garden").size() == 3);
}
