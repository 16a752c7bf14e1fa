#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "thermogyro/errors.hpp"
#include "thermogyro/loss.hpp"
#include "thermogyro/model.hpp"
#include "thermogyro/nn_ops.hpp"
#include "thermogyro/rng.hpp"

#include "test_ref.hpp"

using namespace tg;
using tgtest::close;
using tgtest::random_tensor;

TEST_CASE("build_model is deterministic in (config, seed)") {
    const ModelConfig cfg = ModelConfig::make(3, 1, Variant::fusion);
    const FusionModel a = build_model(cfg, 7);
    const FusionModel b = build_model(cfg, 7);
    CHECK(a.params == b.params);
    const FusionModel c = build_model(cfg, 8);
    CHECK(a.params != c.params);
}

TEST_CASE("parameter counts match the analytic values") {
    CHECK(count_params(ModelConfig::make(3, 1, Variant::fusion)) == 750274);
    CHECK(count_params(ModelConfig::make(3, 2, Variant::fusion)) == 197314);
    CHECK(count_params(ModelConfig::make(3, 3, Variant::fusion)) == 89794);

    const ComplexityReport r = count_complexity(ModelConfig::make(3, 1, Variant::fusion));
    auto layer_params = [&r](const char* name) {
        for (const auto& l : r.layers)
            if (l.name == name) return l.params;
        return std::size_t{0};
    };
    CHECK(layer_params("conv1") == 456);
    CHECK(layer_params("conv2") == 2416);
    CHECK(layer_params("fc1") == 368760);
    CHECK(layer_params("fc2") == 9680);
    CHECK(layer_params("out") == 81);
    CHECK(layer_params("gain_fc") == 368760);
    CHECK(layer_params("gain_out") == 121);
}

TEST_CASE("thermal_only variant has no gain head") {
    const FusionModel m = build_model(ModelConfig::make(3, 1, Variant::thermal_only), 7);
    CHECK_THROWS_AS(m.layout.layer("gain_fc_w"), std::invalid_argument);
    CHECK(m.layout.total == 750274 - 368760 - 121);
}

TEST_CASE("same seed gives fusion and thermal_only identical shared parameters") {
    const FusionModel fus = build_model(ModelConfig::make(3, 2, Variant::fusion), 42);
    const FusionModel th = build_model(ModelConfig::make(3, 2, Variant::thermal_only), 42);
    CHECK(std::equal(th.params.begin(), th.params.end(), fus.params.begin()));
}

TEST_CASE("flop counts match the analytic values") {
    const ComplexityReport r1 = count_complexity(ModelConfig::make(3, 1, Variant::fusion));
    auto layer_macs = [](const ComplexityReport& r, const char* name) {
        for (const auto& l : r.layers)
            if (l.name == name) return l.macs;
        return std::size_t{0};
    };
    CHECK(layer_macs(r1, "conv1") == 345600);           // 6*24*32 positions x 75 MACs
    CHECK(2 * layer_macs(r1, "conv1") == 691200);       // as FLOPs
    CHECK(2 * layer_macs(r1, "fc2") == 19200);          // 120*80 MACs regardless of N_r
    const ComplexityReport r3 = count_complexity(ModelConfig::make(3, 3, Variant::fusion));
    CHECK(2 * layer_macs(r3, "fc2") == 19200);
}

TEST_CASE("params and flops are monotone in n_frames and subsample") {
    for (Variant v : {Variant::fusion, Variant::thermal_only}) {
        std::size_t prev_params = 0, prev_flops = 0;
        for (int nr = 3; nr >= 1; --nr) {
            const ComplexityReport r = count_complexity(ModelConfig::make(3, nr, v));
            CHECK(r.total_params > prev_params);
            CHECK(r.total_flops > prev_flops);
            prev_params = r.total_params;
            prev_flops = r.total_flops;
        }
        prev_params = prev_flops = 0;
        for (int nf = 1; nf <= 6; ++nf) {
            const ComplexityReport r = count_complexity(ModelConfig::make(nf, 2, v));
            CHECK(r.total_params > prev_params);
            CHECK(r.total_flops > prev_flops);
            prev_params = r.total_params;
            prev_flops = r.total_flops;
        }
    }
}

TEST_CASE("count_params agrees with the actually allocated parameter vector") {
    for (int nr : {1, 2, 3}) {
        for (Variant v : {Variant::fusion, Variant::thermal_only}) {
            const ModelConfig cfg = ModelConfig::make(3, nr, v);
            const FusionModel m = build_model(cfg, 1);
            CHECK(m.params.size() == count_params(cfg));
            std::size_t layered = 0;
            for (const auto& s : m.layout.layers) layered += shape_product(s.shape);
            CHECK(layered == count_params(cfg));
        }
    }
}

TEST_CASE("count_flops agrees with MACs executed by an instrumented forward") {
    Rng rng(5);
    for (int nr : {1, 2, 3}) {
        for (Variant v : {Variant::fusion, Variant::thermal_only}) {
            const ModelConfig cfg = ModelConfig::make(2, nr, v);
            const FusionModel m = build_model(cfg, 3);
            const Tensor frames = random_tensor({cfg.n_frames, cfg.input_h, cfg.input_w}, rng);
            const std::size_t executed = tgtest::ref_forward_macs(m, frames);
            CHECK(count_complexity(cfg).total_macs == executed);
        }
    }
}

TEST_CASE("unsupported subsample factor is rejected") {
    CHECK_THROWS_AS(ModelConfig::make(3, 4, Variant::fusion), std::invalid_argument);
    CHECK_THROWS_AS(ModelConfig::make(0, 1, Variant::fusion), std::invalid_argument);
}

TEST_CASE("forward with all-zero parameters gives zero speed and gain one half") {
    const ModelConfig cfg = ModelConfig::make(3, 1, Variant::fusion);
    FusionModel m = build_model(cfg, 1);
    std::fill(m.params.begin(), m.params.end(), 0.0);
    Rng rng(2);
    const Tensor frames = random_tensor({3, 24, 32}, rng);
    const ForwardTrace t = forward(m, frames);
    CHECK(t.thermal_speed == 0.0);
    CHECK(t.fusion_gain == doctest::Approx(0.5));
}

TEST_CASE("forward shape chain per subsample factor") {
    Rng rng(3);
    struct Case {
        int nr, h, w, flat;
    };
    for (const Case c : {Case{1, 24, 32, 3072}, Case{2, 12, 16, 768}, Case{3, 8, 10, 320}}) {
        const ModelConfig cfg = ModelConfig::make(3, c.nr, Variant::fusion);
        CHECK(cfg.input_h == c.h);
        CHECK(cfg.input_w == c.w);
        const FusionModel m = build_model(cfg, 1);
        const ForwardTrace t = forward(m, random_tensor({3, c.h, c.w}, rng));
        CHECK(static_cast<int>(t.flat.size()) == c.flat);
        CHECK(t.conv1_pre.shape == std::vector<int>{6, c.h, c.w});
        CHECK(t.conv2_pre.shape == std::vector<int>{16, c.h / 2, c.w / 2});
    }
}

TEST_CASE("forward rejects inputs that do not match the config") {
    const FusionModel m = build_model(ModelConfig::make(3, 1, Variant::fusion), 1);
    CHECK_THROWS_AS(forward(m, Tensor({3, 12, 16})), std::invalid_argument);
    CHECK_THROWS_AS(forward(m, Tensor({2, 24, 32})), std::invalid_argument);
}

TEST_CASE("fusion gain stays strictly inside (0,1) and output is a convex mix") {
    Rng rng(11);
    const FusionModel m = build_model(ModelConfig::make(2, 3, Variant::fusion), 5);
    for (int i = 0; i < 50; ++i) {
        const Tensor frames = random_tensor({2, 8, 10}, rng);
        const ForwardTrace t = forward(m, frames);
        CHECK(t.fusion_gain > 0.0);
        CHECK(t.fusion_gain < 1.0);
        const double gyro = rng.uniform(-1.0, 1.0);
        const double fused = fuse(t.thermal_speed, t.fusion_gain, gyro);
        CHECK(fused >= std::min(t.thermal_speed, gyro) - 1e-12);
        CHECK(fused <= std::max(t.thermal_speed, gyro) + 1e-12);
    }
}

TEST_CASE("fuse boundary identities and the hand-evaluated mix") {
    CHECK(fuse(0.8, 1.0, -0.3) == 0.8);
    CHECK(fuse(0.8, 0.0, -0.3) == -0.3);
    CHECK(fuse(1.0, 0.55, 0.9) == doctest::Approx(0.955));
}

TEST_CASE("zero output gradients give zero parameter gradients") {
    const FusionModel m = build_model(ModelConfig::make(2, 3, Variant::fusion), 9);
    Rng rng(4);
    const ForwardTrace t = forward(m, random_tensor({2, 8, 10}, rng));
    std::vector<double> grads(m.layout.total, 0.0);
    backward(m, t, 0.0, 0.0, grads);
    for (double g : grads) CHECK(g == 0.0);
}

// Full-pipeline check: d loss / d params for loss = berhu(fuse(...) - y)
// against central differences, stratified over every layer.
TEST_CASE("full pipeline gradient matches finite differences over 10 seeds") {
    int failed = 0;
    int checked = 0;
    int skipped = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const ModelConfig cfg = ModelConfig::make(2, 3, Variant::fusion);
        FusionModel m = build_model(cfg, seed);
        Rng rng(seed * 31 + 1);
        const Tensor frames = random_tensor({2, 8, 10}, rng, -1.0, 1.0);
        const double gyro = rng.uniform(-1.0, 1.0);
        const double label = rng.uniform(-1.0, 1.0);
        const double c = 0.05;  // fixed threshold keeps the probe differentiable

        auto loss_at = [&](const std::vector<double>& params) {
            FusionModel probe = m;
            probe.params = params;
            const ForwardTrace t = forward(probe, frames);
            return berhu(fuse(t.thermal_speed, t.fusion_gain, gyro) - label, c);
        };

        const ForwardTrace t = forward(m, frames);
        const double err = fuse(t.thermal_speed, t.fusion_gain, gyro) - label;
        const double d_pred = berhu_grad(err, c);
        std::vector<double> grads(m.layout.total, 0.0);
        backward(m, t, d_pred * t.fusion_gain, d_pred * (t.thermal_speed - gyro), grads);

        // Probe a deterministic stratified subset of coordinates per layer.
        Rng pick(seed * 77 + 5);
        const auto st = tgtest::probe_gradient(loss_at, m.params, m.layout, grads, pick, 12);
        failed += st.failed;
        checked += st.checked;
        skipped += st.skipped_kinks;
    }
    CHECK(failed == 0);
    CHECK(checked >= 10 * 14 * 12 * 9 / 10);  // kink skips must stay rare
    CHECK(skipped <= 10 * 14 * 12 / 10);
}

TEST_CASE("thermal_only gradients equal the fusion graph with the gain frozen at 1") {
    const ModelConfig fus_cfg = ModelConfig::make(2, 3, Variant::fusion);
    const ModelConfig th_cfg = ModelConfig::make(2, 3, Variant::thermal_only);
    const FusionModel fus = build_model(fus_cfg, 21);
    FusionModel th = build_model(th_cfg, 21);  // same shared params by layout order

    Rng rng(6);
    const Tensor frames = random_tensor({2, 8, 10}, rng);
    const ForwardTrace tf = forward(fus, frames);
    const ForwardTrace tt = forward(th, frames);
    CHECK(tf.thermal_speed == doctest::Approx(tt.thermal_speed).epsilon(1e-15));

    // Freezing the gain at 1 routes d_pred straight into the thermal head
    // and nothing into the gain head.
    const double d_pred = 0.37;
    std::vector<double> g_fus(fus.layout.total, 0.0);
    backward(fus, tf, d_pred * 1.0, 0.0, g_fus);
    std::vector<double> g_th(th.layout.total, 0.0);
    backward(th, tt, d_pred, 0.0, g_th);
    for (std::size_t i = 0; i < g_th.size(); ++i) CHECK(g_fus[i] == doctest::Approx(g_th[i]).epsilon(1e-15));
    for (std::size_t i = g_th.size(); i < g_fus.size(); ++i) CHECK(g_fus[i] == 0.0);
}

TEST_CASE("weight files round-trip") {
    const auto dir = std::filesystem::temp_directory_path() / "tg_model_io_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "weights.bin").string();

    const FusionModel m = build_model(ModelConfig::make(4, 2, Variant::fusion), 1234);
    save_model(m, path);
    const FusionModel r = load_model(path);
    CHECK(r.config == m.config);
    CHECK(r.params == m.params);

    // Corrupted header is refused.
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f != nullptr);
        std::fputs("{\"former\":", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_model(path), DataError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("truncated weight payload is refused") {
    const auto dir = std::filesystem::temp_directory_path() / "tg_model_trunc_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "weights.bin").string();
    const FusionModel m = build_model(ModelConfig::make(2, 3, Variant::thermal_only), 5);
    save_model(m, path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    CHECK_THROWS_AS(load_model(path), DataError);
    std::filesystem::remove_all(dir);
}
