#pragma once

// Test-only reference implementations, kept deliberately naive and
// independent of the library kernels: the convolution walks the full
// padded 5x5 window (zeros contribute explicit multiply-accumulates), so
// the same code doubles as the executed-MAC oracle for the FLOP counter.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "thermogyro/model.hpp"
#include "thermogyro/nn_ops.hpp"
#include "thermogyro/rng.hpp"
#include "thermogyro/tensor.hpp"

namespace tgtest {

struct MacCounter {
    std::size_t macs = 0;
};

inline tg::Tensor ref_conv2d(const tg::Tensor& input, const tg::Tensor& weights,
                             const tg::Tensor& bias, MacCounter* counter = nullptr) {
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = weights.dim(0);
    tg::Tensor out({cout, h, w});
    for (int oc = 0; oc < cout; ++oc) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = bias[static_cast<std::size_t>(oc)];
                for (int ic = 0; ic < cin; ++ic) {
                    for (int ku = 0; ku < 5; ++ku) {
                        for (int kv = 0; kv < 5; ++kv) {
                            const int iy = y + ku - 2;
                            const int ix = x + kv - 2;
                            const double px =
                                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? input.at(ic, iy, ix) : 0.0;
                            acc += weights.data[((static_cast<std::size_t>(oc) * cin + ic) * 5 + ku) * 5 +
                                                kv] *
                                   px;
                            if (counter) counter->macs += 1;
                        }
                    }
                }
                out.at(oc, y, x) = acc;
            }
        }
    }
    return out;
}

inline tg::Tensor ref_dense(const tg::Tensor& input, const tg::Tensor& weights,
                            const tg::Tensor& bias, MacCounter* counter = nullptr) {
    const int m = weights.dim(0), n = weights.dim(1);
    tg::Tensor out({m});
    for (int i = 0; i < m; ++i) {
        double acc = bias[static_cast<std::size_t>(i)];
        for (int j = 0; j < n; ++j) {
            acc += weights.at(i, j) * input[static_cast<std::size_t>(j)];
            if (counter) counter->macs += 1;
        }
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

// Replays the model's forward chain with the reference ops, counting every
// padded-window MAC actually executed.
inline std::size_t ref_forward_macs(const tg::FusionModel& model, const tg::Tensor& frames) {
    MacCounter mc;
    auto weights_of = [&model](const char* name) {
        const tg::LayerSpec& s = model.layout.layer(name);
        auto span = model.layer(name);
        return tg::Tensor::from(s.shape, std::vector<double>(span.begin(), span.end()));
    };
    const tg::Tensor c1 = ref_conv2d(frames, weights_of("conv1_w"), weights_of("conv1_b"), &mc);
    const tg::Tensor a1 = tg::relu(c1);
    const tg::PoolResult p = tg::maxpool2_forward(a1);
    const tg::Tensor c2 = ref_conv2d(p.output, weights_of("conv2_w"), weights_of("conv2_b"), &mc);
    const tg::Tensor a2 = tg::relu(c2);
    const tg::Tensor flat = tg::Tensor::from({static_cast<int>(a2.size())}, a2.data);
    const tg::Tensor f1 = ref_dense(flat, weights_of("fc1_w"), weights_of("fc1_b"), &mc);
    const tg::Tensor f2 = ref_dense(tg::relu(f1), weights_of("fc2_w"), weights_of("fc2_b"), &mc);
    (void)ref_dense(tg::relu(f2), weights_of("out_w"), weights_of("out_b"), &mc);
    if (model.config.variant == tg::Variant::fusion) {
        const tg::Tensor g1 = ref_dense(flat, weights_of("gain_fc_w"), weights_of("gain_fc_b"), &mc);
        (void)ref_dense(tg::relu(g1), weights_of("gain_out_w"), weights_of("gain_out_b"), &mc);
    }
    return mc.macs;
}

inline tg::Tensor random_tensor(std::vector<int> shape, tg::Rng& rng, double lo = -2.0, double hi = 2.0) {
    tg::Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// |a - b| <= atol + rtol * max(|a|, |b|), the usual mixed tolerance.
inline bool close(double a, double b, double rtol = 1e-4, double atol = 1e-7) {
    const double diff = std::abs(a - b);
    return diff <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

struct GradProbeStats {
    int checked = 0;
    int skipped_kinks = 0;
    int failed = 0;
};

// Central-difference probe of `analytic` at a stratified random subset of
// coordinates (per_layer per layout entry). A coordinate whose +-h window
// straddles a ReLU/pool kink gives a step in the difference quotient; such
// coordinates are detected by re-evaluating at h/8 (smooth points agree to
// O(h^2)) and skipped rather than misreported as gradient errors.
template <typename LossFn>
GradProbeStats probe_gradient(LossFn&& loss_at, std::vector<double> point,
                              const tg::ParamLayout& layout, std::span<const double> analytic,
                              tg::Rng& pick, int per_layer, double h = 1e-5) {
    GradProbeStats st;
    for (const auto& layer : layout.layers) {
        for (int k = 0; k < per_layer; ++k) {
            const std::size_t i = layer.offset + pick.next_below(layer.size);
            const double saved = point[i];
            auto fd_at = [&](double step) {
                point[i] = saved + step;
                const double fp = loss_at(point);
                point[i] = saved - step;
                const double fm = loss_at(point);
                point[i] = saved;
                return (fp - fm) / (2.0 * step);
            };
            const double fd = fd_at(h);
            const double fd_refined = fd_at(h / 8.0);
            if (std::abs(fd - fd_refined) > 1e-3 * std::max(1.0, std::abs(fd))) {
                ++st.skipped_kinks;
                continue;
            }
            ++st.checked;
            if (!close(analytic[i], fd, 1e-4, 1e-7)) ++st.failed;
        }
    }
    return st;
}

} // namespace tgtest
