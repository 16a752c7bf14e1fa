#include "thermogyro/trainer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "thermogyro/errors.hpp"
#include "thermogyro/loss.hpp"
#include "thermogyro/nn_ops.hpp"
#include "thermogyro/rng.hpp"

namespace tg {

namespace {

// Batched training engine. Semantically identical to running the model's
// per-sample forward/backward and accumulating gradients, but the two wide
// dense layers (fc1 and the gain fc share a 3072-ish input) are evaluated
// as blocked matrix products over the whole batch, so their weight
// matrices stream from memory once per batch instead of once per sample.
// Buffers are preallocated and reused across batches.
struct BatchEngine {
    const FusionModel& model;
    const bool fusion;
    const int flat;
    const int h, w;
    const int fc1_units = 120;
    const int fc2_units = 80;
    const int batch_cap;

    // backbone traces, one slot per sample in the batch
    std::vector<double> conv1_pre;   // [B, 6*h*w]
    std::vector<double> pooled;      // [B, 6*(h/2)*(w/2)]
    std::vector<int> argmax;         // [B, pooled size]
    std::vector<double> conv2_pre;   // [B, flat]
    std::vector<double> feats;       // [B, flat]   relu(conv2_pre)

    // head activations as batch matrices
    std::vector<double> fc1_pre, fc1_act;        // [B, 120]
    std::vector<double> fc2_pre, fc2_act;        // [B, 80]
    std::vector<double> gain_fc_pre, gain_fc_act;  // [B, 120]
    std::vector<double> thermal, gain;           // [B]

    // gradient staging
    std::vector<double> d_fc1_pre, d_gain_fc_pre;  // [B, 120]
    std::vector<double> d_feats;                   // [B, flat]
    std::vector<double> scratch_act;               // conv1 activation scratch
    std::vector<double> scratch_small;             // per-sample tail scratch
    std::vector<double> d_conv2_pre, d_pooled, d_conv1_act, d_conv1_pre;

    BatchEngine(const FusionModel& m, int batch)
        : model(m),
          fusion(m.config.variant == Variant::fusion),
          flat(m.layout.flat),
          h(m.config.input_h),
          w(m.config.input_w),
          batch_cap(batch) {
        const std::size_t b = static_cast<std::size_t>(batch);
        const std::size_t c1 = static_cast<std::size_t>(6) * h * w;
        const std::size_t pooled_n = static_cast<std::size_t>(6) * (h / 2) * (w / 2);
        conv1_pre.resize(b * c1);
        pooled.resize(b * pooled_n);
        argmax.resize(b * pooled_n);
        conv2_pre.resize(b * flat);
        feats.resize(b * flat);
        fc1_pre.resize(b * fc1_units);
        fc1_act.resize(b * fc1_units);
        fc2_pre.resize(b * fc2_units);
        fc2_act.resize(b * fc2_units);
        gain_fc_pre.resize(fusion ? b * fc1_units : 0);
        gain_fc_act.resize(fusion ? b * fc1_units : 0);
        thermal.resize(b);
        gain.resize(b);
        d_fc1_pre.resize(b * fc1_units);
        d_gain_fc_pre.resize(fusion ? b * fc1_units : 0);
        d_feats.resize(b * flat);
        scratch_act.resize(c1);
        scratch_small.resize(512);
        d_conv2_pre.resize(flat);
        d_pooled.resize(pooled_n);
        d_conv1_act.resize(c1);
        d_conv1_pre.resize(c1);
    }

    // Backbone + heads for `n` samples; predictions land in preds.
    void forward_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                       std::size_t start, std::size_t n, std::vector<double>& preds) {
        const std::size_t c1 = static_cast<std::size_t>(6) * h * w;
        const std::size_t pooled_n = static_cast<std::size_t>(6) * (h / 2) * (w / 2);
        for (std::size_t k = 0; k < n; ++k) {
            const Sample& s = samples[order[start + k]];
            double* c1p = conv1_pre.data() + k * c1;
            kern::conv2d_fwd(s.frames.data.data(), model.config.n_frames, h, w,
                             model.layer("conv1_w").data(), 6, model.layer("conv1_b").data(), c1p);
            kern::relu_fwd(c1p, c1, scratch_act.data());
            kern::maxpool2_fwd(scratch_act.data(), 6, h, w, pooled.data() + k * pooled_n,
                               argmax.data() + k * pooled_n);
            kern::conv2d_fwd(pooled.data() + k * pooled_n, 6, h / 2, w / 2,
                             model.layer("conv2_w").data(), 16, model.layer("conv2_b").data(),
                             conv2_pre.data() + k * flat);
            kern::relu_fwd(conv2_pre.data() + k * flat, static_cast<std::size_t>(flat),
                           feats.data() + k * flat);
        }

        auto head_pre = [&](const char* wname, const char* bname, double* pre, double* act) {
            std::fill(pre, pre + n * fc1_units, 0.0);
            kern::gemm_nt_acc(feats.data(), static_cast<int>(n), model.layer(wname).data(), fc1_units,
                              flat, pre);
            const auto bias = model.layer(bname);
            for (std::size_t k = 0; k < n; ++k) {
                for (int j = 0; j < fc1_units; ++j) pre[k * fc1_units + j] += bias[j];
            }
            kern::relu_fwd(pre, n * fc1_units, act);
        };
        head_pre("fc1_w", "fc1_b", fc1_pre.data(), fc1_act.data());
        if (fusion) head_pre("gain_fc_w", "gain_fc_b", gain_fc_pre.data(), gain_fc_act.data());

        for (std::size_t k = 0; k < n; ++k) {
            kern::dense_fwd(fc1_act.data() + k * fc1_units, fc1_units, model.layer("fc2_w").data(),
                            fc2_units, model.layer("fc2_b").data(), fc2_pre.data() + k * fc2_units);
            kern::relu_fwd(fc2_pre.data() + k * fc2_units, fc2_units, fc2_act.data() + k * fc2_units);
            thermal[k] = kern::dot(model.layer("out_w").data(), fc2_act.data() + k * fc2_units,
                                   fc2_units) +
                         model.layer("out_b")[0];
            if (fusion) {
                const double pre = kern::dot(model.layer("gain_out_w").data(),
                                             gain_fc_act.data() + k * fc1_units, fc1_units) +
                                   model.layer("gain_out_b")[0];
                gain[k] = sigmoid(pre);
                preds[k] = fuse(thermal[k], gain[k], samples[order[start + k]].gyro_speed);
            } else {
                preds[k] = thermal[k];
            }
        }
    }

    void backward_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& order,
                        std::size_t start, std::size_t n, const std::vector<double>& d_preds,
                        std::vector<double>& grads) {
        auto gslice = [&](const char* name) { return grads.data() + model.layout.layer(name).offset; };

        // Per-sample head tails down to the two 120-wide pre-activation
        // gradients, staged row-wise for the batched rank-n updates.
        double* d_fc2_act = scratch_small.data();
        double* d_fc2_pre = scratch_small.data() + fc2_units;
        double* d_fc1_act = scratch_small.data() + 2 * fc2_units;
        for (std::size_t k = 0; k < n; ++k) {
            const Sample& s = samples[order[start + k]];
            double d_thermal = d_preds[k];
            double d_gain_out = 0.0;
            if (fusion) {
                d_thermal = d_preds[k] * gain[k];
                d_gain_out = d_preds[k] * (thermal[k] - s.gyro_speed);
            }

            // linear output neuron
            kern::axpy(gslice("out_w"), d_thermal, fc2_act.data() + k * fc2_units, fc2_units);
            gslice("out_b")[0] += d_thermal;
            for (int j = 0; j < fc2_units; ++j)
                d_fc2_act[j] = model.layer("out_w")[static_cast<std::size_t>(j)] * d_thermal;
            kern::relu_bwd(fc2_pre.data() + k * fc2_units, d_fc2_act, fc2_units, d_fc2_pre);

            // fc2
            kern::dense_bwd_params(fc1_act.data() + k * fc1_units, fc1_units, d_fc2_pre, fc2_units,
                                   gslice("fc2_w"), gslice("fc2_b"));
            kern::dense_bwd_input(model.layer("fc2_w").data(), fc2_units, fc1_units, d_fc2_pre,
                                  d_fc1_act);
            kern::relu_bwd(fc1_pre.data() + k * fc1_units, d_fc1_act, fc1_units,
                           d_fc1_pre.data() + k * fc1_units);

            if (fusion) {
                // sigmoid gain neuron
                const double g = gain[k];
                const double d_gain_pre = d_gain_out * g * (1.0 - g);
                kern::axpy(gslice("gain_out_w"), d_gain_pre, gain_fc_act.data() + k * fc1_units,
                           fc1_units);
                gslice("gain_out_b")[0] += d_gain_pre;
                double* d_gain_act = d_fc1_act;  // reuse the 120-wide scratch
                for (int j = 0; j < fc1_units; ++j)
                    d_gain_act[j] = model.layer("gain_out_w")[static_cast<std::size_t>(j)] * d_gain_pre;
                kern::relu_bwd(gain_fc_pre.data() + k * fc1_units, d_gain_act, fc1_units,
                               d_gain_fc_pre.data() + k * fc1_units);
            }
        }

        // Wide layers: rank-n weight updates and the feature gradient.
        kern::gemm_tn_acc(d_fc1_pre.data(), static_cast<int>(n), fc1_units, feats.data(), flat,
                          gslice("fc1_w"));
        for (std::size_t k = 0; k < n; ++k) {
            kern::axpy(gslice("fc1_b"), 1.0, d_fc1_pre.data() + k * fc1_units, fc1_units);
        }
        std::fill(d_feats.begin(), d_feats.begin() + static_cast<std::ptrdiff_t>(n * flat), 0.0);
        kern::gemm_nn_acc(d_fc1_pre.data(), static_cast<int>(n), fc1_units,
                          model.layer("fc1_w").data(), flat, d_feats.data());
        if (fusion) {
            kern::gemm_tn_acc(d_gain_fc_pre.data(), static_cast<int>(n), fc1_units, feats.data(), flat,
                              gslice("gain_fc_w"));
            for (std::size_t k = 0; k < n; ++k) {
                kern::axpy(gslice("gain_fc_b"), 1.0, d_gain_fc_pre.data() + k * fc1_units, fc1_units);
            }
            kern::gemm_nn_acc(d_gain_fc_pre.data(), static_cast<int>(n), fc1_units,
                              model.layer("gain_fc_w").data(), flat, d_feats.data());
        }

        // Backbone, per sample.
        const std::size_t c1 = static_cast<std::size_t>(6) * h * w;
        const std::size_t pooled_n = static_cast<std::size_t>(6) * (h / 2) * (w / 2);
        for (std::size_t k = 0; k < n; ++k) {
            const Sample& s = samples[order[start + k]];
            kern::relu_bwd(conv2_pre.data() + k * flat, d_feats.data() + k * flat,
                           static_cast<std::size_t>(flat), d_conv2_pre.data());
            kern::conv2d_bwd_params(pooled.data() + k * pooled_n, 6, h / 2, w / 2, d_conv2_pre.data(),
                                    16, gslice("conv2_w"), gslice("conv2_b"));
            kern::conv2d_bwd_input(model.layer("conv2_w").data(), 6, h / 2, w / 2, d_conv2_pre.data(),
                                   16, d_pooled.data());
            kern::maxpool2_bwd(argmax.data() + k * pooled_n, d_pooled.data(), pooled_n,
                               d_conv1_act.data(), c1);
            kern::relu_bwd(conv1_pre.data() + k * c1, d_conv1_act.data(), c1, d_conv1_pre.data());
            kern::conv2d_bwd_params(s.frames.data.data(), model.config.n_frames, h, w,
                                    d_conv1_pre.data(), 6, gslice("conv1_w"), gslice("conv1_b"));
        }
    }
};

} // namespace

TrainResult train(FusionModel& model, const std::vector<Sample>& samples, const TrainConfig& cfg) {
    if (samples.empty()) throw std::invalid_argument("train: no samples");
    if (cfg.batch < 1 || cfg.epochs < 1 || cfg.lr < 0.0)
        throw std::invalid_argument("train: invalid config (batch >= 1, epochs >= 1, lr >= 0)");
    const std::vector<int> frame_shape{model.config.n_frames, model.config.input_h, model.config.input_w};
    for (const Sample& s : samples) {
        if (s.frames.shape != frame_shape)
            throw std::invalid_argument("train: sample shape does not match model config");
    }

    const std::size_t n = samples.size();
    AdamState opt(model.layout.total, cfg.lr);
    Rng rng(cfg.seed);

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    BatchEngine engine(model, cfg.batch);
    std::vector<double> grads(model.layout.total, 0.0);
    std::vector<double> preds, targets;

    TrainResult result;
    result.epoch_loss.reserve(static_cast<std::size_t>(cfg.epochs));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            // Fisher-Yates from the run's own stream.
            for (std::size_t i = n - 1; i > 0; --i) {
                const std::size_t j = rng.next_below(i + 1);
                std::swap(order[i], order[j]);
            }
        }

        double epoch_loss_sum = 0.0;
        for (std::size_t batch_start = 0; batch_start < n; batch_start += static_cast<std::size_t>(cfg.batch)) {
            const std::size_t batch_n = std::min(static_cast<std::size_t>(cfg.batch), n - batch_start);
            preds.resize(batch_n);
            targets.resize(batch_n);
            for (std::size_t k = 0; k < batch_n; ++k) targets[k] = samples[order[batch_start + k]].label;

            engine.forward_batch(samples, order, batch_start, batch_n, preds);

            const BatchLoss bl = cfg.loss == LossKind::berhu ? berhu_batch(preds, targets)
                                                             : mse_batch(preds, targets);
            if (!std::isfinite(bl.loss))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", batch offset " + std::to_string(batch_start));
            epoch_loss_sum += bl.loss * static_cast<double>(batch_n);

            std::fill(grads.begin(), grads.end(), 0.0);
            engine.backward_batch(samples, order, batch_start, batch_n, bl.grad, grads);
            adam_step(model.params, grads, opt);
        }
        result.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(n));
    }
    return result;
}

double predict(const FusionModel& model, const Sample& sample, std::optional<double> gain_override) {
    const ForwardTrace t = forward(model, sample.frames);
    if (model.config.variant != Variant::fusion) return t.thermal_speed;
    const double gain = gain_override.value_or(t.fusion_gain);
    return fuse(t.thermal_speed, gain, sample.gyro_speed);
}

EvalResult evaluate(const FusionModel& model, const std::vector<Sample>& samples,
                    std::optional<double> gain_override) {
    if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
    double sum_sq = 0.0;
    for (const Sample& s : samples) {
        const double e = predict(model, s, gain_override) - s.label;
        sum_sq += e * e;
    }
    EvalResult r;
    r.mse = sum_sq / static_cast<double>(samples.size());
    r.rmse_deg_s = std::sqrt(r.mse) * kSpeedScaleDegS;
    return r;
}

} // namespace tg
