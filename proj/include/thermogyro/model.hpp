#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "thermogyro/tensor.hpp"

namespace tg {

// Network variant: thermal-only regression head, or the full fusion model
// with the additional gain head that mixes in the gyro estimate.
enum class Variant { thermal_only, fusion };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

// Architecture descriptor. Input height/width follow from the subsample
// factor applied to the native 24x32 frames.
struct ModelConfig {
    int n_frames = 3;     // consecutive frames stacked as input channels
    int subsample = 1;    // block-averaging factor, one of {1,2,3}
    Variant variant = Variant::fusion;
    int input_h = 24;
    int input_w = 32;

    static ModelConfig make(int n_frames, int subsample, Variant variant);

    bool operator==(const ModelConfig&) const = default;
};

// One named slice of the flat parameter vector.
struct LayerSpec {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t size = 0;
};

// Flat-parameter layout derived from a config. Layer order is fixed, with
// the gain head at the tail so that a thermal-only model initialized with
// the same seed shares the backbone and thermal-head parameters of its
// fusion counterpart bit for bit.
struct ParamLayout {
    std::vector<LayerSpec> layers;
    std::size_t total = 0;
    int pooled_h = 0;     // spatial dims after the 2x2 pool
    int pooled_w = 0;
    int flat = 0;         // flattened backbone feature length

    static ParamLayout of(const ModelConfig& config);
    const LayerSpec& layer(const std::string& name) const;
};

// All learnable parameters plus the architecture descriptor.
class FusionModel {
public:
    ModelConfig config;
    ParamLayout layout;
    std::vector<double> params;  // flat, in layout order

    std::span<double> layer(const std::string& name);
    std::span<const double> layer(const std::string& name) const;
};

// Seeded parameter init: uniform(-b, b) with b = sqrt(6 / fan_in) for the
// ReLU layers and b = sqrt(6 / (fan_in + fan_out)) for the two output
// neurons; biases zero. Identical (config, seed) gives identical params.
FusionModel build_model(const ModelConfig& config, std::uint64_t seed);

// Everything backward needs: layer inputs, pre-activations and pooling
// winners, plus the two scalar outputs.
struct ForwardTrace {
    Tensor input;                 // [N_f, H, W]
    Tensor conv1_pre;             // [6, H, W]
    Tensor conv1_act;
    std::vector<int> pool_argmax; // flat index into conv1_act per pooled cell
    Tensor pooled;                // [6, H/2, W/2]
    Tensor conv2_pre;             // [16, H/2, W/2]
    std::vector<double> flat;     // relu(conv2_pre), flattened
    std::vector<double> fc1_pre, fc1_act;
    std::vector<double> fc2_pre, fc2_act;
    double thermal_speed = 0.0;   // normalized rotational speed estimate
    // Gain head (fusion variant only).
    bool has_gain = false;
    std::vector<double> gain_fc_pre, gain_fc_act;
    double gain_pre = 0.0;
    double fusion_gain = 0.5;     // sigmoid output in (0, 1)
};

// Backbone + heads. `frames` must already be subsampled and normalized.
ForwardTrace forward(const FusionModel& model, const Tensor& frames);

// Convex mix of the thermal estimate and the gyro average.
inline double fuse(double thermal_speed, double gain, double gyro_speed) {
    return gain * thermal_speed + (1.0 - gain) * gyro_speed;
}

// Accumulates (+=) exact parameter gradients into `grads`, which must have
// layout length. d_thermal / d_gain are the loss gradients on the two
// scalar outputs; the gyro input receives no gradient.
void backward(const FusionModel& model, const ForwardTrace& trace,
              double d_thermal, double d_gain, std::span<double> grads);

// Per-layer and total complexity. MACs count the full padded convolution
// windows; bias adds, activations and pooling are excluded; 1 MAC = 2 FLOPs.
struct LayerCount {
    std::string name;
    std::size_t params = 0;
    std::size_t macs = 0;
};

struct ComplexityReport {
    std::vector<LayerCount> layers;
    std::size_t total_params = 0;
    std::size_t total_macs = 0;
    std::size_t total_flops = 0;
};

std::size_t count_params(const ModelConfig& config);
ComplexityReport count_complexity(const ModelConfig& config);

// Weight file: one JSON header line (format tag, config, per-layer shapes)
// followed by the flat parameter vector as little-endian 64-bit reals.
void save_model(const FusionModel& model, const std::string& path);
FusionModel load_model(const std::string& path);

} // namespace tg
