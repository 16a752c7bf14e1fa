#include "thermogyro/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "thermogyro/errors.hpp"
#include "thermogyro/nn_ops.hpp"
#include "thermogyro/rng.hpp"

namespace tg {

static_assert(std::endian::native == std::endian::little,
              "weight files are little-endian; byte swapping is not implemented");

namespace {

constexpr int kConv1Filters = 6;
constexpr int kConv2Filters = 16;
constexpr int kFc1Units = 120;
constexpr int kFc2Units = 80;
constexpr int kGainFcUnits = 120;
constexpr int kNativeH = 24;
constexpr int kNativeW = 32;
constexpr char kWeightFormat[] = "thermogyro-weights";
constexpr int kWeightVersion = 1;

} // namespace

std::string variant_name(Variant v) {
    return v == Variant::fusion ? "fusion" : "thermal_only";
}

Variant variant_from_name(const std::string& name) {
    if (name == "fusion") return Variant::fusion;
    if (name == "thermal_only") return Variant::thermal_only;
    throw std::invalid_argument("unknown variant '" + name + "' (expected fusion|thermal_only)");
}

ModelConfig ModelConfig::make(int n_frames, int subsample, Variant variant) {
    if (n_frames < 1) throw std::invalid_argument("n_frames must be >= 1");
    if (subsample < 1 || subsample > 3)
        throw std::invalid_argument("subsample factor must be in {1,2,3}, got " + std::to_string(subsample));
    ModelConfig c;
    c.n_frames = n_frames;
    c.subsample = subsample;
    c.variant = variant;
    c.input_h = kNativeH / subsample;
    c.input_w = kNativeW / subsample;
    return c;
}

ParamLayout ParamLayout::of(const ModelConfig& config) {
    if (config.subsample < 1 || config.subsample > 3 || config.n_frames < 1 ||
        config.input_h != kNativeH / config.subsample || config.input_w != kNativeW / config.subsample)
        throw std::invalid_argument("inconsistent model config");
    ParamLayout l;
    l.pooled_h = config.input_h / 2;
    l.pooled_w = config.input_w / 2;
    l.flat = kConv2Filters * l.pooled_h * l.pooled_w;

    auto add = [&l](const std::string& name, std::vector<int> shape) {
        LayerSpec s;
        s.name = name;
        s.shape = std::move(shape);
        s.offset = l.total;
        s.size = shape_product(s.shape);
        l.total += s.size;
        l.layers.push_back(std::move(s));
    };

    add("conv1_w", {kConv1Filters, config.n_frames, 5, 5});
    add("conv1_b", {kConv1Filters});
    add("conv2_w", {kConv2Filters, kConv1Filters, 5, 5});
    add("conv2_b", {kConv2Filters});
    add("fc1_w", {kFc1Units, l.flat});
    add("fc1_b", {kFc1Units});
    add("fc2_w", {kFc2Units, kFc1Units});
    add("fc2_b", {kFc2Units});
    add("out_w", {1, kFc2Units});
    add("out_b", {1});
    if (config.variant == Variant::fusion) {
        add("gain_fc_w", {kGainFcUnits, l.flat});
        add("gain_fc_b", {kGainFcUnits});
        add("gain_out_w", {1, kGainFcUnits});
        add("gain_out_b", {1});
    }
    return l;
}

const LayerSpec& ParamLayout::layer(const std::string& name) const {
    for (const auto& s : layers) {
        if (s.name == name) return s;
    }
    throw std::invalid_argument("no layer named '" + name + "' in this layout");
}

std::span<double> FusionModel::layer(const std::string& name) {
    const LayerSpec& s = layout.layer(name);
    return {params.data() + s.offset, s.size};
}

std::span<const double> FusionModel::layer(const std::string& name) const {
    const LayerSpec& s = layout.layer(name);
    return {params.data() + s.offset, s.size};
}

FusionModel build_model(const ModelConfig& config, std::uint64_t seed) {
    FusionModel m;
    m.config = config;
    m.layout = ParamLayout::of(config);
    m.params.assign(m.layout.total, 0.0);

    Rng rng(seed);
    auto init_uniform = [&](const std::string& name, double bound) {
        auto w = m.layer(name);
        for (double& v : w) v = rng.uniform(-bound, bound);
    };
    // Hidden layers feed ReLU: fan-in scaling. The two scalar outputs
    // (linear / sigmoid) use fan-average scaling. Biases stay zero.
    init_uniform("conv1_w", std::sqrt(6.0 / (config.n_frames * 25)));
    init_uniform("conv2_w", std::sqrt(6.0 / (kConv1Filters * 25)));
    init_uniform("fc1_w", std::sqrt(6.0 / m.layout.flat));
    init_uniform("fc2_w", std::sqrt(6.0 / kFc1Units));
    init_uniform("out_w", std::sqrt(6.0 / (kFc2Units + 1)));
    if (config.variant == Variant::fusion) {
        init_uniform("gain_fc_w", std::sqrt(6.0 / m.layout.flat));
        init_uniform("gain_out_w", std::sqrt(6.0 / (kGainFcUnits + 1)));
    }
    return m;
}

ForwardTrace forward(const FusionModel& model, const Tensor& frames) {
    const ModelConfig& cfg = model.config;
    require_shape(frames, {cfg.n_frames, cfg.input_h, cfg.input_w}, "model input");
    const ParamLayout& lay = model.layout;
    const int h = cfg.input_h;
    const int w = cfg.input_w;

    ForwardTrace t;
    t.input = frames;

    t.conv1_pre = Tensor({kConv1Filters, h, w});
    kern::conv2d_fwd(frames.data.data(), cfg.n_frames, h, w,
                     model.layer("conv1_w").data(), kConv1Filters,
                     model.layer("conv1_b").data(), t.conv1_pre.data.data());
    t.conv1_act = Tensor({kConv1Filters, h, w});
    kern::relu_fwd(t.conv1_pre.data.data(), t.conv1_pre.size(), t.conv1_act.data.data());

    t.pooled = Tensor({kConv1Filters, lay.pooled_h, lay.pooled_w});
    t.pool_argmax.assign(t.pooled.size(), 0);
    kern::maxpool2_fwd(t.conv1_act.data.data(), kConv1Filters, h, w,
                       t.pooled.data.data(), t.pool_argmax.data());

    t.conv2_pre = Tensor({kConv2Filters, lay.pooled_h, lay.pooled_w});
    kern::conv2d_fwd(t.pooled.data.data(), kConv1Filters, lay.pooled_h, lay.pooled_w,
                     model.layer("conv2_w").data(), kConv2Filters,
                     model.layer("conv2_b").data(), t.conv2_pre.data.data());
    t.flat.resize(t.conv2_pre.size());
    kern::relu_fwd(t.conv2_pre.data.data(), t.conv2_pre.size(), t.flat.data());

    t.fc1_pre.resize(kFc1Units);
    kern::dense_fwd(t.flat.data(), lay.flat, model.layer("fc1_w").data(), kFc1Units,
                    model.layer("fc1_b").data(), t.fc1_pre.data());
    t.fc1_act.resize(kFc1Units);
    kern::relu_fwd(t.fc1_pre.data(), t.fc1_pre.size(), t.fc1_act.data());

    t.fc2_pre.resize(kFc2Units);
    kern::dense_fwd(t.fc1_act.data(), kFc1Units, model.layer("fc2_w").data(), kFc2Units,
                    model.layer("fc2_b").data(), t.fc2_pre.data());
    t.fc2_act.resize(kFc2Units);
    kern::relu_fwd(t.fc2_pre.data(), t.fc2_pre.size(), t.fc2_act.data());

    kern::dense_fwd(t.fc2_act.data(), kFc2Units, model.layer("out_w").data(), 1,
                    model.layer("out_b").data(), &t.thermal_speed);

    if (cfg.variant == Variant::fusion) {
        t.has_gain = true;
        t.gain_fc_pre.resize(kGainFcUnits);
        kern::dense_fwd(t.flat.data(), lay.flat, model.layer("gain_fc_w").data(), kGainFcUnits,
                        model.layer("gain_fc_b").data(), t.gain_fc_pre.data());
        t.gain_fc_act.resize(kGainFcUnits);
        kern::relu_fwd(t.gain_fc_pre.data(), t.gain_fc_pre.size(), t.gain_fc_act.data());
        kern::dense_fwd(t.gain_fc_act.data(), kGainFcUnits, model.layer("gain_out_w").data(), 1,
                        model.layer("gain_out_b").data(), &t.gain_pre);
        t.fusion_gain = sigmoid(t.gain_pre);
    }
    return t;
}

void backward(const FusionModel& model, const ForwardTrace& trace,
              double d_thermal, double d_gain, std::span<double> grads) {
    const ModelConfig& cfg = model.config;
    const ParamLayout& lay = model.layout;
    if (grads.size() != lay.total)
        throw std::runtime_error("backward: gradient buffer does not match parameter layout");
    if (static_cast<int>(trace.flat.size()) != lay.flat ||
        trace.input.shape != std::vector<int>{cfg.n_frames, cfg.input_h, cfg.input_w})
        throw std::runtime_error("backward: trace does not match this model");

    auto gslice = [&](const char* name) {
        const LayerSpec& s = lay.layer(name);
        return grads.data() + s.offset;
    };

    std::vector<double> d_flat(static_cast<std::size_t>(lay.flat), 0.0);

    // Thermal head.
    {
        std::vector<double> d_fc2_act(kFc2Units);
        kern::dense_bwd_params(trace.fc2_act.data(), kFc2Units, &d_thermal, 1,
                               gslice("out_w"), gslice("out_b"));
        kern::dense_bwd_input(model.layer("out_w").data(), 1, kFc2Units, &d_thermal, d_fc2_act.data());

        std::vector<double> d_fc2_pre(kFc2Units);
        kern::relu_bwd(trace.fc2_pre.data(), d_fc2_act.data(), kFc2Units, d_fc2_pre.data());

        std::vector<double> d_fc1_act(kFc1Units);
        kern::dense_bwd_params(trace.fc1_act.data(), kFc1Units, d_fc2_pre.data(), kFc2Units,
                               gslice("fc2_w"), gslice("fc2_b"));
        kern::dense_bwd_input(model.layer("fc2_w").data(), kFc2Units, kFc1Units,
                              d_fc2_pre.data(), d_fc1_act.data());

        std::vector<double> d_fc1_pre(kFc1Units);
        kern::relu_bwd(trace.fc1_pre.data(), d_fc1_act.data(), kFc1Units, d_fc1_pre.data());

        kern::dense_bwd_params(trace.flat.data(), lay.flat, d_fc1_pre.data(), kFc1Units,
                               gslice("fc1_w"), gslice("fc1_b"));
        kern::dense_bwd_input(model.layer("fc1_w").data(), kFc1Units, lay.flat,
                              d_fc1_pre.data(), d_flat.data());
    }

    // Gain head shares the flattened backbone features.
    if (cfg.variant == Variant::fusion) {
        if (!trace.has_gain) throw std::runtime_error("backward: trace lacks gain head values");
        const double d_gain_pre = sigmoid_backward(trace.fusion_gain, d_gain);
        std::vector<double> d_gain_act(kGainFcUnits);
        kern::dense_bwd_params(trace.gain_fc_act.data(), kGainFcUnits, &d_gain_pre, 1,
                               gslice("gain_out_w"), gslice("gain_out_b"));
        kern::dense_bwd_input(model.layer("gain_out_w").data(), 1, kGainFcUnits,
                              &d_gain_pre, d_gain_act.data());

        std::vector<double> d_gain_fc_pre(kGainFcUnits);
        kern::relu_bwd(trace.gain_fc_pre.data(), d_gain_act.data(), kGainFcUnits, d_gain_fc_pre.data());

        kern::dense_bwd_params(trace.flat.data(), lay.flat, d_gain_fc_pre.data(), kGainFcUnits,
                               gslice("gain_fc_w"), gslice("gain_fc_b"));
        std::vector<double> d_flat_gain(static_cast<std::size_t>(lay.flat));
        kern::dense_bwd_input(model.layer("gain_fc_w").data(), kGainFcUnits, lay.flat,
                              d_gain_fc_pre.data(), d_flat_gain.data());
        for (std::size_t i = 0; i < d_flat.size(); ++i) d_flat[i] += d_flat_gain[i];
    }

    // Backbone.
    const int h = cfg.input_h;
    const int w = cfg.input_w;
    std::vector<double> d_conv2_pre(trace.conv2_pre.size());
    kern::relu_bwd(trace.conv2_pre.data.data(), d_flat.data(), d_conv2_pre.size(), d_conv2_pre.data());

    kern::conv2d_bwd_params(trace.pooled.data.data(), kConv1Filters, lay.pooled_h, lay.pooled_w,
                            d_conv2_pre.data(), kConv2Filters, gslice("conv2_w"), gslice("conv2_b"));
    std::vector<double> d_pooled(trace.pooled.size());
    kern::conv2d_bwd_input(model.layer("conv2_w").data(), kConv1Filters, lay.pooled_h, lay.pooled_w,
                           d_conv2_pre.data(), kConv2Filters, d_pooled.data());

    std::vector<double> d_conv1_act(trace.conv1_act.size());
    kern::maxpool2_bwd(trace.pool_argmax.data(), d_pooled.data(), d_pooled.size(),
                       d_conv1_act.data(), d_conv1_act.size());

    std::vector<double> d_conv1_pre(trace.conv1_pre.size());
    kern::relu_bwd(trace.conv1_pre.data.data(), d_conv1_act.data(), d_conv1_act.size(),
                   d_conv1_pre.data());

    // d_input is never consumed, so conv1 only needs parameter gradients.
    kern::conv2d_bwd_params(trace.input.data.data(), cfg.n_frames, h, w,
                            d_conv1_pre.data(), kConv1Filters, gslice("conv1_w"), gslice("conv1_b"));
}

std::size_t count_params(const ModelConfig& config) { return ParamLayout::of(config).total; }

ComplexityReport count_complexity(const ModelConfig& config) {
    const ParamLayout lay = ParamLayout::of(config);
    ComplexityReport r;
    auto add = [&r](const std::string& name, std::size_t params, std::size_t macs) {
        r.layers.push_back({name, params, macs});
        r.total_params += params;
        r.total_macs += macs;
    };
    const std::size_t in_hw = static_cast<std::size_t>(config.input_h) * config.input_w;
    const std::size_t pool_hw = static_cast<std::size_t>(lay.pooled_h) * lay.pooled_w;
    const std::size_t flat = static_cast<std::size_t>(lay.flat);

    add("conv1", lay.layer("conv1_w").size + lay.layer("conv1_b").size,
        kConv1Filters * in_hw * config.n_frames * 25);
    add("conv2", lay.layer("conv2_w").size + lay.layer("conv2_b").size,
        kConv2Filters * pool_hw * kConv1Filters * 25);
    add("fc1", lay.layer("fc1_w").size + lay.layer("fc1_b").size, flat * kFc1Units);
    add("fc2", lay.layer("fc2_w").size + lay.layer("fc2_b").size,
        static_cast<std::size_t>(kFc1Units) * kFc2Units);
    add("out", lay.layer("out_w").size + lay.layer("out_b").size, kFc2Units);
    if (config.variant == Variant::fusion) {
        add("gain_fc", lay.layer("gain_fc_w").size + lay.layer("gain_fc_b").size, flat * kGainFcUnits);
        add("gain_out", lay.layer("gain_out_w").size + lay.layer("gain_out_b").size, kGainFcUnits);
    }
    r.total_flops = 2 * r.total_macs;
    return r;
}

void save_model(const FusionModel& model, const std::string& path) {
    nlohmann::ordered_json header;
    header["format"] = kWeightFormat;
    header["version"] = kWeightVersion;
    header["config"] = {
        {"n_frames", model.config.n_frames},
        {"subsample", model.config.subsample},
        {"variant", variant_name(model.config.variant)},
        {"input_h", model.config.input_h},
        {"input_w", model.config.input_w},
    };
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const auto& s : model.layout.layers) layers.push_back({{"name", s.name}, {"shape", s.shape}});
    header["layers"] = layers;
    header["param_count"] = model.layout.total;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open weight file for writing: " + path);
    out << header.dump() << '\n';
    out.write(reinterpret_cast<const char*>(model.params.data()),
              static_cast<std::streamsize>(model.params.size() * sizeof(double)));
    if (!out) throw DataError("failed writing weight file: " + path);
}

FusionModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open weight file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("weight file has no header line: " + path);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("weight file header is not valid JSON (" + path + "): " + e.what());
    }
    if (header.value("format", "") != kWeightFormat || header.value("version", 0) != kWeightVersion)
        throw DataError("unsupported weight file format/version: " + path);

    const auto& jc = header.at("config");
    ModelConfig cfg = ModelConfig::make(jc.at("n_frames").get<int>(), jc.at("subsample").get<int>(),
                                        variant_from_name(jc.at("variant").get<std::string>()));

    FusionModel m;
    m.config = cfg;
    m.layout = ParamLayout::of(cfg);
    if (header.at("param_count").get<std::size_t>() != m.layout.total)
        throw DataError("weight file parameter count does not match its config: " + path);

    const auto& jl = header.at("layers");
    if (jl.size() != m.layout.layers.size()) throw DataError("weight file layer list mismatch: " + path);
    for (std::size_t i = 0; i < jl.size(); ++i) {
        if (jl[i].at("name").get<std::string>() != m.layout.layers[i].name ||
            jl[i].at("shape").get<std::vector<int>>() != m.layout.layers[i].shape)
            throw DataError("weight file layer '" + m.layout.layers[i].name + "' mismatch: " + path);
    }

    m.params.assign(m.layout.total, 0.0);
    in.read(reinterpret_cast<char*>(m.params.data()),
            static_cast<std::streamsize>(m.params.size() * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(m.params.size() * sizeof(double)))
        throw DataError("weight file payload truncated: " + path);
    char extra;
    if (in.read(&extra, 1); in.gcount() != 0)
        throw DataError("weight file has trailing bytes: " + path);
    return m;
}

} // namespace tg
