#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "thermogyro/dataset.hpp"
#include "thermogyro/model.hpp"

namespace tg {

enum class LossKind { berhu, mse };

struct TrainConfig {
    double lr = 1e-3;
    int batch = 32;
    int epochs = 40;
    std::uint64_t seed = 0;
    bool shuffle = true;
    LossKind loss = LossKind::berhu;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean per-sample training loss, one entry per epoch
};

// Mini-batch Adam on the berHu objective (threshold readapted per batch).
// The fusion variant trains on the fused output with the gyro average as a
// constant input; thermal-only trains the same loss on the thermal output.
// Deterministic for a fixed seed. Throws NumericError if the loss goes
// non-finite.
TrainResult train(FusionModel& model, const std::vector<Sample>& samples, const TrainConfig& cfg);

struct EvalResult {
    double mse = 0.0;          // normalized speed units
    double rmse_deg_s = 0.0;
};

// Mean squared error of the model's speed estimate over `samples`. The
// fusion variant scores the fused output unless `gain_override` pins the
// gain (0 reduces it to the gyro average, 1 to the thermal estimate).
EvalResult evaluate(const FusionModel& model, const std::vector<Sample>& samples,
                    std::optional<double> gain_override = std::nullopt);

// The model's speed prediction for one sample, normalized units.
double predict(const FusionModel& model, const Sample& sample,
               std::optional<double> gain_override = std::nullopt);

} // namespace tg
