#include "thermogyro/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace tg {

namespace {

void check_batch(std::span<const double> predictions, std::span<const double> targets) {
    if (predictions.empty()) throw std::invalid_argument("loss: empty batch");
    if (predictions.size() != targets.size())
        throw std::invalid_argument("loss: predictions/targets length mismatch");
}

} // namespace

double adaptive_threshold(std::span<const double> predictions, std::span<const double> targets) {
    check_batch(predictions, targets);
    double max_abs = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double e = std::abs(predictions[i] - targets[i]);
        if (e > max_abs) max_abs = e;
    }
    return 0.2 * max_abs;
}

double berhu(double error, double c) {
    const double a = std::abs(error);
    if (a <= c || c <= 0.0) return a;
    return (error * error + c * c) / (2.0 * c);
}

double berhu_grad(double error, double c) {
    if (error == 0.0) return 0.0;
    const double a = std::abs(error);
    if (a <= c || c <= 0.0) return error > 0.0 ? 1.0 : -1.0;
    return error / c;
}

BatchLoss berhu_batch(std::span<const double> predictions, std::span<const double> targets) {
    const double c = adaptive_threshold(predictions, targets);
    const std::size_t n = predictions.size();
    BatchLoss out;
    out.threshold = c;
    out.grad.resize(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = predictions[i] - targets[i];
        sum += berhu(e, c);
        out.grad[i] = berhu_grad(e, c) / static_cast<double>(n);
    }
    out.loss = sum / static_cast<double>(n);
    return out;
}

BatchLoss mse_batch(std::span<const double> predictions, std::span<const double> targets) {
    check_batch(predictions, targets);
    const std::size_t n = predictions.size();
    BatchLoss out;
    out.grad.resize(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = predictions[i] - targets[i];
        sum += e * e;
        out.grad[i] = 2.0 * e / static_cast<double>(n);
    }
    out.loss = sum / static_cast<double>(n);
    return out;
}

} // namespace tg
