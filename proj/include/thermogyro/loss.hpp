#pragma once

#include <span>
#include <vector>

namespace tg {

// Inverted Huber (berHu) objective: linear for small errors, quadratic for
// large ones, so the hard examples of a batch dominate the gradient. The
// switch point c adapts to the batch: c = 0.2 * max_i |error_i|.

// Batch-adaptive threshold. Throws std::invalid_argument on an empty batch.
double adaptive_threshold(std::span<const double> predictions, std::span<const double> targets);

// berhu(e, c) = |e|                 if |e| <= c
//             = (e^2 + c^2) / (2c)  otherwise.
// The degenerate c = 0 case (perfect batch) falls back to |e|.
double berhu(double error, double c);

// d berhu / d error, with c held constant. Zero at error = 0; the two
// branches agree at |error| = c, so the loss is C1 there.
double berhu_grad(double error, double c);

struct BatchLoss {
    double loss = 0.0;                // mean over the batch
    std::vector<double> grad;         // d(mean loss) / d(prediction_i)
    double threshold = 0.0;           // the c actually used (berhu only)
};

// Mean berHu over a batch with the adaptive threshold recomputed from that
// batch. c is treated as a constant during differentiation.
BatchLoss berhu_batch(std::span<const double> predictions, std::span<const double> targets);

// Mean squared error baseline; gradient 2 e_i / n.
BatchLoss mse_batch(std::span<const double> predictions, std::span<const double> targets);

} // namespace tg
