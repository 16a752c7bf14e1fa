#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "thermogyro/tensor.hpp"

namespace tg {

// Gradients of one layer with respect to its weights, bias and input.
struct LayerGrads {
    Tensor d_weights;
    Tensor d_bias;
    Tensor d_input;
};

// Pooling bookkeeping: the input shape plus the winning input position
// (flat index) of every 2x2 window, as required by the backward pass.
struct PoolIndices {
    std::vector<int> input_shape;
    std::vector<int> argmax;
};

struct PoolResult {
    Tensor output;
    PoolIndices indices;
};

// 2D convolution, 5x5 kernels, stride 1, zero padding 2 ("same" output size).
// input [C_in,H,W], weights [C_out,C_in,5,5], bias [C_out] -> [C_out,H,W].
Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
LayerGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& d_output);

// Non-overlapping 2x2 max pooling, stride 2; a trailing odd row/column is
// dropped. Ties go to the first position in row-major order.
PoolResult maxpool2_forward(const Tensor& input);
Tensor maxpool2_backward(const PoolIndices& indices, const Tensor& d_output);

// Fully connected layer: output = weights * input + bias.
// input [n], weights [m,n], bias [m] -> [m].
Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias);
LayerGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& d_output);

// Elementwise ReLU; the gradient at exactly 0 is defined as 0.
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& d_y);

// Logistic sigmoid; output strictly inside (0, 1) for finite inputs.
double sigmoid(double x);
// d_x from the *output* y = sigmoid(x): d_x = d_y * y * (1 - y).
double sigmoid_backward(double y, double d_y);

// Adam optimizer state over one flat parameter vector.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr = 1e-3;

    AdamState() = default;
    explicit AdamState(std::size_t n, double learning_rate = 1e-3)
        : m(n, 0.0), v(n, 0.0), lr(learning_rate) {}
};

// One bias-corrected Adam update. Throws NumericError on non-finite
// gradient entries.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// Central-difference gradient oracle for scalar functions of a parameter
// vector: (f(x + h e_i) - f(x - h e_i)) / (2h). Test-grade, O(n) evals.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h = 1e-5);

// Raw kernels over preallocated buffers. These are what the model's hot
// path calls; the Tensor API above wraps them with shape validation.
namespace kern {

// Eight-lane accumulation so the reduction vectorizes without FP
// reassociation flags; summation order is fixed, results reproducible.
inline double dot(const double* a, const double* b, int n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

inline void axpy(double* c, double a, const double* b, int n) {
    for (int j = 0; j < n; ++j) c[j] += a * b[j];
}

inline double sum(const double* a, int n) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int k = 0; k < 8; ++k) acc[k] += a[i + k];
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += a[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// Dot over a strided 2D region with one horizontal reduction at the end;
// the per-row remainders go into a scalar tail lane.
inline double dot2d(const double* a, int stride_a, const double* b, int stride_b, int rows, int cols) {
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    double tail = 0.0;
    for (int r = 0; r < rows; ++r) {
        const double* ar = a + static_cast<std::size_t>(r) * stride_a;
        const double* br = b + static_cast<std::size_t>(r) * stride_b;
        int i = 0;
        for (; i + 8 <= cols; i += 8) {
            for (int k = 0; k < 8; ++k) acc[k] += ar[i + k] * br[i + k];
        }
        for (; i < cols; ++i) tail += ar[i] * br[i];
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
}

// Small blocked matrix products for the batched training path. All
// accumulate into C (row-major); the big operand is tiled so each tile
// stays cache-resident across the batch dimension.

// C[m x n] += A[m x k] * B[n x k]^T  (rows of A dotted with rows of B)
void gemm_nt_acc(const double* A, int m, const double* B, int n, int k, double* C);
// C[m x n] += A[k x m]^T * B[k x n]  (rank-k update over C row blocks)
void gemm_tn_acc(const double* A, int k, int m, const double* B, int n, double* C);
// C[m x n] += A[m x k] * B[k x n]    (axpy over B row blocks)
void gemm_nn_acc(const double* A, int m, int k, const double* B, int n, double* C);

void conv2d_fwd(const double* in, int cin, int h, int w,
                const double* weights, int cout, const double* bias, double* out);
void conv2d_bwd_input(const double* weights, int cin, int h, int w,
                      const double* d_out, int cout, double* d_in);
void conv2d_bwd_params(const double* in, int cin, int h, int w,
                       const double* d_out, int cout, double* d_weights, double* d_bias);

void maxpool2_fwd(const double* in, int c, int h, int w, double* out, int* argmax);
void maxpool2_bwd(const int* argmax, const double* d_out, std::size_t n_out,
                  double* d_in, std::size_t n_in);

void dense_fwd(const double* in, int n, const double* weights, int m,
               const double* bias, double* out);
void dense_bwd_input(const double* weights, int m, int n, const double* d_out, double* d_in);
void dense_bwd_params(const double* in, int n, const double* d_out, int m,
                      double* d_weights, double* d_bias);

void relu_fwd(const double* x, std::size_t n, double* y);
void relu_bwd(const double* x, const double* d_y, std::size_t n, double* d_x);

} // namespace kern

} // namespace tg
