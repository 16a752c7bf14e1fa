#include "thermogyro/nn_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "thermogyro/errors.hpp"

namespace tg {

namespace kern {

// Kernel geometry is fixed: 5x5, stride 1, zero padding 2. The forward and
// input-gradient passes share one core that runs over an explicitly padded
// copy of the source, so the inner loop is a branch-free row sweep with all
// 25 taps unrolled. The input gradient is the same correlation with the
// kernel flipped and its channel axes swapped.

namespace {

// Copies [c,h,w] into a [c,h+4,w+4] zero-padded scratch.
void pad2(const double* in, int c, int h, int w, std::vector<double>& padded) {
    const int ph = h + 4;
    const int pw = w + 4;
    padded.assign(static_cast<std::size_t>(c) * ph * pw, 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double* src = in + static_cast<std::size_t>(ch) * h * w;
        double* dst = padded.data() + (static_cast<std::size_t>(ch) * ph + 2) * pw + 2;
        for (int y = 0; y < h; ++y)
            std::copy(src + static_cast<std::size_t>(y) * w, src + static_cast<std::size_t>(y + 1) * w,
                      dst + static_cast<std::size_t>(y) * pw);
    }
}

// out[oc,y,x] = bias[oc] + sum_{ic,t} weights[oc,ic,t] * padded[ic,y+t/5,x+t%5]
void conv5_padded(const double* padded, int cin, int h, int w,
                  const double* weights, int cout, const double* bias, double* out) {
    const int pw = w + 4;
    const std::size_t pplane = static_cast<std::size_t>(h + 4) * pw;
    const std::size_t oplane = static_cast<std::size_t>(h) * w;
    for (int oc = 0; oc < cout; ++oc) {
        double* ob = out + oc * oplane;
        std::fill(ob, ob + oplane, bias ? bias[oc] : 0.0);
        for (int ic = 0; ic < cin; ++ic) {
            const double* wt = weights + ((static_cast<std::size_t>(oc) * cin) + ic) * 25;
            const double* pplane_base = padded + ic * pplane;
            for (int y = 0; y < h; ++y) {
                const double* r0 = pplane_base + static_cast<std::size_t>(y) * pw;
                const double* r1 = r0 + pw;
                const double* r2 = r1 + pw;
                const double* r3 = r2 + pw;
                const double* r4 = r3 + pw;
                double* orow = ob + static_cast<std::size_t>(y) * w;
                for (int x = 0; x < w; ++x) {
                    const double acc0 = wt[0] * r0[x] + wt[1] * r0[x + 1] + wt[2] * r0[x + 2] +
                                        wt[3] * r0[x + 3] + wt[4] * r0[x + 4];
                    const double acc1 = wt[5] * r1[x] + wt[6] * r1[x + 1] + wt[7] * r1[x + 2] +
                                        wt[8] * r1[x + 3] + wt[9] * r1[x + 4];
                    const double acc2 = wt[10] * r2[x] + wt[11] * r2[x + 1] + wt[12] * r2[x + 2] +
                                        wt[13] * r2[x + 3] + wt[14] * r2[x + 4];
                    const double acc3 = wt[15] * r3[x] + wt[16] * r3[x + 1] + wt[17] * r3[x + 2] +
                                        wt[18] * r3[x + 3] + wt[19] * r3[x + 4];
                    const double acc4 = wt[20] * r4[x] + wt[21] * r4[x + 1] + wt[22] * r4[x + 2] +
                                        wt[23] * r4[x + 3] + wt[24] * r4[x + 4];
                    orow[x] += ((acc0 + acc1) + (acc2 + acc3)) + acc4;
                }
            }
        }
    }
}

thread_local std::vector<double> conv_pad_scratch;
thread_local std::vector<double> conv_flip_scratch;

} // namespace

void conv2d_fwd(const double* in, int cin, int h, int w,
                const double* weights, int cout, const double* bias, double* out) {
    pad2(in, cin, h, w, conv_pad_scratch);
    conv5_padded(conv_pad_scratch.data(), cin, h, w, weights, cout, bias, out);
}

void conv2d_bwd_input(const double* weights, int cin, int h, int w,
                      const double* d_out, int cout, double* d_in) {
    // d_in = conv(d_out, flip(weights) with channel axes swapped)
    conv_flip_scratch.resize(static_cast<std::size_t>(cin) * cout * 25);
    for (int oc = 0; oc < cout; ++oc) {
        for (int ic = 0; ic < cin; ++ic) {
            const double* src = weights + ((static_cast<std::size_t>(oc) * cin) + ic) * 25;
            double* dst = conv_flip_scratch.data() + ((static_cast<std::size_t>(ic) * cout) + oc) * 25;
            for (int t = 0; t < 25; ++t) dst[t] = src[24 - t];
        }
    }
    pad2(d_out, cout, h, w, conv_pad_scratch);
    conv5_padded(conv_pad_scratch.data(), cout, h, w, conv_flip_scratch.data(), cin, nullptr, d_in);
}

void conv2d_bwd_params(const double* in, int cin, int h, int w,
                       const double* d_out, int cout, double* d_weights, double* d_bias) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int oc = 0; oc < cout; ++oc) {
        const double* doplane = d_out + oc * plane;
        d_bias[oc] += sum(doplane, static_cast<int>(plane));
        for (int ic = 0; ic < cin; ++ic) {
            const double* iplane = in + ic * plane;
            double* wbase = d_weights + ((static_cast<std::size_t>(oc) * cin) + ic) * 25;
            for (int ku = 0; ku < 5; ++ku) {
                const int ylo = std::max(0, 2 - ku);
                const int yhi = std::min(h, h + 2 - ku);
                for (int kv = 0; kv < 5; ++kv) {
                    const int xlo = std::max(0, 2 - kv);
                    const int xhi = std::min(w, w + 2 - kv);
                    const int shift = kv - 2;
                    wbase[ku * 5 + kv] +=
                        dot2d(doplane + static_cast<std::size_t>(ylo) * w + xlo, w,
                              iplane + static_cast<std::size_t>(ylo + ku - 2) * w + shift + xlo, w,
                              yhi - ylo, xhi - xlo);
                }
            }
        }
    }
}

void gemm_nt_acc(const double* A, int m, const double* B, int n, int k, double* C) {
    constexpr int kBlock = 16;
    for (int j0 = 0; j0 < n; j0 += kBlock) {
        const int j1 = std::min(n, j0 + kBlock);
        for (int i = 0; i < m; ++i) {
            const double* arow = A + static_cast<std::size_t>(i) * k;
            double* crow = C + static_cast<std::size_t>(i) * n;
            for (int j = j0; j < j1; ++j) crow[j] += dot(arow, B + static_cast<std::size_t>(j) * k, k);
        }
    }
}

void gemm_tn_acc(const double* A, int k, int m, const double* B, int n, double* C) {
    constexpr int kBlock = 16;
    for (int i0 = 0; i0 < m; i0 += kBlock) {
        const int i1 = std::min(m, i0 + kBlock);
        for (int l = 0; l < k; ++l) {
            const double* brow = B + static_cast<std::size_t>(l) * n;
            const double* arow = A + static_cast<std::size_t>(l) * m;
            for (int i = i0; i < i1; ++i) {
                if (arow[i] != 0.0) axpy(C + static_cast<std::size_t>(i) * n, arow[i], brow, n);
            }
        }
    }
}

void gemm_nn_acc(const double* A, int m, int k, const double* B, int n, double* C) {
    constexpr int kBlock = 16;
    for (int l0 = 0; l0 < k; l0 += kBlock) {
        const int l1 = std::min(k, l0 + kBlock);
        for (int i = 0; i < m; ++i) {
            const double* arow = A + static_cast<std::size_t>(i) * k;
            double* crow = C + static_cast<std::size_t>(i) * n;
            for (int l = l0; l < l1; ++l) {
                if (arow[l] != 0.0) axpy(crow, arow[l], B + static_cast<std::size_t>(l) * n, n);
            }
        }
    }
}

void maxpool2_fwd(const double* in, int c, int h, int w, double* out, int* argmax) {
    const int oh = h / 2;
    const int ow = w / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch) {
        const double* iplane = in + ch * plane;
        for (int y = 0; y < oh; ++y) {
            const double* r0 = iplane + static_cast<std::size_t>(2 * y) * w;
            const double* r1 = r0 + w;
            for (int x = 0; x < ow; ++x, ++o) {
                const int x0 = 2 * x;
                // Row-major scan of the window; strict > keeps the first max.
                double best = r0[x0];
                int bi = 0;
                if (r0[x0 + 1] > best) { best = r0[x0 + 1]; bi = 1; }
                if (r1[x0] > best) { best = r1[x0]; bi = 2; }
                if (r1[x0 + 1] > best) { best = r1[x0 + 1]; bi = 3; }
                out[o] = best;
                const int iy = 2 * y + bi / 2;
                const int ix = x0 + bi % 2;
                argmax[o] = static_cast<int>(ch * plane) + iy * w + ix;
            }
        }
    }
}

void maxpool2_bwd(const int* argmax, const double* d_out, std::size_t n_out,
                  double* d_in, std::size_t n_in) {
    std::fill(d_in, d_in + n_in, 0.0);
    for (std::size_t i = 0; i < n_out; ++i) d_in[argmax[i]] += d_out[i];
}

void dense_fwd(const double* in, int n, const double* weights, int m,
               const double* bias, double* out) {
    for (int i = 0; i < m; ++i) {
        out[i] = dot(weights + static_cast<std::size_t>(i) * n, in, n) + bias[i];
    }
}

void dense_bwd_input(const double* weights, int m, int n, const double* d_out, double* d_in) {
    std::fill(d_in, d_in + n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double g = d_out[i];
        const double* wrow = weights + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) d_in[j] += g * wrow[j];
    }
}

void dense_bwd_params(const double* in, int n, const double* d_out, int m,
                      double* d_weights, double* d_bias) {
    for (int i = 0; i < m; ++i) {
        const double g = d_out[i];
        d_bias[i] += g;
        double* wrow = d_weights + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) wrow[j] += g * in[j];
    }
}

void relu_fwd(const double* x, std::size_t n, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_bwd(const double* x, const double* d_y, std::size_t n, double* d_x) {
    for (std::size_t i = 0; i < n; ++i) d_x[i] = x[i] > 0.0 ? d_y[i] : 0.0;
}

} // namespace kern

namespace {

void check_conv_args(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (input.rank() != 3) throw std::invalid_argument("conv2d: input must be [C_in,H,W]");
    if (weights.rank() != 4 || weights.dim(2) != 5 || weights.dim(3) != 5)
        throw std::invalid_argument("conv2d: weights must be [C_out,C_in,5,5]");
    if (weights.dim(1) != input.dim(0))
        throw std::invalid_argument("conv2d: input channels " + std::to_string(input.dim(0)) +
                                    " do not match weight channels " + std::to_string(weights.dim(1)));
    require_shape(bias, {weights.dim(0)}, "conv2d bias");
}

} // namespace

Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    check_conv_args(input, weights, bias);
    Tensor out({weights.dim(0), input.dim(1), input.dim(2)});
    kern::conv2d_fwd(input.data.data(), input.dim(0), input.dim(1), input.dim(2),
                     weights.data.data(), weights.dim(0), bias.data.data(), out.data.data());
    return out;
}

LayerGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& d_output) {
    if (weights.rank() != 4) throw std::invalid_argument("conv2d: weights must be [C_out,C_in,5,5]");
    require_shape(d_output, {weights.dim(0), input.dim(1), input.dim(2)}, "conv2d d_output");
    if (weights.dim(1) != input.dim(0))
        throw std::invalid_argument("conv2d: input/weight channel mismatch");
    LayerGrads g;
    g.d_weights = Tensor(weights.shape);
    g.d_bias = Tensor({weights.dim(0)});
    g.d_input = Tensor(input.shape);
    kern::conv2d_bwd_params(input.data.data(), input.dim(0), input.dim(1), input.dim(2),
                            d_output.data.data(), weights.dim(0),
                            g.d_weights.data.data(), g.d_bias.data.data());
    kern::conv2d_bwd_input(weights.data.data(), input.dim(0), input.dim(1), input.dim(2),
                           d_output.data.data(), weights.dim(0), g.d_input.data.data());
    return g;
}

PoolResult maxpool2_forward(const Tensor& input) {
    if (input.rank() != 3) throw std::invalid_argument("maxpool2: input must be [C,H,W]");
    if (input.dim(1) < 2 || input.dim(2) < 2)
        throw std::invalid_argument("maxpool2: spatial dims must be >= 2, got " +
                                    std::to_string(input.dim(1)) + "x" + std::to_string(input.dim(2)));
    PoolResult r;
    r.output = Tensor({input.dim(0), input.dim(1) / 2, input.dim(2) / 2});
    r.indices.input_shape = input.shape;
    r.indices.argmax.assign(r.output.size(), 0);
    kern::maxpool2_fwd(input.data.data(), input.dim(0), input.dim(1), input.dim(2),
                       r.output.data.data(), r.indices.argmax.data());
    return r;
}

Tensor maxpool2_backward(const PoolIndices& indices, const Tensor& d_output) {
    if (d_output.size() != indices.argmax.size())
        throw std::invalid_argument("maxpool2 backward: d_output does not match pooling indices");
    Tensor d_in(indices.input_shape);
    kern::maxpool2_bwd(indices.argmax.data(), d_output.data.data(), d_output.size(),
                       d_in.data.data(), d_in.size());
    return d_in;
}

Tensor dense_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.rank() != 2) throw std::invalid_argument("dense: weights must be [m,n]");
    require_shape(input, {weights.dim(1)}, "dense input");
    require_shape(bias, {weights.dim(0)}, "dense bias");
    Tensor out({weights.dim(0)});
    kern::dense_fwd(input.data.data(), weights.dim(1), weights.data.data(), weights.dim(0),
                    bias.data.data(), out.data.data());
    return out;
}

LayerGrads dense_backward(const Tensor& input, const Tensor& weights, const Tensor& d_output) {
    if (weights.rank() != 2) throw std::invalid_argument("dense: weights must be [m,n]");
    require_shape(input, {weights.dim(1)}, "dense input");
    require_shape(d_output, {weights.dim(0)}, "dense d_output");
    LayerGrads g;
    g.d_weights = Tensor(weights.shape);
    g.d_bias = Tensor({weights.dim(0)});
    g.d_input = Tensor(input.shape);
    kern::dense_bwd_params(input.data.data(), weights.dim(1), d_output.data.data(), weights.dim(0),
                           g.d_weights.data.data(), g.d_bias.data.data());
    kern::dense_bwd_input(weights.data.data(), weights.dim(0), weights.dim(1),
                          d_output.data.data(), g.d_input.data.data());
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape);
    kern::relu_fwd(x.data.data(), x.size(), y.data.data());
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& d_y) {
    require_shape(d_y, x.shape, "relu d_y");
    Tensor d_x(x.shape);
    kern::relu_bwd(x.data.data(), d_y.data.data(), x.size(), d_x.data.data());
    return d_x;
}

double sigmoid(double x) {
    // Evaluate the non-overflowing branch, then pin the result strictly
    // inside (0, 1): the saturated tails would otherwise round to exactly
    // 0 or 1 in double precision.
    double y;
    if (x >= 0.0) {
        y = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        y = e / (1.0 + e);
    }
    y = std::min(y, std::nextafter(1.0, 0.0));
    y = std::max(y, std::nextafter(0.0, 1.0));
    return y;
}

double sigmoid_backward(double y, double d_y) { return d_y * y * (1.0 - y); }

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state length mismatch");
    // One vectorized pass; any Inf/NaN entry poisons the sum.
    if (!std::isfinite(kern::sum(grads.data(), static_cast<int>(grads.size())))) {
        for (std::size_t i = 0; i < grads.size(); ++i) {
            if (!std::isfinite(grads[i]))
                throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));
        }
    }
    state.t += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    const std::size_t n = params.size();
    double* m = state.m.data();
    double* v = state.v.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mhat = m[i] / corr1;
        const double vhat = v[i] / corr2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> grad(x.size(), 0.0);
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + h;
        const double fp = f(point);
        point[i] = saved - h;
        const double fm = f(point);
        point[i] = saved;
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

} // namespace tg
