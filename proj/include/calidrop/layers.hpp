#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "calidrop/common.hpp"
#include "calidrop/rng.hpp"
#include "calidrop/tensor.hpp"

namespace calidrop {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// One learnable (or tracked) tensor with its gradient and momentum buffer.
// Batchnorm running statistics live here too with trainable=false so that
// checkpointing sees every piece of state through one registry.
template <class S>
struct Param {
    std::string name;
    Tensor<S> value;
    Tensor<S> grad;
    Tensor<S> momentum;
    bool decay = true;      // weight decay applies (convs/dense weights only)
    bool trainable = true;  // false: checkpointed but never stepped

    void init_shape(std::vector<int> shp, S fill = S(0)) {
        value = Tensor<S>(shp, fill);
        grad = Tensor<S>(shp, S(0));
        momentum = Tensor<S>(std::move(shp), S(0));
    }
};

// ---------------------------------------------------------------------------
// conv2d, NCHW, kernel (Cout, Cin, kh, kw), via im2col + GEMM.

inline int conv_out_extent(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Patch matrix layout: (n*Ho*Wo) rows x (C*kh*kw) cols, column-major, so each
// (c, ky, kx) tap is a contiguous column and the ox sweep writes unit-stride.
// The _range variants cover images [n0, n1) so callers can keep the patch
// buffer small enough to stay cache-resident.
template <class S>
void im2col_range(const Tensor<S>& in, int n0, int n1, int kh, int kw, int stride, int pad,
                  MatX<S>& col) {
    const int C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const int Ho = conv_out_extent(H, kh, stride, pad);
    const int Wo = conv_out_extent(W, kw, stride, pad);
    const std::int64_t rows = static_cast<std::int64_t>(n1 - n0) * Ho * Wo;
    col.setZero(rows, C * kh * kw);
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const int tap = (c * kh + ky) * kw + kx;
                // valid ox range: 0 <= ox*stride - pad + kx < W
                const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
                const int ox_hi = std::min(Wo - 1, (W - 1 + pad - kx) / stride);
                if (ox_hi < ox_lo) continue;
                S* colbase = col.data() + rows * tap;
                for (int n = n0; n < n1; ++n) {
                    const S* src =
                        in.data.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        S* dst = colbase + (static_cast<std::int64_t>(n - n0) * Ho + oy) * Wo;
                        const S* row = src + static_cast<std::int64_t>(iy) * W - pad + kx;
                        if (stride == 1) {
                            std::copy(row + ox_lo, row + ox_hi + 1, dst + ox_lo);
                        } else {
                            for (int ox = ox_lo; ox <= ox_hi; ++ox)
                                dst[ox] = row[static_cast<std::int64_t>(ox) * stride];
                        }
                    }
                }
            }
        }
    }
}

template <class S>
void im2col(const Tensor<S>& in, int kh, int kw, int stride, int pad, MatX<S>& col) {
    im2col_range(in, 0, in.dim(0), kh, kw, stride, pad, col);
}

template <class S>
void col2im_add_range(const MatX<S>& col, int n0, int n1, int kh, int kw, int stride, int pad,
                      Tensor<S>& out) {
    const int C = out.dim(1), H = out.dim(2), W = out.dim(3);
    const int Ho = conv_out_extent(H, kh, stride, pad);
    const int Wo = conv_out_extent(W, kw, stride, pad);
    const std::int64_t rows = static_cast<std::int64_t>(n1 - n0) * Ho * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const int tap = (c * kh + ky) * kw + kx;
                const int ox_lo = std::max(0, (pad - kx + stride - 1) / stride);
                const int ox_hi = std::min(Wo - 1, (W - 1 + pad - kx) / stride);
                if (ox_hi < ox_lo) continue;
                const S* colbase = col.data() + rows * tap;
                for (int n = n0; n < n1; ++n) {
                    S* dst = out.data.data() + (static_cast<std::int64_t>(n) * C + c) * H * W;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        const S* src =
                            colbase + (static_cast<std::int64_t>(n - n0) * Ho + oy) * Wo;
                        S* row = dst + static_cast<std::int64_t>(iy) * W - pad + kx;
                        for (int ox = ox_lo; ox <= ox_hi; ++ox)
                            row[static_cast<std::int64_t>(ox) * stride] += src[ox];
                    }
                }
            }
        }
    }
}

template <class S>
void col2im_add(const MatX<S>& col, int kh, int kw, int stride, int pad, Tensor<S>& out) {
    col2im_add_range(col, 0, out.dim(0), kh, kw, stride, pad, out);
}

// Images per patch-buffer chunk, sized so the buffer stays near the L2 cache.
template <class S>
int conv_chunk_images(int N, int taps, std::int64_t out_pixels_per_image) {
    const std::int64_t budget = static_cast<std::int64_t>(1.5e6) / sizeof(S);
    const std::int64_t per_image = taps * out_pixels_per_image;
    int chunk = static_cast<int>(std::max<std::int64_t>(1, budget / std::max<std::int64_t>(1, per_image)));
    return std::min(chunk, N);
}

template <class S>
Tensor<S> conv2d_forward(const Tensor<S>& in, const Tensor<S>& weights, const Tensor<S>& bias,
                         int stride, int pad) {
    if (in.ndim() != 4) throw ConfigError("conv2d: input must be 4-D, got " + in.shape_str());
    if (weights.ndim() != 4) throw ConfigError("conv2d: kernel must be 4-D");
    if (weights.dim(1) != in.dim(1))
        throw ConfigError("conv2d: input channels " + std::to_string(in.dim(1)) +
                          " != kernel input channels " + std::to_string(weights.dim(1)));
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    const int N = in.dim(0), Cout = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
    const int Ho = conv_out_extent(in.dim(2), kh, stride, pad);
    const int Wo = conv_out_extent(in.dim(3), kw, stride, pad);
    if (Ho <= 0 || Wo <= 0) throw ConfigError("conv2d: kernel larger than padded input");

    Eigen::Map<const MatX<S>> wmat(weights.data.data(), kh * kw * weights.dim(1), Cout);
    // weights tensor is (Cout, Cin*kh*kw) row-major == column-major (Cin*kh*kw, Cout).
    Tensor<S> out({N, Cout, Ho, Wo});
    const std::int64_t plane = static_cast<std::int64_t>(Ho) * Wo;
    const int chunk = conv_chunk_images<S>(N, kh * kw * weights.dim(1), plane);
    MatX<S> col, outmat;
    for (int n0 = 0; n0 < N; n0 += chunk) {
        const int n1 = std::min(N, n0 + chunk);
        im2col_range(in, n0, n1, kh, kw, stride, pad, col);
        outmat.noalias() = col * wmat;  // ((n1-n0)*Ho*Wo) x Cout
        for (int c = 0; c < Cout; ++c) outmat.col(c).array() += bias[c];
        // outmat column c holds channel c over (n, oy, ox); copy per-image slabs.
        for (int n = n0; n < n1; ++n)
            for (int c = 0; c < Cout; ++c) {
                S* dst = out.data.data() + (static_cast<std::int64_t>(n) * Cout + c) * plane;
                const S* src = outmat.data() + static_cast<std::int64_t>(c) * outmat.rows() +
                               static_cast<std::int64_t>(n - n0) * plane;
                std::copy(src, src + plane, dst);
            }
    }
    return out;
}

template <class S>
void conv2d_backward(const Tensor<S>& grad_out, const Tensor<S>& cached_input,
                     const Tensor<S>& weights, int stride, int pad, Tensor<S>& grad_input,
                     Tensor<S>& grad_weights, Tensor<S>& grad_bias) {
    const int N = cached_input.dim(0), Cout = weights.dim(0);
    const int kh = weights.dim(2), kw = weights.dim(3);
    const int Ho = grad_out.dim(2), Wo = grad_out.dim(3);
    if (grad_out.dim(0) != N || grad_out.dim(1) != Cout)
        throw UsageError("conv2d_backward: grad_out shape mismatch");

    const std::int64_t plane = static_cast<std::int64_t>(Ho) * Wo;
    const int taps = kh * kw * weights.dim(1);
    grad_weights = Tensor<S>(weights.shape, S(0));
    // grad_weights tensor (Cout, Cin*kh*kw) row-major == col-major (Cin*kh*kw, Cout).
    Eigen::Map<MatX<S>> gwmap(grad_weights.data.data(), taps, Cout);
    grad_bias = Tensor<S>({Cout}, S(0));
    Eigen::Map<const MatX<S>> wmat(weights.data.data(), taps, Cout);
    grad_input = Tensor<S>(cached_input.shape, S(0));

    const int chunk = conv_chunk_images<S>(N, taps, plane);
    MatX<S> col, gmat, gcol;
    for (int n0 = 0; n0 < N; n0 += chunk) {
        const int n1 = std::min(N, n0 + chunk);
        // Reassemble this chunk of grad_out as ((n1-n0)*Ho*Wo) x Cout column-major.
        gmat.resize(static_cast<Eigen::Index>(n1 - n0) * plane, Cout);
        for (int n = n0; n < n1; ++n)
            for (int c = 0; c < Cout; ++c) {
                const S* src =
                    grad_out.data.data() + (static_cast<std::int64_t>(n) * Cout + c) * plane;
                S* dst = gmat.data() + static_cast<std::int64_t>(c) * gmat.rows() +
                         static_cast<std::int64_t>(n - n0) * plane;
                std::copy(src, src + plane, dst);
            }

        im2col_range(cached_input, n0, n1, kh, kw, stride, pad, col);
        gwmap.noalias() += col.transpose() * gmat;
        for (int c = 0; c < Cout; ++c) grad_bias[c] += gmat.col(c).sum();

        gcol.noalias() = gmat * wmat.transpose();  // ((n1-n0)*Ho*Wo) x (Cin*kh*kw)
        col2im_add_range(gcol, n0, n1, kh, kw, stride, pad, grad_input);
    }
}

// ---------------------------------------------------------------------------
// dense: input (N, D), weights (out, D), bias (out)

template <class S>
Tensor<S> dense_forward(const Tensor<S>& in, const Tensor<S>& weights, const Tensor<S>& bias) {
    if (in.ndim() != 2) throw ConfigError("dense: input must be 2-D");
    if (weights.dim(1) != in.dim(1)) throw ConfigError("dense: feature dim mismatch");
    const int N = in.dim(0), D = in.dim(1), O = weights.dim(0);
    Eigen::Map<const MatX<S>> x(in.data.data(), D, N);
    Eigen::Map<const MatX<S>> w(weights.data.data(), D, O);
    Tensor<S> out({N, O});
    Eigen::Map<MatX<S>> y(out.data.data(), O, N);
    y.noalias() = w.transpose() * x;
    for (int n = 0; n < N; ++n)
        for (int o = 0; o < O; ++o) out.at2(n, o) += bias[o];
    return out;
}

template <class S>
void dense_backward(const Tensor<S>& grad_out, const Tensor<S>& cached_input,
                    const Tensor<S>& weights, Tensor<S>& grad_input, Tensor<S>& grad_weights,
                    Tensor<S>& grad_bias) {
    const int N = cached_input.dim(0), D = cached_input.dim(1), O = weights.dim(0);
    Eigen::Map<const MatX<S>> x(cached_input.data.data(), D, N);
    Eigen::Map<const MatX<S>> g(grad_out.data.data(), O, N);
    Eigen::Map<const MatX<S>> w(weights.data.data(), D, O);

    grad_weights = Tensor<S>(weights.shape);
    Eigen::Map<MatX<S>> gw(grad_weights.data.data(), D, O);
    gw.noalias() = x * g.transpose();

    grad_bias = Tensor<S>({O});
    for (int o = 0; o < O; ++o) grad_bias[o] = g.row(o).sum();

    grad_input = Tensor<S>(cached_input.shape);
    Eigen::Map<MatX<S>> gx(grad_input.data.data(), D, N);
    gx.noalias() = w * g;
}

// ---------------------------------------------------------------------------
// relu

template <class S>
Tensor<S> relu_forward(const Tensor<S>& in) {
    Tensor<S> out(in.shape);
    for (std::int64_t i = 0; i < in.size(); ++i) out[i] = in[i] > S(0) ? in[i] : S(0);
    return out;
}

template <class S>
Tensor<S> relu_backward(const Tensor<S>& grad_out, const Tensor<S>& cached_input) {
    Tensor<S> g(grad_out.shape);
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] = cached_input[i] > S(0) ? grad_out[i] : S(0);
    return g;
}

// ---------------------------------------------------------------------------
// batchnorm over channels of NCHW input

enum class BnMode { Train, Eval };

template <class S>
struct BatchNormState {
    Param<S> gamma, beta;
    Param<S> running_mean, running_var;
    S momentum = S(0.1);
    S epsilon = S(1e-5);

    // forward cache
    Tensor<S> cached_input;
    std::vector<S> mean, invstd;

    explicit BatchNormState(int channels = 0) {
        if (channels > 0) init(channels);
    }
    void init(int channels) {
        gamma.init_shape({channels}, S(1));
        beta.init_shape({channels}, S(0));
        running_mean.init_shape({channels}, S(0));
        running_var.init_shape({channels}, S(1));
        gamma.decay = beta.decay = false;
        running_mean.trainable = running_var.trainable = false;
        running_mean.decay = running_var.decay = false;
    }
};

template <class S>
Tensor<S> batchnorm_forward(BatchNormState<S>& bn, const Tensor<S>& in, BnMode mode) {
    const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t per_c = static_cast<std::int64_t>(N) * H * W;
    Tensor<S> out(in.shape);
    bn.mean.assign(C, S(0));
    bn.invstd.assign(C, S(0));
    for (int c = 0; c < C; ++c) {
        S mean, var;
        if (mode == BnMode::Train) {
            S sum = 0, sq = 0;
            for (int n = 0; n < N; ++n)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w) {
                        S v = in.at4(n, c, h, w);
                        sum += v;
                        sq += v * v;
                    }
            mean = sum / S(per_c);
            var = sq / S(per_c) - mean * mean;
            if (var < S(0)) var = S(0);
            bn.running_mean.value[c] =
                (S(1) - bn.momentum) * bn.running_mean.value[c] + bn.momentum * mean;
            bn.running_var.value[c] =
                (S(1) - bn.momentum) * bn.running_var.value[c] + bn.momentum * var;
        } else {
            mean = bn.running_mean.value[c];
            var = bn.running_var.value[c];
        }
        const S invstd = S(1) / std::sqrt(var + bn.epsilon);
        bn.mean[c] = mean;
        bn.invstd[c] = invstd;
        const S g = bn.gamma.value[c], b = bn.beta.value[c];
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w)
                    out.at4(n, c, h, w) = (in.at4(n, c, h, w) - mean) * invstd * g + b;
    }
    bn.cached_input = in;
    return out;
}

// Backward for train-mode statistics (gradients flow through batch mean/var).
template <class S>
Tensor<S> batchnorm_backward(BatchNormState<S>& bn, const Tensor<S>& grad_out, BnMode mode) {
    const Tensor<S>& in = bn.cached_input;
    const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    const std::int64_t per_c = static_cast<std::int64_t>(N) * H * W;
    Tensor<S> grad_in(in.shape);
    for (int c = 0; c < C; ++c) {
        const S mean = bn.mean[c], invstd = bn.invstd[c], g = bn.gamma.value[c];
        S sum_g = 0, sum_gx = 0;
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const S go = grad_out.at4(n, c, h, w);
                    const S xhat = (in.at4(n, c, h, w) - mean) * invstd;
                    sum_g += go;
                    sum_gx += go * xhat;
                }
        bn.gamma.grad[c] += sum_gx;
        bn.beta.grad[c] += sum_g;
        for (int n = 0; n < N; ++n)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const S go = grad_out.at4(n, c, h, w);
                    const S xhat = (in.at4(n, c, h, w) - mean) * invstd;
                    if (mode == BnMode::Train) {
                        grad_in.at4(n, c, h, w) =
                            g * invstd *
                            (go - sum_g / S(per_c) - xhat * sum_gx / S(per_c));
                    } else {
                        grad_in.at4(n, c, h, w) = g * invstd * go;
                    }
                }
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// global average pool (N,C,H,W) -> (N,C)

template <class S>
Tensor<S> global_avg_pool(const Tensor<S>& in) {
    const int N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
    Tensor<S> out({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            S s = 0;
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) s += in.at4(n, c, h, w);
            out.at2(n, c) = s / S(H * W);
        }
    return out;
}

template <class S>
Tensor<S> global_avg_pool_backward(const Tensor<S>& grad_out, const std::vector<int>& in_shape) {
    const int N = in_shape[0], C = in_shape[1], H = in_shape[2], W = in_shape[3];
    Tensor<S> g({N, C, H, W});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            const S v = grad_out.at2(n, c) / S(H * W);
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) g.at4(n, c, h, w) = v;
        }
    return g;
}

// ---------------------------------------------------------------------------
// softmax + cross entropy (mean over batch), max-subtracted for stability

template <class S>
Tensor<S> softmax_rows(const Tensor<S>& logits) {
    const int N = logits.dim(0), K = logits.dim(1);
    Tensor<S> p(logits.shape);
    for (int n = 0; n < N; ++n) {
        S mx = logits.at2(n, 0);
        for (int k = 1; k < K; ++k) mx = std::max(mx, logits.at2(n, k));
        S sum = 0;
        for (int k = 0; k < K; ++k) {
            const S e = std::exp(logits.at2(n, k) - mx);
            p.at2(n, k) = e;
            sum += e;
        }
        for (int k = 0; k < K; ++k) p.at2(n, k) /= sum;
    }
    return p;
}

template <class S>
std::pair<S, Tensor<S>> softmax_cross_entropy(const Tensor<S>& logits,
                                              const std::vector<int>& labels) {
    const int N = logits.dim(0), K = logits.dim(1);
    if (K < 2) throw ConfigError("softmax_cross_entropy: K must be >= 2");
    if (static_cast<int>(labels.size()) != N)
        throw ConfigError("softmax_cross_entropy: label count mismatch");
    Tensor<S> grad(logits.shape);
    S loss = 0;
    for (int n = 0; n < N; ++n) {
        const int y = labels[static_cast<size_t>(n)];
        if (y < 0 || y >= K) throw ConfigError("label out of range");
        S mx = logits.at2(n, 0);
        for (int k = 1; k < K; ++k) mx = std::max(mx, logits.at2(n, k));
        S sum = 0;
        for (int k = 0; k < K; ++k) sum += std::exp(logits.at2(n, k) - mx);
        const S logsum = std::log(sum) + mx;
        loss += logsum - logits.at2(n, y);
        for (int k = 0; k < K; ++k) {
            const S p = std::exp(logits.at2(n, k) - logsum);
            grad.at2(n, k) = (p - (k == y ? S(1) : S(0))) / S(N);
        }
    }
    return {loss / S(N), std::move(grad)};
}

// ---------------------------------------------------------------------------
// SGD with momentum; v <- mu*v + g + wd*w ; w <- w - lr*v.
// Weight decay never touches bias or batchnorm parameters (decay flag).

template <class S>
void sgd_step(std::vector<Param<S>*>& params, S lr, S momentum, S weight_decay) {
    for (Param<S>* p : params) {
        if (!p->trainable) continue;
        if (!p->grad.all_finite())
            throw NumericError("non-finite gradient in parameter '" + p->name + "'");
        const S wd = p->decay ? weight_decay : S(0);
        for (std::int64_t i = 0; i < p->value.size(); ++i) {
            p->momentum[i] = momentum * p->momentum[i] + p->grad[i] + wd * p->value[i];
            p->value[i] -= lr * p->momentum[i];
        }
    }
}

// Fan-in scaled Gaussian init (std = sqrt(2/fan_in)) for conv/dense weights.
template <class S>
void init_he_normal(Tensor<S>& w, int fan_in, RngStream& rng) {
    const double std = std::sqrt(2.0 / fan_in);
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<S>(rng.normal() * std);
}

}  // namespace calidrop
