#pragma once

#include <cmath>

#include "mixseg/tensor.hpp"

namespace mixseg {

struct Bhwc {
    std::int64_t b, h, w, c;
    bool batched;
};

// Images are (h,w,c); batches are (b,h,w,c). Ops accept either and keep rank.
inline Bhwc as_bhwc(const Shape& s) {
    if (s.size() == 3) return {1, s[0], s[1], s[2], false};
    if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
    throw ShapeError("expected (h,w,c) or (b,h,w,c) tensor, got " + shape_str(s));
}

inline Shape like_with_channels(const Shape& s, std::int64_t c) {
    Shape out = s;
    out.back() = c;
    return out;
}

namespace detail {

// C[M,N] += A[M,K] * B[K,N], all row-major.
template <class T>
void gemm_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[M,N] += A^T B with A[K,M], B[K,N].
template <class T>
void gemm_at_b_acc(const T* a, const T* b, T* c, std::int64_t k, std::int64_t m, std::int64_t n) {
    for (std::int64_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C[M,N] += A B^T with A[M,K], B[N,K].
template <class T>
void gemm_a_bt_acc(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = T(0);
            for (std::int64_t p = 0; p < k; ++p) {
                acc += arow[p] * brow[p];
            }
            crow[j] += acc;
        }
    }
}

// Patch matrix for "same" zero-padded convolution. Row r = (b,oy,ox) in scan
// order; column ((ki*k)+kj)*c + z matches the (k,k,c,m) kernel flattening.
template <class T>
std::vector<T> im2col(const Tensor<T>& x, std::int64_t k) {
    const Bhwc d = as_bhwc(x.shape);
    const std::int64_t half = k / 2;
    const std::int64_t cols = k * k * d.c;
    std::vector<T> col(static_cast<std::size_t>(d.b * d.h * d.w * cols), T(0));
    const T* src = x.data.data();
    for (std::int64_t bi = 0; bi < d.b; ++bi) {
        const T* img = src + bi * d.h * d.w * d.c;
        for (std::int64_t oy = 0; oy < d.h; ++oy) {
            for (std::int64_t ox = 0; ox < d.w; ++ox) {
                T* row = col.data() + ((bi * d.h + oy) * d.w + ox) * cols;
                for (std::int64_t ki = 0; ki < k; ++ki) {
                    const std::int64_t iy = oy + ki - half;
                    if (iy < 0 || iy >= d.h) continue;
                    for (std::int64_t kj = 0; kj < k; ++kj) {
                        const std::int64_t ix = ox + kj - half;
                        if (ix < 0 || ix >= d.w) continue;
                        std::memcpy(row + (ki * k + kj) * d.c, img + (iy * d.w + ix) * d.c,
                                    sizeof(T) * static_cast<std::size_t>(d.c));
                    }
                }
            }
        }
    }
    return col;
}

// Scatter-add of a patch-matrix gradient back onto the input layout.
template <class T>
void col2im_acc(const std::vector<T>& dcol, Tensor<T>& dx_holder, std::int64_t k, const Bhwc& d) {
    const std::int64_t half = k / 2;
    const std::int64_t cols = k * k * d.c;
    T* dst = dx_holder.grad.data();
    for (std::int64_t bi = 0; bi < d.b; ++bi) {
        T* img = dst + bi * d.h * d.w * d.c;
        for (std::int64_t oy = 0; oy < d.h; ++oy) {
            for (std::int64_t ox = 0; ox < d.w; ++ox) {
                const T* row = dcol.data() + ((bi * d.h + oy) * d.w + ox) * cols;
                for (std::int64_t ki = 0; ki < k; ++ki) {
                    const std::int64_t iy = oy + ki - half;
                    if (iy < 0 || iy >= d.h) continue;
                    for (std::int64_t kj = 0; kj < k; ++kj) {
                        const std::int64_t ix = ox + kj - half;
                        if (ix < 0 || ix >= d.w) continue;
                        const T* s = row + (ki * k + kj) * d.c;
                        T* t = img + (iy * d.w + ix) * d.c;
                        for (std::int64_t z = 0; z < d.c; ++z) {
                            t[z] += s[z];
                        }
                    }
                }
            }
        }
    }
}

}  // namespace detail

// Cross-channel "same" convolution: kernel (k,k,c_in,m), bias (m), stride 1,
// zero padding, output spatial dims equal input dims.
template <class T>
TensorPtr<T> conv2d_same(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& kernel,
                         const TensorPtr<T>& bias) {
    const Bhwc d = as_bhwc(x->shape);
    if (kernel->rank() != 4) {
        throw ShapeError("conv2d_same: kernel must be (k,k,c,m), got " + shape_str(kernel->shape));
    }
    const std::int64_t k = kernel->dim(0);
    const std::int64_t m = kernel->dim(3);
    if (kernel->dim(1) != k) {
        throw ShapeError("conv2d_same: kernel must be square, got " + shape_str(kernel->shape));
    }
    if (k % 2 == 0 || k < 1) {
        throw ConfigError("conv2d_same: kernel size must be odd and >= 1, got " + std::to_string(k));
    }
    if (kernel->dim(2) != d.c) {
        throw ShapeError("conv2d_same: input " + shape_str(x->shape) + " has " + std::to_string(d.c) +
                         " channels but kernel " + shape_str(kernel->shape) + " expects " +
                         std::to_string(kernel->dim(2)));
    }
    if (bias->numel() != m) {
        throw ShapeError("conv2d_same: bias " + shape_str(bias->shape) + " does not match filter count " +
                         std::to_string(m));
    }

    const std::int64_t rows = d.b * d.h * d.w;
    const std::int64_t cols = k * k * d.c;
    auto out = make_zeros<T>(like_with_channels(x->shape, m));
    {
        std::vector<T> col = detail::im2col(*x, k);
        detail::gemm_acc(col.data(), kernel->data.data(), out->data.data(), rows, cols, m);
    }
    const T* bptr = bias->data.data();
    T* optr = out->data.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t f = 0; f < m; ++f) {
            optr[r * m + f] += bptr[f];
        }
    }

    if (tape.wants_grad({x, kernel, bias})) {
        tape.record("conv2d_same", {x, kernel, bias}, out, [x, kernel, bias, out, d, k, m, rows, cols]() {
            const T* dy = out->grad.data();
            if (bias->requires_grad) {
                bias->ensure_grad();
                T* db = bias->grad.data();
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t f = 0; f < m; ++f) {
                        db[f] += dy[r * m + f];
                    }
                }
            }
            if (kernel->requires_grad) {
                kernel->ensure_grad();
                std::vector<T> col = detail::im2col(*x, k);
                detail::gemm_at_b_acc(col.data(), dy, kernel->grad.data(), rows, cols, m);
            }
            if (x->requires_grad) {
                x->ensure_grad();
                std::vector<T> dcol(static_cast<std::size_t>(rows * cols), T(0));
                detail::gemm_a_bt_acc(dy, kernel->data.data(), dcol.data(), rows, m, cols);
                detail::col2im_acc(dcol, *x, k, d);
            }
        });
    }
    return out;
}

// Channel concatenation in argument order.
template <class T>
TensorPtr<T> concat_channels(Tape<T>& tape, const std::vector<TensorPtr<T>>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_channels: empty part list");
    }
    const Bhwc d0 = as_bhwc(parts[0]->shape);
    std::int64_t ctot = 0;
    for (const auto& p : parts) {
        const Bhwc d = as_bhwc(p->shape);
        if (d.b != d0.b || d.h != d0.h || d.w != d0.w || p->rank() != parts[0]->rank()) {
            throw ShapeError("concat_channels: spatial mismatch between " + shape_str(parts[0]->shape) +
                             " and " + shape_str(p->shape));
        }
        ctot += d.c;
    }
    const std::int64_t pixels = d0.b * d0.h * d0.w;
    auto out = make_zeros<T>(like_with_channels(parts[0]->shape, ctot));
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::int64_t pc = p->channels();
        const T* src = p->data.data();
        T* dst = out->data.data();
        for (std::int64_t i = 0; i < pixels; ++i) {
            std::memcpy(dst + i * ctot + off, src + i * pc, sizeof(T) * static_cast<std::size_t>(pc));
        }
        off += pc;
    }

    bool any = false;
    for (const auto& p : parts) any = any || p->requires_grad;
    if (tape.recording() && any) {
        tape.record("concat_channels", parts, out, [parts, offsets, out, pixels, ctot]() {
            const T* g = out->grad.data();
            for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                const auto& p = parts[pi];
                if (!p->requires_grad) continue;
                p->ensure_grad();
                const std::int64_t pc = p->channels();
                const std::int64_t o = offsets[pi];
                T* dst = p->grad.data();
                for (std::int64_t i = 0; i < pixels; ++i) {
                    const T* row = g + i * ctot + o;
                    T* drow = dst + i * pc;
                    for (std::int64_t z = 0; z < pc; ++z) drow[z] += row[z];
                }
            }
        });
    }
    return out;
}

// Channel slice [c0, c1). Inverse of concat_channels at the recorded offsets.
template <class T>
TensorPtr<T> slice_channels(Tape<T>& tape, const TensorPtr<T>& x, std::int64_t c0, std::int64_t c1) {
    const Bhwc d = as_bhwc(x->shape);
    if (c0 < 0 || c1 <= c0 || c1 > d.c) {
        throw ShapeError("slice_channels: invalid range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") for " + shape_str(x->shape));
    }
    const std::int64_t pixels = d.b * d.h * d.w;
    const std::int64_t cs = c1 - c0;
    auto out = make_zeros<T>(like_with_channels(x->shape, cs));
    const T* src = x->data.data();
    T* dst = out->data.data();
    for (std::int64_t i = 0; i < pixels; ++i) {
        std::memcpy(dst + i * cs, src + i * d.c + c0, sizeof(T) * static_cast<std::size_t>(cs));
    }
    if (tape.wants_grad({x})) {
        tape.record("slice_channels", {x}, out, [x, out, pixels, cs, c0, d]() {
            x->ensure_grad();
            const T* g = out->grad.data();
            T* dx = x->grad.data();
            for (std::int64_t i = 0; i < pixels; ++i) {
                for (std::int64_t z = 0; z < cs; ++z) {
                    dx[i * d.c + c0 + z] += g[i * cs + z];
                }
            }
        });
    }
    return out;
}

// 2x2 max pooling, stride 2. Gradient flows to the argmax only; ties resolve
// to the first element in window scan order.
template <class T>
TensorPtr<T> max_pool2(Tape<T>& tape, const TensorPtr<T>& x) {
    const Bhwc d = as_bhwc(x->shape);
    if (d.h % 2 != 0 || d.w % 2 != 0) {
        throw ShapeError("max_pool2: spatial dims must be even, got " + shape_str(x->shape));
    }
    const std::int64_t oh = d.h / 2, ow = d.w / 2;
    Shape oshape = x->shape;
    oshape[oshape.size() - 3] = oh;
    oshape[oshape.size() - 2] = ow;
    auto out = make_zeros<T>(oshape);
    auto argmax = std::make_shared<std::vector<std::int64_t>>(out->data.size());
    const T* src = x->data.data();
    T* dst = out->data.data();
    for (std::int64_t bi = 0; bi < d.b; ++bi) {
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                for (std::int64_t z = 0; z < d.c; ++z) {
                    T best = T(0);
                    std::int64_t best_idx = -1;
                    for (std::int64_t dy = 0; dy < 2; ++dy) {
                        for (std::int64_t dx = 0; dx < 2; ++dx) {
                            const std::int64_t idx =
                                ((bi * d.h + (2 * oy + dy)) * d.w + (2 * ox + dx)) * d.c + z;
                            if (best_idx < 0 || src[idx] > best) {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    const std::int64_t oidx = ((bi * oh + oy) * ow + ox) * d.c + z;
                    dst[oidx] = best;
                    (*argmax)[static_cast<std::size_t>(oidx)] = best_idx;
                }
            }
        }
    }
    if (tape.wants_grad({x})) {
        tape.record("max_pool2", {x}, out, [x, out, argmax]() {
            x->ensure_grad();
            const T* g = out->grad.data();
            T* dx = x->grad.data();
            for (std::size_t i = 0; i < out->data.size(); ++i) {
                dx[(*argmax)[i]] += g[i];
            }
        });
    }
    return out;
}

// Nearest-neighbour 2x upsampling; each source cell fills a 2x2 block.
template <class T>
TensorPtr<T> upsample2_nearest(Tape<T>& tape, const TensorPtr<T>& x) {
    const Bhwc d = as_bhwc(x->shape);
    Shape oshape = x->shape;
    oshape[oshape.size() - 3] = d.h * 2;
    oshape[oshape.size() - 2] = d.w * 2;
    auto out = make_zeros<T>(oshape);
    const T* src = x->data.data();
    T* dst = out->data.data();
    const std::int64_t oh = d.h * 2, ow = d.w * 2;
    for (std::int64_t bi = 0; bi < d.b; ++bi) {
        for (std::int64_t y = 0; y < oh; ++y) {
            for (std::int64_t xw = 0; xw < ow; ++xw) {
                const T* s = src + ((bi * d.h + y / 2) * d.w + xw / 2) * d.c;
                T* t = dst + ((bi * oh + y) * ow + xw) * d.c;
                std::memcpy(t, s, sizeof(T) * static_cast<std::size_t>(d.c));
            }
        }
    }
    if (tape.wants_grad({x})) {
        tape.record("upsample2_nearest", {x}, out, [x, out, d, oh, ow]() {
            x->ensure_grad();
            const T* g = out->grad.data();
            T* dx = x->grad.data();
            for (std::int64_t bi = 0; bi < d.b; ++bi) {
                for (std::int64_t y = 0; y < oh; ++y) {
                    for (std::int64_t xw = 0; xw < ow; ++xw) {
                        const T* s = g + ((bi * oh + y) * ow + xw) * d.c;
                        T* t = dx + ((bi * d.h + y / 2) * d.w + xw / 2) * d.c;
                        for (std::int64_t z = 0; z < d.c; ++z) t[z] += s[z];
                    }
                }
            }
        });
    }
    return out;
}

// Per-channel batch normalization over the batch x spatial axes.
// Train mode uses batch statistics (biased variance) and updates running
// stats with momentum; eval mode normalizes with the running stats.
template <class T>
TensorPtr<T> batch_norm(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& gamma,
                        const TensorPtr<T>& beta, std::vector<T>& running_mean,
                        std::vector<T>& running_var, bool training, double momentum = 0.1,
                        double eps = 1e-5) {
    const Bhwc d = as_bhwc(x->shape);
    const std::int64_t C = d.c;
    const std::int64_t N = d.b * d.h * d.w;
    if (N == 0) {
        throw DataError("batch_norm: zero-size batch");
    }
    if (gamma->numel() != C || beta->numel() != C) {
        throw ShapeError("batch_norm: gamma/beta length " + std::to_string(gamma->numel()) + "/" +
                         std::to_string(beta->numel()) + " does not match channel count " +
                         std::to_string(C));
    }
    if (static_cast<std::int64_t>(running_mean.size()) != C ||
        static_cast<std::int64_t>(running_var.size()) != C) {
        throw ShapeError("batch_norm: running stats size mismatch");
    }

    auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C), T(0));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C), T(0));
    const T* src = x->data.data();
    const std::int64_t total = x->numel();

    if (training) {
        std::vector<T> var(static_cast<std::size_t>(C), T(0));
        for (std::int64_t i = 0; i < total; ++i) {
            (*mean)[static_cast<std::size_t>(i % C)] += src[i];
        }
        for (auto& mch : *mean) mch /= static_cast<T>(N);
        for (std::int64_t i = 0; i < total; ++i) {
            const T dmu = src[i] - (*mean)[static_cast<std::size_t>(i % C)];
            var[static_cast<std::size_t>(i % C)] += dmu * dmu;
        }
        for (auto& vch : var) vch /= static_cast<T>(N);
        for (std::int64_t ch = 0; ch < C; ++ch) {
            (*inv_std)[ch] = T(1) / std::sqrt(var[ch] + static_cast<T>(eps));
            running_mean[ch] = static_cast<T>((1.0 - momentum) * running_mean[ch] + momentum * (*mean)[ch]);
            running_var[ch] = static_cast<T>((1.0 - momentum) * running_var[ch] + momentum * var[ch]);
        }
    } else {
        for (std::int64_t ch = 0; ch < C; ++ch) {
            (*mean)[ch] = running_mean[ch];
            (*inv_std)[ch] = T(1) / std::sqrt(running_var[ch] + static_cast<T>(eps));
        }
    }

    auto xhat = std::make_shared<std::vector<T>>(x->data.size());
    auto out = make_zeros<T>(x->shape);
    const T* gptr = gamma->data.data();
    const T* bptr = beta->data.data();
    T* optr = out->data.data();
    for (std::int64_t i = 0; i < total; ++i) {
        const std::size_t ch = static_cast<std::size_t>(i % C);
        const T xh = (src[i] - (*mean)[ch]) * (*inv_std)[ch];
        (*xhat)[static_cast<std::size_t>(i)] = xh;
        optr[i] = gptr[ch] * xh + bptr[ch];
    }

    if (tape.wants_grad({x, gamma, beta})) {
        tape.record("batch_norm", {x, gamma, beta}, out,
                    [x, gamma, beta, out, xhat, inv_std, training, C, N, total]() {
                        const T* g = out->grad.data();
                        if (beta->requires_grad) {
                            beta->ensure_grad();
                            T* db = beta->grad.data();
                            for (std::int64_t i = 0; i < total; ++i) db[i % C] += g[i];
                        }
                        if (gamma->requires_grad) {
                            gamma->ensure_grad();
                            T* dg = gamma->grad.data();
                            for (std::int64_t i = 0; i < total; ++i) {
                                dg[i % C] += g[i] * (*xhat)[static_cast<std::size_t>(i)];
                            }
                        }
                        if (!x->requires_grad) return;
                        x->ensure_grad();
                        const T* gam = gamma->data.data();
                        T* dx = x->grad.data();
                        if (!training) {
                            for (std::int64_t i = 0; i < total; ++i) {
                                const std::size_t ch = static_cast<std::size_t>(i % C);
                                dx[i] += g[i] * gam[ch] * (*inv_std)[ch];
                            }
                            return;
                        }
                        std::vector<T> mean_g(static_cast<std::size_t>(C), T(0));
                        std::vector<T> mean_gx(static_cast<std::size_t>(C), T(0));
                        for (std::int64_t i = 0; i < total; ++i) {
                            const std::size_t ch = static_cast<std::size_t>(i % C);
                            mean_g[ch] += g[i];
                            mean_gx[ch] += g[i] * (*xhat)[static_cast<std::size_t>(i)];
                        }
                        for (std::int64_t ch = 0; ch < C; ++ch) {
                            mean_g[ch] /= static_cast<T>(N);
                            mean_gx[ch] /= static_cast<T>(N);
                        }
                        for (std::int64_t i = 0; i < total; ++i) {
                            const std::size_t ch = static_cast<std::size_t>(i % C);
                            dx[i] += gam[ch] * (*inv_std)[ch] *
                                     (g[i] - mean_g[ch] - (*xhat)[static_cast<std::size_t>(i)] * mean_gx[ch]);
                        }
                    });
    }
    return out;
}

template <class T>
TensorPtr<T> relu(Tape<T>& tape, const TensorPtr<T>& x) {
    auto out = make_zeros<T>(x->shape);
    for (std::size_t i = 0; i < x->data.size(); ++i) {
        out->data[i] = x->data[i] > T(0) ? x->data[i] : T(0);
    }
    if (tape.wants_grad({x})) {
        tape.record("relu", {x}, out, [x, out]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->data.size(); ++i) {
                if (x->data[i] > T(0)) x->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

template <class T>
TensorPtr<T> sigmoid(Tape<T>& tape, const TensorPtr<T>& x) {
    auto out = make_zeros<T>(x->shape);
    for (std::size_t i = 0; i < x->data.size(); ++i) {
        out->data[i] = T(1) / (T(1) + std::exp(-x->data[i]));
    }
    if (tape.wants_grad({x})) {
        tape.record("sigmoid", {x}, out, [x, out]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->data.size(); ++i) {
                const T s = out->data[i];
                x->grad[i] += out->grad[i] * s * (T(1) - s);
            }
        });
    }
    return out;
}

// Elementwise clamp into [lo, hi]; clamped elements get zero gradient.
template <class T>
TensorPtr<T> clamp(Tape<T>& tape, const TensorPtr<T>& x, T lo, T hi) {
    auto out = make_zeros<T>(x->shape);
    for (std::size_t i = 0; i < x->data.size(); ++i) {
        out->data[i] = std::min(hi, std::max(lo, x->data[i]));
    }
    if (tape.wants_grad({x})) {
        tape.record("clamp", {x}, out, [x, out, lo, hi]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->data.size(); ++i) {
                if (x->data[i] >= lo && x->data[i] <= hi) x->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

template <class T>
TensorPtr<T> add(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) {
        throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    auto out = make_zeros<T>(a->shape);
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (tape.wants_grad({a, b})) {
        tape.record("add", {a, b}, out, [a, b, out]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i];
            }
        });
    }
    return out;
}

template <class T>
TensorPtr<T> mul(Tape<T>& tape, const TensorPtr<T>& a, const TensorPtr<T>& b) {
    if (a->shape != b->shape) {
        throw ShapeError("mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
    }
    auto out = make_zeros<T>(a->shape);
    for (std::size_t i = 0; i < a->data.size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (tape.wants_grad({a, b})) {
        tape.record("mul", {a, b}, out, [a, b, out]() {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->data.size(); ++i) a->grad[i] += out->grad[i] * b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->data.size(); ++i) b->grad[i] += out->grad[i] * a->data[i];
            }
        });
    }
    return out;
}

// x * alpha with alpha carrying a single channel broadcast over x's channels.
template <class T>
TensorPtr<T> scale_channels(Tape<T>& tape, const TensorPtr<T>& x, const TensorPtr<T>& alpha) {
    const Bhwc d = as_bhwc(x->shape);
    const Bhwc da = as_bhwc(alpha->shape);
    if (da.b != d.b || da.h != d.h || da.w != d.w || da.c != 1 || alpha->rank() != x->rank()) {
        throw ShapeError("scale_channels: alpha " + shape_str(alpha->shape) +
                         " must be single-channel and spatially match " + shape_str(x->shape));
    }
    const std::int64_t pixels = d.b * d.h * d.w;
    auto out = make_zeros<T>(x->shape);
    for (std::int64_t i = 0; i < pixels; ++i) {
        const T a = alpha->data[static_cast<std::size_t>(i)];
        for (std::int64_t z = 0; z < d.c; ++z) {
            out->data[static_cast<std::size_t>(i * d.c + z)] =
                x->data[static_cast<std::size_t>(i * d.c + z)] * a;
        }
    }
    if (tape.wants_grad({x, alpha})) {
        tape.record("scale_channels", {x, alpha}, out, [x, alpha, out, pixels, d]() {
            const T* g = out->grad.data();
            if (x->requires_grad) {
                x->ensure_grad();
                for (std::int64_t i = 0; i < pixels; ++i) {
                    const T a = alpha->data[static_cast<std::size_t>(i)];
                    for (std::int64_t z = 0; z < d.c; ++z) {
                        x->grad[static_cast<std::size_t>(i * d.c + z)] += g[i * d.c + z] * a;
                    }
                }
            }
            if (alpha->requires_grad) {
                alpha->ensure_grad();
                for (std::int64_t i = 0; i < pixels; ++i) {
                    T acc = T(0);
                    for (std::int64_t z = 0; z < d.c; ++z) {
                        acc += g[i * d.c + z] * x->data[static_cast<std::size_t>(i * d.c + z)];
                    }
                    alpha->grad[static_cast<std::size_t>(i)] += acc;
                }
            }
        });
    }
    return out;
}

// Mean binary cross-entropy. Probabilities are clamped to [1e-7, 1-1e-7];
// clamped elements get zero gradient (exact subgradient of the clamp).
template <class T>
TensorPtr<T> bce_loss(Tape<T>& tape, const TensorPtr<T>& probs, const TensorPtr<T>& target) {
    if (probs->shape != target->shape) {
        throw ShapeError("bce_loss: shape mismatch " + shape_str(probs->shape) + " vs " +
                         shape_str(target->shape));
    }
    for (T t : target->data) {
        if (t != T(0) && t != T(1)) {
            throw DataError("bce_loss: target values must be 0 or 1");
        }
    }
    const T lo = static_cast<T>(1e-7);
    const T hi = T(1) - lo;
    const std::int64_t n = probs->numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const T p = std::min(hi, std::max(lo, probs->data[static_cast<std::size_t>(i)]));
        const double t = static_cast<double>(target->data[static_cast<std::size_t>(i)]);
        acc -= t * std::log(static_cast<double>(p)) + (1.0 - t) * std::log(1.0 - static_cast<double>(p));
    }
    auto out = make_tensor<T>({1}, {static_cast<T>(acc / static_cast<double>(n))});
    if (tape.wants_grad({probs})) {
        tape.record("bce_loss", {probs, target}, out, [probs, target, out, lo, hi, n]() {
            if (!probs->requires_grad) return;
            probs->ensure_grad();
            const T g = out->grad[0];
            for (std::int64_t i = 0; i < n; ++i) {
                const T raw = probs->data[static_cast<std::size_t>(i)];
                if (raw < lo || raw > hi) continue;
                const T t = target->data[static_cast<std::size_t>(i)];
                probs->grad[static_cast<std::size_t>(i)] +=
                    g * (raw - t) / (raw * (T(1) - raw)) / static_cast<T>(n);
            }
        });
    }
    return out;
}

template <class T>
TensorPtr<T> sum(Tape<T>& tape, const TensorPtr<T>& x) {
    double acc = 0.0;
    for (T v : x->data) acc += static_cast<double>(v);
    auto out = make_tensor<T>({1}, {static_cast<T>(acc)});
    if (tape.wants_grad({x})) {
        tape.record("sum", {x}, out, [x, out]() {
            x->ensure_grad();
            for (auto& gv : x->grad) gv += out->grad[0];
        });
    }
    return out;
}

// sum_i w_i * x_i; the gradcheck harness uses this to probe ops with an
// asymmetric downstream signal instead of plain sum.
template <class T>
TensorPtr<T> weighted_sum(Tape<T>& tape, const TensorPtr<T>& x, std::shared_ptr<std::vector<T>> w) {
    if (static_cast<std::int64_t>(w->size()) != x->numel()) {
        throw ShapeError("weighted_sum: weight length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < x->data.size(); ++i) acc += static_cast<double>(x->data[i]) * (*w)[i];
    auto out = make_tensor<T>({1}, {static_cast<T>(acc)});
    if (tape.wants_grad({x})) {
        tape.record("weighted_sum", {x}, out, [x, out, w]() {
            x->ensure_grad();
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += out->grad[0] * (*w)[i];
        });
    }
    return out;
}

}  // namespace mixseg
