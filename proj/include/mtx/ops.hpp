// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "mtx/rng.hpp"
#include "mtx/tensor.hpp"

namespace mtx {

namespace detail {

// Row-major GEMM, C[MxN] (+)= A[MxK] * B[KxN]. The j-loop vectorizes.
template <typename T>
void mm(const T* A, const T* B, T* C, size_t M, size_t K, size_t N, bool accumulate) {
    for (size_t i = 0; i < M; ++i) {
        T* Crow = C + i * N;
        if (!accumulate)
            for (size_t j = 0; j < N; ++j) Crow[j] = T(0);
        const T* Arow = A + i * K;
        for (size_t k = 0; k < K; ++k) {
            T a = Arow[k];
            if (a == T(0)) continue;
            const T* Brow = B + k * N;
            for (size_t j = 0; j < N; ++j) Crow[j] += a * Brow[j];
        }
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// elementwise and broadcast arithmetic
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), ErrorCode::shape,
            "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto* pa = a.node();
    auto* pb = b.node();
    return detail::make_op<T>(
        a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
        [pa, pb](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i) {
                if (pa->requires_grad) pa->grad[i] += n.grad[i];
                if (pb->requires_grad) pb->grad[i] += n.grad[i];
            }
        },
        "add");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), ErrorCode::shape,
            "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    auto* pa = a.node();
    auto* pb = b.node();
    return detail::make_op<T>(
        a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()},
        [pa, pb](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i) {
                if (pa->requires_grad) pa->grad[i] += n.grad[i] * pb->value[i];
                if (pb->requires_grad) pb->grad[i] += n.grad[i] * pa->value[i];
            }
        },
        "mul");
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
    require(std::isfinite(double(s)), ErrorCode::numeric, "mul_scalar: non-finite scalar");
    std::vector<T> out(a.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * s;
    auto* pa = a.node();
    return detail::make_op<T>(
        a.shape(), std::move(out), {a.node_ptr()},
        [pa, s](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i] * s;
        },
        "mul_scalar");
}

// x [... x F] + b [F], broadcast over leading dims.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
    require(b.rank() == 1, ErrorCode::shape, "add_bias: bias must be rank 1");
    size_t f = b.shape()[0];
    require(x.shape().back() == f, ErrorCode::shape,
            "add_bias: last extent " + std::to_string(x.shape().back()) + " != bias size " +
                std::to_string(f));
    std::vector<T> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + b.data()[i % f];
    auto* px = x.node();
    auto* pb = b.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x.node_ptr(), b.node_ptr()},
        [px, pb, f](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i) {
                if (px->requires_grad) px->grad[i] += n.grad[i];
                if (pb->requires_grad) pb->grad[i % f] += n.grad[i];
            }
        },
        "add_bias");
}

// x [N x C x H x W] + b [C], broadcast over batch and spatial dims.
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& b) {
    require(x.rank() == 4 && b.rank() == 1, ErrorCode::shape,
            "add_channel_bias: expects NCHW input and rank-1 bias");
    size_t C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
    require(b.shape()[0] == C, ErrorCode::shape, "add_channel_bias: channel mismatch");
    std::vector<T> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + b.data()[(i / HW) % C];
    auto* px = x.node();
    auto* pb = b.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x.node_ptr(), b.node_ptr()},
        [px, pb, C, HW](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i) {
                if (px->requires_grad) px->grad[i] += n.grad[i];
                if (pb->requires_grad) pb->grad[(i / HW) % C] += n.grad[i];
            }
        },
        "add_channel_bias");
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T s = T(0);
    for (T v : x.data()) s += v;
    auto* px = x.node();
    return detail::make_op<T>(
        {1}, {s}, {x.node_ptr()},
        [px](TensorNode<T>& n) {
            for (size_t i = 0; i < px->grad.size(); ++i) px->grad[i] += n.grad[0];
        },
        "sum_all");
}

// ---------------------------------------------------------------------------
// shape manipulation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    require(shape_numel(shape) == x.numel(), ErrorCode::shape,
            "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto* px = x.node();
    return detail::make_op<T>(
        std::move(shape), x.data(), {x.node_ptr()},
        [px](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
        },
        "reshape");
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
    require(x.rank() == 2, ErrorCode::shape, "transpose2d: expects rank 2");
    size_t M = x.shape()[0], N = x.shape()[1];
    std::vector<T> out(x.numel());
    for (size_t i = 0; i < M; ++i)
        for (size_t j = 0; j < N; ++j) out[j * M + i] = x.data()[i * N + j];
    auto* px = x.node();
    return detail::make_op<T>(
        {N, M}, std::move(out), {x.node_ptr()},
        [px, M, N](TensorNode<T>& n) {
            for (size_t i = 0; i < M; ++i)
                for (size_t j = 0; j < N; ++j) px->grad[i * N + j] += n.grad[j * M + i];
        },
        "transpose2d");
}

// [B x M x N] -> [B x N x M]
template <typename T>
Tensor<T> transpose_last2(const Tensor<T>& x) {
    require(x.rank() == 3, ErrorCode::shape, "transpose_last2: expects rank 3");
    size_t B = x.shape()[0], M = x.shape()[1], N = x.shape()[2];
    std::vector<T> out(x.numel());
    for (size_t b = 0; b < B; ++b)
        for (size_t i = 0; i < M; ++i)
            for (size_t j = 0; j < N; ++j)
                out[(b * N + j) * M + i] = x.data()[(b * M + i) * N + j];
    auto* px = x.node();
    return detail::make_op<T>(
        {B, N, M}, std::move(out), {x.node_ptr()},
        [px, B, M, N](TensorNode<T>& n) {
            for (size_t b = 0; b < B; ++b)
                for (size_t i = 0; i < M; ++i)
                    for (size_t j = 0; j < N; ++j)
                        px->grad[(b * M + i) * N + j] += n.grad[(b * N + j) * M + i];
        },
        "transpose_last2");
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, size_t axis, size_t start, size_t len) {
    require(axis < x.rank(), ErrorCode::shape, "slice: axis out of range");
    require(start + len <= x.shape()[axis] && len > 0, ErrorCode::shape,
            "slice: range out of bounds");
    Shape oshape = x.shape();
    oshape[axis] = len;
    size_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
    size_t in_ax = x.shape()[axis];
    std::vector<T> out(shape_numel(oshape));
    for (size_t o = 0; o < outer; ++o)
        for (size_t a = 0; a < len; ++a)
            std::copy_n(&x.data()[(o * in_ax + start + a) * inner], inner,
                        &out[(o * len + a) * inner]);
    auto* px = x.node();
    return detail::make_op<T>(
        std::move(oshape), std::move(out), {x.node_ptr()},
        [px, outer, inner, in_ax, start, len](TensorNode<T>& n) {
            for (size_t o = 0; o < outer; ++o)
                for (size_t a = 0; a < len; ++a) {
                    const T* g = &n.grad[(o * len + a) * inner];
                    T* dst = &px->grad[(o * in_ax + start + a) * inner];
                    for (size_t i = 0; i < inner; ++i) dst[i] += g[i];
                }
        },
        "slice");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, size_t axis) {
    require(!parts.empty(), ErrorCode::shape, "concat: no inputs");
    const Shape& s0 = parts[0].shape();
    require(axis < s0.size(), ErrorCode::shape, "concat: axis out of range");
    size_t ax_total = 0;
    for (const auto& p : parts) {
        require(p.rank() == s0.size(), ErrorCode::shape, "concat: rank mismatch");
        for (size_t d = 0; d < s0.size(); ++d)
            if (d != axis)
                require(p.shape()[d] == s0[d], ErrorCode::shape,
                        "concat: extent mismatch at axis " + std::to_string(d) + ": " +
                            shape_str(p.shape()) + " vs " + shape_str(s0));
        ax_total += p.shape()[axis];
    }
    Shape oshape = s0;
    oshape[axis] = ax_total;
    size_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= s0[d];
    for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
    std::vector<T> out(shape_numel(oshape));
    std::vector<std::shared_ptr<TensorNode<T>>> parents;
    std::vector<TensorNode<T>*> pnodes;
    std::vector<size_t> extents;
    for (const auto& p : parts) {
        parents.push_back(p.node_ptr());
        pnodes.push_back(p.node());
        extents.push_back(p.shape()[axis]);
    }
    for (size_t o = 0; o < outer; ++o) {
        size_t off = 0;
        for (size_t k = 0; k < parts.size(); ++k) {
            size_t ext = extents[k];
            std::copy_n(&parts[k].data()[o * ext * inner], ext * inner,
                        &out[(o * ax_total + off) * inner]);
            off += ext;
        }
    }
    return detail::make_op<T>(
        std::move(oshape), std::move(out), std::move(parents),
        [pnodes, extents, outer, inner, ax_total](TensorNode<T>& n) {
            for (size_t o = 0; o < outer; ++o) {
                size_t off = 0;
                for (size_t k = 0; k < pnodes.size(); ++k) {
                    size_t ext = extents[k];
                    if (pnodes[k]->requires_grad) {
                        const T* g = &n.grad[(o * ax_total + off) * inner];
                        T* dst = &pnodes[k]->grad[o * ext * inner];
                        for (size_t i = 0; i < ext * inner; ++i) dst[i] += g[i];
                    }
                    off += ext;
                }
            }
        },
        "concat");
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() == 2 && b.rank() == 2, ErrorCode::shape, "matmul: expects rank-2 inputs");
    size_t M = a.shape()[0], K = a.shape()[1], K2 = b.shape()[0], N = b.shape()[1];
    require(K == K2, ErrorCode::shape,
            "matmul: inner extents differ, " + shape_str(a.shape()) + " by " +
                shape_str(b.shape()));
    std::vector<T> out(M * N);
    detail::mm(a.data().data(), b.data().data(), out.data(), M, K, N, false);
    auto* pa = a.node();
    auto* pb = b.node();
    return detail::make_op<T>(
        {M, N}, std::move(out), {a.node_ptr(), b.node_ptr()},
        [pa, pb, M, K, N](TensorNode<T>& n) {
            if (pa->requires_grad) {
                // dA[M,K] += G[M,N] * B^T[N,K]; accumulate without forming B^T:
                // dA[i,k] += sum_j G[i,j] B[k,j]
                for (size_t i = 0; i < M; ++i) {
                    const T* g = &n.grad[i * N];
                    T* da = &pa->grad[i * K];
                    for (size_t k = 0; k < K; ++k) {
                        const T* brow = &pb->value[k * N];
                        T acc = T(0);
                        for (size_t j = 0; j < N; ++j) acc += g[j] * brow[j];
                        da[k] += acc;
                    }
                }
            }
            if (pb->requires_grad) {
                // dB[K,N] += A^T[K,M] * G[M,N] = sum_i A[i,k] G[i,:]
                for (size_t i = 0; i < M; ++i) {
                    const T* arow = &pa->value[i * K];
                    const T* g = &n.grad[i * N];
                    for (size_t k = 0; k < K; ++k) {
                        T a = arow[k];
                        if (a == T(0)) continue;
                        T* db = &pb->grad[k * N];
                        for (size_t j = 0; j < N; ++j) db[j] += a * g[j];
                    }
                }
            }
        },
        "matmul");
}

// Batched matmul: [B x M x K] by [B x K x N].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() == 3 && b.rank() == 3, ErrorCode::shape, "bmm: expects rank-3 inputs");
    require(a.shape()[0] == b.shape()[0], ErrorCode::shape, "bmm: batch extent mismatch");
    size_t B = a.shape()[0], M = a.shape()[1], K = a.shape()[2], N = b.shape()[2];
    require(b.shape()[1] == K, ErrorCode::shape,
            "bmm: inner extents differ, " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    std::vector<T> out(B * M * N);
    for (size_t i = 0; i < B; ++i)
        detail::mm(a.data().data() + i * M * K, b.data().data() + i * K * N,
                   out.data() + i * M * N, M, K, N, false);
    auto* pa = a.node();
    auto* pb = b.node();
    return detail::make_op<T>(
        {B, M, N}, std::move(out), {a.node_ptr(), b.node_ptr()},
        [pa, pb, B, M, K, N](TensorNode<T>& n) {
            for (size_t bi = 0; bi < B; ++bi) {
                const T* g = &n.grad[bi * M * N];
                const T* av = &pa->value[bi * M * K];
                const T* bv = &pb->value[bi * K * N];
                if (pa->requires_grad) {
                    T* da = &pa->grad[bi * M * K];
                    for (size_t i = 0; i < M; ++i)
                        for (size_t k = 0; k < K; ++k) {
                            const T* brow = &bv[k * N];
                            const T* grow = &g[i * N];
                            T acc = T(0);
                            for (size_t j = 0; j < N; ++j) acc += grow[j] * brow[j];
                            da[i * K + k] += acc;
                        }
                }
                if (pb->requires_grad) {
                    T* db = &pb->grad[bi * K * N];
                    for (size_t i = 0; i < M; ++i) {
                        const T* grow = &g[i * N];
                        for (size_t k = 0; k < K; ++k) {
                            T a = av[i * K + k];
                            if (a == T(0)) continue;
                            T* dbrow = &db[k * N];
                            for (size_t j = 0; j < N; ++j) dbrow[j] += a * grow[j];
                        }
                    }
                }
            }
        },
        "bmm");
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
    auto* px = x.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x.node_ptr()},
        [px](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i)
                if (px->value[i] > T(0)) px->grad[i] += n.grad[i];
        },
        "relu");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        double v = double(x.data()[i]);
        out[i] = T(1.0 / (1.0 + std::exp(-v)));
    }
    auto* px = x.node();
    auto self = detail::make_op<T>(
        x.shape(), std::move(out), {x.node_ptr()},
        [px](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i) {
                T y = n.value[i];
                px->grad[i] += n.grad[i] * y * (T(1) - y);
            }
        },
        "sigmoid");
    return self;
}

// Softmax along `axis`; rows with large negative entries (attention masks)
// stay stable through max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, size_t axis) {
    require(axis < x.rank(), ErrorCode::shape, "softmax: axis out of range");
    size_t L = x.shape()[axis];
    size_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (size_t d = axis + 1; d < x.rank(); ++d) inner *= x.shape()[d];
    std::vector<T> out(x.numel());
    for (size_t o = 0; o < outer; ++o)
        for (size_t in = 0; in < inner; ++in) {
            size_t base = o * L * inner + in;
            double mx = -1e300;
            for (size_t l = 0; l < L; ++l) mx = std::max(mx, double(x.data()[base + l * inner]));
            double sum = 0;
            for (size_t l = 0; l < L; ++l) {
                double e = std::exp(double(x.data()[base + l * inner]) - mx);
                out[base + l * inner] = T(e);
                sum += e;
            }
            for (size_t l = 0; l < L; ++l) out[base + l * inner] = T(double(out[base + l * inner]) / sum);
        }
    auto* px = x.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x.node_ptr()},
        [px, outer, inner, L](TensorNode<T>& n) {
            for (size_t o = 0; o < outer; ++o)
                for (size_t in = 0; in < inner; ++in) {
                    size_t base = o * L * inner + in;
                    T dot = T(0);
                    for (size_t l = 0; l < L; ++l)
                        dot += n.grad[base + l * inner] * n.value[base + l * inner];
                    for (size_t l = 0; l < L; ++l) {
                        size_t idx = base + l * inner;
                        px->grad[idx] += n.value[idx] * (n.grad[idx] - dot);
                    }
                }
        },
        "softmax");
}

// ---------------------------------------------------------------------------
// normalization and regularization
// ---------------------------------------------------------------------------

// Layer norm over the last axis with affine transform.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5)) {
    size_t F = x.shape().back();
    require(gamma.rank() == 1 && gamma.shape()[0] == F, ErrorCode::shape,
            "layer_norm: gamma size mismatch");
    require(beta.rank() == 1 && beta.shape()[0] == F, ErrorCode::shape,
            "layer_norm: beta size mismatch");
    size_t rows = x.numel() / F;
    std::vector<T> out(x.numel());
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto inv_sigma = std::make_shared<std::vector<T>>(rows);
    for (size_t r = 0; r < rows; ++r) {
        const T* xv = &x.data()[r * F];
        double mu = 0;
        for (size_t j = 0; j < F; ++j) mu += double(xv[j]);
        mu /= double(F);
        double var = 0;
        for (size_t j = 0; j < F; ++j) {
            double d = double(xv[j]) - mu;
            var += d * d;
        }
        var /= double(F);
        double is = 1.0 / std::sqrt(var + double(eps));
        (*inv_sigma)[r] = T(is);
        for (size_t j = 0; j < F; ++j) {
            T xh = T((double(xv[j]) - mu) * is);
            (*xhat)[r * F + j] = xh;
            out[r * F + j] = gamma.data()[j] * xh + beta.data()[j];
        }
    }
    auto* px = x.node();
    auto* pg = gamma.node();
    auto* pb = beta.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
        [px, pg, pb, xhat, inv_sigma, rows, F](TensorNode<T>& n) {
            for (size_t r = 0; r < rows; ++r) {
                const T* g = &n.grad[r * F];
                const T* xh = &(*xhat)[r * F];
                T is = (*inv_sigma)[r];
                T sum_dxh = T(0), sum_dxh_xh = T(0);
                for (size_t j = 0; j < F; ++j) {
                    T dxh = g[j] * pg->value[j];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh[j];
                }
                if (px->requires_grad) {
                    for (size_t j = 0; j < F; ++j) {
                        T dxh = g[j] * pg->value[j];
                        px->grad[r * F + j] +=
                            is * (dxh - sum_dxh / T(F) - xh[j] * sum_dxh_xh / T(F));
                    }
                }
                if (pg->requires_grad)
                    for (size_t j = 0; j < F; ++j) pg->grad[j] += g[j] * xh[j];
                if (pb->requires_grad)
                    for (size_t j = 0; j < F; ++j) pb->grad[j] += g[j];
            }
        },
        "layer_norm");
}

// Running statistics owned by the calling layer, updated in training mode.
template <typename T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    explicit BatchNormState(size_t f) : running_mean(f, T(0)), running_var(f, T(1)) {}
};

// Batch norm over the batch axis of [N x F]. Training mode uses batch
// statistics (N >= 2) and updates running stats with the given momentum;
// eval mode normalizes by the running stats.
template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, bool training, T momentum = T(0.1),
                      T eps = T(1e-5)) {
    require(x.rank() == 2, ErrorCode::shape, "batchnorm1d: expects [N x F]");
    size_t N = x.shape()[0], F = x.shape()[1];
    require(gamma.shape() == Shape{F} && beta.shape() == Shape{F}, ErrorCode::shape,
            "batchnorm1d: affine parameter size mismatch");
    require(state.running_mean.size() == F, ErrorCode::shape,
            "batchnorm1d: state size mismatch");
    std::vector<T> out(x.numel());
    auto* px = x.node();
    auto* pg = gamma.node();
    auto* pb = beta.node();
    if (!training) {
        std::vector<T> is(F);
        for (size_t j = 0; j < F; ++j)
            is[j] = T(1.0 / std::sqrt(double(state.running_var[j]) + double(eps)));
        std::vector<T> rm = state.running_mean;
        auto isv = std::make_shared<std::vector<T>>(is);
        for (size_t i = 0; i < N; ++i)
            for (size_t j = 0; j < F; ++j)
                out[i * F + j] =
                    gamma.data()[j] * (x.data()[i * F + j] - rm[j]) * is[j] + beta.data()[j];
        auto xv = std::make_shared<std::vector<T>>(x.data());
        auto rmv = std::make_shared<std::vector<T>>(std::move(rm));
        return detail::make_op<T>(
            x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
            [px, pg, pb, isv, xv, rmv, N, F](TensorNode<T>& n) {
                for (size_t i = 0; i < N; ++i)
                    for (size_t j = 0; j < F; ++j) {
                        T g = n.grad[i * F + j];
                        if (px->requires_grad)
                            px->grad[i * F + j] += g * pg->value[j] * (*isv)[j];
                        if (pg->requires_grad)
                            pg->grad[j] += g * ((*xv)[i * F + j] - (*rmv)[j]) * (*isv)[j];
                        if (pb->requires_grad) pb->grad[j] += g;
                    }
            },
            "batchnorm1d");
    }
    require(N >= 2, ErrorCode::shape, "batchnorm1d: training mode requires batch size >= 2");
    auto mu = std::make_shared<std::vector<T>>(F);
    auto is = std::make_shared<std::vector<T>>(F);
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    for (size_t j = 0; j < F; ++j) {
        double m = 0;
        for (size_t i = 0; i < N; ++i) m += double(x.data()[i * F + j]);
        m /= double(N);
        double var = 0;
        for (size_t i = 0; i < N; ++i) {
            double d = double(x.data()[i * F + j]) - m;
            var += d * d;
        }
        var /= double(N);
        (*mu)[j] = T(m);
        (*is)[j] = T(1.0 / std::sqrt(var + double(eps)));
        double unbiased = var * double(N) / double(N - 1);
        state.running_mean[j] =
            T((1.0 - double(momentum)) * double(state.running_mean[j]) + double(momentum) * m);
        state.running_var[j] = T((1.0 - double(momentum)) * double(state.running_var[j]) +
                                 double(momentum) * unbiased);
        for (size_t i = 0; i < N; ++i) {
            T xh = (x.data()[i * F + j] - (*mu)[j]) * (*is)[j];
            (*xhat)[i * F + j] = xh;
            out[i * F + j] = gamma.data()[j] * xh + beta.data()[j];
        }
    }
    return detail::make_op<T>(
        x.shape(), std::move(out), {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
        [px, pg, pb, xhat, is, N, F](TensorNode<T>& n) {
            for (size_t j = 0; j < F; ++j) {
                T sum_dxh = T(0), sum_dxh_xh = T(0);
                for (size_t i = 0; i < N; ++i) {
                    T dxh = n.grad[i * F + j] * pg->value[j];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * (*xhat)[i * F + j];
                }
                for (size_t i = 0; i < N; ++i) {
                    T g = n.grad[i * F + j];
                    if (px->requires_grad) {
                        T dxh = g * pg->value[j];
                        px->grad[i * F + j] +=
                            (*is)[j] *
                            (dxh - sum_dxh / T(N) - (*xhat)[i * F + j] * sum_dxh_xh / T(N));
                    }
                    if (pg->requires_grad) pg->grad[j] += g * (*xhat)[i * F + j];
                    if (pb->requires_grad) pb->grad[j] += g;
                }
            }
        },
        "batchnorm1d");
}

// Inverted dropout: survivors scaled by 1/(1-p) so eval mode is the identity.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
    require(p >= 0.0 && p < 1.0, ErrorCode::config, "dropout: p must be in [0, 1)");
    if (!training || p == 0.0) {
        auto* px = x.node();
        return detail::make_op<T>(
            x.shape(), x.data(), {x.node_ptr()},
            [px](TensorNode<T>& n) {
                for (size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i];
            },
            "dropout");
    }
    T scale = T(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<T>>(x.numel());
    std::vector<T> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        T m = rng.uniform() >= p ? scale : T(0);
        (*mask)[i] = m;
        out[i] = x.data()[i] * m;
    }
    auto* px = x.node();
    return detail::make_op<T>(
        x.shape(), std::move(out), {x.node_ptr()},
        [px, mask](TensorNode<T>& n) {
            for (size_t i = 0; i < n.grad.size(); ++i) px->grad[i] += n.grad[i] * (*mask)[i];
        },
        "dropout");
}

// ---------------------------------------------------------------------------
// convolution and spatial ops, all NCHW
// ---------------------------------------------------------------------------

namespace detail {

// im2col: X[C x H x W] -> col[(C*kh*kw) x (Ho*Wo)]
template <typename T>
void im2col(const T* X, size_t C, size_t H, size_t W, size_t kh, size_t kw, size_t stride,
            size_t pad, size_t Ho, size_t Wo, T* col) {
    size_t R = C * kh * kw;
    for (size_t r = 0; r < R; ++r) {
        size_t c = r / (kh * kw);
        size_t ki = (r / kw) % kh;
        size_t kj = r % kw;
        T* dst = col + r * Ho * Wo;
        for (size_t y = 0; y < Ho; ++y) {
            long iy = long(y * stride + ki) - long(pad);
            if (iy < 0 || iy >= long(H)) {
                for (size_t x = 0; x < Wo; ++x) dst[y * Wo + x] = T(0);
                continue;
            }
            const T* src = X + (c * H + size_t(iy)) * W;
            for (size_t x = 0; x < Wo; ++x) {
                long ix = long(x * stride + kj) - long(pad);
                dst[y * Wo + x] = (ix >= 0 && ix < long(W)) ? src[size_t(ix)] : T(0);
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, size_t C, size_t H, size_t W, size_t kh, size_t kw, size_t stride,
                size_t pad, size_t Ho, size_t Wo, T* X) {
    size_t R = C * kh * kw;
    for (size_t r = 0; r < R; ++r) {
        size_t c = r / (kh * kw);
        size_t ki = (r / kw) % kh;
        size_t kj = r % kw;
        const T* src = col + r * Ho * Wo;
        for (size_t y = 0; y < Ho; ++y) {
            long iy = long(y * stride + ki) - long(pad);
            if (iy < 0 || iy >= long(H)) continue;
            T* dst = X + (c * H + size_t(iy)) * W;
            for (size_t x = 0; x < Wo; ++x) {
                long ix = long(x * stride + kj) - long(pad);
                if (ix >= 0 && ix < long(W)) dst[size_t(ix)] += src[y * Wo + x];
            }
        }
    }
}

} // namespace detail

// conv2d on [N x Cin x H x W] with kernels [Cout x Cin x kh x kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, size_t stride = 1, size_t pad = 0) {
    require(x.rank() == 4, ErrorCode::shape, "conv2d: input must be [N x C x H x W]");
    require(k.rank() == 4, ErrorCode::shape, "conv2d: kernels must be [Cout x Cin x kh x kw]");
    require(stride >= 1, ErrorCode::shape, "conv2d: stride must be >= 1");
    size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    size_t Cout = k.shape()[0], kh = k.shape()[2], kw = k.shape()[3];
    require(k.shape()[1] == C, ErrorCode::shape,
            "conv2d: kernel channel extent " + std::to_string(k.shape()[1]) +
                " does not match input channels " + std::to_string(C));
    require(H + 2 * pad >= kh && W + 2 * pad >= kw, ErrorCode::shape,
            "conv2d: kernel larger than padded input");
    size_t Ho = (H + 2 * pad - kh) / stride + 1;
    size_t Wo = (W + 2 * pad - kw) / stride + 1;
    size_t R = C * kh * kw;
    std::vector<T> out(N * Cout * Ho * Wo);
    std::vector<T> col(R * Ho * Wo);
    for (size_t n = 0; n < N; ++n) {
        detail::im2col(&x.data()[n * C * H * W], C, H, W, kh, kw, stride, pad, Ho, Wo,
                       col.data());
        detail::mm(k.data().data(), col.data(), &out[n * Cout * Ho * Wo], Cout, R, Ho * Wo,
                   false);
    }
    auto* px = x.node();
    auto* pk = k.node();
    return detail::make_op<T>(
        {N, Cout, Ho, Wo}, std::move(out), {x.node_ptr(), k.node_ptr()},
        [px, pk, N, C, H, W, Cout, kh, kw, stride, pad, Ho, Wo, R](TensorNode<T>& n) {
            std::vector<T> col(R * Ho * Wo);
            std::vector<T> gcol(R * Ho * Wo);
            // dK[r, co] via G * col^T, dX via K^T * G scattered by col2im.
            for (size_t s = 0; s < N; ++s) {
                const T* g = &n.grad[s * Cout * Ho * Wo];
                if (pk->requires_grad) {
                    detail::im2col(&px->value[s * C * H * W], C, H, W, kh, kw, stride, pad, Ho,
                                   Wo, col.data());
                    // dK[co, r] += sum_p g[co, p] col[r, p]
                    for (size_t co = 0; co < Cout; ++co) {
                        const T* grow = &g[co * Ho * Wo];
                        T* krow = &pk->grad[co * R];
                        for (size_t r = 0; r < R; ++r) {
                            const T* crow = &col[r * Ho * Wo];
                            T acc = T(0);
                            for (size_t p = 0; p < Ho * Wo; ++p) acc += grow[p] * crow[p];
                            krow[r] += acc;
                        }
                    }
                }
                if (px->requires_grad) {
                    // gcol[r, p] = sum_co K[co, r] g[co, p]
                    std::fill(gcol.begin(), gcol.end(), T(0));
                    for (size_t co = 0; co < Cout; ++co) {
                        const T* krow = &pk->value[co * R];
                        const T* grow = &g[co * Ho * Wo];
                        for (size_t r = 0; r < R; ++r) {
                            T kv = krow[r];
                            if (kv == T(0)) continue;
                            T* dst = &gcol[r * Ho * Wo];
                            for (size_t p = 0; p < Ho * Wo; ++p) dst[p] += kv * grow[p];
                        }
                    }
                    detail::col2im_add(gcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                       &px->grad[s * C * H * W]);
                }
            }
        },
        "conv2d");
}

// Single-sample convenience: [C x H x W].
template <typename T>
Tensor<T> conv2d_single(const Tensor<T>& x, const Tensor<T>& k, size_t stride = 1,
                        size_t pad = 0) {
    require(x.rank() == 3, ErrorCode::shape, "conv2d_single: input must be [C x H x W]");
    Shape s = x.shape();
    auto batched = reshape(x, {1, s[0], s[1], s[2]});
    auto y = conv2d(batched, k, stride, pad);
    Shape ys = y.shape();
    return reshape(y, {ys[1], ys[2], ys[3]});
}

// 2x2 max pooling with stride 2. Spatial extents must be even.
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
    require(x.rank() == 4, ErrorCode::shape, "maxpool2: input must be [N x C x H x W]");
    size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    require(H % 2 == 0 && W % 2 == 0, ErrorCode::shape,
            "maxpool2: spatial extents must be even, got " + shape_str(x.shape()));
    size_t Ho = H / 2, Wo = W / 2;
    std::vector<T> out(N * C * Ho * Wo);
    auto argmax = std::make_shared<std::vector<uint32_t>>(out.size());
    for (size_t nc = 0; nc < N * C; ++nc) {
        const T* src = &x.data()[nc * H * W];
        T* dst = &out[nc * Ho * Wo];
        uint32_t* am = &(*argmax)[nc * Ho * Wo];
        for (size_t y = 0; y < Ho; ++y)
            for (size_t xx = 0; xx < Wo; ++xx) {
                size_t i00 = (2 * y) * W + 2 * xx;
                size_t cand[4] = {i00, i00 + 1, i00 + W, i00 + W + 1};
                size_t best = cand[0];
                for (int t = 1; t < 4; ++t)
                    if (src[cand[t]] > src[best]) best = cand[t];
                dst[y * Wo + xx] = src[best];
                am[y * Wo + xx] = uint32_t(best);
            }
    }
    auto* px = x.node();
    return detail::make_op<T>(
        {N, C, Ho, Wo}, std::move(out), {x.node_ptr()},
        [px, argmax, N, C, H, W, Ho, Wo](TensorNode<T>& n) {
            for (size_t nc = 0; nc < N * C; ++nc) {
                const T* g = &n.grad[nc * Ho * Wo];
                T* dst = &px->grad[nc * H * W];
                const uint32_t* am = &(*argmax)[nc * Ho * Wo];
                for (size_t i = 0; i < Ho * Wo; ++i) dst[am[i]] += g[i];
            }
        },
        "maxpool2");
}

// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& x) {
    require(x.rank() == 4, ErrorCode::shape, "upsample2: input must be [N x C x H x W]");
    size_t N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    size_t Ho = H * 2, Wo = W * 2;
    std::vector<T> out(N * C * Ho * Wo);
    for (size_t nc = 0; nc < N * C; ++nc) {
        const T* src = &x.data()[nc * H * W];
        T* dst = &out[nc * Ho * Wo];
        for (size_t y = 0; y < Ho; ++y) {
            const T* srow = &src[(y / 2) * W];
            T* drow = &dst[y * Wo];
            for (size_t xx = 0; xx < Wo; ++xx) drow[xx] = srow[xx / 2];
        }
    }
    auto* px = x.node();
    return detail::make_op<T>(
        {N, C, Ho, Wo}, std::move(out), {x.node_ptr()},
        [px, N, C, H, W, Ho, Wo](TensorNode<T>& n) {
            for (size_t nc = 0; nc < N * C; ++nc) {
                const T* g = &n.grad[nc * Ho * Wo];
                T* dst = &px->grad[nc * H * W];
                for (size_t y = 0; y < Ho; ++y)
                    for (size_t xx = 0; xx < Wo; ++xx) dst[(y / 2) * W + xx / 2] += g[y * Wo + xx];
            }
        },
        "upsample2");
}

// [N x C x H x W] -> [N x C] spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    require(x.rank() == 4, ErrorCode::shape, "global_avg_pool: input must be [N x C x H x W]");
    size_t N = x.shape()[0], C = x.shape()[1], HW = x.shape()[2] * x.shape()[3];
    std::vector<T> out(N * C);
    for (size_t nc = 0; nc < N * C; ++nc) {
        double s = 0;
        for (size_t i = 0; i < HW; ++i) s += double(x.data()[nc * HW + i]);
        out[nc] = T(s / double(HW));
    }
    auto* px = x.node();
    return detail::make_op<T>(
        {N, C}, std::move(out), {x.node_ptr()},
        [px, N, C, HW](TensorNode<T>& n) {
            for (size_t nc = 0; nc < N * C; ++nc) {
                T g = n.grad[nc] / T(HW);
                T* dst = &px->grad[nc * HW];
                for (size_t i = 0; i < HW; ++i) dst[i] += g;
            }
        },
        "global_avg_pool");
}

// Mean over the time axis of [N x T x F], restricted to the first lengths[n]
// steps. Empty lengths means all steps are valid.
template <typename T>
Tensor<T> seq_mean(const Tensor<T>& x, const std::vector<size_t>& lengths = {}) {
    require(x.rank() == 3, ErrorCode::shape, "seq_mean: input must be [N x T x F]");
    size_t N = x.shape()[0], Tn = x.shape()[1], F = x.shape()[2];
    std::vector<size_t> len = lengths;
    if (len.empty()) len.assign(N, Tn);
    require(len.size() == N, ErrorCode::shape, "seq_mean: lengths size mismatch");
    for (size_t l : len)
        require(l >= 1 && l <= Tn, ErrorCode::shape, "seq_mean: length out of range");
    std::vector<T> out(N * F, T(0));
    for (size_t n = 0; n < N; ++n) {
        for (size_t t = 0; t < len[n]; ++t)
            for (size_t j = 0; j < F; ++j) out[n * F + j] += x.data()[(n * Tn + t) * F + j];
        for (size_t j = 0; j < F; ++j) out[n * F + j] /= T(len[n]);
    }
    auto* px = x.node();
    auto lens = std::make_shared<std::vector<size_t>>(std::move(len));
    return detail::make_op<T>(
        {N, F}, std::move(out), {x.node_ptr()},
        [px, lens, N, Tn, F](TensorNode<T>& n) {
            for (size_t s = 0; s < N; ++s) {
                T inv = T(1) / T((*lens)[s]);
                for (size_t t = 0; t < (*lens)[s]; ++t)
                    for (size_t j = 0; j < F; ++j)
                        px->grad[(s * Tn + t) * F + j] += n.grad[s * F + j] * inv;
            }
        },
        "seq_mean");
}

// Row lookup: table [K x D], one row per id. Gradient scatters into the table.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<int>& ids) {
    require(table.rank() == 2, ErrorCode::shape, "embedding: table must be [K x D]");
    size_t K = table.shape()[0], D = table.shape()[1];
    for (int id : ids)
        require(id >= 0 && size_t(id) < K, ErrorCode::data,
                "embedding: id " + std::to_string(id) + " outside table of " + std::to_string(K));
    std::vector<T> out(ids.size() * D);
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(&table.data()[size_t(ids[i]) * D], D, &out[i * D]);
    auto* pt = table.node();
    auto idv = std::make_shared<std::vector<int>>(ids);
    return detail::make_op<T>(
        {ids.size(), D}, std::move(out), {table.node_ptr()},
        [pt, idv, D](TensorNode<T>& n) {
            for (size_t i = 0; i < idv->size(); ++i) {
                T* dst = &pt->grad[size_t((*idv)[i]) * D];
                const T* g = &n.grad[i * D];
                for (size_t j = 0; j < D; ++j) dst[j] += g[j];
            }
        },
        "embedding");
}

// [N x C] -> [N x C x H x W], each channel value repeated across the map.
template <typename T>
Tensor<T> broadcast_to_map(const Tensor<T>& v, size_t H, size_t W) {
    require(v.rank() == 2, ErrorCode::shape, "broadcast_to_map: input must be [N x C]");
    require(H >= 1 && W >= 1, ErrorCode::shape, "broadcast_to_map: extents must be >= 1");
    size_t N = v.shape()[0], C = v.shape()[1], HW = H * W;
    std::vector<T> out(N * C * HW);
    for (size_t nc = 0; nc < N * C; ++nc)
        for (size_t i = 0; i < HW; ++i) out[nc * HW + i] = v.data()[nc];
    auto* pv = v.node();
    return detail::make_op<T>(
        {N, C, H, W}, std::move(out), {v.node_ptr()},
        [pv, N, C, HW](TensorNode<T>& n) {
            for (size_t nc = 0; nc < N * C; ++nc) {
                T acc = T(0);
                for (size_t i = 0; i < HW; ++i) acc += n.grad[nc * HW + i];
                pv->grad[nc] += acc;
            }
        },
        "broadcast_to_map");
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Mean squared error over all elements.
template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    require(pred.shape() == target.shape(), ErrorCode::shape,
            "mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                shape_str(target.shape()));
    size_t M = pred.numel();
    double s = 0;
    for (size_t i = 0; i < M; ++i) {
        double d = double(pred.data()[i]) - double(target.data()[i]);
        s += d * d;
    }
    auto* pp = pred.node();
    auto* pt = target.node();
    return detail::make_op<T>(
        {1}, {T(s / double(M))}, {pred.node_ptr(), target.node_ptr()},
        [pp, pt, M](TensorNode<T>& n) {
            T g = n.grad[0] * T(2) / T(M);
            for (size_t i = 0; i < M; ++i) {
                T d = pp->value[i] - pt->value[i];
                if (pp->requires_grad) pp->grad[i] += g * d;
                if (pt->requires_grad) pt->grad[i] -= g * d;
            }
        },
        "mse_loss");
}

// Cross entropy with integer class targets, softmax fused for stability.
// logits [N x K] with targets.size() == N, or [N x K x H x W] with
// targets.size() == N*H*W (row-major over N, H, W); the mean is taken over
// every labelled position.
template <typename T>
Tensor<T> cross_entropy_loss(const Tensor<T>& logits, const std::vector<int>& targets) {
    size_t K, positions, inner;
    if (logits.rank() == 2) {
        K = logits.shape()[1];
        positions = logits.shape()[0];
        inner = 1;
    } else if (logits.rank() == 4) {
        K = logits.shape()[1];
        inner = logits.shape()[2] * logits.shape()[3];
        positions = logits.shape()[0] * inner;
    } else {
        fail(ErrorCode::shape, "cross_entropy_loss: logits must be [N x K] or [N x K x H x W]");
    }
    require(K >= 2, ErrorCode::shape, "cross_entropy_loss: needs at least 2 classes");
    require(targets.size() == positions, ErrorCode::shape,
            "cross_entropy_loss: " + std::to_string(targets.size()) + " targets for " +
                std::to_string(positions) + " positions");
    for (int t : targets)
        require(t >= 0 && size_t(t) < K, ErrorCode::data,
                "cross_entropy_loss: target " + std::to_string(t) + " outside " +
                    std::to_string(K) + " classes");

    // Index of class k at position p: for [N x K] it is p*K + k; for maps it
    // is (n*K + k)*inner + q with p = n*inner + q.
    auto class_index = [K, inner](size_t p, size_t k) {
        size_t n = p / inner, q = p % inner;
        return (n * K + k) * inner + q;
    };
    double total = 0;
    for (size_t p = 0; p < positions; ++p) {
        double mx = -1e300;
        for (size_t k = 0; k < K; ++k)
            mx = std::max(mx, double(logits.data()[class_index(p, k)]));
        double sum = 0;
        for (size_t k = 0; k < K; ++k)
            sum += std::exp(double(logits.data()[class_index(p, k)]) - mx);
        double lse = mx + std::log(sum);
        total += lse - double(logits.data()[class_index(p, size_t(targets[p]))]);
    }
    auto* pl = logits.node();
    auto tv = std::make_shared<std::vector<int>>(targets);
    return detail::make_op<T>(
        {1}, {T(total / double(positions))}, {logits.node_ptr()},
        [pl, tv, K, positions, class_index](TensorNode<T>& n) {
            T g = n.grad[0] / T(positions);
            for (size_t p = 0; p < positions; ++p) {
                double mx = -1e300;
                for (size_t k = 0; k < K; ++k)
                    mx = std::max(mx, double(pl->value[class_index(p, k)]));
                double sum = 0;
                for (size_t k = 0; k < K; ++k)
                    sum += std::exp(double(pl->value[class_index(p, k)]) - mx);
                for (size_t k = 0; k < K; ++k) {
                    double sm = std::exp(double(pl->value[class_index(p, k)]) - mx) / sum;
                    double onehot = (size_t((*tv)[p]) == k) ? 1.0 : 0.0;
                    pl->grad[class_index(p, k)] += g * T(sm - onehot);
                }
            }
        },
        "cross_entropy_loss");
}

} // namespace mtx
