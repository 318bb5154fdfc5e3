#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "wtp/diff/gemm.hpp"
#include "wtp/diff/tape.hpp"

namespace wtp::diff {

// ---------------------------------------------------------------- elementwise

template <class T>
NodePtr<T> add(Tape<T>& tape, NodePtr<T> a, NodePtr<T> b) {
    check_same_shape(a->val.shape, b->val.shape, "add");
    Tensor<T> out(a->val.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = a->val.data[i] + b->val.data[i];
    auto n = tape.make(std::move(out), {a, b}, "add");
    n->backward_fn = [a, b](Node<T>& self) {
        if (a->requires_grad) {
            auto& g = a->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (b->requires_grad) {
            auto& g = b->ensure_grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    };
    return n;
}

template <class T>
NodePtr<T> scale(Tape<T>& tape, NodePtr<T> x, T s) {
    Tensor<T> out(x->val.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = x->val.data[i] * s;
    auto n = tape.make(std::move(out), {x}, "scale");
    n->backward_fn = [x, s](Node<T>& self) {
        if (!x->requires_grad) return;
        auto& g = x->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    };
    return n;
}

template <class T>
NodePtr<T> relu(Tape<T>& tape, NodePtr<T> x) {
    Tensor<T> out(x->val.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = x->val.data[i] > T(0) ? x->val.data[i] : T(0);
    auto n = tape.make(std::move(out), {x}, "relu");
    n->backward_fn = [x](Node<T>& self) {
        if (!x->requires_grad) return;
        auto& g = x->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (x->val.data[i] > T(0)) g[i] += self.grad[i];
    };
    return n;
}

template <class T>
NodePtr<T> sigmoid(Tape<T>& tape, NodePtr<T> x) {
    Tensor<T> out(x->val.shape);
    for (size_t i = 0; i < out.numel(); ++i) out.data[i] = T(1) / (T(1) + std::exp(-x->val.data[i]));
    auto n = tape.make(std::move(out), {x}, "sigmoid");
    n->backward_fn = [x](Node<T>& self) {
        if (!x->requires_grad) return;
        auto& g = x->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) {
            const T y = self.val.data[i];
            g[i] += self.grad[i] * y * (T(1) - y);
        }
    };
    return n;
}

// --------------------------------------------------------------- shape moves

template <class T>
NodePtr<T> reshape(Tape<T>& tape, NodePtr<T> x, std::vector<int> shape) {
    if (shape_numel(shape) != x->val.numel())
        throw std::invalid_argument("reshape: element count mismatch " +
                                    shape_str(x->val.shape) + " vs " + shape_str(shape));
    Tensor<T> out(std::move(shape), x->val.data);
    auto n = tape.make(std::move(out), {x}, "reshape");
    n->backward_fn = [x](Node<T>& self) {
        if (!x->requires_grad) return;
        auto& g = x->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    };
    return n;
}

namespace detail {
inline std::vector<size_t> strides_of(const std::vector<int>& shape) {
    std::vector<size_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * static_cast<size_t>(shape[i + 1]);
    return st;
}
}  // namespace detail

template <class T>
NodePtr<T> permute(Tape<T>& tape, NodePtr<T> x, const std::vector<int>& axes) {
    const auto& ish = x->val.shape;
    if (axes.size() != ish.size()) throw std::invalid_argument("permute: axes rank mismatch");
    std::vector<int> osh(axes.size());
    for (size_t i = 0; i < axes.size(); ++i) osh[i] = ish[static_cast<size_t>(axes[i])];
    const auto ist = detail::strides_of(ish);
    const auto ost = detail::strides_of(osh);
    const size_t total = x->val.numel();
    const int nd = static_cast<int>(ish.size());

    // Map output linear index -> input linear index once; reuse in backward.
    auto make_index_map = [&]() {
        std::vector<size_t> map(total);
        std::vector<int> idx(nd, 0);
        for (size_t o = 0; o < total; ++o) {
            size_t in = 0;
            for (int d = 0; d < nd; ++d) in += static_cast<size_t>(idx[d]) * ist[static_cast<size_t>(axes[d])];
            map[o] = in;
            for (int d = nd - 1; d >= 0; --d) {
                if (++idx[d] < osh[d]) break;
                idx[d] = 0;
            }
        }
        return map;
    };
    auto map = std::make_shared<std::vector<size_t>>(make_index_map());

    Tensor<T> out(osh);
    for (size_t o = 0; o < total; ++o) out.data[o] = x->val.data[(*map)[o]];
    auto n = tape.make(std::move(out), {x}, "permute");
    n->backward_fn = [x, map](Node<T>& self) {
        if (!x->requires_grad) return;
        auto& g = x->ensure_grad();
        for (size_t o = 0; o < self.grad.size(); ++o) g[(*map)[o]] += self.grad[o];
    };
    return n;
}

// ------------------------------------------------------------------- linear

// x: [..., K] times W^T, W: [Nout, K], b: [Nout] -> [..., Nout].
template <class T>
NodePtr<T> linear(Tape<T>& tape, NodePtr<T> x, NodePtr<T> w, NodePtr<T> b) {
    const auto& xs = x->val.shape;
    if (xs.empty() || w->val.ndim() != 2 || xs.back() != w->val.dim(1))
        throw std::invalid_argument("linear: shape mismatch " + shape_str(xs) + " vs " +
                                    shape_str(w->val.shape));
    const int K = w->val.dim(1), Nout = w->val.dim(0);
    const int M = static_cast<int>(x->val.numel()) / K;
    if (b && (b->val.ndim() != 1 || b->val.dim(0) != Nout))
        throw std::invalid_argument("linear: bias shape mismatch " + shape_str(b->val.shape));

    std::vector<int> osh = xs;
    osh.back() = Nout;
    Tensor<T> out(osh);
    gemm_nt(M, Nout, K, x->val.data.data(), w->val.data.data(), out.data.data());
    if (b)
        for (int m = 0; m < M; ++m)
            for (int j = 0; j < Nout; ++j) out.data[static_cast<size_t>(m) * Nout + j] += b->val.data[j];

    auto n = tape.make(std::move(out), {x, w, b}, "linear");
    n->backward_fn = [x, w, b, M, K, Nout](Node<T>& self) {
        const T* go = self.grad.data();
        if (x->requires_grad)
            gemm_nn(M, K, Nout, go, w->val.data.data(), x->ensure_grad().data());
        if (w->requires_grad)
            gemm_tn(Nout, K, M, go, x->val.data.data(), w->ensure_grad().data());
        if (b && b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (int m = 0; m < M; ++m)
                for (int j = 0; j < Nout; ++j) gb[j] += go[static_cast<size_t>(m) * Nout + j];
        }
    };
    return n;
}

// --------------------------------------------------------------------- bmm

// A: [B,M,K] x B: [B,K,N] -> [B,M,N].
template <class T>
NodePtr<T> bmm(Tape<T>& tape, NodePtr<T> a, NodePtr<T> b) {
    const auto &as = a->val.shape, &bs = b->val.shape;
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[1])
        throw std::invalid_argument("bmm: shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
    const int B = as[0], M = as[1], K = as[2], N = bs[2];
    Tensor<T> out({B, M, N});
    for (int i = 0; i < B; ++i)
        gemm_nn(M, N, K, a->val.data.data() + static_cast<size_t>(i) * M * K,
                b->val.data.data() + static_cast<size_t>(i) * K * N,
                out.data.data() + static_cast<size_t>(i) * M * N);
    auto n = tape.make(std::move(out), {a, b}, "bmm");
    n->backward_fn = [a, b, B, M, K, N](Node<T>& self) {
        for (int i = 0; i < B; ++i) {
            const T* go = self.grad.data() + static_cast<size_t>(i) * M * N;
            if (a->requires_grad)
                gemm_nt(M, K, N, go, b->val.data.data() + static_cast<size_t>(i) * K * N,
                        a->ensure_grad().data() + static_cast<size_t>(i) * M * K);
            if (b->requires_grad)
                gemm_tn(K, N, M, a->val.data.data() + static_cast<size_t>(i) * M * K, go,
                        b->ensure_grad().data() + static_cast<size_t>(i) * K * N);
        }
    };
    return n;
}

// A: [B,M,K] x B: [B,N,K]^T -> [B,M,N] (attention scores).
template <class T>
NodePtr<T> bmm_nt(Tape<T>& tape, NodePtr<T> a, NodePtr<T> b) {
    const auto &as = a->val.shape, &bs = b->val.shape;
    if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0] || as[2] != bs[2])
        throw std::invalid_argument("bmm_nt: shape mismatch " + shape_str(as) + " vs " + shape_str(bs));
    const int B = as[0], M = as[1], K = as[2], N = bs[1];
    Tensor<T> out({B, M, N});
    for (int i = 0; i < B; ++i)
        gemm_nt(M, N, K, a->val.data.data() + static_cast<size_t>(i) * M * K,
                b->val.data.data() + static_cast<size_t>(i) * N * K,
                out.data.data() + static_cast<size_t>(i) * M * N);
    auto n = tape.make(std::move(out), {a, b}, "bmm_nt");
    n->backward_fn = [a, b, B, M, K, N](Node<T>& self) {
        for (int i = 0; i < B; ++i) {
            const T* go = self.grad.data() + static_cast<size_t>(i) * M * N;
            if (a->requires_grad)
                gemm_nn(M, K, N, go, b->val.data.data() + static_cast<size_t>(i) * N * K,
                        a->ensure_grad().data() + static_cast<size_t>(i) * M * K);
            if (b->requires_grad)
                gemm_tn(N, K, M, go, a->val.data.data() + static_cast<size_t>(i) * M * K,
                        b->ensure_grad().data() + static_cast<size_t>(i) * N * K);
        }
    };
    return n;
}

// ----------------------------------------------------------------- softmax

namespace detail {
// Row-wise softmax over `cols` contiguous elements; shared kernel for the
// last-dim and spatial variants.
template <class T>
void softmax_rows(const T* in, T* out, size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        const T* x = in + r * cols;
        T* y = out + r * cols;
        T mx = x[0];
        for (size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
        T sum = T(0);
        for (size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        const T inv = T(1) / sum;
        for (size_t j = 0; j < cols; ++j) y[j] *= inv;
    }
}

template <class T>
void softmax_rows_backward(const T* y, const T* go, T* gx, size_t rows, size_t cols) {
    for (size_t r = 0; r < rows; ++r) {
        const T* yr = y + r * cols;
        const T* gr = go + r * cols;
        T dot = T(0);
        for (size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
        T* gxr = gx + r * cols;
        for (size_t j = 0; j < cols; ++j) gxr[j] += yr[j] * (gr[j] - dot);
    }
}

template <class T>
NodePtr<T> softmax_grouped(Tape<T>& tape, NodePtr<T> x, size_t rows, size_t cols,
                           const char* name) {
    Tensor<T> out(x->val.shape);
    softmax_rows(x->val.data.data(), out.data.data(), rows, cols);
    auto n = tape.make(std::move(out), {x}, name);
    n->backward_fn = [x, rows, cols](Node<T>& self) {
        if (!x->requires_grad) return;
        softmax_rows_backward(self.val.data.data(), self.grad.data(),
                              x->ensure_grad().data(), rows, cols);
    };
    return n;
}
}  // namespace detail

// Softmax over the last dimension.
template <class T>
NodePtr<T> softmax(Tape<T>& tape, NodePtr<T> x) {
    const size_t cols = static_cast<size_t>(x->val.shape.back());
    return detail::softmax_grouped(tape, x, x->val.numel() / cols, cols, "softmax");
}

// Per-channel softmax over the spatial H*W cells of a [B,C,H,W] tensor.
template <class T>
NodePtr<T> spatial_softmax(Tape<T>& tape, NodePtr<T> x) {
    if (x->val.ndim() != 4)
        throw std::invalid_argument("spatial_softmax: expected [B,C,H,W], got " +
                                    shape_str(x->val.shape));
    const size_t cols = static_cast<size_t>(x->val.dim(2)) * x->val.dim(3);
    return detail::softmax_grouped(tape, x, x->val.numel() / cols, cols, "spatial_softmax");
}

// --------------------------------------------------------------- layer norm

// Normalizes over the last dimension; gamma/beta are [K].
template <class T>
NodePtr<T> layer_norm(Tape<T>& tape, NodePtr<T> x, NodePtr<T> gamma, NodePtr<T> beta,
                      T eps = T(1e-5)) {
    const int K = x->val.shape.back();
    if (gamma->val.shape != std::vector<int>{K} || beta->val.shape != std::vector<int>{K})
        throw std::invalid_argument("layer_norm: gamma/beta shape mismatch for " +
                                    shape_str(x->val.shape));
    const size_t rows = x->val.numel() / static_cast<size_t>(K);

    Tensor<T> out(x->val.shape);
    auto xhat = std::make_shared<std::vector<T>>(x->val.numel());
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    for (size_t r = 0; r < rows; ++r) {
        const T* xr = x->val.data.data() + r * K;
        T mean = T(0);
        for (int j = 0; j < K; ++j) mean += xr[j];
        mean /= K;
        T var = T(0);
        for (int j = 0; j < K; ++j) var += (xr[j] - mean) * (xr[j] - mean);
        var /= K;
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        T* xh = xhat->data() + r * K;
        T* yr = out.data.data() + r * K;
        for (int j = 0; j < K; ++j) {
            xh[j] = (xr[j] - mean) * is;
            yr[j] = xh[j] * gamma->val.data[j] + beta->val.data[j];
        }
    }

    auto n = tape.make(std::move(out), {x, gamma, beta}, "layer_norm");
    n->backward_fn = [x, gamma, beta, xhat, inv_std, rows, K](Node<T>& self) {
        for (size_t r = 0; r < rows; ++r) {
            const T* go = self.grad.data() + r * K;
            const T* xh = xhat->data() + r * K;
            if (gamma->requires_grad || beta->requires_grad) {
                auto& gg = gamma->ensure_grad();
                auto& gb = beta->ensure_grad();
                for (int j = 0; j < K; ++j) {
                    gg[j] += go[j] * xh[j];
                    gb[j] += go[j];
                }
            }
            if (x->requires_grad) {
                T sum_g = T(0), sum_gx = T(0);
                for (int j = 0; j < K; ++j) {
                    const T gj = go[j] * gamma->val.data[j];
                    sum_g += gj;
                    sum_gx += gj * xh[j];
                }
                auto& gx = x->ensure_grad();
                const T is = (*inv_std)[r];
                for (int j = 0; j < K; ++j) {
                    const T gj = go[j] * gamma->val.data[j];
                    gx[r * K + j] += is * (gj - sum_g / K - xh[j] * sum_gx / K);
                }
            }
        }
    };
    return n;
}

// ------------------------------------------------------------------- conv2d

namespace detail {
template <class T>
void im2col(const T* img, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            T* cols) {
    // cols layout: [C*k*k, Ho*Wo]
    const size_t npix = static_cast<size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                T* dst = cols + ((static_cast<size_t>(c) * k + ki) * k + kj) * npix;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * stride + ki - pad;
                    if (ii < 0 || ii >= H) {
                        std::fill(dst + static_cast<size_t>(oi) * Wo,
                                  dst + static_cast<size_t>(oi + 1) * Wo, T(0));
                        continue;
                    }
                    const T* src = img + (static_cast<size_t>(c) * H + ii) * W;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj * stride + kj - pad;
                        dst[static_cast<size_t>(oi) * Wo + oj] =
                            (jj >= 0 && jj < W) ? src[jj] : T(0);
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const T* cols, int C, int H, int W, int k, int stride, int pad, int Ho,
                int Wo, T* img) {
    const size_t npix = static_cast<size_t>(Ho) * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ki = 0; ki < k; ++ki) {
            for (int kj = 0; kj < k; ++kj) {
                const T* src = cols + ((static_cast<size_t>(c) * k + ki) * k + kj) * npix;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * stride + ki - pad;
                    if (ii < 0 || ii >= H) continue;
                    T* dst = img + (static_cast<size_t>(c) * H + ii) * W;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj * stride + kj - pad;
                        if (jj >= 0 && jj < W) dst[jj] += src[static_cast<size_t>(oi) * Wo + oj];
                    }
                }
            }
        }
    }
}
}  // namespace detail

// Cross-correlation. x: [B,C,H,W], w: [Co,C,k,k], b: [Co] (optional).
// im2col columns are recomputed in the backward pass instead of cached.
template <class T>
NodePtr<T> conv2d(Tape<T>& tape, NodePtr<T> x, NodePtr<T> w, NodePtr<T> b, int stride,
                  int pad) {
    const auto &xs = x->val.shape, &ws = w->val.shape;
    if (xs.size() != 4 || ws.size() != 4 || xs[1] != ws[1] || ws[2] != ws[3])
        throw std::invalid_argument("conv2d: shape mismatch " + shape_str(xs) + " vs " +
                                    shape_str(ws));
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    const int B = xs[0], C = xs[1], H = xs[2], W = xs[3];
    const int Co = ws[0], k = ws[2];
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0)
        throw std::invalid_argument("conv2d: empty output for input " + shape_str(xs) +
                                    " kernel " + shape_str(ws));
    const int K = C * k * k;
    const size_t npix = static_cast<size_t>(Ho) * Wo;

    Tensor<T> out({B, Co, Ho, Wo});
    std::vector<T> cols(static_cast<size_t>(K) * npix);
    for (int i = 0; i < B; ++i) {
        detail::im2col(x->val.data.data() + static_cast<size_t>(i) * C * H * W, C, H, W, k,
                       stride, pad, Ho, Wo, cols.data());
        gemm_nn(Co, static_cast<int>(npix), K, w->val.data.data(), cols.data(),
                out.data.data() + static_cast<size_t>(i) * Co * npix);
    }
    if (b) {
        if (b->val.shape != std::vector<int>{Co})
            throw std::invalid_argument("conv2d: bias shape mismatch " + shape_str(b->val.shape));
        for (int i = 0; i < B; ++i)
            for (int co = 0; co < Co; ++co) {
                T* p = out.data.data() + (static_cast<size_t>(i) * Co + co) * npix;
                const T bv = b->val.data[co];
                for (size_t j = 0; j < npix; ++j) p[j] += bv;
            }
    }

    auto n = tape.make(std::move(out), {x, w, b}, "conv2d");
    n->backward_fn = [x, w, b, B, C, H, W, Co, k, stride, pad, Ho, Wo, K, npix](Node<T>& self) {
        std::vector<T> cols(static_cast<size_t>(K) * npix);
        std::vector<T> dcols;
        for (int i = 0; i < B; ++i) {
            const T* go = self.grad.data() + static_cast<size_t>(i) * Co * npix;
            if (w->requires_grad || x->requires_grad)
                detail::im2col(x->val.data.data() + static_cast<size_t>(i) * C * H * W, C, H,
                               W, k, stride, pad, Ho, Wo, cols.data());
            if (w->requires_grad)
                gemm_nt(Co, K, static_cast<int>(npix), go, cols.data(),
                        w->ensure_grad().data());
            if (x->requires_grad) {
                dcols.assign(static_cast<size_t>(K) * npix, T(0));
                gemm_tn(K, static_cast<int>(npix), Co, w->val.data.data(), go, dcols.data());
                detail::col2im_add(dcols.data(), C, H, W, k, stride, pad, Ho, Wo,
                                   x->ensure_grad().data() + static_cast<size_t>(i) * C * H * W);
            }
            if (b && b->requires_grad) {
                auto& gb = b->ensure_grad();
                for (int co = 0; co < Co; ++co) {
                    const T* p = go + static_cast<size_t>(co) * npix;
                    T s = T(0);
                    for (size_t j = 0; j < npix; ++j) s += p[j];
                    gb[co] += s;
                }
            }
        }
    };
    return n;
}

// --------------------------------------------------------------- upsampling

// Nearest-neighbor 2x upsampling of [B,C,H,W].
template <class T>
NodePtr<T> upsample2x(Tape<T>& tape, NodePtr<T> x) {
    const auto& s = x->val.shape;
    if (s.size() != 4)
        throw std::invalid_argument("upsample2x: expected [B,C,H,W], got " + shape_str(s));
    const int B = s[0], C = s[1], H = s[2], W = s[3];
    Tensor<T> out({B, C, 2 * H, 2 * W});
    for (int bc = 0; bc < B * C; ++bc) {
        const T* src = x->val.data.data() + static_cast<size_t>(bc) * H * W;
        T* dst = out.data.data() + static_cast<size_t>(bc) * 4 * H * W;
        for (int i = 0; i < 2 * H; ++i)
            for (int j = 0; j < 2 * W; ++j)
                dst[static_cast<size_t>(i) * 2 * W + j] = src[static_cast<size_t>(i / 2) * W + j / 2];
    }
    auto n = tape.make(std::move(out), {x}, "upsample2x");
    n->backward_fn = [x, B, C, H, W](Node<T>& self) {
        if (!x->requires_grad) return;
        auto& g = x->ensure_grad();
        for (int bc = 0; bc < B * C; ++bc) {
            const T* go = self.grad.data() + static_cast<size_t>(bc) * 4 * H * W;
            T* gx = g.data() + static_cast<size_t>(bc) * H * W;
            for (int i = 0; i < 2 * H; ++i)
                for (int j = 0; j < 2 * W; ++j)
                    gx[static_cast<size_t>(i / 2) * W + j / 2] += go[static_cast<size_t>(i) * 2 * W + j];
        }
    };
    return n;
}

// --------------------------------------------------------------- reductions

template <class T>
NodePtr<T> sum_all(Tape<T>& tape, NodePtr<T> x) {
    T s = T(0);
    for (const T v : x->val.data) s += v;
    auto n = tape.make(Tensor<T>({1}, std::vector<T>{s}), {x}, "sum_all");
    n->backward_fn = [x](Node<T>& self) {
        if (!x->requires_grad) return;
        auto& g = x->ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
    };
    return n;
}

template <class T>
NodePtr<T> mean_all(Tape<T>& tape, NodePtr<T> x) {
    return scale(tape, sum_all(tape, x), T(1) / static_cast<T>(x->val.numel()));
}

// ------------------------------------------------------------------- losses

// Squared error against a constant target; sum or per-element mean.
template <class T>
NodePtr<T> mse_loss(Tape<T>& tape, NodePtr<T> pred, const Tensor<T>& target, bool mean = true) {
    check_same_shape(pred->val.shape, target.shape, "mse_loss");
    const size_t n = pred->val.numel();
    T s = T(0);
    for (size_t i = 0; i < n; ++i) {
        const T d = pred->val.data[i] - target.data[i];
        s += d * d;
    }
    const T norm = mean ? T(1) / static_cast<T>(n) : T(1);
    auto node = tape.make(Tensor<T>({1}, std::vector<T>{s * norm}), {pred}, "mse_loss");
    auto tgt = std::make_shared<Tensor<T>>(target);
    node->backward_fn = [pred, tgt, norm](Node<T>& self) {
        if (!pred->requires_grad) return;
        auto& g = pred->ensure_grad();
        const T c = T(2) * norm * self.grad[0];
        for (size_t i = 0; i < g.size(); ++i)
            g[i] += c * (pred->val.data[i] - tgt->data[i]);
    };
    return node;
}

// Binary cross-entropy against a constant binary target. Predictions are
// clamped to [1e-7, 1-1e-7]; gradient is zero where the clamp is active.
template <class T>
NodePtr<T> bce_loss(Tape<T>& tape, NodePtr<T> pred, const Tensor<T>& target, bool mean = true) {
    check_same_shape(pred->val.shape, target.shape, "bce_loss");
    const T lo = T(1e-7), hi = T(1) - T(1e-7);
    const size_t n = pred->val.numel();
    T s = T(0);
    for (size_t i = 0; i < n; ++i) {
        const T p = std::clamp(pred->val.data[i], lo, hi);
        const T t = target.data[i];
        s -= t * std::log(p) + (T(1) - t) * std::log(T(1) - p);
    }
    const T norm = mean ? T(1) / static_cast<T>(n) : T(1);
    auto node = tape.make(Tensor<T>({1}, std::vector<T>{s * norm}), {pred}, "bce_loss");
    auto tgt = std::make_shared<Tensor<T>>(target);
    node->backward_fn = [pred, tgt, norm, lo, hi](Node<T>& self) {
        if (!pred->requires_grad) return;
        auto& g = pred->ensure_grad();
        const T c = norm * self.grad[0];
        for (size_t i = 0; i < g.size(); ++i) {
            const T p = pred->val.data[i];
            if (p <= lo || p >= hi) continue;
            g[i] += c * (p - tgt->data[i]) / (p * (T(1) - p));
        }
    };
    return node;
}

// ------------------------------------------------------- expected coordinates

// Probability-weighted sum of fixed per-cell coordinates: heatmaps
// [B,N,H,W] with coordinate tables cx/cy of length H*W -> [B,N,2].
template <class T>
NodePtr<T> expected_coords(Tape<T>& tape, NodePtr<T> heatmaps, std::vector<T> cx,
                           std::vector<T> cy) {
    const auto& s = heatmaps->val.shape;
    if (s.size() != 4)
        throw std::invalid_argument("expected_coords: expected [B,N,H,W], got " + shape_str(s));
    const int B = s[0], N = s[1];
    const size_t cells = static_cast<size_t>(s[2]) * s[3];
    if (cx.size() != cells || cy.size() != cells)
        throw std::invalid_argument("expected_coords: coordinate table size mismatch");

    auto cxp = std::make_shared<std::vector<T>>(std::move(cx));
    auto cyp = std::make_shared<std::vector<T>>(std::move(cy));
    Tensor<T> out({B, N, 2});
    for (int bn = 0; bn < B * N; ++bn) {
        const T* p = heatmaps->val.data.data() + static_cast<size_t>(bn) * cells;
        T ex = T(0), ey = T(0);
        for (size_t j = 0; j < cells; ++j) {
            ex += p[j] * (*cxp)[j];
            ey += p[j] * (*cyp)[j];
        }
        out.data[static_cast<size_t>(bn) * 2] = ex;
        out.data[static_cast<size_t>(bn) * 2 + 1] = ey;
    }
    auto n = tape.make(std::move(out), {heatmaps}, "expected_coords");
    n->backward_fn = [heatmaps, cxp, cyp, B, N, cells](Node<T>& self) {
        if (!heatmaps->requires_grad) return;
        auto& g = heatmaps->ensure_grad();
        for (int bn = 0; bn < B * N; ++bn) {
            const T gx = self.grad[static_cast<size_t>(bn) * 2];
            const T gy = self.grad[static_cast<size_t>(bn) * 2 + 1];
            T* gp = g.data() + static_cast<size_t>(bn) * cells;
            for (size_t j = 0; j < cells; ++j) gp[j] += gx * (*cxp)[j] + gy * (*cyp)[j];
        }
    };
    return n;
}

// Tile a [..] tensor into [B, ..]; backward sums over the batch copies.
template <class T>
NodePtr<T> repeat_batch(Tape<T>& tape, NodePtr<T> x, int batch) {
    std::vector<int> osh = x->val.shape;
    osh.insert(osh.begin(), batch);
    const size_t n = x->val.numel();
    Tensor<T> out(osh);
    for (int b = 0; b < batch; ++b)
        std::copy(x->val.data.begin(), x->val.data.end(),
                  out.data.begin() + static_cast<size_t>(b) * n);
    auto node = tape.make(std::move(out), {x}, "repeat_batch");
    node->backward_fn = [x, batch, n](Node<T>& self) {
        if (!x->requires_grad) return;
        auto& g = x->ensure_grad();
        for (int b = 0; b < batch; ++b) {
            const T* go = self.grad.data() + static_cast<size_t>(b) * n;
            for (size_t i = 0; i < n; ++i) g[i] += go[i];
        }
    };
    return node;
}

// -------------------------------------------------------- multi-head attention

template <class T>
struct AttentionParams {
    NodePtr<T> wq, bq, wk, bk, wv, bv, wo, bo;  // all [d,d] / [d]
};

// softmax(Q K^T / sqrt(d/h)) V per head, heads concatenated, then projected.
// q_in: [B,Nq,d], kv_in: [B,Nk,d].
template <class T>
NodePtr<T> multi_head_attention(Tape<T>& tape, NodePtr<T> q_in, NodePtr<T> kv_in,
                                const AttentionParams<T>& p, int heads) {
    const auto& s = q_in->val.shape;
    if (s.size() != 3) throw std::invalid_argument("attention: expected [B,N,d] input");
    const int B = s[0], Nq = s[1], d = s[2];
    const int Nk = kv_in->val.dim(1);
    if (d % heads != 0)
        throw std::invalid_argument("attention: d=" + std::to_string(d) +
                                    " not divisible by heads=" + std::to_string(heads));
    const int dh = d / heads;

    auto split = [&](NodePtr<T> x, int n) {
        // [B,n,d] -> [B*h, n, dh]
        auto r = reshape(tape, x, {B, n, heads, dh});
        auto t = permute(tape, r, {0, 2, 1, 3});
        return reshape(tape, t, {B * heads, n, dh});
    };

    auto q = split(linear(tape, q_in, p.wq, p.bq), Nq);
    auto k = split(linear(tape, kv_in, p.wk, p.bk), Nk);
    auto v = split(linear(tape, kv_in, p.wv, p.bv), Nk);

    auto scores = scale(tape, bmm_nt(tape, q, k), T(1) / std::sqrt(static_cast<T>(dh)));
    auto attn = softmax(tape, scores);
    auto ctx = bmm(tape, attn, v);  // [B*h, Nq, dh]

    auto merged = reshape(
        tape, permute(tape, reshape(tape, ctx, {B, heads, Nq, dh}), {0, 2, 1, 3}), {B, Nq, d});
    return linear(tape, merged, p.wo, p.bo);
}

}  // namespace wtp::diff
