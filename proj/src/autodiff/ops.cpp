#include "twoshot/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace twoshot::ad {

namespace {

[[noreturn]] void shape_error(OpKind kind, const std::string& what) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": " + what);
}

template <typename T>
void require_same_shape(OpKind kind, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        shape_error(kind, "shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
}

template <typename T>
void require_rank(OpKind kind, const Tensor<T>& x, std::size_t rank) {
    if (x.rank() != rank) {
        shape_error(kind, "expected rank " + std::to_string(rank) + ", got " + shape_string(x.shape()));
    }
}

template <typename T>
void check_finite([[maybe_unused]] OpKind kind, [[maybe_unused]] const Tensor<T>& out) {
#ifndef NDEBUG
    for (T v : out.data()) {
        if (!std::isfinite(v)) shape_error(kind, "non-finite output");
    }
#endif
}

// Accumulate into an input's gradient only when it participates.
template <typename T>
T* grad_of(Tensor<T>& t) {
    return t.requires_grad() ? t.grad_buffer().data() : nullptr;
}

struct ChannelLayout {
    std::size_t outer;
    std::size_t channels;
    std::size_t inner;
};

template <typename T>
ChannelLayout channel_layout(OpKind kind, const Tensor<T>& x) {
    if (x.rank() < 2) shape_error(kind, "expected rank >= 2, got " + shape_string(x.shape()));
    const auto& s = x.shape();
    std::size_t inner = 1;
    for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
    return {s[0], s[1], inner};
}

template <typename T>
Tensor<T> elementwise_binary(Graph<T>& g, OpKind kind, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(kind, a, b);
    const auto n = a.numel();
    std::vector<T> out(n);
    auto da = a.data();
    auto db = b.data();
    switch (kind) {
        case OpKind::add:
            for (std::size_t i = 0; i < n; ++i) out[i] = da[i] + db[i];
            break;
        case OpKind::sub:
            for (std::size_t i = 0; i < n; ++i) out[i] = da[i] - db[i];
            break;
        default:
            for (std::size_t i = 0; i < n; ++i) out[i] = da[i] * db[i];
            break;
    }
    Tensor<T> result(a.shape(), std::move(out));
    check_finite(kind, result);
    g.record(kind, {a, b}, result, [kind](Node<T>& node) {
        auto go = node.output.grad();
        auto& x = node.inputs[0];
        auto& y = node.inputs[1];
        const auto m = go.size();
        if (T* gx = grad_of(x)) {
            if (kind == OpKind::mul) {
                auto dy = y.data();
                for (std::size_t i = 0; i < m; ++i) gx[i] += go[i] * dy[i];
            } else {
                for (std::size_t i = 0; i < m; ++i) gx[i] += go[i];
            }
        }
        if (T* gy = grad_of(y)) {
            if (kind == OpKind::mul) {
                auto dx = x.data();
                for (std::size_t i = 0; i < m; ++i) gy[i] += go[i] * dx[i];
            } else if (kind == OpKind::sub) {
                for (std::size_t i = 0; i < m; ++i) gy[i] -= go[i];
            } else {
                for (std::size_t i = 0; i < m; ++i) gy[i] += go[i];
            }
        }
    });
    return result;
}

}  // namespace

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary(g, OpKind::add, a, b);
}

template <typename T>
Tensor<T> sub(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary(g, OpKind::sub, a, b);
}

template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
    return elementwise_binary(g, OpKind::mul, a, b);
}

template <typename T>
Tensor<T> scalar_mul(Graph<T>& g, const Tensor<T>& a, T s) {
    auto da = a.data();
    std::vector<T> out(da.size());
    for (std::size_t i = 0; i < da.size(); ++i) out[i] = da[i] * s;
    Tensor<T> result(a.shape(), std::move(out));
    check_finite(OpKind::scalar_mul, result);
    g.record(OpKind::scalar_mul, {a}, result, [s](Node<T>& node) {
        auto go = node.output.grad();
        if (T* gx = grad_of(node.inputs[0])) {
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * s;
        }
    });
    return result;
}

template <typename T>
Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
    constexpr auto kind = OpKind::matmul;
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        shape_error(kind, "incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    auto da = a.data();
    auto db = b.data();
    std::vector<T> out(M * N, T{0});
    for (std::size_t i = 0; i < M; ++i) {
        T* orow = out.data() + i * N;
        for (std::size_t k = 0; k < K; ++k) {
            const T aik = da[i * K + k];
            const T* brow = db.data() + k * N;
            for (std::size_t j = 0; j < N; ++j) orow[j] += aik * brow[j];
        }
    }
    Tensor<T> result({M, N}, std::move(out));
    check_finite(kind, result);
    g.record(kind, {a, b}, result, [M, K, N](Node<T>& node) {
        auto go = node.output.grad();
        auto& x = node.inputs[0];
        auto& y = node.inputs[1];
        if (T* gx = grad_of(x)) {
            auto dy = y.data();
            for (std::size_t i = 0; i < M; ++i) {
                for (std::size_t k = 0; k < K; ++k) {
                    T acc{0};
                    for (std::size_t j = 0; j < N; ++j) acc += go[i * N + j] * dy[k * N + j];
                    gx[i * K + k] += acc;
                }
            }
        }
        if (T* gy = grad_of(y)) {
            auto dx = x.data();
            for (std::size_t i = 0; i < M; ++i) {
                for (std::size_t k = 0; k < K; ++k) {
                    const T xik = dx[i * K + k];
                    for (std::size_t j = 0; j < N; ++j) gy[k * N + j] += xik * go[i * N + j];
                }
            }
        }
    });
    return result;
}

namespace {

// col[(ci * 9 + ky * 3 + kx) * H * W + y * W + x] = in[ci][y + ky - 1][x + kx - 1], zero outside.
template <typename T>
void im2col_3x3(const T* in, std::size_t Cin, std::size_t H, std::size_t W, T* col) {
    const std::size_t plane = H * W;
    for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* ip = in + ci * plane;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * plane;
                for (std::size_t y = 0; y < H; ++y) {
                    T* r = row + y * W;
                    const long sy = static_cast<long>(y) + ky - 1;
                    if (sy < 0 || sy >= static_cast<long>(H)) {
                        std::fill(r, r + W, T{0});
                        continue;
                    }
                    const T* src = ip + static_cast<std::size_t>(sy) * W;
                    for (std::size_t x = 0; x < W; ++x) {
                        const long sx = static_cast<long>(x) + kx - 1;
                        r[x] = sx < 0 || sx >= static_cast<long>(W) ? T{0} : src[sx];
                    }
                }
            }
        }
    }
}

// Fixed-order blocked dot product; eight lanes let the compiler vectorize
// while the result stays reproducible.
template <typename T>
T blocked_dot(const T* a, const T* b, std::size_t n) {
    T lanes[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int j = 0; j < 8; ++j) lanes[j] += a[i + j] * b[i + j];
    }
    T acc{0};
    for (int j = 0; j < 8; ++j) acc += lanes[j];
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

}  // namespace

template <typename T>
Tensor<T> conv2d_3x3_pad1(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    constexpr auto kind = OpKind::conv2d_3x3_pad1;
    require_rank(kind, x, 4);
    require_rank(kind, weight, 4);
    const std::size_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t Cout = weight.dim(0);
    if (weight.dim(1) != Cin || weight.dim(2) != 3 || weight.dim(3) != 3) {
        shape_error(kind, "weight " + shape_string(weight.shape()) + " incompatible with input " +
                              shape_string(x.shape()));
    }
    const bool has_bias = bias.defined();
    if (has_bias && (bias.rank() != 1 || bias.dim(0) != Cout)) {
        shape_error(kind, "bias " + shape_string(bias.shape()) + " incompatible with weight " +
                              shape_string(weight.shape()));
    }
    const std::size_t plane = H * W, K = Cin * 9;
    const auto* in = x.data().data();
    const auto* wt = weight.data().data();
    std::vector<T> out(N * Cout * plane, T{0});
    std::vector<T> col(K * plane);
    for (std::size_t n = 0; n < N; ++n) {
        im2col_3x3(in + n * Cin * plane, Cin, H, W, col.data());
        for (std::size_t co = 0; co < Cout; ++co) {
            if (has_bias) {
                T* op = out.data() + (n * Cout + co) * plane;
                std::fill(op, op + plane, bias.data()[co]);
            }
        }
        // four output channels per sweep over the columns
        std::size_t co = 0;
        for (; co + 4 <= Cout; co += 4) {
            T* o0 = out.data() + (n * Cout + co) * plane;
            T* o1 = o0 + plane;
            T* o2 = o1 + plane;
            T* o3 = o2 + plane;
            for (std::size_t k = 0; k < K; ++k) {
                const T w0 = wt[co * K + k], w1 = wt[(co + 1) * K + k], w2 = wt[(co + 2) * K + k], w3 = wt[(co + 3) * K + k];
                const T* c = col.data() + k * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const T v = c[i];
                    o0[i] += w0 * v;
                    o1[i] += w1 * v;
                    o2[i] += w2 * v;
                    o3[i] += w3 * v;
                }
            }
        }
        for (; co < Cout; ++co) {
            T* op = out.data() + (n * Cout + co) * plane;
            const T* wrow = wt + co * K;
            for (std::size_t k = 0; k < K; ++k) {
                const T w = wrow[k];
                const T* c = col.data() + k * plane;
                for (std::size_t i = 0; i < plane; ++i) op[i] += w * c[i];
            }
        }
    }
    Tensor<T> result({N, Cout, H, W}, std::move(out));
    check_finite(kind, result);
    std::vector<Tensor<T>> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    g.record(kind, std::move(inputs), result, [N, Cin, Cout, H, W, has_bias](Node<T>& node) {
        const std::size_t plane = H * W, K = Cin * 9;
        const T* go = node.output.grad().data();
        auto& xin = node.inputs[0];
        auto& wt_t = node.inputs[1];
        T* gx = grad_of(xin);
        T* gw = grad_of(wt_t);
        const T* in = xin.data().data();
        const T* wt = wt_t.data().data();
        if (has_bias) {
            if (T* gb = grad_of(node.inputs[2])) {
                for (std::size_t n = 0; n < N; ++n) {
                    for (std::size_t co = 0; co < Cout; ++co) {
                        const T* gp = go + (n * Cout + co) * plane;
                        T acc{0};
                        for (std::size_t i = 0; i < plane; ++i) acc += gp[i];
                        gb[co] += acc;
                    }
                }
            }
        }
        std::vector<T> col(gw ? K * plane : 0), gcol(gx ? K * plane : 0);
        for (std::size_t n = 0; n < N; ++n) {
            if (gw) im2col_3x3(in + n * Cin * plane, Cin, H, W, col.data());
            if (gx) std::fill(gcol.begin(), gcol.end(), T{0});
            for (std::size_t co = 0; co < Cout; ++co) {
                const T* gp = go + (n * Cout + co) * plane;
                const T* wrow = wt + co * K;
                for (std::size_t k = 0; k < K; ++k) {
                    if (gw) gw[co * K + k] += blocked_dot(gp, col.data() + k * plane, plane);
                    if (gx) {
                        const T w = wrow[k];
                        T* gc = gcol.data() + k * plane;
                        for (std::size_t i = 0; i < plane; ++i) gc[i] += w * gp[i];
                    }
                }
            }
            if (!gx) continue;
            // scatter the column gradients back onto the padded neighbourhoods
            for (std::size_t ci = 0; ci < Cin; ++ci) {
                T* gip = gx + (n * Cin + ci) * plane;
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const T* gc = gcol.data() + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * plane;
                        for (std::size_t y = 0; y < H; ++y) {
                            const long sy = static_cast<long>(y) + ky - 1;
                            if (sy < 0 || sy >= static_cast<long>(H)) continue;
                            T* dst = gip + static_cast<std::size_t>(sy) * W;
                            const T* src = gc + y * W;
                            const std::size_t x0 = kx == 0 ? 1 : 0, x1 = kx == 2 ? W - 1 : W;
                            for (std::size_t xx = x0; xx < x1; ++xx) dst[xx + static_cast<std::size_t>(kx) - 1] += src[xx];
                        }
                    }
                }
            }
        }
    });
    return result;
}

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& x) {
    auto dx = x.data();
    std::vector<T> out(dx.size());
    for (std::size_t i = 0; i < dx.size(); ++i) out[i] = dx[i] > T{0} ? dx[i] : T{0};
    Tensor<T> result(x.shape(), std::move(out));
    g.record(OpKind::relu, {x}, result, [](Node<T>& node) {
        auto go = node.output.grad();
        auto& in = node.inputs[0];
        if (T* gx = grad_of(in)) {
            auto d = in.data();
            for (std::size_t i = 0; i < go.size(); ++i) {
                if (d[i] > T{0}) gx[i] += go[i];
            }
        }
    });
    return result;
}

template <typename T>
Tensor<T> sigmoid(Graph<T>& g, const Tensor<T>& x) {
    auto dx = x.data();
    std::vector<T> out(dx.size());
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const T v = dx[i];
        if (v >= T{0}) {
            out[i] = T{1} / (T{1} + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out[i] = e / (T{1} + e);
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    g.record(OpKind::sigmoid, {x}, result, [](Node<T>& node) {
        auto go = node.output.grad();
        auto y = node.output.data();
        if (T* gx = grad_of(node.inputs[0])) {
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * y[i] * (T{1} - y[i]);
        }
    });
    return result;
}

template <typename T>
Tensor<T> channel_softmax(Graph<T>& g, const Tensor<T>& x) {
    constexpr auto kind = OpKind::channel_softmax;
    const auto L = channel_layout(kind, x);
    auto dx = x.data();
    std::vector<T> out(dx.size());
    for (std::size_t o = 0; o < L.outer; ++o) {
        const std::size_t base = o * L.channels * L.inner;
        for (std::size_t i = 0; i < L.inner; ++i) {
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t c = 0; c < L.channels; ++c) mx = std::max(mx, dx[base + c * L.inner + i]);
            T total{0};
            for (std::size_t c = 0; c < L.channels; ++c) {
                const T e = std::exp(dx[base + c * L.inner + i] - mx);
                out[base + c * L.inner + i] = e;
                total += e;
            }
            const T inv = T{1} / total;
            for (std::size_t c = 0; c < L.channels; ++c) out[base + c * L.inner + i] *= inv;
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    check_finite(kind, result);
    g.record(kind, {x}, result, [L](Node<T>& node) {
        auto go = node.output.grad();
        auto y = node.output.data();
        T* gx = grad_of(node.inputs[0]);
        if (!gx) return;
        for (std::size_t o = 0; o < L.outer; ++o) {
            const std::size_t base = o * L.channels * L.inner;
            for (std::size_t i = 0; i < L.inner; ++i) {
                T dot{0};
                for (std::size_t c = 0; c < L.channels; ++c) {
                    const auto k = base + c * L.inner + i;
                    dot += go[k] * y[k];
                }
                for (std::size_t c = 0; c < L.channels; ++c) {
                    const auto k = base + c * L.inner + i;
                    gx[k] += y[k] * (go[k] - dot);
                }
            }
        }
    });
    return result;
}

template <typename T>
Tensor<T> log(Graph<T>& g, const Tensor<T>& x) {
    constexpr T floor_value = T(1e-12);
    auto dx = x.data();
    std::vector<T> out(dx.size());
    for (std::size_t i = 0; i < dx.size(); ++i) out[i] = std::log(std::max(dx[i], floor_value));
    Tensor<T> result(x.shape(), std::move(out));
    g.record(OpKind::log, {x}, result, [](Node<T>& node) {
        auto go = node.output.grad();
        auto& in = node.inputs[0];
        if (T* gx = grad_of(in)) {
            auto d = in.data();
            for (std::size_t i = 0; i < go.size(); ++i) {
                if (d[i] > floor_value) gx[i] += go[i] / d[i];
            }
        }
    });
    return result;
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x) {
    T total{0};
    for (T v : x.data()) total += v;
    auto result = Tensor<T>::scalar(total);
    check_finite(OpKind::sum, result);
    g.record(OpKind::sum, {x}, result, [](Node<T>& node) {
        const T go = node.output.grad()[0];
        auto& in = node.inputs[0];
        if (T* gx = grad_of(in)) {
            for (std::size_t i = 0; i < in.numel(); ++i) gx[i] += go;
        }
    });
    return result;
}

template <typename T>
Tensor<T> mean(Graph<T>& g, const Tensor<T>& x) {
    if (x.numel() == 0) shape_error(OpKind::mean, "empty input");
    T total{0};
    for (T v : x.data()) total += v;
    const T inv = T{1} / static_cast<T>(x.numel());
    auto result = Tensor<T>::scalar(total * inv);
    check_finite(OpKind::mean, result);
    g.record(OpKind::mean, {x}, result, [inv](Node<T>& node) {
        const T go = node.output.grad()[0] * inv;
        auto& in = node.inputs[0];
        if (T* gx = grad_of(in)) {
            for (std::size_t i = 0; i < in.numel(); ++i) gx[i] += go;
        }
    });
    return result;
}

template <typename T>
Tensor<T> gather_labels(Graph<T>& g, const Tensor<T>& p, std::span<const int> labels) {
    constexpr auto kind = OpKind::gather_labels;
    const auto L = channel_layout(kind, p);
    if (labels.size() != L.outer * L.inner) {
        shape_error(kind, "label count " + std::to_string(labels.size()) + " does not match input " +
                              shape_string(p.shape()));
    }
    std::vector<int> idx(labels.begin(), labels.end());
    for (int v : idx) {
        if (v < 0 || static_cast<std::size_t>(v) >= L.channels) {
            shape_error(kind, "label " + std::to_string(v) + " out of range for " + shape_string(p.shape()));
        }
    }
    auto dp = p.data();
    std::vector<T> out(L.outer * L.inner);
    for (std::size_t o = 0; o < L.outer; ++o) {
        for (std::size_t i = 0; i < L.inner; ++i) {
            const auto c = static_cast<std::size_t>(idx[o * L.inner + i]);
            out[o * L.inner + i] = dp[(o * L.channels + c) * L.inner + i];
        }
    }
    Shape shape = p.shape();
    shape[1] = 1;
    Tensor<T> result(std::move(shape), std::move(out));
    g.record(kind, {p}, result, [L, idx = std::move(idx)](Node<T>& node) {
        auto go = node.output.grad();
        if (T* gp = grad_of(node.inputs[0])) {
            for (std::size_t o = 0; o < L.outer; ++o) {
                for (std::size_t i = 0; i < L.inner; ++i) {
                    const auto c = static_cast<std::size_t>(idx[o * L.inner + i]);
                    gp[(o * L.channels + c) * L.inner + i] += go[o * L.inner + i];
                }
            }
        }
    });
    return result;
}

template <typename T>
Tensor<T> neg_sq_l2_affinity(Graph<T>& g, const Tensor<T>& memory, const Tensor<T>& query, T scale) {
    constexpr auto kind = OpKind::neg_sq_l2_affinity;
    if (memory.rank() != 2 || query.rank() != 2 || memory.dim(0) != query.dim(0)) {
        shape_error(kind, "incompatible shapes " + shape_string(memory.shape()) + " and " +
                              shape_string(query.shape()));
    }
    const std::size_t C = memory.dim(0), M = memory.dim(1), Q = query.dim(1);
    auto dm = memory.data();
    auto dq = query.data();
    std::vector<T> out(M * Q, T{0});
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t m = 0; m < M; ++m) {
            const T mv = dm[c * M + m];
            T* orow = out.data() + m * Q;
            const T* qrow = dq.data() + c * Q;
            for (std::size_t q = 0; q < Q; ++q) {
                const T d = mv - qrow[q];
                orow[q] += d * d;
            }
        }
    }
    for (auto& v : out) v *= -scale;
    Tensor<T> result({M, Q}, std::move(out));
    check_finite(kind, result);
    g.record(kind, {memory, query}, result, [C, M, Q, scale](Node<T>& node) {
        auto go = node.output.grad();
        auto& mem = node.inputs[0];
        auto& qry = node.inputs[1];
        T* gm = grad_of(mem);
        T* gq = grad_of(qry);
        auto dm = mem.data();
        auto dq = qry.data();
        const T two_s = T{2} * scale;
        for (std::size_t c = 0; c < C; ++c) {
            const T* qrow = dq.data() + c * Q;
            for (std::size_t m = 0; m < M; ++m) {
                const T mv = dm[c * M + m];
                const T* grow = go.data() + m * Q;
                T acc{0};
                for (std::size_t q = 0; q < Q; ++q) {
                    const T w = grow[q] * two_s * (mv - qrow[q]);
                    acc += w;
                    if (gq) gq[c * Q + q] += w;
                }
                if (gm) gm[c * M + m] -= acc;
            }
        }
    });
    return result;
}

template <typename T>
Tensor<T> concat_channels(Graph<T>& g, const std::vector<Tensor<T>>& parts) {
    constexpr auto kind = OpKind::concat_channels;
    if (parts.empty()) shape_error(kind, "no inputs");
    const auto first = channel_layout(kind, parts[0]);
    std::size_t total_channels = 0;
    std::vector<std::size_t> channels;
    for (const auto& p : parts) {
        const auto L = channel_layout(kind, p);
        bool ok = p.rank() == parts[0].rank() && L.outer == first.outer && L.inner == first.inner;
        for (std::size_t a = 2; ok && a < p.rank(); ++a) ok = p.dim(a) == parts[0].dim(a);
        if (!ok) {
            shape_error(kind, "shape mismatch " + shape_string(parts[0].shape()) + " vs " + shape_string(p.shape()));
        }
        channels.push_back(L.channels);
        total_channels += L.channels;
    }
    const std::size_t outer = first.outer, inner = first.inner;
    std::vector<T> out(outer * total_channels * inner);
    for (std::size_t o = 0; o < outer; ++o) {
        std::size_t c0 = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            auto src = parts[k].data();
            const std::size_t n = channels[k] * inner;
            std::copy_n(src.data() + o * n, n, out.data() + (o * total_channels + c0) * inner);
            c0 += channels[k];
        }
    }
    Shape shape = parts[0].shape();
    shape[1] = total_channels;
    Tensor<T> result(std::move(shape), std::move(out));
    g.record(kind, parts, result, [outer, inner, total_channels, channels](Node<T>& node) {
        auto go = node.output.grad();
        std::size_t c0 = 0;
        for (std::size_t k = 0; k < node.inputs.size(); ++k) {
            const std::size_t n = channels[k] * inner;
            if (T* gp = grad_of(node.inputs[k])) {
                for (std::size_t o = 0; o < outer; ++o) {
                    const T* src = go.data() + (o * total_channels + c0) * inner;
                    T* dst = gp + o * n;
                    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
                }
            }
            c0 += channels[k];
        }
    });
    return result;
}

template <typename T>
Tensor<T> avgpool2(Graph<T>& g, const Tensor<T>& x) {
    constexpr auto kind = OpKind::avgpool2;
    require_rank(kind, x, 4);
    const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % 2 || W % 2 || H == 0 || W == 0) shape_error(kind, "spatial dims must be even, got " + shape_string(x.shape()));
    const std::size_t h = H / 2, w = W / 2;
    auto dx = x.data();
    std::vector<T> out(planes * h * w);
    for (std::size_t p = 0; p < planes; ++p) {
        const T* ip = dx.data() + p * H * W;
        T* op = out.data() + p * h * w;
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t xx = 0; xx < w; ++xx) {
                const T* a = ip + 2 * y * W + 2 * xx;
                op[y * w + xx] = T(0.25) * (a[0] + a[1] + a[W] + a[W + 1]);
            }
        }
    }
    Tensor<T> result({x.dim(0), x.dim(1), h, w}, std::move(out));
    g.record(kind, {x}, result, [planes, H, W, h, w](Node<T>& node) {
        auto go = node.output.grad();
        if (T* gx = grad_of(node.inputs[0])) {
            for (std::size_t p = 0; p < planes; ++p) {
                const T* gp = go.data() + p * h * w;
                T* gi = gx + p * H * W;
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const T v = T(0.25) * gp[y * w + xx];
                        T* a = gi + 2 * y * W + 2 * xx;
                        a[0] += v;
                        a[1] += v;
                        a[W] += v;
                        a[W + 1] += v;
                    }
                }
            }
        }
    });
    return result;
}

template <typename T>
Tensor<T> upsample2_nearest(Graph<T>& g, const Tensor<T>& x) {
    constexpr auto kind = OpKind::upsample2_nearest;
    require_rank(kind, x, 4);
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t H = 2 * h, W = 2 * w;
    auto dx = x.data();
    std::vector<T> out(planes * H * W);
    for (std::size_t p = 0; p < planes; ++p) {
        const T* ip = dx.data() + p * h * w;
        T* op = out.data() + p * H * W;
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t xx = 0; xx < W; ++xx) op[y * W + xx] = ip[(y / 2) * w + xx / 2];
        }
    }
    Tensor<T> result({x.dim(0), x.dim(1), H, W}, std::move(out));
    g.record(kind, {x}, result, [planes, H, W, h, w](Node<T>& node) {
        auto go = node.output.grad();
        if (T* gx = grad_of(node.inputs[0])) {
            for (std::size_t p = 0; p < planes; ++p) {
                const T* gp = go.data() + p * H * W;
                T* gi = gx + p * h * w;
                for (std::size_t y = 0; y < H; ++y) {
                    for (std::size_t xx = 0; xx < W; ++xx) gi[(y / 2) * w + xx / 2] += gp[y * W + xx];
                }
            }
        }
    });
    return result;
}

template <typename T>
Tensor<T> reshape(Graph<T>& g, const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        shape_error(OpKind::reshape, "cannot reshape " + shape_string(x.shape()) + " to " + shape_string(shape));
    }
    auto d = x.data();
    Tensor<T> result(std::move(shape), std::vector<T>(d.begin(), d.end()));
    g.record(OpKind::reshape, {x}, result, [](Node<T>& node) {
        auto go = node.output.grad();
        if (T* gx = grad_of(node.inputs[0])) {
            for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
        }
    });
    return result;
}

template <typename T>
Tensor<T> forward(Graph<T>& g, OpKind kind, const std::vector<Tensor<T>>& in, const OpAttrs& attrs) {
    auto arity = [&](std::size_t lo, std::size_t hi) {
        if (in.size() < lo || in.size() > hi) {
            shape_error(kind, "expected " + std::to_string(lo) + (lo == hi ? "" : ".." + std::to_string(hi)) +
                                  " inputs, got " + std::to_string(in.size()));
        }
    };
    switch (kind) {
        case OpKind::add: arity(2, 2); return add(g, in[0], in[1]);
        case OpKind::sub: arity(2, 2); return sub(g, in[0], in[1]);
        case OpKind::mul: arity(2, 2); return mul(g, in[0], in[1]);
        case OpKind::scalar_mul: arity(1, 1); return scalar_mul(g, in[0], static_cast<T>(attrs.scalar));
        case OpKind::matmul: arity(2, 2); return matmul(g, in[0], in[1]);
        case OpKind::conv2d_3x3_pad1:
            arity(2, 3);
            return conv2d_3x3_pad1(g, in[0], in[1], in.size() == 3 ? in[2] : Tensor<T>{});
        case OpKind::relu: arity(1, 1); return relu(g, in[0]);
        case OpKind::sigmoid: arity(1, 1); return sigmoid(g, in[0]);
        case OpKind::channel_softmax: arity(1, 1); return channel_softmax(g, in[0]);
        case OpKind::log: arity(1, 1); return log(g, in[0]);
        case OpKind::sum: arity(1, 1); return sum(g, in[0]);
        case OpKind::mean: arity(1, 1); return mean(g, in[0]);
        case OpKind::gather_labels: arity(1, 1); return gather_labels(g, in[0], std::span<const int>(attrs.labels));
        case OpKind::neg_sq_l2_affinity:
            arity(2, 2);
            return neg_sq_l2_affinity(g, in[0], in[1], static_cast<T>(attrs.scalar));
        case OpKind::concat_channels: return concat_channels(g, in);
        case OpKind::avgpool2: arity(1, 1); return avgpool2(g, in[0]);
        case OpKind::upsample2_nearest: arity(1, 1); return upsample2_nearest(g, in[0]);
        case OpKind::reshape: arity(1, 1); return reshape(g, in[0], attrs.shape);
    }
    throw std::invalid_argument("forward: unknown op kind");
}

#define TWOSHOT_INSTANTIATE_OPS(T)                                                                     \
    template Tensor<T> add(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> sub(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> mul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> scalar_mul(Graph<T>&, const Tensor<T>&, T);                                     \
    template Tensor<T> matmul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> conv2d_3x3_pad1(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> relu(Graph<T>&, const Tensor<T>&);                                              \
    template Tensor<T> sigmoid(Graph<T>&, const Tensor<T>&);                                           \
    template Tensor<T> channel_softmax(Graph<T>&, const Tensor<T>&);                                   \
    template Tensor<T> log(Graph<T>&, const Tensor<T>&);                                               \
    template Tensor<T> sum(Graph<T>&, const Tensor<T>&);                                               \
    template Tensor<T> mean(Graph<T>&, const Tensor<T>&);                                              \
    template Tensor<T> gather_labels(Graph<T>&, const Tensor<T>&, std::span<const int>);               \
    template Tensor<T> neg_sq_l2_affinity(Graph<T>&, const Tensor<T>&, const Tensor<T>&, T);           \
    template Tensor<T> concat_channels(Graph<T>&, const std::vector<Tensor<T>>&);                      \
    template Tensor<T> avgpool2(Graph<T>&, const Tensor<T>&);                                          \
    template Tensor<T> upsample2_nearest(Graph<T>&, const Tensor<T>&);                                 \
    template Tensor<T> reshape(Graph<T>&, const Tensor<T>&, Shape);                                    \
    template Tensor<T> forward(Graph<T>&, OpKind, const std::vector<Tensor<T>>&, const OpAttrs&);

TWOSHOT_INSTANTIATE_OPS(float)
TWOSHOT_INSTANTIATE_OPS(double)

#undef TWOSHOT_INSTANTIATE_OPS

}  // namespace twoshot::ad
