#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "rashvit/tape.hpp"

// Reverse-mode primitives. Every op computes its forward value eagerly and,
// when any input carries requires_grad, records a backward closure on the tape.
namespace rashvit::nn {

template <class T>
NodePtr<T> constant(Tape<T>& tape, Tensor<T> v) {
    return tape.emit(std::move(v), false);
}

template <class T>
NodePtr<T> add(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value)) throw std::invalid_argument("add: shape mismatch");
    Tensor<T> v = a->value;
    for (int64_t i = 0; i < v.numel(); ++i) v[i] += b->value[i];
    bool rg = a->requires_grad || b->requires_grad;
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([a, b, out] {
            if (a->requires_grad)
                for (int64_t i = 0; i < out->grad.numel(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (int64_t i = 0; i < out->grad.numel(); ++i) b->grad[i] += out->grad[i];
        });
    }
    return out;
}

template <class T>
NodePtr<T> scale(Tape<T>& tape, const NodePtr<T>& x, T c) {
    Tensor<T> v = x->value;
    for (auto& e : v.data) e *= c;
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, c] {
            for (int64_t i = 0; i < out->grad.numel(); ++i) x->grad[i] += c * out->grad[i];
        });
    }
    return out;
}

// out = s * x where s is a one-element learnable node.
template <class T>
NodePtr<T> scale_by(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& s) {
    if (s->value.numel() != 1) throw std::invalid_argument("scale_by: scalar expected");
    T sv = s->value[0];
    Tensor<T> v = x->value;
    for (auto& e : v.data) e *= sv;
    bool rg = x->requires_grad || s->requires_grad;
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([x, s, out, sv] {
            if (x->requires_grad)
                for (int64_t i = 0; i < out->grad.numel(); ++i) x->grad[i] += sv * out->grad[i];
            if (s->requires_grad) {
                T acc = 0;
                for (int64_t i = 0; i < out->grad.numel(); ++i) acc += out->grad[i] * x->value[i];
                s->grad[0] += acc;
            }
        });
    }
    return out;
}

namespace detail {
inline std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
    std::vector<int64_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * shape[i + 1];
    return st;
}
}  // namespace detail

// Elementwise a*b with numpy-style broadcasting on equal-rank shapes
// (covers the (B,C,1,1) and (B,1,H,W) attention gates).
template <class T>
NodePtr<T> mul(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
    const auto& sa = a->value.shape;
    const auto& sb = b->value.shape;
    if (sa.size() != sb.size()) throw std::invalid_argument("mul: rank mismatch");
    std::vector<int64_t> so(sa.size());
    for (size_t i = 0; i < sa.size(); ++i) {
        if (sa[i] != sb[i] && sa[i] != 1 && sb[i] != 1) throw std::invalid_argument("mul: shapes not broadcastable");
        so[i] = std::max(sa[i], sb[i]);
    }
    auto sto = detail::strides_of(so), sta = detail::strides_of(sa), stb = detail::strides_of(sb);
    int64_t n = Tensor<T>::numel_of(so);
    auto map_idx = [&](int64_t flat, const std::vector<int64_t>& shp, const std::vector<int64_t>& st) {
        int64_t idx = 0;
        for (size_t d = 0; d < so.size(); ++d) {
            int64_t c = (flat / sto[d]) % so[d];
            idx += (shp[d] == 1 ? 0 : c) * st[d];
        }
        return idx;
    };
    Tensor<T> v(so);
    for (int64_t i = 0; i < n; ++i) v[i] = a->value[map_idx(i, sa, sta)] * b->value[map_idx(i, sb, stb)];
    bool rg = a->requires_grad || b->requires_grad;
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([a, b, out, so, sto, sa, sta, sb, stb, n] {
            auto map_idx = [&so, &sto](int64_t flat, const std::vector<int64_t>& shp,
                                       const std::vector<int64_t>& st) {
                int64_t idx = 0;
                for (size_t d = 0; d < so.size(); ++d) {
                    int64_t c = (flat / sto[d]) % so[d];
                    idx += (shp[d] == 1 ? 0 : c) * st[d];
                }
                return idx;
            };
            for (int64_t i = 0; i < n; ++i) {
                int64_t ia = map_idx(i, sa, sta), ib = map_idx(i, sb, stb);
                T g = out->grad[i];
                if (a->requires_grad) a->grad[ia] += g * b->value[ib];
                if (b->requires_grad) b->grad[ib] += g * a->value[ia];
            }
        });
    }
    return out;
}

template <class T>
NodePtr<T> relu(Tape<T>& tape, const NodePtr<T>& x) {
    Tensor<T> v = x->value;
    for (auto& e : v.data) e = e > T(0) ? e : T(0);
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out] {
            for (int64_t i = 0; i < out->grad.numel(); ++i)
                if (x->value[i] > T(0)) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

template <class T>
NodePtr<T> sigmoid(Tape<T>& tape, const NodePtr<T>& x) {
    Tensor<T> v = x->value;
    for (auto& e : v.data) e = T(1) / (T(1) + std::exp(-e));
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out] {
            for (int64_t i = 0; i < out->grad.numel(); ++i) {
                T y = out->value[i];
                x->grad[i] += out->grad[i] * y * (T(1) - y);
            }
        });
    }
    return out;
}

// Max-subtracted softmax along `axis`.
template <class T>
NodePtr<T> softmax(Tape<T>& tape, const NodePtr<T>& x, int axis) {
    const auto& s = x->value.shape;
    if (axis < 0) axis += static_cast<int>(s.size());
    if (axis < 0 || axis >= static_cast<int>(s.size())) throw std::invalid_argument("softmax: bad axis");
    int64_t L = s[axis];
    int64_t inner = 1, outer = 1;
    for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) inner *= s[i];
    for (int i = 0; i < axis; ++i) outer *= s[i];
    Tensor<T> v = x->value;
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            int64_t base = o * L * inner + in;
            T mx = v[base];
            for (int64_t k = 1; k < L; ++k) mx = std::max(mx, v[base + k * inner]);
            T sum = 0;
            for (int64_t k = 0; k < L; ++k) {
                T e = std::exp(v[base + k * inner] - mx);
                v[base + k * inner] = e;
                sum += e;
            }
            for (int64_t k = 0; k < L; ++k) v[base + k * inner] /= sum;
        }
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, L, inner, outer] {
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t in = 0; in < inner; ++in) {
                    int64_t base = o * L * inner + in;
                    T dot = 0;
                    for (int64_t k = 0; k < L; ++k) dot += out->grad[base + k * inner] * out->value[base + k * inner];
                    for (int64_t k = 0; k < L; ++k) {
                        int64_t i = base + k * inner;
                        x->grad[i] += out->value[i] * (out->grad[i] - dot);
                    }
                }
        });
    }
    return out;
}

// Cross-correlation. x: (B,Cin,H,W), w: (Cout,Cin/groups,kH,kW), b: (Cout) or null.
template <class T>
NodePtr<T> conv2d(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b,
                  int stride, int padding, int groups) {
    const auto& xs = x->value.shape;
    const auto& ws = w->value.shape;
    if (xs.size() != 4 || ws.size() != 4) throw std::invalid_argument("conv2d: 4-d tensors expected");
    int64_t B = xs[0], Cin = xs[1], H = xs[2], W = xs[3];
    int64_t Cout = ws[0], Cin_g = ws[1], kH = ws[2], kW = ws[3];
    if (groups < 1 || Cin % groups != 0 || Cout % groups != 0 || Cin / groups != Cin_g)
        throw std::invalid_argument("conv2d: group/channel mismatch");
    if (b && b->value.numel() != Cout) throw std::invalid_argument("conv2d: bias size mismatch");
    int64_t Ho = (H + 2 * padding - kH) / stride + 1;
    int64_t Wo = (W + 2 * padding - kW) / stride + 1;
    if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: nonpositive output size");
    int64_t Cout_g = Cout / groups;

    Tensor<T> v({B, Cout, Ho, Wo});
    const T* xp = x->value.data.data();
    const T* wp = w->value.data.data();
    T* vp = v.data.data();
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t g = 0; g < groups; ++g)
            for (int64_t ocg = 0; ocg < Cout_g; ++ocg) {
                int64_t oc = g * Cout_g + ocg;
                T bias = b ? b->value[oc] : T(0);
                for (int64_t oh = 0; oh < Ho; ++oh)
                    for (int64_t ow = 0; ow < Wo; ++ow) {
                        T acc = bias;
                        for (int64_t icg = 0; icg < Cin_g; ++icg) {
                            int64_t ic = g * Cin_g + icg;
                            const T* xc = xp + ((bb * Cin + ic) * H) * W;
                            const T* wc = wp + ((oc * Cin_g + icg) * kH) * kW;
                            for (int64_t kh = 0; kh < kH; ++kh) {
                                int64_t ih = oh * stride - padding + kh;
                                if (ih < 0 || ih >= H) continue;
                                for (int64_t kw = 0; kw < kW; ++kw) {
                                    int64_t iw = ow * stride - padding + kw;
                                    if (iw < 0 || iw >= W) continue;
                                    acc += xc[ih * W + iw] * wc[kh * kW + kw];
                                }
                            }
                        }
                        vp[((bb * Cout + oc) * Ho + oh) * Wo + ow] = acc;
                    }
            }

    bool rg = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([x, w, b, out, B, Cin, H, W, Cout, Cin_g, kH, kW, Ho, Wo, stride, padding, groups, Cout_g] {
            const T* gp = out->grad.data.data();
            for (int64_t bb = 0; bb < B; ++bb)
                for (int64_t g = 0; g < groups; ++g)
                    for (int64_t ocg = 0; ocg < Cout_g; ++ocg) {
                        int64_t oc = g * Cout_g + ocg;
                        for (int64_t oh = 0; oh < Ho; ++oh)
                            for (int64_t ow = 0; ow < Wo; ++ow) {
                                T go = gp[((bb * Cout + oc) * Ho + oh) * Wo + ow];
                                if (go == T(0)) continue;
                                if (b && b->requires_grad) b->grad[oc] += go;
                                for (int64_t icg = 0; icg < Cin_g; ++icg) {
                                    int64_t ic = g * Cin_g + icg;
                                    for (int64_t kh = 0; kh < kH; ++kh) {
                                        int64_t ih = oh * stride - padding + kh;
                                        if (ih < 0 || ih >= H) continue;
                                        for (int64_t kw = 0; kw < kW; ++kw) {
                                            int64_t iw = ow * stride - padding + kw;
                                            if (iw < 0 || iw >= W) continue;
                                            int64_t xi = ((bb * Cin + ic) * H + ih) * W + iw;
                                            int64_t wi = ((oc * Cin_g + icg) * kH + kh) * kW + kw;
                                            if (x->requires_grad) x->grad[xi] += go * w->value[wi];
                                            if (w->requires_grad) w->grad[wi] += go * x->value[xi];
                                        }
                                    }
                                }
                            }
                    }
        });
    }
    return out;
}

// Batch norm over (B,C,H,W). Running stats live outside the graph and are
// updated in train mode: running <- (1-momentum)*running + momentum*batch.
template <class T>
NodePtr<T> batch_norm(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& gamma, const NodePtr<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T momentum = T(0.1),
                      T eps = T(1e-5)) {
    const auto& s = x->value.shape;
    if (s.size() != 4) throw std::invalid_argument("batch_norm: 4-d tensor expected");
    int64_t B = s[0], C = s[1], H = s[2], W = s[3];
    if (train && B < 2) throw std::invalid_argument("batch_norm: train mode requires batch size >= 2");
    int64_t n = B * H * W;

    std::vector<T> mean(C), var(C);
    if (train) {
        for (int64_t c = 0; c < C; ++c) {
            T m = 0;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < H * W; ++i) m += x->value[((b * C + c) * H * W) + i];
            m /= static_cast<T>(n);
            T v = 0;
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < H * W; ++i) {
                    T d = x->value[((b * C + c) * H * W) + i] - m;
                    v += d * d;
                }
            v /= static_cast<T>(n);
            mean[c] = m;
            var[c] = v;
            running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * m;
            running_var[c] = (T(1) - momentum) * running_var[c] + momentum * v;
        }
    } else {
        for (int64_t c = 0; c < C; ++c) {
            mean[c] = running_mean[c];
            var[c] = running_var[c];
        }
    }

    Tensor<T> v(s);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            T inv = T(1) / std::sqrt(var[c] + eps);
            T g = gamma->value[c], bt = beta->value[c], m = mean[c];
            for (int64_t i = 0; i < H * W; ++i) {
                int64_t idx = (b * C + c) * H * W + i;
                v[idx] = g * (x->value[idx] - m) * inv + bt;
            }
        }

    bool rg = x->requires_grad || gamma->requires_grad || beta->requires_grad;
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([x, gamma, beta, out, mean, var, B, C, H, W, n, train, eps] {
            for (int64_t c = 0; c < C; ++c) {
                T inv = T(1) / std::sqrt(var[c] + eps);
                T m = mean[c], g = gamma->value[c];
                T sum_go = 0, sum_go_xhat = 0;
                for (int64_t b = 0; b < B; ++b)
                    for (int64_t i = 0; i < H * W; ++i) {
                        int64_t idx = (b * C + c) * H * W + i;
                        T xhat = (x->value[idx] - m) * inv;
                        sum_go += out->grad[idx];
                        sum_go_xhat += out->grad[idx] * xhat;
                    }
                if (gamma->requires_grad) gamma->grad[c] += sum_go_xhat;
                if (beta->requires_grad) beta->grad[c] += sum_go;
                if (x->requires_grad) {
                    for (int64_t b = 0; b < B; ++b)
                        for (int64_t i = 0; i < H * W; ++i) {
                            int64_t idx = (b * C + c) * H * W + i;
                            T go = out->grad[idx];
                            if (train) {
                                T xhat = (x->value[idx] - m) * inv;
                                x->grad[idx] += g * inv *
                                                (go - sum_go / static_cast<T>(n) -
                                                 xhat * sum_go_xhat / static_cast<T>(n));
                            } else {
                                x->grad[idx] += g * inv * go;
                            }
                        }
                }
            }
        });
    }
    return out;
}

enum class PoolKind { spatial_avg, spatial_max, channel_avg, channel_max, global_avg };

// spatial_* : (B,C,H,W) -> (B,C,1,1); channel_* : -> (B,1,H,W); global_avg : -> (B,C)
template <class T>
NodePtr<T> pool(Tape<T>& tape, const NodePtr<T>& x, PoolKind kind) {
    const auto& s = x->value.shape;
    if (s.size() != 4) throw std::invalid_argument("pool: 4-d tensor expected");
    int64_t B = s[0], C = s[1], H = s[2], W = s[3];
    int64_t hw = H * W;
    Tensor<T> v;
    std::vector<int64_t> arg;  // winner index for max pools
    switch (kind) {
        case PoolKind::spatial_avg:
        case PoolKind::spatial_max: {
            v = Tensor<T>({B, C, 1, 1});
            if (kind == PoolKind::spatial_max) arg.resize(static_cast<size_t>(B * C));
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    int64_t base = (b * C + c) * hw;
                    if (kind == PoolKind::spatial_avg) {
                        T acc = 0;
                        for (int64_t i = 0; i < hw; ++i) acc += x->value[base + i];
                        v[b * C + c] = acc / static_cast<T>(hw);
                    } else {
                        int64_t best = 0;
                        for (int64_t i = 1; i < hw; ++i)
                            if (x->value[base + i] > x->value[base + best]) best = i;
                        v[b * C + c] = x->value[base + best];
                        arg[static_cast<size_t>(b * C + c)] = base + best;
                    }
                }
            break;
        }
        case PoolKind::channel_avg:
        case PoolKind::channel_max: {
            v = Tensor<T>({B, 1, H, W});
            if (kind == PoolKind::channel_max) arg.resize(static_cast<size_t>(B * hw));
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < hw; ++i) {
                    if (kind == PoolKind::channel_avg) {
                        T acc = 0;
                        for (int64_t c = 0; c < C; ++c) acc += x->value[(b * C + c) * hw + i];
                        v[b * hw + i] = acc / static_cast<T>(C);
                    } else {
                        int64_t best = 0;
                        for (int64_t c = 1; c < C; ++c)
                            if (x->value[(b * C + c) * hw + i] > x->value[(b * C + best) * hw + i]) best = c;
                        v[b * hw + i] = x->value[(b * C + best) * hw + i];
                        arg[static_cast<size_t>(b * hw + i)] = (b * C + best) * hw + i;
                    }
                }
            break;
        }
        case PoolKind::global_avg: {
            v = Tensor<T>({B, C});
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    T acc = 0;
                    for (int64_t i = 0; i < hw; ++i) acc += x->value[(b * C + c) * hw + i];
                    v[b * C + c] = acc / static_cast<T>(hw);
                }
            break;
        }
    }
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, kind, arg, B, C, H, W, hw] {
            switch (kind) {
                case PoolKind::spatial_avg:
                    for (int64_t bc = 0; bc < B * C; ++bc) {
                        T g = out->grad[bc] / static_cast<T>(hw);
                        for (int64_t i = 0; i < hw; ++i) x->grad[bc * hw + i] += g;
                    }
                    break;
                case PoolKind::spatial_max:
                    for (int64_t bc = 0; bc < B * C; ++bc) x->grad[arg[static_cast<size_t>(bc)]] += out->grad[bc];
                    break;
                case PoolKind::channel_avg:
                    for (int64_t b = 0; b < B; ++b)
                        for (int64_t i = 0; i < hw; ++i) {
                            T g = out->grad[b * hw + i] / static_cast<T>(C);
                            for (int64_t c = 0; c < C; ++c) x->grad[(b * C + c) * hw + i] += g;
                        }
                    break;
                case PoolKind::channel_max:
                    for (int64_t bi = 0; bi < B * hw; ++bi) x->grad[arg[static_cast<size_t>(bi)]] += out->grad[bi];
                    break;
                case PoolKind::global_avg:
                    for (int64_t bc = 0; bc < B * C; ++bc) {
                        T g = out->grad[bc] / static_cast<T>(hw);
                        for (int64_t i = 0; i < hw; ++i) x->grad[bc * hw + i] += g;
                    }
                    break;
            }
        });
    }
    return out;
}

// Inverted dropout; eval mode is the identity (returns the input node).
template <class T>
NodePtr<T> dropout(Tape<T>& tape, const NodePtr<T>& x, double p, bool train, std::mt19937_64& rng) {
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0,1)");
    if (!train || p == 0.0) return x;
    T keep_scale = T(1.0 / (1.0 - p));
    auto mask = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(x->value.numel()));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor<T> v = x->value;
    for (int64_t i = 0; i < v.numel(); ++i) {
        bool keep = u(rng) >= p;
        (*mask)[static_cast<size_t>(i)] = keep;
        v[i] = keep ? v[i] * keep_scale : T(0);
    }
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, mask, keep_scale] {
            for (int64_t i = 0; i < out->grad.numel(); ++i)
                if ((*mask)[static_cast<size_t>(i)]) x->grad[i] += out->grad[i] * keep_scale;
        });
    }
    return out;
}

// Mean over the batch of -log softmax(logits)[label].
template <class T>
NodePtr<T> cross_entropy(Tape<T>& tape, const NodePtr<T>& logits, const std::vector<int>& labels) {
    const auto& s = logits->value.shape;
    if (s.size() != 2) throw std::invalid_argument("cross_entropy: (B,K) logits expected");
    int64_t B = s[0], K = s[1];
    if (static_cast<int64_t>(labels.size()) != B) throw std::invalid_argument("cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= K) throw std::invalid_argument("cross_entropy: label out of range");
    auto probs = std::make_shared<Tensor<T>>(std::vector<int64_t>{B, K});
    T loss = 0;
    for (int64_t b = 0; b < B; ++b) {
        T mx = logits->value[b * K];
        for (int64_t k = 1; k < K; ++k) mx = std::max(mx, logits->value[b * K + k]);
        T sum = 0;
        for (int64_t k = 0; k < K; ++k) {
            T e = std::exp(logits->value[b * K + k] - mx);
            (*probs)[b * K + k] = e;
            sum += e;
        }
        for (int64_t k = 0; k < K; ++k) (*probs)[b * K + k] /= sum;
        loss -= std::log((*probs)[b * K + labels[static_cast<size_t>(b)]]);
    }
    loss /= static_cast<T>(B);
    auto out = tape.emit(Tensor<T>::scalar(loss), logits->requires_grad);
    if (logits->requires_grad) {
        tape.record([logits, out, probs, labels, B, K] {
            T go = out->grad[0] / static_cast<T>(B);
            for (int64_t b = 0; b < B; ++b)
                for (int64_t k = 0; k < K; ++k) {
                    T p = (*probs)[b * K + k];
                    T y = (k == labels[static_cast<size_t>(b)]) ? T(1) : T(0);
                    logits->grad[b * K + k] += go * (p - y);
                }
        });
    }
    return out;
}

// Per-sample (dim 0) min-max normalization over all remaining elements:
// y = (x - min) / (max - min + eps). Constant slices map to zeros.
template <class T>
NodePtr<T> min_max_norm(Tape<T>& tape, const NodePtr<T>& x, T eps = T(1e-6)) {
    const auto& s = x->value.shape;
    if (s.empty()) throw std::invalid_argument("min_max_norm: rank >= 1 expected");
    int64_t B = s[0];
    int64_t n = x->value.numel() / B;
    Tensor<T> v(s);
    auto lo_idx = std::make_shared<std::vector<int64_t>>(B);
    auto hi_idx = std::make_shared<std::vector<int64_t>>(B);
    for (int64_t b = 0; b < B; ++b) {
        int64_t base = b * n, lo = 0, hi = 0;
        for (int64_t i = 1; i < n; ++i) {
            if (x->value[base + i] < x->value[base + lo]) lo = i;
            if (x->value[base + i] > x->value[base + hi]) hi = i;
        }
        (*lo_idx)[static_cast<size_t>(b)] = base + lo;
        (*hi_idx)[static_cast<size_t>(b)] = base + hi;
        T m = x->value[base + lo];
        T d = x->value[base + hi] - m + eps;
        for (int64_t i = 0; i < n; ++i) v[base + i] = (x->value[base + i] - m) / d;
    }
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, lo_idx, hi_idx, B, n, eps] {
            for (int64_t b = 0; b < B; ++b) {
                int64_t base = b * n;
                int64_t il = (*lo_idx)[static_cast<size_t>(b)], ih = (*hi_idx)[static_cast<size_t>(b)];
                T m = x->value[il];
                T d = x->value[ih] - m + eps;
                T sum_go = 0, sum_go_y = 0;
                for (int64_t i = 0; i < n; ++i) {
                    sum_go += out->grad[base + i];
                    sum_go_y += out->grad[base + i] * out->value[base + i];
                }
                for (int64_t i = 0; i < n; ++i) x->grad[base + i] += out->grad[base + i] / d;
                // d y_j / d min = (-d + (x_j - min)) / d^2 ; d y_j / d max = -(x_j - min) / d^2
                x->grad[il] += (-sum_go + sum_go_y) / d;
                x->grad[ih] += -sum_go_y / d;
            }
        });
    }
    return out;
}

// (B,Ca,H,W) ++ (B,Cb,H,W) -> (B,Ca+Cb,H,W)
template <class T>
NodePtr<T> concat_channels(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
    const auto& sa = a->value.shape;
    const auto& sb = b->value.shape;
    if (sa.size() != 4 || sb.size() != 4 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
        throw std::invalid_argument("concat_channels: incompatible shapes");
    int64_t B = sa[0], Ca = sa[1], Cb = sb[1], hw = sa[2] * sa[3];
    Tensor<T> v({B, Ca + Cb, sa[2], sa[3]});
    for (int64_t bb = 0; bb < B; ++bb) {
        std::copy_n(&a->value[bb * Ca * hw], static_cast<size_t>(Ca * hw), &v[bb * (Ca + Cb) * hw]);
        std::copy_n(&b->value[bb * Cb * hw], static_cast<size_t>(Cb * hw), &v[(bb * (Ca + Cb) + Ca) * hw]);
    }
    bool rg = a->requires_grad || b->requires_grad;
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([a, b, out, B, Ca, Cb, hw] {
            for (int64_t bb = 0; bb < B; ++bb) {
                if (a->requires_grad)
                    for (int64_t i = 0; i < Ca * hw; ++i) a->grad[bb * Ca * hw + i] += out->grad[bb * (Ca + Cb) * hw + i];
                if (b->requires_grad)
                    for (int64_t i = 0; i < Cb * hw; ++i)
                        b->grad[bb * Cb * hw + i] += out->grad[(bb * (Ca + Cb) + Ca) * hw + i];
            }
        });
    }
    return out;
}

// Channels [c0, c1) of a (B,C,H,W) tensor.
template <class T>
NodePtr<T> slice_channels(Tape<T>& tape, const NodePtr<T>& x, int64_t c0, int64_t c1) {
    const auto& s = x->value.shape;
    if (s.size() != 4 || c0 < 0 || c1 > s[1] || c0 >= c1) throw std::invalid_argument("slice_channels: bad range");
    int64_t B = s[0], C = s[1], hw = s[2] * s[3], Cs = c1 - c0;
    Tensor<T> v({B, Cs, s[2], s[3]});
    for (int64_t bb = 0; bb < B; ++bb)
        std::copy_n(&x->value[(bb * C + c0) * hw], static_cast<size_t>(Cs * hw), &v[bb * Cs * hw]);
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, B, C, hw, Cs, c0] {
            for (int64_t bb = 0; bb < B; ++bb)
                for (int64_t i = 0; i < Cs * hw; ++i) x->grad[(bb * C + c0) * hw + i] += out->grad[bb * Cs * hw + i];
        });
    }
    return out;
}

// (B,C,H,W) -> (B,N,C) with token n = h*W + w.
template <class T>
NodePtr<T> map_to_tokens(Tape<T>& tape, const NodePtr<T>& x) {
    const auto& s = x->value.shape;
    if (s.size() != 4) throw std::invalid_argument("map_to_tokens: 4-d tensor expected");
    int64_t B = s[0], C = s[1], N = s[2] * s[3];
    Tensor<T> v({B, N, C});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t t = 0; t < N; ++t) v[(b * N + t) * C + c] = x->value[(b * C + c) * N + t];
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, B, C, N] {
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t t = 0; t < N; ++t) x->grad[(b * C + c) * N + t] += out->grad[(b * N + t) * C + c];
        });
    }
    return out;
}

// (B,N,C) -> (B,C,H,W) with N = H*W.
template <class T>
NodePtr<T> tokens_to_map(Tape<T>& tape, const NodePtr<T>& x, int64_t H, int64_t W) {
    const auto& s = x->value.shape;
    if (s.size() != 3 || s[1] != H * W) throw std::invalid_argument("tokens_to_map: bad token count");
    int64_t B = s[0], N = s[1], C = s[2];
    Tensor<T> v({B, C, H, W});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t t = 0; t < N; ++t) v[(b * C + c) * N + t] = x->value[(b * N + t) * C + c];
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, B, C, N] {
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c)
                    for (int64_t t = 0; t < N; ++t) x->grad[(b * N + t) * C + c] += out->grad[(b * C + c) * N + t];
        });
    }
    return out;
}

// (B,N,K) x (K,M) -> (B,N,M)
template <class T>
NodePtr<T> matmul_param(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& w) {
    const auto& sx = x->value.shape;
    const auto& sw = w->value.shape;
    if (sx.size() != 3 || sw.size() != 2 || sx[2] != sw[0]) throw std::invalid_argument("matmul_param: shape mismatch");
    int64_t B = sx[0], N = sx[1], K = sx[2], M = sw[1];
    Tensor<T> v({B, N, M});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < N; ++i)
            for (int64_t k = 0; k < K; ++k) {
                T xv = x->value[(b * N + i) * K + k];
                for (int64_t j = 0; j < M; ++j) v[(b * N + i) * M + j] += xv * w->value[k * M + j];
            }
    bool rg = x->requires_grad || w->requires_grad;
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([x, w, out, B, N, K, M] {
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t j = 0; j < M; ++j) {
                        T go = out->grad[(b * N + i) * M + j];
                        for (int64_t k = 0; k < K; ++k) {
                            if (x->requires_grad) x->grad[(b * N + i) * K + k] += go * w->value[k * M + j];
                            if (w->requires_grad) w->grad[k * M + j] += go * x->value[(b * N + i) * K + k];
                        }
                    }
        });
    }
    return out;
}

// (B,N,K) x (B,K,M) -> (B,N,M)
template <class T>
NodePtr<T> bmm(Tape<T>& tape, const NodePtr<T>& a, const NodePtr<T>& b) {
    const auto& sa = a->value.shape;
    const auto& sb = b->value.shape;
    if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1])
        throw std::invalid_argument("bmm: shape mismatch");
    int64_t B = sa[0], N = sa[1], K = sa[2], M = sb[2];
    Tensor<T> v({B, N, M});
    for (int64_t bb = 0; bb < B; ++bb)
        for (int64_t i = 0; i < N; ++i)
            for (int64_t k = 0; k < K; ++k) {
                T av = a->value[(bb * N + i) * K + k];
                for (int64_t j = 0; j < M; ++j) v[(bb * N + i) * M + j] += av * b->value[(bb * K + k) * M + j];
            }
    bool rg = a->requires_grad || b->requires_grad;
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([a, b, out, B, N, K, M] {
            for (int64_t bb = 0; bb < B; ++bb)
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t j = 0; j < M; ++j) {
                        T go = out->grad[(bb * N + i) * M + j];
                        for (int64_t k = 0; k < K; ++k) {
                            if (a->requires_grad) a->grad[(bb * N + i) * K + k] += go * b->value[(bb * K + k) * M + j];
                            if (b->requires_grad) b->grad[(bb * K + k) * M + j] += go * a->value[(bb * N + i) * K + k];
                        }
                    }
        });
    }
    return out;
}

// (B,N,M) -> (B,M,N)
template <class T>
NodePtr<T> transpose12(Tape<T>& tape, const NodePtr<T>& x) {
    const auto& s = x->value.shape;
    if (s.size() != 3) throw std::invalid_argument("transpose12: 3-d tensor expected");
    int64_t B = s[0], N = s[1], M = s[2];
    Tensor<T> v({B, M, N});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t i = 0; i < N; ++i)
            for (int64_t j = 0; j < M; ++j) v[(b * M + j) * N + i] = x->value[(b * N + i) * M + j];
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out, B, N, M] {
            for (int64_t b = 0; b < B; ++b)
                for (int64_t i = 0; i < N; ++i)
                    for (int64_t j = 0; j < M; ++j) x->grad[(b * N + i) * M + j] += out->grad[(b * M + j) * N + i];
        });
    }
    return out;
}

// (B,in) x (in,out) + bias -> (B,out)
template <class T>
NodePtr<T> linear(Tape<T>& tape, const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b) {
    const auto& sx = x->value.shape;
    const auto& sw = w->value.shape;
    if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[0]) throw std::invalid_argument("linear: shape mismatch");
    int64_t B = sx[0], In = sx[1], Out = sw[1];
    if (b && b->value.numel() != Out) throw std::invalid_argument("linear: bias size mismatch");
    Tensor<T> v({B, Out});
    for (int64_t bb = 0; bb < B; ++bb) {
        for (int64_t j = 0; j < Out; ++j) v[bb * Out + j] = b ? b->value[j] : T(0);
        for (int64_t k = 0; k < In; ++k) {
            T xv = x->value[bb * In + k];
            for (int64_t j = 0; j < Out; ++j) v[bb * Out + j] += xv * w->value[k * Out + j];
        }
    }
    bool rg = x->requires_grad || w->requires_grad || (b && b->requires_grad);
    auto out = tape.emit(std::move(v), rg);
    if (rg) {
        tape.record([x, w, b, out, B, In, Out] {
            for (int64_t bb = 0; bb < B; ++bb)
                for (int64_t j = 0; j < Out; ++j) {
                    T go = out->grad[bb * Out + j];
                    if (b && b->requires_grad) b->grad[j] += go;
                    for (int64_t k = 0; k < In; ++k) {
                        if (x->requires_grad) x->grad[bb * In + k] += go * w->value[k * Out + j];
                        if (w->requires_grad) w->grad[k * Out + j] += go * x->value[bb * In + k];
                    }
                }
        });
    }
    return out;
}

template <class T>
NodePtr<T> reshape(Tape<T>& tape, const NodePtr<T>& x, std::vector<int64_t> new_shape) {
    if (Tensor<T>::numel_of(new_shape) != x->value.numel()) throw std::invalid_argument("reshape: numel mismatch");
    Tensor<T> v(new_shape, x->value.data);
    auto out = tape.emit(std::move(v), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out] {
            for (int64_t i = 0; i < out->grad.numel(); ++i) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

template <class T>
NodePtr<T> sum_all(Tape<T>& tape, const NodePtr<T>& x) {
    T acc = 0;
    for (const auto& e : x->value.data) acc += e;
    auto out = tape.emit(Tensor<T>::scalar(acc), x->requires_grad);
    if (x->requires_grad) {
        tape.record([x, out] {
            for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += out->grad[0];
        });
    }
    return out;
}

// Scalar projection against a fixed tensor: sum(x .* r). Used by the
// finite-difference checker to reduce any op output to a scalar.
template <class T>
NodePtr<T> inner(Tape<T>& tape, const NodePtr<T>& x, const Tensor<T>& r) {
    if (!x->value.same_shape(r)) throw std::invalid_argument("inner: shape mismatch");
    T acc = 0;
    for (int64_t i = 0; i < x->value.numel(); ++i) acc += x->value[i] * r[i];
    auto out = tape.emit(Tensor<T>::scalar(acc), x->requires_grad);
    if (x->requires_grad) {
        auto rp = std::make_shared<Tensor<T>>(r);
        tape.record([x, out, rp] {
            for (int64_t i = 0; i < x->grad.numel(); ++i) x->grad[i] += out->grad[0] * (*rp)[i];
        });
    }
    return out;
}

}  // namespace rashvit::nn
