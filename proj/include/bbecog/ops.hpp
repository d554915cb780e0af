#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "bbecog/tensor.hpp"

namespace bbecog {

struct Stride3 {
    std::size_t h = 1, w = 1, t = 1;
};

namespace ops_detail {

template <typename S>
BasicTensor<S> op_output(Shape shape, std::vector<S> values,
                         std::vector<std::shared_ptr<detail::TensorNode<S>>> parents,
                         std::function<void(detail::TensorNode<S>&)> backward_fn) {
    auto n = std::make_shared<detail::TensorNode<S>>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    if (autograd::grad_enabled()) {
        bool any = false;
        for (const auto& p : parents) any = any || p->requires_grad;
        if (any) {
            n->requires_grad = true;
            n->parents = std::move(parents);
            n->backward_fn = std::move(backward_fn);
        }
    }
    return BasicTensor<S>(std::move(n));
}

}  // namespace ops_detail

// ---------------------------------------------------------------------------
// conv_temporal: one shared kernel slid along the last axis of every (c, n)
// series, zero-padded so the output keeps the input's time length. Even
// kernels pad asymmetrically: floor((K-1)/2) left, ceil((K-1)/2) right.
// ---------------------------------------------------------------------------
template <typename S>
BasicTensor<S> conv_temporal(const BasicTensor<S>& input, const BasicTensor<S>& kernel,
                             const BasicTensor<S>& bias = {}) {
    if (!input.defined() || input.rank() != 3) {
        throw ShapeError("conv_temporal: input must be rank-3 [C,N,T]");
    }
    if (!kernel.defined() || kernel.rank() != 1 || kernel.numel() == 0) {
        throw ShapeError("conv_temporal: kernel must be rank-1 with K >= 1");
    }
    if (bias.defined() && bias.numel() != 1) {
        throw ShapeError("conv_temporal: bias must be a scalar tensor");
    }
    const std::size_t C = input.extent(0), N = input.extent(1), T = input.extent(2);
    const std::size_t K = kernel.numel();
    const long off = static_cast<long>((K - 1) / 2);
    const long Tl = static_cast<long>(T);

    std::vector<S> out(C * N * T, bias.defined() ? bias.data()[0] : S(0));
    {
        const S* x = input.data();
        const S* kv = kernel.data();
        const std::size_t rows = C * N;
        for (std::size_t r = 0; r < rows; ++r) {
            const S* xr = x + r * T;
            S* orow = out.data() + r * T;
            for (std::size_t kk = 0; kk < K; ++kk) {
                const long shift = static_cast<long>(kk) - off;  // x index = t + shift
                const long t0 = std::max<long>(0, -shift);
                const long t1 = std::min<long>(Tl, Tl - shift);
                const S kw = kv[kk];
                const S* xs = xr + shift;
                for (long t = t0; t < t1; ++t) orow[t] += kw * xs[t];
            }
        }
    }

    auto xn = input.node();
    auto kn = kernel.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<std::shared_ptr<detail::TensorNode<S>>> parents{xn, kn};
    if (bn) parents.push_back(bn);

    auto fn = [xp = xn.get(), kp = kn.get(), bp = bn.get(), C, N, T, K, off,
               Tl](detail::TensorNode<S>& o) {
        const S* g = o.grad.data();
        const std::size_t rows = C * N;
        if (kp->requires_grad) {
            kp->ensure_grad();
            for (std::size_t kk = 0; kk < K; ++kk) {
                const long shift = static_cast<long>(kk) - off;
                const long t0 = std::max<long>(0, -shift);
                const long t1 = std::min<long>(Tl, Tl - shift);
                S acc = 0;
                for (std::size_t r = 0; r < rows; ++r) {
                    const S* gr = g + r * T;
                    const S* xs = xp->values.data() + r * T + shift;
                    S dot = 0;
                    for (long t = t0; t < t1; ++t) dot += gr[t] * xs[t];
                    acc += dot;
                }
                kp->grad[kk] += acc;
            }
        }
        if (xp->requires_grad) {
            xp->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                S* gx = xp->grad.data() + r * T;
                const S* gr = g + r * T;
                for (std::size_t kk = 0; kk < K; ++kk) {
                    const long shift = static_cast<long>(kk) - off;
                    const long u0 = std::max<long>(0, shift);
                    const long u1 = std::min<long>(Tl, Tl + shift);
                    const S kw = kp->values[kk];
                    const S* gs = gr - shift;
                    for (long u = u0; u < u1; ++u) gx[u] += kw * gs[u];
                }
            }
        }
        if (bp && bp->requires_grad) {
            bp->ensure_grad();
            S acc = 0;
            for (std::size_t i = 0; i < rows * T; ++i) acc += g[i];
            bp->grad[0] += acc;
        }
    };
    return ops_detail::op_output<S>({C, N, T}, std::move(out), std::move(parents), std::move(fn));
}

// ---------------------------------------------------------------------------
// conv_grouped: grouped cross-correlation over [Cin,H,W,T] (single sample) or
// [B,Cin,H,W,T] (batched), no padding. Output channel o in group g reads only
// input channels of group g.
// ---------------------------------------------------------------------------
template <typename S>
BasicTensor<S> conv_grouped(const BasicTensor<S>& input, const BasicTensor<S>& weights,
                            const BasicTensor<S>& bias, Stride3 stride, std::size_t groups) {
    if (!input.defined() || (input.rank() != 4 && input.rank() != 5)) {
        throw ShapeError("conv_grouped: input must be rank-4 [Cin,H,W,T] or rank-5 [B,Cin,H,W,T]");
    }
    if (!weights.defined() || weights.rank() != 5) {
        throw ShapeError("conv_grouped: weights must be rank-5 [Cout,Cin/G,kh,kw,kt]");
    }
    const bool batched = input.rank() == 5;
    const std::size_t B = batched ? input.extent(0) : 1;
    const std::size_t Cin = input.extent(batched ? 1 : 0);
    const std::size_t H = input.extent(batched ? 2 : 1);
    const std::size_t W = input.extent(batched ? 3 : 2);
    const std::size_t T = input.extent(batched ? 4 : 3);
    const std::size_t Cout = weights.extent(0), Cpg = weights.extent(1);
    const std::size_t kh = weights.extent(2), kw = weights.extent(3), kt = weights.extent(4);
    if (groups == 0 || Cin % groups != 0 || Cout % groups != 0) {
        throw ShapeError("conv_grouped: group count must divide both channel counts");
    }
    if (Cpg != Cin / groups) {
        throw ShapeError("conv_grouped: weight channel extent must equal Cin/groups");
    }
    if (kh > H || kw > W || kt > T) {
        throw ShapeError("conv_grouped: kernel exceeds input extent (no padding)");
    }
    if (stride.h == 0 || stride.w == 0 || stride.t == 0) {
        throw ShapeError("conv_grouped: strides must be positive");
    }
    if (bias.defined() && (bias.rank() != 1 || bias.numel() != Cout)) {
        throw ShapeError("conv_grouped: bias must be rank-1 [Cout]");
    }
    const std::size_t Ho = (H - kh) / stride.h + 1;
    const std::size_t Wo = (W - kw) / stride.w + 1;
    const std::size_t To = (T - kt) / stride.t + 1;
    const std::size_t opg = Cout / groups;  // outputs per group

    const std::size_t sx_c = H * W * T, sx_h = W * T;
    const std::size_t sx_b = Cin * sx_c;
    const std::size_t sw_o = Cpg * kh * kw * kt, sw_c = kh * kw * kt, sw_h = kw * kt;
    const std::size_t so_c = Ho * Wo * To, so_h = Wo * To;
    const std::size_t so_b = Cout * so_c;

    std::vector<S> out(B * Cout * Ho * Wo * To, S(0));
    {
        const S* x = input.data();
        const S* wv = weights.data();
        const S* bv = bias.defined() ? bias.data() : nullptr;
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t oc = 0; oc < Cout; ++oc) {
                const std::size_t ic0 = (oc / opg) * Cpg;
                for (std::size_t oh = 0; oh < Ho; ++oh) {
                    for (std::size_t ow = 0; ow < Wo; ++ow) {
                        S* orow = out.data() + b * so_b + oc * so_c + oh * so_h + ow * To;
                        if (bv) {
                            for (std::size_t ot = 0; ot < To; ++ot) orow[ot] = bv[oc];
                        }
                        for (std::size_t ic = 0; ic < Cpg; ++ic) {
                            for (std::size_t hh = 0; hh < kh; ++hh) {
                                for (std::size_t ww = 0; ww < kw; ++ww) {
                                    const S* xrow = x + b * sx_b + (ic0 + ic) * sx_c +
                                                    (oh * stride.h + hh) * sx_h +
                                                    (ow * stride.w + ww) * T;
                                    const S* wrow = wv + oc * sw_o + ic * sw_c + hh * sw_h + ww * kt;
                                    if (stride.t == 1) {
                                        for (std::size_t tt = 0; tt < kt; ++tt) {
                                            const S wvv = wrow[tt];
                                            const S* xs = xrow + tt;
                                            for (std::size_t ot = 0; ot < To; ++ot) orow[ot] += wvv * xs[ot];
                                        }
                                    } else {
                                        for (std::size_t ot = 0; ot < To; ++ot) {
                                            S acc = 0;
                                            const S* xs = xrow + ot * stride.t;
                                            for (std::size_t tt = 0; tt < kt; ++tt) acc += wrow[tt] * xs[tt];
                                            orow[ot] += acc;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    Shape out_shape = batched ? Shape{B, Cout, Ho, Wo, To} : Shape{Cout, Ho, Wo, To};
    auto xn = input.node();
    auto wn = weights.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    std::vector<std::shared_ptr<detail::TensorNode<S>>> parents{xn, wn};
    if (bn) parents.push_back(bn);

    auto fn = [xp = xn.get(), wp = wn.get(), bp = bn.get(), B, Cout, Cpg, kh, kw, kt, Ho, Wo, To,
               stride, opg, sx_b, sx_c, sx_h, T, sw_o, sw_c, sw_h, so_b, so_c,
               so_h](detail::TensorNode<S>& o) {
        const S* g = o.grad.data();
        const bool need_x = xp->requires_grad;
        const bool need_w = wp->requires_grad;
        if (need_x) xp->ensure_grad();
        if (need_w) wp->ensure_grad();
        if (need_x || need_w) {
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t oc = 0; oc < Cout; ++oc) {
                    const std::size_t ic0 = (oc / opg) * Cpg;
                    for (std::size_t oh = 0; oh < Ho; ++oh) {
                        for (std::size_t ow = 0; ow < Wo; ++ow) {
                            const S* grow = g + b * so_b + oc * so_c + oh * so_h + ow * To;
                            for (std::size_t ic = 0; ic < Cpg; ++ic) {
                                for (std::size_t hh = 0; hh < kh; ++hh) {
                                    for (std::size_t ww = 0; ww < kw; ++ww) {
                                        const std::size_t xoff = b * sx_b + (ic0 + ic) * sx_c +
                                                                 (oh * stride.h + hh) * sx_h +
                                                                 (ow * stride.w + ww) * T;
                                        const std::size_t woff = oc * sw_o + ic * sw_c + hh * sw_h + ww * kt;
                                        if (need_w) {
                                            const S* xrow = xp->values.data() + xoff;
                                            S* gw = wp->grad.data() + woff;
                                            for (std::size_t tt = 0; tt < kt; ++tt) {
                                                S acc = 0;
                                                const S* xs = xrow + tt;
                                                if (stride.t == 1) {
                                                    for (std::size_t ot = 0; ot < To; ++ot) acc += grow[ot] * xs[ot];
                                                } else {
                                                    for (std::size_t ot = 0; ot < To; ++ot)
                                                        acc += grow[ot] * xrow[ot * stride.t + tt];
                                                }
                                                gw[tt] += acc;
                                            }
                                        }
                                        if (need_x) {
                                            S* gxrow = xp->grad.data() + xoff;
                                            const S* wrow = wp->values.data() + woff;
                                            for (std::size_t tt = 0; tt < kt; ++tt) {
                                                const S wvv = wrow[tt];
                                                if (stride.t == 1) {
                                                    S* gxs = gxrow + tt;
                                                    for (std::size_t ot = 0; ot < To; ++ot) gxs[ot] += wvv * grow[ot];
                                                } else {
                                                    for (std::size_t ot = 0; ot < To; ++ot)
                                                        gxrow[ot * stride.t + tt] += wvv * grow[ot];
                                                }
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if (bp && bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t oc = 0; oc < Cout; ++oc) {
                    const S* grow = g + b * so_b + oc * so_c;
                    S acc = 0;
                    for (std::size_t i = 0; i < so_c; ++i) acc += grow[i];
                    bp->grad[oc] += acc;
                }
            }
        }
    };
    return ops_detail::op_output<S>(std::move(out_shape), std::move(out), std::move(parents),
                                    std::move(fn));
}

template <typename S>
BasicTensor<S> conv_grouped(const BasicTensor<S>& input, const BasicTensor<S>& weights,
                            Stride3 stride, std::size_t groups) {
    return conv_grouped(input, weights, BasicTensor<S>{}, stride, groups);
}

// ---------------------------------------------------------------------------
// batch_norm over [B,C,...]: per-channel statistics across the batch and all
// trailing axes. Biased variance; running stats updated in place in training
// mode with the given momentum.
// ---------------------------------------------------------------------------
template <typename S>
BasicTensor<S> batch_norm(const BasicTensor<S>& input, const BasicTensor<S>& gamma,
                          const BasicTensor<S>& beta, BasicTensor<S>& running_mean,
                          BasicTensor<S>& running_var, bool training, double eps = 1e-5,
                          double momentum = 0.1) {
    if (!input.defined() || input.rank() < 2) {
        throw ShapeError("batch_norm: input must be rank >= 2 [B,C,...]");
    }
    const std::size_t B = input.extent(0), C = input.extent(1);
    const std::size_t R = input.numel() / (B * C);
    if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
        running_var.numel() != C) {
        throw ShapeError("batch_norm: channel parameter length " + std::to_string(gamma.numel()) +
                         " does not match C=" + std::to_string(C));
    }

    std::vector<S> mean(C), inv(C);
    if (training) {
        const S* x = input.data();
        const double n = static_cast<double>(B * R);
        for (std::size_t c = 0; c < C; ++c) {
            double sum = 0, sumsq = 0;
            for (std::size_t b = 0; b < B; ++b) {
                const S* row = x + (b * C + c) * R;
                for (std::size_t r = 0; r < R; ++r) {
                    sum += row[r];
                    sumsq += static_cast<double>(row[r]) * row[r];
                }
            }
            const double m = sum / n;
            const double var = std::max(0.0, sumsq / n - m * m);
            mean[c] = static_cast<S>(m);
            inv[c] = static_cast<S>(1.0 / std::sqrt(var + eps));
            running_mean.data()[c] =
                static_cast<S>((1.0 - momentum) * running_mean.data()[c] + momentum * m);
            running_var.data()[c] =
                static_cast<S>((1.0 - momentum) * running_var.data()[c] + momentum * var);
        }
    } else {
        for (std::size_t c = 0; c < C; ++c) {
            mean[c] = running_mean.data()[c];
            inv[c] = static_cast<S>(1.0 / std::sqrt(static_cast<double>(running_var.data()[c]) + eps));
        }
    }

    std::vector<S> out(input.numel());
    {
        const S* x = input.data();
        const S* gv = gamma.data();
        const S* bv = beta.data();
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
                const S* row = x + (b * C + c) * R;
                S* orow = out.data() + (b * C + c) * R;
                const S scale = gv[c] * inv[c];
                const S m = mean[c], bb = bv[c];
                // (x - m) first: keeps constant channels exactly at beta.
                for (std::size_t r = 0; r < R; ++r) orow[r] = (row[r] - m) * scale + bb;
            }
        }
    }

    auto xn = input.node();
    auto gn = gamma.node();
    auto btn = beta.node();
    std::vector<std::shared_ptr<detail::TensorNode<S>>> parents{xn, gn, btn};
    auto fn = [xp = xn.get(), gp = gn.get(), bp = btn.get(), B, C, R, mean, inv,
               training](detail::TensorNode<S>& o) {
        const S* g = o.grad.data();
        const double n = static_cast<double>(B * R);
        std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);  // sums of g and g*xhat per channel
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t c = 0; c < C; ++c) {
                const S* grow = g + (b * C + c) * R;
                const S* xrow = xp->values.data() + (b * C + c) * R;
                double sg = 0, sgx = 0;
                for (std::size_t r = 0; r < R; ++r) {
                    sg += grow[r];
                    sgx += static_cast<double>(grow[r]) * ((xrow[r] - mean[c]) * inv[c]);
                }
                sum_g[c] += sg;
                sum_gx[c] += sgx;
            }
        }
        if (gp->requires_grad) {
            gp->ensure_grad();
            for (std::size_t c = 0; c < C; ++c) gp->grad[c] += static_cast<S>(sum_gx[c]);
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t c = 0; c < C; ++c) bp->grad[c] += static_cast<S>(sum_g[c]);
        }
        if (xp->requires_grad) {
            xp->ensure_grad();
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t c = 0; c < C; ++c) {
                    const S* grow = g + (b * C + c) * R;
                    const S* xrow = xp->values.data() + (b * C + c) * R;
                    S* gxrow = xp->grad.data() + (b * C + c) * R;
                    const S gi = gp->values[c] * inv[c];
                    if (training) {
                        const S mg = static_cast<S>(sum_g[c] / n);
                        const S mgx = static_cast<S>(sum_gx[c] / n);
                        for (std::size_t r = 0; r < R; ++r) {
                            const S xhat = (xrow[r] - mean[c]) * inv[c];
                            gxrow[r] += gi * (grow[r] - mg - xhat * mgx);
                        }
                    } else {
                        for (std::size_t r = 0; r < R; ++r) gxrow[r] += gi * grow[r];
                    }
                }
            }
        }
    };
    return ops_detail::op_output<S>(input.shape(), std::move(out), std::move(parents),
                                    std::move(fn));
}

// ELU with alpha = 1.
template <typename S>
BasicTensor<S> elu(const BasicTensor<S>& input) {
    if (!input.defined()) throw ShapeError("elu: undefined input");
    std::vector<S> out(input.numel());
    const S* x = input.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = x[i] >= S(0) ? x[i] : static_cast<S>(std::expm1(static_cast<double>(x[i])));
    }
    auto xn = input.node();
    auto fn = [xp = xn.get()](detail::TensorNode<S>& o) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const S* g = o.grad.data();
        const S* y = o.values.data();
        for (std::size_t i = 0; i < o.values.size(); ++i) {
            // dy/dx = 1 for x >= 0, exp(x) = y + 1 otherwise
            xp->grad[i] += g[i] * (y[i] >= S(0) ? S(1) : y[i] + S(1));
        }
    };
    return ops_detail::op_output<S>(input.shape(), std::move(out), {xn}, std::move(fn));
}

// Non-overlapping average pooling along the last axis; remainder samples
// beyond the last full window are dropped.
template <typename S>
BasicTensor<S> avg_pool_temporal(const BasicTensor<S>& input, std::size_t k) {
    if (!input.defined() || input.rank() < 1) throw ShapeError("avg_pool_temporal: undefined input");
    if (k == 0) throw std::invalid_argument("avg_pool_temporal: window size must be positive");
    const std::size_t T = input.extent(input.rank() - 1);
    const std::size_t To = T / k;
    const std::size_t rows = input.numel() / std::max<std::size_t>(T, 1);
    Shape out_shape = input.shape();
    out_shape.back() = To;

    std::vector<S> out(rows * To);
    const S* x = input.data();
    const S invk = static_cast<S>(1.0 / static_cast<double>(k));
    for (std::size_t r = 0; r < rows; ++r) {
        const S* xr = x + r * T;
        S* orow = out.data() + r * To;
        for (std::size_t ot = 0; ot < To; ++ot) {
            S acc = 0;
            for (std::size_t j = 0; j < k; ++j) acc += xr[ot * k + j];
            orow[ot] = acc * invk;
        }
    }
    auto xn = input.node();
    auto fn = [xp = xn.get(), rows, T, To, k, invk](detail::TensorNode<S>& o) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const S* g = o.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
            S* gx = xp->grad.data() + r * T;
            const S* gr = g + r * To;
            for (std::size_t ot = 0; ot < To; ++ot) {
                const S gv = gr[ot] * invk;
                for (std::size_t j = 0; j < k; ++j) gx[ot * k + j] += gv;
            }
        }
    };
    return ops_detail::op_output<S>(std::move(out_shape), std::move(out), {xn}, std::move(fn));
}

// Affine map: input [F] or [B,F], weights [O,F], bias [O].
template <typename S>
BasicTensor<S> linear(const BasicTensor<S>& input, const BasicTensor<S>& weights,
                      const BasicTensor<S>& bias) {
    if (!input.defined() || (input.rank() != 1 && input.rank() != 2)) {
        throw ShapeError("linear: input must be rank-1 [F] or rank-2 [B,F]");
    }
    if (!weights.defined() || weights.rank() != 2) throw ShapeError("linear: weights must be [O,F]");
    const bool batched = input.rank() == 2;
    const std::size_t B = batched ? input.extent(0) : 1;
    const std::size_t F = input.extent(batched ? 1 : 0);
    const std::size_t O = weights.extent(0);
    if (weights.extent(1) != F) {
        throw ShapeError("linear: weight F extent " + std::to_string(weights.extent(1)) +
                         " does not match input F=" + std::to_string(F));
    }
    if (!bias.defined() || bias.rank() != 1 || bias.numel() != O) {
        throw ShapeError("linear: bias must be rank-1 [O]");
    }

    std::vector<S> out(B * O);
    {
        const S* x = input.data();
        const S* wv = weights.data();
        const S* bv = bias.data();
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t o = 0; o < O; ++o) {
                const S* xr = x + b * F;
                const S* wr = wv + o * F;
                S acc = bv[o];
                for (std::size_t f = 0; f < F; ++f) acc += wr[f] * xr[f];
                out[b * O + o] = acc;
            }
        }
    }
    Shape out_shape = batched ? Shape{B, O} : Shape{O};
    auto xn = input.node();
    auto wn = weights.node();
    auto bn = bias.node();
    auto fn = [xp = xn.get(), wp = wn.get(), bp = bn.get(), B, F, O](detail::TensorNode<S>& o) {
        const S* g = o.grad.data();
        if (wp->requires_grad) {
            wp->ensure_grad();
            for (std::size_t b = 0; b < B; ++b) {
                const S* xr = xp->values.data() + b * F;
                for (std::size_t oo = 0; oo < O; ++oo) {
                    const S gv = g[b * O + oo];
                    S* gw = wp->grad.data() + oo * F;
                    for (std::size_t f = 0; f < F; ++f) gw[f] += gv * xr[f];
                }
            }
        }
        if (bp->requires_grad) {
            bp->ensure_grad();
            for (std::size_t b = 0; b < B; ++b) {
                for (std::size_t oo = 0; oo < O; ++oo) bp->grad[oo] += g[b * O + oo];
            }
        }
        if (xp->requires_grad) {
            xp->ensure_grad();
            for (std::size_t b = 0; b < B; ++b) {
                S* gx = xp->grad.data() + b * F;
                for (std::size_t oo = 0; oo < O; ++oo) {
                    const S gv = g[b * O + oo];
                    const S* wr = wp->values.data() + oo * F;
                    for (std::size_t f = 0; f < F; ++f) gx[f] += gv * wr[f];
                }
            }
        }
    };
    return ops_detail::op_output<S>(std::move(out_shape), std::move(out), {xn, wn, bn},
                                    std::move(fn));
}

// Mean over the batch of -log softmax(logits)[label], stabilized by per-row
// max subtraction.
template <typename S>
BasicTensor<S> softmax_cross_entropy(const BasicTensor<S>& logits, const std::vector<int>& labels) {
    if (!logits.defined() || logits.rank() != 2) {
        throw ShapeError("softmax_cross_entropy: logits must be rank-2 [B,K]");
    }
    const std::size_t B = logits.extent(0), K = logits.extent(1);
    if (labels.size() != B) {
        throw std::invalid_argument("softmax_cross_entropy: label count " +
                                    std::to_string(labels.size()) + " does not match batch " +
                                    std::to_string(B));
    }
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= K) {
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                        " out of range [0," + std::to_string(K) + ")");
        }
    }
    std::vector<S> probs(B * K);
    double loss_acc = 0.0;
    {
        const S* z = logits.data();
        for (std::size_t b = 0; b < B; ++b) {
            const S* row = z + b * K;
            double m = row[0];
            for (std::size_t k = 1; k < K; ++k) m = std::max(m, static_cast<double>(row[k]));
            double denom = 0.0;
            for (std::size_t k = 0; k < K; ++k) denom += std::exp(static_cast<double>(row[k]) - m);
            const double lse = m + std::log(denom);
            for (std::size_t k = 0; k < K; ++k) {
                probs[b * K + k] = static_cast<S>(std::exp(static_cast<double>(row[k]) - lse));
            }
            loss_acc += lse - static_cast<double>(row[labels[b]]);
        }
    }
    std::vector<S> out{static_cast<S>(loss_acc / static_cast<double>(B))};
    auto zn = logits.node();
    auto fn = [zp = zn.get(), probs = std::move(probs), labels, B, K](detail::TensorNode<S>& o) {
        if (!zp->requires_grad) return;
        zp->ensure_grad();
        const S g = o.grad[0] / static_cast<S>(B);
        for (std::size_t b = 0; b < B; ++b) {
            S* gz = zp->grad.data() + b * K;
            const S* p = probs.data() + b * K;
            for (std::size_t k = 0; k < K; ++k) gz[k] += g * p[k];
            gz[labels[b]] -= g;
        }
    };
    return ops_detail::op_output<S>({1}, std::move(out), {zn}, std::move(fn));
}

// Reshape to an equal-element-count shape (row-major copy).
template <typename S>
BasicTensor<S> reshape(const BasicTensor<S>& input, Shape new_shape) {
    if (!input.defined()) throw ShapeError("reshape: undefined input");
    if (shape_numel(new_shape) != input.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(input.shape()) + " as " +
                         shape_str(new_shape));
    }
    std::vector<S> out = input.values();
    auto xn = input.node();
    auto fn = [xp = xn.get()](detail::TensorNode<S>& o) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xp->grad[i] += o.grad[i];
    };
    return ops_detail::op_output<S>(std::move(new_shape), std::move(out), {xn}, std::move(fn));
}

// Stack equal-shape tensors [B,rest...] along a new axis 1: result [B,n,rest...].
template <typename S>
BasicTensor<S> stack_axis1(const std::vector<BasicTensor<S>>& inputs) {
    if (inputs.empty()) throw ShapeError("stack_axis1: empty input list");
    const Shape& s0 = inputs[0].shape();
    if (s0.empty()) throw ShapeError("stack_axis1: inputs must have rank >= 1");
    for (const auto& t : inputs) {
        if (!t.defined() || t.shape() != s0) throw ShapeError("stack_axis1: shape mismatch");
    }
    const std::size_t n = inputs.size();
    const std::size_t B = s0[0];
    const std::size_t R = inputs[0].numel() / std::max<std::size_t>(B, 1);
    Shape out_shape;
    out_shape.push_back(B);
    out_shape.push_back(n);
    for (std::size_t i = 1; i < s0.size(); ++i) out_shape.push_back(s0[i]);

    std::vector<S> out(B * n * R);
    for (std::size_t i = 0; i < n; ++i) {
        const S* x = inputs[i].data();
        for (std::size_t b = 0; b < B; ++b) {
            std::copy(x + b * R, x + (b + 1) * R, out.data() + (b * n + i) * R);
        }
    }
    std::vector<std::shared_ptr<detail::TensorNode<S>>> parents;
    parents.reserve(n);
    std::vector<detail::TensorNode<S>*> raw;
    raw.reserve(n);
    for (const auto& t : inputs) {
        parents.push_back(t.node());
        raw.push_back(t.node().get());
    }
    auto fn = [raw = std::move(raw), n, B, R](detail::TensorNode<S>& o) {
        const S* g = o.grad.data();
        for (std::size_t i = 0; i < n; ++i) {
            auto* xp = raw[i];
            if (!xp->requires_grad) continue;
            xp->ensure_grad();
            for (std::size_t b = 0; b < B; ++b) {
                const S* gs = g + (b * n + i) * R;
                S* gx = xp->grad.data() + b * R;
                for (std::size_t r = 0; r < R; ++r) gx[r] += gs[r];
            }
        }
    };
    return ops_detail::op_output<S>(std::move(out_shape), std::move(out), std::move(parents),
                                    std::move(fn));
}

// Zero-pad the last axis by `left` and `right` samples.
template <typename S>
BasicTensor<S> pad_temporal(const BasicTensor<S>& input, std::size_t left, std::size_t right) {
    if (!input.defined() || input.rank() < 1) throw ShapeError("pad_temporal: undefined input");
    const std::size_t T = input.extent(input.rank() - 1);
    const std::size_t To = T + left + right;
    const std::size_t rows = input.numel() / std::max<std::size_t>(T, 1);
    Shape out_shape = input.shape();
    out_shape.back() = To;
    std::vector<S> out(rows * To, S(0));
    const S* x = input.data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(x + r * T, x + (r + 1) * T, out.data() + r * To + left);
    }
    auto xn = input.node();
    auto fn = [xp = xn.get(), rows, T, To, left](detail::TensorNode<S>& o) {
        if (!xp->requires_grad) return;
        xp->ensure_grad();
        const S* g = o.grad.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const S* gs = g + r * To + left;
            S* gx = xp->grad.data() + r * T;
            for (std::size_t t = 0; t < T; ++t) gx[t] += gs[t];
        }
    };
    return ops_detail::op_output<S>(std::move(out_shape), std::move(out), {xn}, std::move(fn));
}

// Gather rows from axis 0 into a fresh leaf tensor (no gradient tracking);
// used for batch assembly from a staged dataset tensor.
template <typename S>
BasicTensor<S> gather_rows(const BasicTensor<S>& input, const std::vector<std::size_t>& indices) {
    if (!input.defined() || input.rank() < 1) throw ShapeError("gather_rows: undefined input");
    const std::size_t n0 = input.extent(0);
    const std::size_t R = input.numel() / std::max<std::size_t>(n0, 1);
    Shape out_shape = input.shape();
    out_shape[0] = indices.size();
    std::vector<S> out(indices.size() * R);
    const S* x = input.data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= n0) throw ShapeError("gather_rows: index out of range");
        std::copy(x + indices[i] * R, x + (indices[i] + 1) * R, out.data() + i * R);
    }
    return BasicTensor<S>::from_data(std::move(out_shape), std::move(out));
}

}  // namespace bbecog
