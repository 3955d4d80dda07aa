#pragma once

#include <cmath>

#include "vds/ad/graph.hpp"

namespace vds::ad {

// 2-D convolution over a (Ci, H, W) input with (Co, Ci, kh, kw) weights and
// (Co) bias, zero padding.
inline Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    const int ci = x->val.dim(0), h = x->val.dim(1), wd = x->val.dim(2);
    const int co = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
    if (w->val.dim(1) != ci) throw Error("conv2d: channel mismatch");
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (wd + 2 * pad - kw) / stride + 1;
    Tensor out({co, ho, wo});
    const double* xv = x->val.v.data();
    const double* wv = w->val.v.data();
    for (int oc = 0; oc < co; ++oc) {
        double bias = b->val.v[static_cast<size_t>(oc)];
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                double acc = bias;
                const int iy0 = oy * stride - pad;
                const int ix0 = ox * stride - pad;
                for (int ic = 0; ic < ci; ++ic) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = iy0 + ky;
                        if (iy < 0 || iy >= h) continue;
                        const double* xrow = xv + (static_cast<size_t>(ic) * h + iy) * wd;
                        const double* wrow =
                            wv + ((static_cast<size_t>(oc) * ci + ic) * kh + ky) * kw;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ix0 + kx;
                            if (ix < 0 || ix >= wd) continue;
                            acc += wrow[kx] * xrow[ix];
                        }
                    }
                }
                out.v[(static_cast<size_t>(oc) * ho + oy) * wo + ox] = acc;
            }
        }
    }
    return make_node(std::move(out), {x, w, b},
                     [x, w, b, ci, h, wd, co, kh, kw, ho, wo, stride, pad](Node& n) {
        x->ensure_grad();
        w->ensure_grad();
        b->ensure_grad();
        const double* gv = n.grad.v.data();
        const double* xv = x->val.v.data();
        const double* wv = w->val.v.data();
        for (int oc = 0; oc < co; ++oc) {
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    const double g = gv[(static_cast<size_t>(oc) * ho + oy) * wo + ox];
                    if (g == 0.0) continue;
                    b->grad.v[static_cast<size_t>(oc)] += g;
                    const int iy0 = oy * stride - pad;
                    const int ix0 = ox * stride - pad;
                    for (int ic = 0; ic < ci; ++ic) {
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = iy0 + ky;
                            if (iy < 0 || iy >= h) continue;
                            const size_t xoff = (static_cast<size_t>(ic) * h + iy) * wd;
                            const size_t woff =
                                ((static_cast<size_t>(oc) * ci + ic) * kh + ky) * kw;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ix0 + kx;
                                if (ix < 0 || ix >= wd) continue;
                                w->grad.v[woff + kx] += g * xv[xoff + ix];
                                x->grad.v[xoff + ix] += g * wv[woff + kx];
                            }
                        }
                    }
                }
            }
        }
    });
}

// Token-wise affine map: tokens (P, ci) x weights (co, ci) + bias (co) -> (P, co).
inline Var linear(const Var& x, const Var& w, const Var& b) {
    const int p = x->val.dim(0), ci = x->val.dim(1);
    const int co = w->val.dim(0);
    if (w->val.dim(1) != ci) throw Error("linear: shape mismatch");
    Tensor out({p, co});
    for (int i = 0; i < p; ++i) {
        const double* xi = x->val.v.data() + static_cast<size_t>(i) * ci;
        for (int o = 0; o < co; ++o) {
            const double* wo_ = w->val.v.data() + static_cast<size_t>(o) * ci;
            double acc = b->val.v[static_cast<size_t>(o)];
            for (int k = 0; k < ci; ++k) acc += wo_[k] * xi[k];
            out.v[static_cast<size_t>(i) * co + o] = acc;
        }
    }
    return make_node(std::move(out), {x, w, b}, [x, w, b, p, ci, co](Node& n) {
        x->ensure_grad();
        w->ensure_grad();
        b->ensure_grad();
        for (int i = 0; i < p; ++i) {
            const double* xi = x->val.v.data() + static_cast<size_t>(i) * ci;
            double* xgi = x->grad.v.data() + static_cast<size_t>(i) * ci;
            for (int o = 0; o < co; ++o) {
                const double g = n.grad.v[static_cast<size_t>(i) * co + o];
                if (g == 0.0) continue;
                b->grad.v[static_cast<size_t>(o)] += g;
                const double* wo_ = w->val.v.data() + static_cast<size_t>(o) * ci;
                double* wgo = w->grad.v.data() + static_cast<size_t>(o) * ci;
                for (int k = 0; k < ci; ++k) {
                    wgo[k] += g * xi[k];
                    xgi[k] += g * wo_[k];
                }
            }
        }
    });
}

// Per-token layer normalization over the channel dimension of (P, c).
inline Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
    const int p = x->val.dim(0), c = x->val.dim(1);
    Tensor out({p, c});
    auto mean = std::make_shared<std::vector<double>>(p);
    auto istd = std::make_shared<std::vector<double>>(p);
    for (int i = 0; i < p; ++i) {
        const double* xi = x->val.v.data() + static_cast<size_t>(i) * c;
        double m = 0.0;
        for (int k = 0; k < c; ++k) m += xi[k];
        m /= c;
        double var = 0.0;
        for (int k = 0; k < c; ++k) var += (xi[k] - m) * (xi[k] - m);
        var /= c;
        double is = 1.0 / std::sqrt(var + eps);
        (*mean)[i] = m;
        (*istd)[i] = is;
        for (int k = 0; k < c; ++k)
            out.v[static_cast<size_t>(i) * c + k] =
                gamma->val.v[static_cast<size_t>(k)] * (xi[k] - m) * is + beta->val.v[static_cast<size_t>(k)];
    }
    return make_node(std::move(out), {x, gamma, beta}, [x, gamma, beta, p, c, mean, istd](Node& n) {
        x->ensure_grad();
        gamma->ensure_grad();
        beta->ensure_grad();
        for (int i = 0; i < p; ++i) {
            const double* xi = x->val.v.data() + static_cast<size_t>(i) * c;
            const double* gi = n.grad.v.data() + static_cast<size_t>(i) * c;
            double m = (*mean)[i], is = (*istd)[i];
            double sum_gy = 0.0, sum_gyx = 0.0;
            for (int k = 0; k < c; ++k) {
                double xhat = (xi[k] - m) * is;
                double gy = gi[k] * gamma->val.v[static_cast<size_t>(k)];
                sum_gy += gy;
                sum_gyx += gy * xhat;
                gamma->grad.v[static_cast<size_t>(k)] += gi[k] * xhat;
                beta->grad.v[static_cast<size_t>(k)] += gi[k];
            }
            double* xg = x->grad.v.data() + static_cast<size_t>(i) * c;
            for (int k = 0; k < c; ++k) {
                double xhat = (xi[k] - m) * is;
                double gy = gi[k] * gamma->val.v[static_cast<size_t>(k)];
                xg[k] += is * (gy - sum_gy / c - xhat * sum_gyx / c);
            }
        }
    });
}

// Softmax over the last dimension of an arbitrary-rank tensor.
inline Var softmax_lastdim(const Var& x) {
    const int r = x->val.dim(static_cast<int>(x->val.shape.size()) - 1);
    const int64_t rows = x->val.numel() / r;
    Tensor out(x->val.shape);
    for (int64_t i = 0; i < rows; ++i) {
        const double* xi = x->val.v.data() + i * r;
        double* oi = out.v.data() + i * r;
        double mx = xi[0];
        for (int k = 1; k < r; ++k) mx = std::max(mx, xi[k]);
        double z = 0.0;
        for (int k = 0; k < r; ++k) z += std::exp(xi[k] - mx);
        for (int k = 0; k < r; ++k) oi[k] = std::exp(xi[k] - mx) / z;
    }
    Tensor y = out;
    return make_node(std::move(out), {x}, [x, y, rows, r](Node& n) {
        x->ensure_grad();
        for (int64_t i = 0; i < rows; ++i) {
            const double* yi = y.v.data() + i * r;
            const double* gi = n.grad.v.data() + i * r;
            double dot = 0.0;
            for (int k = 0; k < r; ++k) dot += yi[k] * gi[k];
            double* xg = x->grad.v.data() + i * r;
            for (int k = 0; k < r; ++k) xg[k] += yi[k] * (gi[k] - dot);
        }
    });
}

// Stack R token maps of shape (P, c) into one (R, P, c) tensor.
inline Var stack_tokens(const std::vector<Var>& refs) {
    const int r = static_cast<int>(refs.size());
    const int p = refs[0]->val.dim(0), c = refs[0]->val.dim(1);
    Tensor out({r, p, c});
    for (int j = 0; j < r; ++j)
        std::copy(refs[j]->val.v.begin(), refs[j]->val.v.end(),
                  out.v.begin() + static_cast<size_t>(j) * p * c);
    std::vector<Var> parents(refs.begin(), refs.end());
    return make_node(std::move(out), parents, [refs, p, c](Node& n) {
        for (size_t j = 0; j < refs.size(); ++j) {
            if (!refs[j]->requires_grad) continue;
            refs[j]->ensure_grad();
            const double* g = n.grad.v.data() + j * static_cast<size_t>(p) * c;
            for (size_t i = 0; i < static_cast<size_t>(p) * c; ++i) refs[j]->grad.v[i] += g[i];
        }
    });
}

// Scaled dot products between per-patch queries (P, c) and stacked reference
// keys (R, P, c), split into heads: logits (P, heads, R), scaled by
// 1/sqrt(c/heads).
inline Var attention_logits(const Var& q, const Var& k, int heads) {
    const int p = q->val.dim(0), c = q->val.dim(1);
    const int r = k->val.dim(0);
    if (k->val.dim(1) != p || k->val.dim(2) != c) throw Error("attention_logits: shape mismatch");
    if (c % heads != 0) throw Error("attention_logits: heads must divide dim");
    const int dh = c / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor out({p, heads, r});
    for (int i = 0; i < p; ++i)
        for (int hh = 0; hh < heads; ++hh)
            for (int j = 0; j < r; ++j) {
                const double* qi = q->val.v.data() + static_cast<size_t>(i) * c + hh * dh;
                const double* kj =
                    k->val.v.data() + (static_cast<size_t>(j) * p + i) * c + hh * dh;
                double acc = 0.0;
                for (int d = 0; d < dh; ++d) acc += qi[d] * kj[d];
                out.v[(static_cast<size_t>(i) * heads + hh) * r + j] = acc * inv_sqrt;
            }
    return make_node(std::move(out), {q, k}, [q, k, p, c, r, heads, dh, inv_sqrt](Node& n) {
        q->ensure_grad();
        k->ensure_grad();
        for (int i = 0; i < p; ++i)
            for (int hh = 0; hh < heads; ++hh)
                for (int j = 0; j < r; ++j) {
                    double g = n.grad.v[(static_cast<size_t>(i) * heads + hh) * r + j] * inv_sqrt;
                    if (g == 0.0) continue;
                    const size_t qo = static_cast<size_t>(i) * c + hh * dh;
                    const size_t ko = (static_cast<size_t>(j) * p + i) * c + hh * dh;
                    for (int d = 0; d < dh; ++d) {
                        q->grad.v[qo + d] += g * k->val.v[ko + d];
                        k->grad.v[ko + d] += g * q->val.v[qo + d];
                    }
                }
    });
}

// Mix stacked reference values (R, P, c) with attention weights (P, heads, R)
// into per-patch outputs (P, c).
inline Var attention_mix(const Var& alpha, const Var& v, int heads) {
    const int p = alpha->val.dim(0), r = alpha->val.dim(2);
    const int c = v->val.dim(2);
    const int dh = c / heads;
    Tensor out({p, c});
    for (int i = 0; i < p; ++i)
        for (int hh = 0; hh < heads; ++hh)
            for (int j = 0; j < r; ++j) {
                double a = alpha->val.v[(static_cast<size_t>(i) * heads + hh) * r + j];
                const double* vj =
                    v->val.v.data() + (static_cast<size_t>(j) * p + i) * c + hh * dh;
                double* oi = out.v.data() + static_cast<size_t>(i) * c + hh * dh;
                for (int d = 0; d < dh; ++d) oi[d] += a * vj[d];
            }
    return make_node(std::move(out), {alpha, v}, [alpha, v, p, r, c, heads, dh](Node& n) {
        alpha->ensure_grad();
        v->ensure_grad();
        for (int i = 0; i < p; ++i)
            for (int hh = 0; hh < heads; ++hh)
                for (int j = 0; j < r; ++j) {
                    const size_t ao = (static_cast<size_t>(i) * heads + hh) * r + j;
                    const size_t vo = (static_cast<size_t>(j) * p + i) * c + hh * dh;
                    const size_t go = static_cast<size_t>(i) * c + hh * dh;
                    double a = alpha->val.v[ao];
                    double ag = 0.0;
                    for (int d = 0; d < dh; ++d) {
                        ag += n.grad.v[go + d] * v->val.v[vo + d];
                        v->grad.v[vo + d] += n.grad.v[go + d] * a;
                    }
                    alpha->grad.v[ao] += ag;
                }
    });
}

// Mean-pool each non-overlapping patch of a (c, H, W) feature map into one
// token; partial patches at the right/bottom edge average over the cells that
// exist. Output (ph*pw, c) in row-major patch order.
inline Var patch_tokens(const Var& x, int patch) {
    const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    const int ph = (h + patch - 1) / patch, pw = (w + patch - 1) / patch;
    Tensor out({ph * pw, c});
    for (int py = 0; py < ph; ++py)
        for (int px = 0; px < pw; ++px) {
            int y0 = py * patch, y1 = std::min(y0 + patch, h);
            int x0 = px * patch, x1 = std::min(x0 + patch, w);
            double inv = 1.0 / ((y1 - y0) * (x1 - x0));
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx)
                        acc += x->val.v[(static_cast<size_t>(ch) * h + y) * w + xx];
                out.v[static_cast<size_t>(py * pw + px) * c + ch] = acc * inv;
            }
        }
    return make_node(std::move(out), {x}, [x, c, h, w, ph, pw, patch](Node& n) {
        x->ensure_grad();
        for (int py = 0; py < ph; ++py)
            for (int px = 0; px < pw; ++px) {
                int y0 = py * patch, y1 = std::min(y0 + patch, h);
                int x0 = px * patch, x1 = std::min(x0 + patch, w);
                double inv = 1.0 / ((y1 - y0) * (x1 - x0));
                for (int ch = 0; ch < c; ++ch) {
                    double g = n.grad.v[static_cast<size_t>(py * pw + px) * c + ch] * inv;
                    for (int y = y0; y < y1; ++y)
                        for (int xx = x0; xx < x1; ++xx)
                            x->grad.v[(static_cast<size_t>(ch) * h + y) * w + xx] += g;
                }
            }
    });
}

// Local-window pooling for reference features: one token per target patch,
// averaged over a window of pool_mult*patch cells centered on the spatially
// aligned patch, clamped to the map.
inline Var pooled_ref_tokens(const Var& x, int patch, int pool_mult) {
    const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    const int ph = (h + patch - 1) / patch, pw = (w + patch - 1) / patch;
    const int ext = (pool_mult - 1) * patch / 2;
    Tensor out({ph * pw, c});
    for (int py = 0; py < ph; ++py)
        for (int px = 0; px < pw; ++px) {
            int y0 = std::max(0, py * patch - ext);
            int y1 = std::min((py + 1) * patch + ext, h);
            int x0 = std::max(0, px * patch - ext);
            int x1 = std::min((px + 1) * patch + ext, w);
            double inv = 1.0 / ((y1 - y0) * (x1 - x0));
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int y = y0; y < y1; ++y)
                    for (int xx = x0; xx < x1; ++xx)
                        acc += x->val.v[(static_cast<size_t>(ch) * h + y) * w + xx];
                out.v[static_cast<size_t>(py * pw + px) * c + ch] = acc * inv;
            }
        }
    return make_node(std::move(out), {x}, [x, c, h, w, ph, pw, patch, ext](Node& n) {
        x->ensure_grad();
        for (int py = 0; py < ph; ++py)
            for (int px = 0; px < pw; ++px) {
                int y0 = std::max(0, py * patch - ext);
                int y1 = std::min((py + 1) * patch + ext, h);
                int x0 = std::max(0, px * patch - ext);
                int x1 = std::min((px + 1) * patch + ext, w);
                double inv = 1.0 / ((y1 - y0) * (x1 - x0));
                for (int ch = 0; ch < c; ++ch) {
                    double g = n.grad.v[static_cast<size_t>(py * pw + px) * c + ch] * inv;
                    for (int y = y0; y < y1; ++y)
                        for (int xx = x0; xx < x1; ++xx)
                            x->grad.v[(static_cast<size_t>(ch) * h + y) * w + xx] += g;
                }
            }
    });
}

// Reshape per-patch tokens (ph*pw, c) into a (c, ph, pw) grid.
inline Var tokens_to_grid(const Var& t, int ph, int pw) {
    const int c = t->val.dim(1);
    Tensor out({c, ph, pw});
    for (int i = 0; i < ph * pw; ++i)
        for (int ch = 0; ch < c; ++ch)
            out.v[(static_cast<size_t>(ch) * ph + i / pw) * pw + i % pw] =
                t->val.v[static_cast<size_t>(i) * c + ch];
    return make_node(std::move(out), {t}, [t, c, ph, pw](Node& n) {
        t->ensure_grad();
        for (int i = 0; i < ph * pw; ++i)
            for (int ch = 0; ch < c; ++ch)
                t->grad.v[static_cast<size_t>(i) * c + ch] +=
                    n.grad.v[(static_cast<size_t>(ch) * ph + i / pw) * pw + i % pw];
    });
}

// Bilinear resize of a (c, H, W) tensor to (c, Ho, Wo) with the half-pixel
// center convention.
inline Var bilinear_resize(const Var& x, int ho, int wo) {
    const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    Tensor out({c, ho, wo});
    struct Tap {
        int x0, x1, y0, y1;
        double fx, fy;
    };
    auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(ho) * wo);
    const double sy = static_cast<double>(h) / ho, sx = static_cast<double>(w) / wo;
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
            double cy = (oy + 0.5) * sy - 0.5;
            double cx = (ox + 0.5) * sx - 0.5;
            cy = std::min(std::max(cy, 0.0), static_cast<double>(h - 1));
            cx = std::min(std::max(cx, 0.0), static_cast<double>(w - 1));
            Tap t;
            t.y0 = static_cast<int>(std::floor(cy));
            t.x0 = static_cast<int>(std::floor(cx));
            t.y1 = std::min(t.y0 + 1, h - 1);
            t.x1 = std::min(t.x0 + 1, w - 1);
            t.fy = cy - t.y0;
            t.fx = cx - t.x0;
            (*taps)[static_cast<size_t>(oy) * wo + ox] = t;
            for (int ch = 0; ch < c; ++ch) {
                const double* base = x->val.v.data() + static_cast<size_t>(ch) * h * w;
                double a = base[static_cast<size_t>(t.y0) * w + t.x0] * (1 - t.fx) +
                           base[static_cast<size_t>(t.y0) * w + t.x1] * t.fx;
                double bb = base[static_cast<size_t>(t.y1) * w + t.x0] * (1 - t.fx) +
                            base[static_cast<size_t>(t.y1) * w + t.x1] * t.fx;
                out.v[(static_cast<size_t>(ch) * ho + oy) * wo + ox] = a * (1 - t.fy) + bb * t.fy;
            }
        }
    return make_node(std::move(out), {x}, [x, taps, c, h, w, ho, wo](Node& n) {
        x->ensure_grad();
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                const Tap& t = (*taps)[static_cast<size_t>(oy) * wo + ox];
                for (int ch = 0; ch < c; ++ch) {
                    double g = n.grad.v[(static_cast<size_t>(ch) * ho + oy) * wo + ox];
                    double* base = x->grad.v.data() + static_cast<size_t>(ch) * h * w;
                    base[static_cast<size_t>(t.y0) * w + t.x0] += g * (1 - t.fx) * (1 - t.fy);
                    base[static_cast<size_t>(t.y0) * w + t.x1] += g * t.fx * (1 - t.fy);
                    base[static_cast<size_t>(t.y1) * w + t.x0] += g * (1 - t.fx) * t.fy;
                    base[static_cast<size_t>(t.y1) * w + t.x1] += g * t.fx * t.fy;
                }
            }
    });
}

// Concatenate two (c, H, W) tensors along the channel dimension.
inline Var concat_channels(const Var& a, const Var& b) {
    const int ca = a->val.dim(0), cb = b->val.dim(0);
    const int h = a->val.dim(1), w = a->val.dim(2);
    if (b->val.dim(1) != h || b->val.dim(2) != w) throw Error("concat_channels: shape mismatch");
    Tensor out({ca + cb, h, w});
    std::copy(a->val.v.begin(), a->val.v.end(), out.v.begin());
    std::copy(b->val.v.begin(), b->val.v.end(), out.v.begin() + a->val.v.size());
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        size_t na = a->val.v.size();
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < na; ++i) a->grad.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < b->val.v.size(); ++i) b->grad.v[i] += n.grad.v[na + i];
        }
    });
}

// Select channel ch of a (c, H, W) tensor as an (H, W) grid.
inline Var select_channel(const Var& x, int ch) {
    const int h = x->val.dim(1), w = x->val.dim(2);
    Tensor out({h, w});
    std::copy(x->val.v.begin() + static_cast<size_t>(ch) * h * w,
              x->val.v.begin() + static_cast<size_t>(ch + 1) * h * w, out.v.begin());
    return make_node(std::move(out), {x}, [x, ch, h, w](Node& n) {
        x->ensure_grad();
        double* g = x->grad.v.data() + static_cast<size_t>(ch) * h * w;
        for (size_t i = 0; i < static_cast<size_t>(h) * w; ++i) g[i] += n.grad.v[i];
    });
}

// Per-pixel softmax over the channel dimension of (C, H, W).
inline Var softmax_channels(const Var& x) {
    const int c = x->val.dim(0), h = x->val.dim(1), w = x->val.dim(2);
    const size_t hw = static_cast<size_t>(h) * w;
    Tensor out(x->val.shape);
    for (size_t i = 0; i < hw; ++i) {
        double mx = x->val.v[i];
        for (int ch = 1; ch < c; ++ch) mx = std::max(mx, x->val.v[ch * hw + i]);
        double z = 0.0;
        for (int ch = 0; ch < c; ++ch) z += std::exp(x->val.v[ch * hw + i] - mx);
        for (int ch = 0; ch < c; ++ch) out.v[ch * hw + i] = std::exp(x->val.v[ch * hw + i] - mx) / z;
    }
    Tensor y = out;
    return make_node(std::move(out), {x}, [x, y, c, hw](Node& n) {
        x->ensure_grad();
        for (size_t i = 0; i < hw; ++i) {
            double dot = 0.0;
            for (int ch = 0; ch < c; ++ch) dot += y.v[ch * hw + i] * n.grad.v[ch * hw + i];
            for (int ch = 0; ch < c; ++ch)
                x->grad.v[ch * hw + i] += y.v[ch * hw + i] * (n.grad.v[ch * hw + i] - dot);
        }
    });
}

// Mean over pixels of -log p[label]; probabilities floored at `floor`.
inline Var cross_entropy(const Var& probs, const LabelGrid& labels, double floor = 1e-12) {
    const int c = probs->val.dim(0), h = probs->val.dim(1), w = probs->val.dim(2);
    if (labels.h != h || labels.w != w) throw Error("cross_entropy: label shape mismatch");
    const size_t hw = static_cast<size_t>(h) * w;
    double acc = 0.0;
    for (size_t i = 0; i < hw; ++i) {
        int lab = labels.data[i];
        if (lab < 0 || lab >= c) throw DataError("cross_entropy: label out of range");
        acc -= std::log(std::max(probs->val.v[static_cast<size_t>(lab) * hw + i], floor));
    }
    double inv = 1.0 / static_cast<double>(hw);
    return make_node(Tensor::scalar(acc * inv), {probs}, [probs, labels, floor, hw, inv](Node& n) {
        probs->ensure_grad();
        double g = n.grad.v[0] * inv;
        for (size_t i = 0; i < hw; ++i) {
            size_t off = static_cast<size_t>(labels.data[i]) * hw + i;
            double p = probs->val.v[off];
            if (p > floor) probs->grad.v[off] -= g / p;
        }
    });
}

}  // namespace vds::ad
