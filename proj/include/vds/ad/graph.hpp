#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vds/ad/tensor.hpp"

namespace vds::ad {

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated on demand during backprop
    bool requires_grad = false;
    std::vector<Var> parents;
    std::function<void(Node&)> backward;  // accumulates into parents' grads

    void ensure_grad() {
        if (grad.v.empty()) grad = Tensor(val.shape);
    }
};

inline Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    return n;
}

inline Var constant(double x) { return constant(Tensor::scalar(x)); }

inline Var param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->val = std::move(t);
    n->requires_grad = true;
    return n;
}

inline Var make_node(Tensor val, std::vector<Var> parents,
                     std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->val = std::move(val);
    for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward = std::move(backward);
    }
    return n;
}

// Reverse-mode sweep from a scalar root.
inline void backprop(const Var& root) {
    if (root->val.numel() != 1) throw Error("backprop: root must be scalar");
    if (!root->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.v[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward) (*it)->backward(**it);
}

// ---- elementwise ----

inline void check_same_shape(const Var& a, const Var& b, const char* what) {
    if (a->val.shape != b->val.shape) throw Error(std::string(what) + ": shape mismatch");
}

inline Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] + b->val.v[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] += n.grad.v[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] - b->val.v[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] -= n.grad.v[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] * b->val.v[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i] * b->val.v[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] += n.grad.v[i] * a->val.v[i];
        }
    });
}

inline Var scale(const Var& a, double k) {
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] * k;
    return make_node(std::move(out), {a}, [a, k](Node& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i] * k;
    });
}

inline Var abs_(const Var& a) {
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = std::abs(a->val.v[i]);
    // subgradient 0 at exact zero
    return make_node(std::move(out), {a}, [a](Node& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.v.size(); ++i) {
            double x = a->val.v[i];
            double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
            a->grad.v[i] += n.grad.v[i] * s;
        }
    });
}

inline Var sigmoid(const Var& a) {
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = 1.0 / (1.0 + std::exp(-a->val.v[i]));
    Tensor y = out;
    return make_node(std::move(out), {a}, [a, y](Node& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.v.size(); ++i)
            a->grad.v[i] += n.grad.v[i] * y.v[i] * (1.0 - y.v[i]);
    });
}

// GELU with the exact erf form; smooth everywhere, which keeps parameter-space
// finite-difference checks stable.
inline Var gelu(const Var& a) {
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) {
        double x = a->val.v[i];
        out.v[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    return make_node(std::move(out), {a}, [a](Node& n) {
        a->ensure_grad();
        for (size_t i = 0; i < n.grad.v.size(); ++i) {
            double x = a->val.v[i];
            double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
            a->grad.v[i] += n.grad.v[i] * (cdf + x * pdf);
        }
    });
}

// ---- scalar broadcast ----

inline Var sub_bcast(const Var& a, const Var& s) {
    if (s->val.numel() != 1) throw Error("sub_bcast: scalar expected");
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] - s->val.v[0];
    return make_node(std::move(out), {a, s}, [a, s](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
        }
        if (s->requires_grad) {
            s->ensure_grad();
            double acc = 0.0;
            for (double g : n.grad.v) acc += g;
            s->grad.v[0] -= acc;
        }
    });
}

inline Var div_bcast(const Var& a, const Var& s) {
    if (s->val.numel() != 1) throw Error("div_bcast: scalar expected");
    double sv = s->val.v[0];
    Tensor out(a->val.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a->val.v[i] / sv;
    return make_node(std::move(out), {a, s}, [a, s, sv](Node& n) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i] / sv;
        }
        if (s->requires_grad) {
            s->ensure_grad();
            double acc = 0.0;
            for (size_t i = 0; i < n.grad.v.size(); ++i) acc += n.grad.v[i] * a->val.v[i];
            s->grad.v[0] -= acc / (sv * sv);
        }
    });
}

inline Var s_add(const Var& a, const Var& b) { return add(a, b); }

inline Var s_mul(const Var& a, const Var& b) { return mul(a, b); }

// ---- reductions over masked grids ----

inline Var masked_mean(const Var& a, const Mask& mask) {
    if (a->val.numel() != static_cast<int64_t>(mask.data.size()))
        throw Error("masked_mean: mask size mismatch");
    size_t m = mask_count(mask);
    if (m == 0) throw DataError("masked_mean: empty mask");
    double acc = 0.0;
    for (size_t i = 0; i < mask.data.size(); ++i)
        if (mask.data[i]) acc += a->val.v[i];
    double inv = 1.0 / static_cast<double>(m);
    return make_node(Tensor::scalar(acc * inv), {a}, [a, mask, inv](Node& n) {
        a->ensure_grad();
        double g = n.grad.v[0] * inv;
        for (size_t i = 0; i < mask.data.size(); ++i)
            if (mask.data[i]) a->grad.v[i] += g;
    });
}

inline Var masked_sum(const Var& a, const Mask& mask) {
    if (a->val.numel() != static_cast<int64_t>(mask.data.size()))
        throw Error("masked_sum: mask size mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < mask.data.size(); ++i)
        if (mask.data[i]) acc += a->val.v[i];
    return make_node(Tensor::scalar(acc), {a}, [a, mask](Node& n) {
        a->ensure_grad();
        double g = n.grad.v[0];
        for (size_t i = 0; i < mask.data.size(); ++i)
            if (mask.data[i]) a->grad.v[i] += g;
    });
}

// Median over the masked entries; an even count takes the mean of the two
// central order statistics. The subgradient routes to the selected entries
// (split evenly for the even case), everything else gets zero.
inline Var masked_median(const Var& a, const Mask& mask) {
    std::vector<std::pair<double, size_t>> vals;
    vals.reserve(mask.data.size());
    for (size_t i = 0; i < mask.data.size(); ++i)
        if (mask.data[i]) vals.emplace_back(a->val.v[i], i);
    if (vals.empty()) throw DataError("masked_median: empty mask");
    size_t m = vals.size() / 2;
    std::nth_element(vals.begin(), vals.begin() + m, vals.end());
    size_t hi_idx = vals[m].second;
    double med;
    size_t lo_idx = hi_idx;
    if (vals.size() % 2 == 1) {
        med = vals[m].first;
    } else {
        auto lo_it = std::max_element(vals.begin(), vals.begin() + m);
        lo_idx = lo_it->second;
        med = 0.5 * (lo_it->first + vals[m].first);
    }
    bool even = vals.size() % 2 == 0;
    return make_node(Tensor::scalar(med), {a}, [a, hi_idx, lo_idx, even](Node& n) {
        a->ensure_grad();
        if (even) {
            a->grad.v[hi_idx] += 0.5 * n.grad.v[0];
            a->grad.v[lo_idx] += 0.5 * n.grad.v[0];
        } else {
            a->grad.v[hi_idx] += n.grad.v[0];
        }
    });
}

// ---- grid ops for the losses ----

// Forward difference along x: out(y, x) = a(y, x+1) - a(y, x); shape (H, W-1).
inline Var forward_diff_x(const Var& a) {
    int h = a->val.dim(0), w = a->val.dim(1);
    Tensor out({h, w - 1});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w - 1; ++x)
            out.v[static_cast<size_t>(y) * (w - 1) + x] =
                a->val.v[static_cast<size_t>(y) * w + x + 1] - a->val.v[static_cast<size_t>(y) * w + x];
    return make_node(std::move(out), {a}, [a, h, w](Node& n) {
        a->ensure_grad();
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w - 1; ++x) {
                double g = n.grad.v[static_cast<size_t>(y) * (w - 1) + x];
                a->grad.v[static_cast<size_t>(y) * w + x + 1] += g;
                a->grad.v[static_cast<size_t>(y) * w + x] -= g;
            }
    });
}

inline Var forward_diff_y(const Var& a) {
    int h = a->val.dim(0), w = a->val.dim(1);
    Tensor out({h - 1, w});
    for (int y = 0; y < h - 1; ++y)
        for (int x = 0; x < w; ++x)
            out.v[static_cast<size_t>(y) * w + x] =
                a->val.v[static_cast<size_t>(y + 1) * w + x] - a->val.v[static_cast<size_t>(y) * w + x];
    return make_node(std::move(out), {a}, [a, h, w](Node& n) {
        a->ensure_grad();
        for (int y = 0; y < h - 1; ++y)
            for (int x = 0; x < w; ++x) {
                double g = n.grad.v[static_cast<size_t>(y) * w + x];
                a->grad.v[static_cast<size_t>(y + 1) * w + x] += g;
                a->grad.v[static_cast<size_t>(y) * w + x] -= g;
            }
    });
}

// 2x2 average pooling of an (H, W) grid; trailing odd row/column dropped.
inline Var avgpool2x2(const Var& a) {
    int h = a->val.dim(0), w = a->val.dim(1);
    int ho = h / 2, wo = w / 2;
    Tensor out({ho, wo});
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            const double* base = a->val.v.data();
            double acc = base[static_cast<size_t>(2 * y) * w + 2 * x] +
                         base[static_cast<size_t>(2 * y) * w + 2 * x + 1] +
                         base[static_cast<size_t>(2 * y + 1) * w + 2 * x] +
                         base[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1];
            out.v[static_cast<size_t>(y) * wo + x] = 0.25 * acc;
        }
    return make_node(std::move(out), {a}, [a, h, w, ho, wo](Node& n) {
        a->ensure_grad();
        for (int y = 0; y < ho; ++y)
            for (int x = 0; x < wo; ++x) {
                double g = 0.25 * n.grad.v[static_cast<size_t>(y) * wo + x];
                a->grad.v[static_cast<size_t>(2 * y) * w + 2 * x] += g;
                a->grad.v[static_cast<size_t>(2 * y) * w + 2 * x + 1] += g;
                a->grad.v[static_cast<size_t>(2 * y + 1) * w + 2 * x] += g;
                a->grad.v[static_cast<size_t>(2 * y + 1) * w + 2 * x + 1] += g;
            }
    });
}

// Backward warp of an (H, W) grid by a constant flow field; the gradient
// scatters through the bilinear weights. Border policy matches
// vds::warp_backward (clamp); validity is the caller's concern.
inline Var warp_bilinear(const Var& a, const FlowField& flow) {
    int h = a->val.dim(0), w = a->val.dim(1);
    if (flow.h() != h || flow.w() != w) throw Error("warp_bilinear: flow shape mismatch");
    Tensor out({h, w});
    // cache sampling geometry for the backward pass
    struct Tap {
        int i00, i01, i10, i11;
        double w00, w01, w10, w11;
    };
    auto taps = std::make_shared<std::vector<Tap>>(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double sx = x + flow.u.at(y, x), sy = y + flow.v.at(y, x);
            double cx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
            double cy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
            int x0 = static_cast<int>(std::floor(cx));
            int y0 = static_cast<int>(std::floor(cy));
            int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            double fx = cx - x0, fy = cy - y0;
            Tap t;
            t.i00 = y0 * w + x0;
            t.i01 = y0 * w + x1;
            t.i10 = y1 * w + x0;
            t.i11 = y1 * w + x1;
            t.w00 = (1 - fx) * (1 - fy);
            t.w01 = fx * (1 - fy);
            t.w10 = (1 - fx) * fy;
            t.w11 = fx * fy;
            (*taps)[static_cast<size_t>(y) * w + x] = t;
            const double* base = a->val.v.data();
            out.v[static_cast<size_t>(y) * w + x] = t.w00 * base[t.i00] + t.w01 * base[t.i01] +
                                                    t.w10 * base[t.i10] + t.w11 * base[t.i11];
        }
    return make_node(std::move(out), {a}, [a, taps](Node& n) {
        a->ensure_grad();
        for (size_t i = 0; i < taps->size(); ++i) {
            const auto& t = (*taps)[i];
            double g = n.grad.v[i];
            a->grad.v[static_cast<size_t>(t.i00)] += g * t.w00;
            a->grad.v[static_cast<size_t>(t.i01)] += g * t.w01;
            a->grad.v[static_cast<size_t>(t.i10)] += g * t.w10;
            a->grad.v[static_cast<size_t>(t.i11)] += g * t.w11;
        }
    });
}

}  // namespace vds::ad
