#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vds/ad/nn_ops.hpp"
#include "vds/core/normalize.hpp"
#include "vds/core/rng.hpp"
#include "vds/core/types.hpp"

namespace vds {

struct StabilizerConfig {
    int embed_dim = 64;  // token dimension c; must equal encoder_channels.back()
    int patch = 7;
    int n_ref = 3;
    std::vector<int> encoder_channels = {16, 32, 64};
    int out_channels = 1;  // 1 for depth, C for segmentation
    int heads = 1;
    int pool_window_mult = 1;  // reference pooling window as a multiple of patch
    int in_channels = 4;       // rgb + disparity (or label) channel
    uint64_t seed = 0;

    void validate() const {
        if (patch < 1 || n_ref < 1 || out_channels < 1) throw ConfigError("invalid stabilizer config");
        if (encoder_channels.size() != 3) throw ConfigError("encoder needs three stages");
        if (embed_dim != encoder_channels.back())
            throw ConfigError("embed_dim must match last encoder stage");
        if (embed_dim % heads != 0) throw ConfigError("heads must divide embed_dim");
        if (pool_window_mult < 1 || pool_window_mult % 2 == 0)
            throw ConfigError("pool_window_mult must be odd");
    }
};

// The single learned object: encoder, cross-attention block, decoder. Stored
// as an ordered list of named tensors so checkpoints and gradient handling
// are index-stable.
struct StabilizerModel {
    StabilizerConfig config;
    std::vector<std::pair<std::string, ad::Tensor>> params;

    ad::Tensor& tensor(const std::string& name) {
        for (auto& [n, t] : params)
            if (n == name) return t;
        throw Error("unknown parameter: " + name);
    }
    const ad::Tensor& tensor(const std::string& name) const {
        return const_cast<StabilizerModel*>(this)->tensor(name);
    }

    int64_t parameter_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : params) n += t.numel();
        return n;
    }
};

namespace detail {

inline ad::Tensor init_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    ad::Tensor t(std::move(shape));
    double bound = std::sqrt(3.0 / fan_in);
    for (double& v : t.v) v = rng.uniform(-bound, bound);
    return t;
}

inline ad::Tensor init_const(std::vector<int> shape, double value) {
    ad::Tensor t(std::move(shape));
    for (double& v : t.v) v = value;
    return t;
}

}  // namespace detail

inline StabilizerModel make_stabilizer(const StabilizerConfig& cfg) {
    cfg.validate();
    StabilizerModel m;
    m.config = cfg;
    Rng rng(derive_seed(cfg.seed, {0x5741u}));
    const int c = cfg.embed_dim;
    const int c1 = cfg.encoder_channels[0], c2 = cfg.encoder_channels[1],
              c3 = cfg.encoder_channels[2];
    auto conv = [&](const std::string& name, int co, int ci, int k) {
        m.params.emplace_back(name + "_w", detail::init_uniform({co, ci, k, k}, ci * k * k, rng));
        m.params.emplace_back(name + "_b", detail::init_const({co}, 0.0));
    };
    auto lin = [&](const std::string& name, int co, int ci) {
        m.params.emplace_back(name + "_w", detail::init_uniform({co, ci}, ci, rng));
        m.params.emplace_back(name + "_b", detail::init_const({co}, 0.0));
    };
    conv("enc1", c1, cfg.in_channels, 3);
    conv("enc2", c2, c1, 3);
    conv("enc3", c3, c2, 3);
    lin("attn_q", c, c);
    lin("attn_k", c, c);
    lin("attn_v", c, c);
    m.params.emplace_back("ln1_g", detail::init_const({c}, 1.0));
    m.params.emplace_back("ln1_b", detail::init_const({c}, 0.0));
    lin("mlp1", 4 * c, c);
    lin("mlp2", c, 4 * c);
    m.params.emplace_back("ln2_g", detail::init_const({c}, 1.0));
    m.params.emplace_back("ln2_b", detail::init_const({c}, 0.0));
    conv("fuse", c, 2 * c, 1);
    conv("dec1", c2, c, 3);
    conv("skip", c2, c2 + c1, 3);
    conv("dec2", c1, c2, 3);
    conv("head", cfg.out_channels, c1, 1);
    return m;
}

// A model bound into a graph: trainable bindings expose parameter gradients,
// constant bindings skip all backward bookkeeping.
struct ModelBinding {
    const StabilizerConfig* config = nullptr;
    std::vector<std::pair<std::string, ad::Var>> params;

    const ad::Var& operator[](const std::string& name) const {
        for (auto& [n, v] : params)
            if (n == name) return v;
        throw Error("unknown parameter: " + name);
    }
};

inline ModelBinding bind(const StabilizerModel& m, bool trainable) {
    ModelBinding b;
    b.config = &m.config;
    b.params.reserve(m.params.size());
    for (const auto& [name, t] : m.params)
        b.params.emplace_back(name, trainable ? ad::param(t) : ad::constant(t));
    return b;
}

struct EncodedFrame {
    ad::Var feat;  // (c, ceil(H/4), ceil(W/4))
    ad::Var skip;  // (c1, ceil(H/2), ceil(W/2))
    int h = 0, w = 0;
};

// Pack a frame and its (window-normalized) disparity into a (4, H, W) input;
// invalid disparity pixels enter as zeros.
inline ad::Tensor pack_rgbd(const Frame& f, const DisparityMap& d) {
    ad::Tensor x({4, f.h, f.w});
    const size_t hw = static_cast<size_t>(f.h) * f.w;
    for (int y = 0; y < f.h; ++y)
        for (int xx = 0; xx < f.w; ++xx) {
            size_t i = static_cast<size_t>(y) * f.w + xx;
            for (int ch = 0; ch < 3; ++ch) x.v[ch * hw + i] = f.at(y, xx, ch);
            x.v[3 * hw + i] = d.valid.data[i] ? d.values.data[i] : 0.0;
        }
    return x;
}

// Three-stage strided convolutional encoder; identical weights for target and
// reference frames. Output feature map at 1/4 resolution with c channels.
inline EncodedFrame encode_rgbd(const ad::Var& x, const ModelBinding& mb) {
    const int h = x->val.dim(1), w = x->val.dim(2);
    if (h < 8 || w < 8) throw DataError("encode_rgbd: spatial dims too small");
    ad::Var s1 = ad::gelu(ad::conv2d(x, mb["enc1_w"], mb["enc1_b"], 2, 1));
    ad::Var s2 = ad::gelu(ad::conv2d(s1, mb["enc2_w"], mb["enc2_b"], 2, 1));
    ad::Var s3 = ad::gelu(ad::conv2d(s2, mb["enc3_w"], mb["enc3_b"], 1, 1));
    return EncodedFrame{s3, s1, h, w};
}

// Cross-attention refinement of the target features against the pooled
// reference tokens, wrapped in a standard transformer block, then broadcast
// back to feature resolution.
inline ad::Var cross_attention(const ad::Var& target_feat, const std::vector<ad::Var>& ref_feats,
                               const ModelBinding& mb) {
    const StabilizerConfig& cfg = *mb.config;
    const int h4 = target_feat->val.dim(1), w4 = target_feat->val.dim(2);
    const int ph = (h4 + cfg.patch - 1) / cfg.patch, pw = (w4 + cfg.patch - 1) / cfg.patch;

    ad::Var t = ad::patch_tokens(target_feat, cfg.patch);
    std::vector<ad::Var> keys, values;
    keys.reserve(ref_feats.size());
    values.reserve(ref_feats.size());
    for (const ad::Var& rf : ref_feats) {
        ad::Var rp = ad::pooled_ref_tokens(rf, cfg.patch, cfg.pool_window_mult);
        keys.push_back(ad::linear(rp, mb["attn_k_w"], mb["attn_k_b"]));
        values.push_back(ad::linear(rp, mb["attn_v_w"], mb["attn_v_b"]));
    }
    ad::Var q = ad::linear(t, mb["attn_q_w"], mb["attn_q_b"]);
    ad::Var k = ad::stack_tokens(keys);
    ad::Var v = ad::stack_tokens(values);
    ad::Var alpha = ad::softmax_lastdim(ad::attention_logits(q, k, cfg.heads));
    ad::Var attended = ad::attention_mix(alpha, v, cfg.heads);

    ad::Var x1 = ad::layer_norm(ad::add(t, attended), mb["ln1_g"], mb["ln1_b"]);
    ad::Var mlp = ad::linear(ad::gelu(ad::linear(x1, mb["mlp1_w"], mb["mlp1_b"])),
                             mb["mlp2_w"], mb["mlp2_b"]);
    ad::Var x2 = ad::layer_norm(ad::add(x1, mlp), mb["ln2_g"], mb["ln2_b"]);

    ad::Var grid = ad::tokens_to_grid(x2, ph, pw);
    return ad::bilinear_resize(grid, h4, w4);
}

// Fuse target features with the attention-refined features and restore full
// resolution: 1x1 fusion conv, two upsample+conv stages with a skip
// connection from the encoder's first stage, and the task output head
// (sigmoid for depth, per-pixel softmax for segmentation).
inline ad::Var decode(const EncodedFrame& target, const ad::Var& t_tem, const ModelBinding& mb) {
    ad::Var f = ad::concat_channels(target.feat, t_tem);
    f = ad::gelu(ad::conv2d(f, mb["fuse_w"], mb["fuse_b"], 1, 0));
    ad::Var u1 = ad::bilinear_resize(f, target.skip->val.dim(1), target.skip->val.dim(2));
    ad::Var d1 = ad::gelu(ad::conv2d(u1, mb["dec1_w"], mb["dec1_b"], 1, 1));
    ad::Var d1s = ad::gelu(
        ad::conv2d(ad::concat_channels(d1, target.skip), mb["skip_w"], mb["skip_b"], 1, 1));
    ad::Var u2 = ad::bilinear_resize(d1s, target.h, target.w);
    ad::Var d2 = ad::gelu(ad::conv2d(u2, mb["dec2_w"], mb["dec2_b"], 1, 1));
    ad::Var logits = ad::conv2d(d2, mb["head_w"], mb["head_b"], 1, 0);
    if (mb.config->out_channels == 1) return ad::sigmoid(ad::select_channel(logits, 0));
    return ad::softmax_channels(logits);
}

// Full differentiable window forward pass on already-normalized inputs.
inline ad::Var stabilize_window_graph(const Frame& target_frame, const DisparityMap& target_disp,
                                      const std::vector<const Frame*>& ref_frames,
                                      const std::vector<const DisparityMap*>& ref_disps,
                                      const ModelBinding& mb) {
    EncodedFrame t = encode_rgbd(ad::constant(pack_rgbd(target_frame, target_disp)), mb);
    std::vector<ad::Var> refs;
    refs.reserve(ref_frames.size());
    for (size_t i = 0; i < ref_frames.size(); ++i)
        refs.push_back(encode_rgbd(ad::constant(pack_rgbd(*ref_frames[i], *ref_disps[i])), mb).feat);
    ad::Var t_tem = cross_attention(t.feat, refs, mb);
    return decode(t, t_tem, mb);
}

// Inference entry point: Eq-style window stabilization over raw predictor
// disparities. A degenerate (constant) window skips the network and returns
// the all-zero normalized target.
inline DisparityMap stabilize_window(const SlidingWindow& window, const StabilizerModel& model) {
    std::vector<DisparityMap> raw;
    raw.push_back(window.target.disparity);
    for (const auto& r : window.references) raw.push_back(r.disparity);
    WindowNormResult norm = normalize_window(raw);
    if (norm.degenerate) return norm.maps.front();

    ModelBinding mb = bind(model, false);
    std::vector<const Frame*> ref_frames;
    std::vector<const DisparityMap*> ref_disps;
    for (size_t i = 0; i < window.references.size(); ++i) {
        ref_frames.push_back(&window.references[i].frame);
        ref_disps.push_back(&norm.maps[i + 1]);
    }
    ad::Var out = stabilize_window_graph(window.target.frame, norm.maps[0], ref_frames, ref_disps, mb);
    DisparityMap result(window.target.frame.h, window.target.frame.w, 0.0,
                        DispSpace::window_normalized);
    result.values.data = out->val.v;
    return result;
}

}  // namespace vds
