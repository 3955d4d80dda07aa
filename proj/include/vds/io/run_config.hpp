#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "vds/core/types.hpp"
#include "vds/loss/losses.hpp"
#include "vds/model/predictor.hpp"
#include "vds/model/stabilizer.hpp"

namespace vds {

using nlohmann::json;

struct OptimizerConfig {
    double lr = 6e-4;        // desk-scale default; the paper preset uses 6e-5
    double lr_decay = 1e-4;  // subtracted every five epochs
    int epochs = 12;
    int batch = 8;
    int crop = 48;           // square training crop
    int steps_per_epoch = 0; // 0 = one pass over all clips
};

struct InferenceConfig {
    std::string mode = "flow";  // forward|backward|bi|flow
    double alpha = 10.0;
    double beta = 0.5;
};

struct GenerateConfig {
    int train_sequences = 32;
    int test_sequences = 8;
    int height = 48;
    int width = 64;
    int frames = 12;
    int min_objects = 1;
    int max_objects = 3;
    double sky_fraction = 0.0;
    double stereo_baseline_px = 24.0;
    double fps = 24.0;
};

struct RunConfig {
    std::string task = "depth";  // depth|seg
    std::string train_dir;
    std::string val_dir;   // empty: carve validation out of train_dir
    std::string data_dir;  // input for infer/eval
    std::string out_dir;
    std::string checkpoint;
    StabilizerConfig model;
    LossWeights loss;
    OptimizerConfig optim;
    InferenceConfig infer;
    GenerateConfig generate;
    FlickerParams flicker;
    double seg_error_rate = 0.15;
    uint64_t seed = 0;
};

inline void to_json(json& j, const StabilizerConfig& c) {
    j = json{{"embed_dim", c.embed_dim},
             {"patch", c.patch},
             {"n_ref", c.n_ref},
             {"encoder_channels", c.encoder_channels},
             {"out_channels", c.out_channels},
             {"heads", c.heads},
             {"pool_window_mult", c.pool_window_mult},
             {"in_channels", c.in_channels},
             {"seed", c.seed}};
}

inline void from_json(const json& j, StabilizerConfig& c) {
    c.embed_dim = j.value("embed_dim", c.embed_dim);
    c.patch = j.value("patch", c.patch);
    c.n_ref = j.value("n_ref", c.n_ref);
    c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
    c.out_channels = j.value("out_channels", c.out_channels);
    c.heads = j.value("heads", c.heads);
    c.pool_window_mult = j.value("pool_window_mult", c.pool_window_mult);
    c.in_channels = j.value("in_channels", c.in_channels);
    c.seed = j.value("seed", c.seed);
}

inline void to_json(json& j, const LossWeights& w) {
    j = json{{"lambda_temporal", w.lambda_temporal},
             {"mu_gradient", w.mu_gradient},
             {"K_scales", w.K_scales},
             {"gamma_visibility", w.gamma_visibility}};
}

inline void from_json(const json& j, LossWeights& w) {
    w.lambda_temporal = j.value("lambda_temporal", w.lambda_temporal);
    w.mu_gradient = j.value("mu_gradient", w.mu_gradient);
    w.K_scales = j.value("K_scales", w.K_scales);
    w.gamma_visibility = j.value("gamma_visibility", w.gamma_visibility);
}

inline void to_json(json& j, const OptimizerConfig& o) {
    j = json{{"lr", o.lr},           {"lr_decay", o.lr_decay}, {"epochs", o.epochs},
             {"batch", o.batch},     {"crop", o.crop},         {"steps_per_epoch", o.steps_per_epoch}};
}

inline void from_json(const json& j, OptimizerConfig& o) {
    o.lr = j.value("lr", o.lr);
    o.lr_decay = j.value("lr_decay", o.lr_decay);
    o.epochs = j.value("epochs", o.epochs);
    o.batch = j.value("batch", o.batch);
    o.crop = j.value("crop", o.crop);
    o.steps_per_epoch = j.value("steps_per_epoch", o.steps_per_epoch);
}

inline void to_json(json& j, const InferenceConfig& i) {
    j = json{{"mode", i.mode}, {"alpha", i.alpha}, {"beta", i.beta}};
}

inline void from_json(const json& j, InferenceConfig& i) {
    i.mode = j.value("mode", i.mode);
    i.alpha = j.value("alpha", i.alpha);
    i.beta = j.value("beta", i.beta);
}

inline void to_json(json& j, const GenerateConfig& g) {
    j = json{{"train_sequences", g.train_sequences},
             {"test_sequences", g.test_sequences},
             {"height", g.height},
             {"width", g.width},
             {"frames", g.frames},
             {"min_objects", g.min_objects},
             {"max_objects", g.max_objects},
             {"sky_fraction", g.sky_fraction},
             {"stereo_baseline_px", g.stereo_baseline_px},
             {"fps", g.fps}};
}

inline void from_json(const json& j, GenerateConfig& g) {
    g.train_sequences = j.value("train_sequences", g.train_sequences);
    g.test_sequences = j.value("test_sequences", g.test_sequences);
    g.height = j.value("height", g.height);
    g.width = j.value("width", g.width);
    g.frames = j.value("frames", g.frames);
    g.min_objects = j.value("min_objects", g.min_objects);
    g.max_objects = j.value("max_objects", g.max_objects);
    g.sky_fraction = j.value("sky_fraction", g.sky_fraction);
    g.stereo_baseline_px = j.value("stereo_baseline_px", g.stereo_baseline_px);
    g.fps = j.value("fps", g.fps);
}

inline void to_json(json& j, const FlickerParams& f) {
    j = json{{"scale_lo", f.scale_lo},
             {"scale_hi", f.scale_hi},
             {"shift_lo", f.shift_lo},
             {"shift_hi", f.shift_hi},
             {"noise_sigma", f.noise_sigma}};
}

inline void from_json(const json& j, FlickerParams& f) {
    f.scale_lo = j.value("scale_lo", f.scale_lo);
    f.scale_hi = j.value("scale_hi", f.scale_hi);
    f.shift_lo = j.value("shift_lo", f.shift_lo);
    f.shift_hi = j.value("shift_hi", f.shift_hi);
    f.noise_sigma = j.value("noise_sigma", f.noise_sigma);
}

inline void to_json(json& j, const RunConfig& c) {
    j = json{{"task", c.task},
             {"train_dir", c.train_dir},
             {"val_dir", c.val_dir},
             {"data_dir", c.data_dir},
             {"out_dir", c.out_dir},
             {"checkpoint", c.checkpoint},
             {"model", c.model},
             {"loss", c.loss},
             {"optim", c.optim},
             {"infer", c.infer},
             {"generate", c.generate},
             {"flicker", c.flicker},
             {"seg_error_rate", c.seg_error_rate},
             {"seed", c.seed}};
}

inline void from_json(const json& j, RunConfig& c) {
    c.task = j.value("task", c.task);
    c.train_dir = j.value("train_dir", c.train_dir);
    c.val_dir = j.value("val_dir", c.val_dir);
    c.data_dir = j.value("data_dir", c.data_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    if (j.contains("model")) j.at("model").get_to(c.model);
    if (j.contains("loss")) j.at("loss").get_to(c.loss);
    if (j.contains("optim")) j.at("optim").get_to(c.optim);
    if (j.contains("infer")) j.at("infer").get_to(c.infer);
    if (j.contains("generate")) j.at("generate").get_to(c.generate);
    if (j.contains("flicker")) j.at("flicker").get_to(c.flicker);
    c.seg_error_rate = j.value("seg_error_rate", c.seg_error_rate);
    c.seed = j.value("seed", c.seed);
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
    return json(a) == json(b);
}

// Presets. "desk" is the CPU-minutes benchmark scale; "paper" records the
// full-scale recipe (384 crops, lr 6e-5 decaying 1e-5 per five epochs, c=256).
inline void apply_preset(RunConfig& c, const std::string& preset) {
    if (preset == "desk") {
        c = RunConfig{};
    } else if (preset == "paper") {
        c.model.embed_dim = 256;
        c.model.encoder_channels = {64, 128, 256};
        c.optim.lr = 6e-5;
        c.optim.lr_decay = 1e-5;
        c.optim.epochs = 30;
        c.optim.batch = 9;
        c.optim.crop = 384;
    } else {
        throw ConfigError("unknown preset: " + preset);
    }
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    RunConfig c;
    j.get_to(c);
    return c;
}

inline void save_config(const std::filesystem::path& path, const RunConfig& c) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write config " + path.string());
    f << json(c).dump(2) << "\n";
}

// FNV-1a hash of the canonical serialized config, for report provenance.
inline std::string config_hash(const RunConfig& c) {
    std::string s = json(c).dump();
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace vds
