#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <string>

#include "vds/core/rng.hpp"
#include "vds/core/types.hpp"

namespace vds {

// Pluggable single-image depth predictor: frame -> raw disparity,
// deterministic given (frame, seed).
class DepthPredictor {
public:
    virtual ~DepthPredictor() = default;
    virtual DisparityMap predict(const VideoSequence& seq, int frame_index) const = 0;
};

struct FlickerParams {
    double scale_lo = 0.8;
    double scale_hi = 1.2;
    double shift_lo = -0.1;
    double shift_hi = 0.1;
    double noise_sigma = 0.02;
};

// Stand-in for an off-the-shelf single-image model: corrupts the ground truth
// with a per-frame random affine map plus i.i.d. pixel noise, so consecutive
// frames flicker independently while staying accurate up to scale and shift.
class FlickerPredictor : public DepthPredictor {
public:
    FlickerPredictor(FlickerParams params, uint64_t seed) : params_(params), seed_(seed) {}

    DisparityMap predict(const VideoSequence& seq, int frame_index) const override {
        if (frame_index < 1 || frame_index > seq.frame_count())
            throw DataError("FlickerPredictor: frame index out of range");
        if (seq.gt_disparity.empty())
            throw DataError("FlickerPredictor: sequence has no ground-truth disparity");
        const DisparityMap& gt = seq.gt_disparity[static_cast<size_t>(frame_index - 1)];
        Rng rng(derive_seed(seed_, {0xF11Cu, static_cast<uint64_t>(frame_index)}));
        double a = rng.uniform(params_.scale_lo, params_.scale_hi);
        double b = rng.uniform(params_.shift_lo, params_.shift_hi);
        DisparityMap out = gt;
        out.space = DispSpace::raw;
        for (size_t i = 0; i < out.values.data.size(); ++i) {
            double eps = params_.noise_sigma > 0.0 ? rng.normal(0.0, params_.noise_sigma) : 0.0;
            if (!out.valid.data[i]) continue;
            out.values.data[i] = std::max(0.0, a * gt.values.data[i] + b + eps);
        }
        return out;
    }

    const FlickerParams& params() const { return params_; }
    uint64_t seed() const { return seed_; }

private:
    FlickerParams params_;
    uint64_t seed_;
};

// Serves precomputed disparities carried on the sequence itself (e.g. read
// from files by the dataset loader); the ingestion path for real predictors.
class StoredPredictor : public DepthPredictor {
public:
    explicit StoredPredictor(std::vector<std::vector<DisparityMap>> per_seq_maps)
        : maps_(std::move(per_seq_maps)) {}

    // Single-sequence convenience.
    explicit StoredPredictor(std::vector<DisparityMap> maps) { maps_.push_back(std::move(maps)); }

    DisparityMap predict(const VideoSequence& seq, int frame_index) const override {
        const auto& maps = maps_.at(seq_slot(seq));
        if (frame_index < 1 || frame_index > static_cast<int>(maps.size()))
            throw DataError("StoredPredictor: frame index out of range");
        return maps[static_cast<size_t>(frame_index - 1)];
    }

    void set_slot(const std::string& name, size_t slot) { slots_[name] = slot; }

private:
    size_t seq_slot(const VideoSequence& seq) const {
        if (maps_.size() == 1) return 0;
        auto it = slots_.find(seq.name);
        if (it == slots_.end()) throw DataError("StoredPredictor: unknown sequence " + seq.name);
        return it->second;
    }

    std::vector<std::vector<DisparityMap>> maps_;
    std::map<std::string, size_t> slots_;
};

}  // namespace vds
