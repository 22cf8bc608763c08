#pragma once

#include <array>
#include <vector>

#include "glocnav/geometry.hpp"
#include "glocnav/tensorcore.hpp"

namespace glocnav {

class PerceptionError : public std::runtime_error {
public:
    explicit PerceptionError(const std::string& what) : std::runtime_error(what) {}
};

// Planar range scan. Rays uniformly span [heading - fov/2, heading + fov/2].
struct DepthScan {
    std::vector<double> rays;   // meters, each in (0, max_range]
    double fov = kPi / 2.0;
    double max_range = 5.0;
};

inline constexpr int kHistoryLength = 5;

// Exactly 5 scans, oldest -> newest. At episode start the earliest scan is
// repeated until real history exists.
struct ObservationHistory {
    std::vector<DepthScan> scans;

    static ObservationHistory bootstrap(const DepthScan& first) {
        ObservationHistory h;
        h.scans.assign(kHistoryLength, first);
        return h;
    }
    void push(const DepthScan& s) {
        scans.erase(scans.begin());
        scans.push_back(s);
    }
    bool complete() const { return scans.size() == kHistoryLength; }
};

// Fused local-geometry feature C_l.
struct LocalCue {
    std::vector<double> vector;
};

struct PerceptionConfig {
    int ray_count = 64;
    double fov = kPi / 2.0;
    double max_range = 5.0;
    int embed_dim = 32;        // per-scan embedding / attention width
    int attention_heads = 4;
    int attention_layers = 4;
    int plan_feat_dim = 32;
    int plan_pool = 32;        // occupancy grid downsampled to plan_pool^2
    int cue_dim = 64;
    int cue_hidden = 64;
    bool raw_scan_embedding = false;  // ablation: depth-blind (scan content discarded)
};

// Distance to the first occupied cell of `world` along each ray, marching at
// mu/2 steps, clamped to max_range.
DepthScan raycast_depth(const Pose& p, const FloorPlan& world,
                        int ray_count = 64, double fov = kPi / 2.0,
                        double max_range = 5.0);

// Average-pool the occupancy grid to pool x pool doubles in [0,1].
std::vector<double> downsample_occupancy(const FloorPlan& plan, int pool);

// Depth-cue encoder: scan history fused by multi-head self-attention,
// concatenated with the floor-plan feature and the pose, projected to C_l.
// Parameters live in the shared store under the "percep." prefix.
class PerceptionEncoder {
public:
    PerceptionEncoder(tc::ParamStore& store, const PerceptionConfig& cfg, Rng& rng);
    // Bind to parameters already present in the store (checkpoint load path).
    PerceptionEncoder(tc::ParamStore& store, const PerceptionConfig& cfg);

    // Per-scan linear embedding + 4x4 self-attention, averaged over history.
    tc::Tensor fuse_history(const ObservationHistory& h) const;

    tc::Tensor encode_floorplan(const FloorPlan& plan) const;
    // Cached variant: the plan feature input is precomputed once per world.
    tc::Tensor encode_plan_input(const std::vector<double>& pooled) const;

    // [fused || plan_feat || (x, y, cos r, sin r)] -> 2-layer MLP -> C_l.
    tc::Tensor local_cue(const tc::Tensor& fused, const tc::Tensor& plan_feat,
                         const Pose& pose) const;

    // Full pipeline convenience.
    LocalCue compute_cue(const ObservationHistory& h, const std::vector<double>& pooled_plan,
                         const Pose& pose) const;

    const PerceptionConfig& config() const { return cfg_; }

private:
    void bind(tc::ParamStore& store);
    PerceptionConfig cfg_;
    // scan embedding
    tc::Tensor scan_w_, scan_b_;
    // attention stacks: per layer q,k,v,o projections
    struct AttnLayer {
        tc::Tensor wq, wk, wv, wo;
    };
    std::vector<AttnLayer> attn_;
    // plan encoder MLP
    tc::Tensor plan_w1_, plan_b1_, plan_w2_, plan_b2_;
    // cue MLP
    tc::Tensor cue_w1_, cue_b1_, cue_w2_, cue_b2_;
};

}  // namespace glocnav
