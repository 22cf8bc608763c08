#pragma once

#include <memory>
#include <utility>

#include "glocnav/perception.hpp"
#include "glocnav/planner.hpp"
#include "glocnav/tensorcore.hpp"

namespace glocnav {

// Square-cosine DDPM schedule (improved-DDPM formulation, s = 0.008).
struct NoiseSchedule {
    int steps = 50;                   // K
    std::vector<double> alpha_bar;    // K+1 entries, alpha_bar[0] = 1
    std::vector<double> betas;        // K entries, betas[k-1] = beta_k
    double alpha(int k) const { return 1.0 - betas[k - 1]; }
};

NoiseSchedule make_schedule(int k_steps);

// H x 2 agent-frame waypoint deltas (meters).
struct ActionSequence {
    std::vector<Vec2> waypoints;
};

enum class PolicyVariant { Full = 0, NoPath = 1, NoDepth = 2 };

struct DiffusionConfig {
    int horizon = 32;          // H in {16, 32, 48}
    int cue_horizon = 32;      // H_g
    int k_steps = 50;
    int c1 = 16, c2 = 32, c3 = 48;   // module widths
    int temb_dim = 32;
    int cue_block_dim = 64;    // width of the two C_g residual blocks
    double action_scale = 0.04;  // meters per unit in diffusion space
    // Injection site of f1/f2 within the named modules: 1 = after the module's
    // first residual block (default), 2 = after the second.
    int cue_injection_block = 1;
    PolicyVariant variant = PolicyVariant::Full;
};

// a_k = sqrt(abar_k) a_0 + sqrt(1 - abar_k) eps, eps ~ N(0, I).
std::pair<ActionSequence, ActionSequence> forward_diffuse(const ActionSequence& a0, int k,
                                                          const NoiseSchedule& sched,
                                                          Rng& rng);

// Pure DDPM posterior algebra: a_{k-1} from a_k and a noise estimate; z is the
// injected standard normal (all zeros at k = 1).
ActionSequence ddpm_posterior_step(const ActionSequence& ak, const ActionSequence& eps,
                                   int k, const NoiseSchedule& sched,
                                   const ActionSequence& z);

// Conditional 1D UNet noise predictor: 3 down modules, bottleneck, 2 up
// modules, final conv. C_l + timestep condition every module; C_g + timestep
// pass through two residual blocks into f1/f2 injected at the first down and
// final up modules.
class UNet {
public:
    UNet(tc::ParamStore& store, const DiffusionConfig& cfg, int local_cue_dim, Rng& rng);
    UNet(tc::ParamStore& store, const DiffusionConfig& cfg, int local_cue_dim);

    // actions: [H,2] in diffusion (scaled) space; cue points in meters.
    tc::Tensor predict(const tc::Tensor& actions, const tc::Tensor& local_cue,
                       const std::vector<Vec2>& cue_points, int k) const;

    const DiffusionConfig& config() const { return cfg_; }

private:
    struct ResBlock {
        tc::Tensor w1, b1, w2, b2, wskip, bskip;
    };
    struct Module {
        ResBlock a, b;
        tc::Tensor cond_w, cond_b;  // cond -> per-channel bias
    };
    ResBlock make_res(tc::ParamStore& s, const std::string& p, int cin, int cout, Rng& rng);
    ResBlock bind_res(tc::ParamStore& s, const std::string& p);
    Module make_module(tc::ParamStore& s, const std::string& p, int cin, int cout,
                       int cond_dim, Rng& rng);
    Module bind_module(tc::ParamStore& s, const std::string& p);
    tc::Tensor run_res(const ResBlock& r, const tc::Tensor& x) const;
    tc::Tensor run_module(const Module& m, const tc::Tensor& x, const tc::Tensor& cond,
                          const tc::Tensor* extra) const;

    DiffusionConfig cfg_;
    int cl_dim_ = 0;
    tc::Tensor temb_w1_, temb_b1_, temb_w2_, temb_b2_;
    Module d1_, d2_, d3_, mid_, u1_, u2_;
    tc::Tensor down2_w_, down2_b_, down3_w_, down3_b_;  // stride-2 convs
    tc::Tensor final_w_, final_b_;
    // C_g branch: two identical residual MLP blocks + feature heads.
    tc::Tensor cue_in_w_, cue_in_b_;
    tc::Tensor cue_r1a_, cue_r1a_b_, cue_r1b_, cue_r1b_b_;
    tc::Tensor cue_r2a_, cue_r2a_b_, cue_r2b_, cue_r2b_b_;
    tc::Tensor f1_w_, f1_b_, f2_w_, f2_b_;
};

// Bundled policy: shared parameter store, perception encoder, UNet, schedule.
struct PolicyModel {
    tc::ParamStore store;
    DiffusionConfig dcfg;
    PerceptionConfig pcfg;
    NoiseSchedule sched;
    std::unique_ptr<PerceptionEncoder> perception;
    std::unique_ptr<UNet> unet;

    static PolicyModel create(const DiffusionConfig& dcfg, const PerceptionConfig& pcfg,
                              Rng& rng);
    void save(const std::string& path) const;
    static PolicyModel load(const std::string& path);
};

// eps' = unet(a_k, C_l, C_g, k); returns [H,2] tensor in diffusion space.
tc::Tensor predict_noise(const PolicyModel& model, const ActionSequence& ak_scaled,
                         const tc::Tensor& local_cue, const std::vector<Vec2>& cue_points,
                         int k);

// One reverse step a_k -> a_{k-1} (z = 0 at k = 1). Operates in diffusion space.
ActionSequence denoise_step(const PolicyModel& model, const ActionSequence& ak_scaled,
                            const tc::Tensor& local_cue, const std::vector<Vec2>& cue_points,
                            int k, Rng& rng);

// Full K-step sampling from N(0, I); returns waypoint deltas in meters
// (diffusion space rescaled by action_scale).
ActionSequence sample_actions(const PolicyModel& model, const tc::Tensor& local_cue,
                              const std::vector<Vec2>& cue_points, Rng& rng);

// ---- training ----

struct TrainingSample {
    int world = 0;
    ObservationHistory history;
    Pose pose;                       // GT world pose
    Vec2 goal;                       // world meters
    std::vector<Vec2> expert_deltas; // H agent-frame per-step deltas, meters
};

struct TrainingDataset {
    std::vector<FloorPlan> plans;              // plan-only grids per world
    std::vector<std::vector<double>> pooled;   // downsampled plan per world
    std::vector<TrainingSample> samples;
};

struct TrainConfig {
    int epochs = 20;
    int batch = 16;
    double lr_max = 1e-4;
    double alpha = 0.1;              // curriculum maximum perturbation (m)
    bool perturbation = true;        // false: no pose noise, no path noise
    double pose_noise_std = 0.1;
    double heading_noise_std = kPi / 36.0;
    double ema_decay = 0.0;          // weight averaging; <= 0 disables
    std::uint64_t seed = 0;
};

struct TrainingResult {
    std::vector<double> epoch_loss;  // mean MSE per epoch
};

// Per-step: perturb pose, replan + perturb the directional cue under the
// epoch's curriculum bound, build C_l and C_g, diffuse the expert chunk at a
// uniform k, regress the noise with AdamW + cosine LR.
TrainingResult training_run(PolicyModel& model, const TrainingDataset& dataset,
                            const TrainConfig& cfg);

// Directional cue points for a believed pose, honoring the policy variant
// (NoPath replaces the path with the goal point). Falls back to the goal
// point when no plan path exists from the (snapped) believed position.
std::vector<Vec2> directional_cue_points(const FloorPlan& plan, const Pose& believed,
                                         Vec2 goal, int horizon, PolicyVariant variant);

}  // namespace glocnav
