#pragma once

#include <functional>
#include <optional>

#include "glocnav/diffusion.hpp"
#include "glocnav/perception.hpp"
#include "glocnav/planner.hpp"

namespace glocnav {

class SimError : public std::runtime_error {
public:
    explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

// Walls live in the plan; furniture only in the overlay. The agent collides
// with the union, the directional cue sees only the plan.
struct SimWorld {
    FloorPlan plan;            // permanent structures
    FloorPlan furniture;       // overlay, same calibration
    FloorPlan full;            // plan | furniture
    FloorPlan full_inflated;   // full, inflated by the agent radius (1 cell)

    void rebuild_composites();
};

SimWorld generate_world(std::uint64_t seed, int size_px, double furniture_density,
                        double mu = 0.04);

// World files: plan.pgm/plan.meta (geometry format) + furniture.pgm.
void save_world(const SimWorld& w, const std::string& dir);
SimWorld load_world(const std::string& dir);

// Free cell (inflated full occupancy) sampling within the connected component
// of `anchor`; used for start/goal pairs.
std::optional<Cell> sample_free_cell(const SimWorld& w, Rng& rng,
                                     const Cell* same_component_as = nullptr);

struct ExpertDemo {
    std::vector<Pose> trajectory;        // world frame, ~4 cm spacing
    double length = 0.0;                 // meters along the trajectory
};

// A* on the inflated full occupancy, resampled to `step_m` arc-length spacing.
// Headings follow the direction of travel.
std::optional<ExpertDemo> expert_demonstrate(const SimWorld& w, const Cell& start,
                                             const Cell& goal, double step_m = 0.04);

// Agent bookkeeping during an episode.
struct AgentState {
    Pose true_pose;
    Pose believed_pose;
    ObservationHistory history;
    int interventions = 0;
    double path_length = 0.0;
};

enum class LocalizerKind { GT, NOISY_GT, ODOM_DRIFT, JUMP_OUTLIER };

struct LocalizerConfig {
    LocalizerKind kind = LocalizerKind::GT;
    // NOISY_GT: position offset magnitude ~ U[noise_lo, noise_hi), random direction.
    double noise_lo = 0.0;
    double noise_hi = 0.0;
    // ODOM_DRIFT: dead reckoning of executed motion; random-walk noise scales
    // with the square root of distance traveled.
    double drift_trans_std = 0.48;   // m per sqrt-meter, per axis
    double drift_rot_std = 0.05;     // rad per sqrt-meter
    double scale = 1.0;              // odometry scale factor
    // JUMP_OUTLIER: GT + Gaussian, occasional teleport within free space.
    double jump_prob = 0.70;
    double jump_radius = 9.5;        // m
    double base_noise_std = 0.3;     // m per axis

    static LocalizerConfig gt() { return {}; }
    static LocalizerConfig noisy_gt(double lo, double hi) {
        LocalizerConfig c;
        c.kind = LocalizerKind::NOISY_GT;
        c.noise_lo = lo;
        c.noise_hi = hi;
        return c;
    }
    static LocalizerConfig odom_drift() {
        LocalizerConfig c;
        c.kind = LocalizerKind::ODOM_DRIFT;
        return c;
    }
    static LocalizerConfig jump_outlier() {
        LocalizerConfig c;
        c.kind = LocalizerKind::JUMP_OUTLIER;
        return c;
    }
};

LocalizerConfig parse_localizer(const std::string& name);

// Stateful localization back-end. ODOM_DRIFT integrates the executed motion
// reported through observe_motion().
class Localizer {
public:
    Localizer(const LocalizerConfig& cfg, const Pose& initial_true_pose);

    Pose localize(const Pose& true_pose, const SimWorld& world, Rng& rng);
    // Executed segment: length traveled (m) and heading change (rad) applied
    // before the translation. Interventions report (0, +pi/4).
    void observe_motion(double segment_length, double heading_change, Rng& rng);

private:
    LocalizerConfig cfg_;
    Pose odom_pose_;
};

struct StepOutcome {
    int executed_steps = 0;
    double executed_length = 0.0;
    bool collision_predicted = false;
    // Executed (length, heading_change) pairs for odometry integration.
    std::vector<std::pair<double, double>> motion;
};

// Executes up to `execute_steps` waypoint deltas in the body frame the chunk
// was planned from, gating each micro-segment on the inflated full occupancy.
// Stops at the first predicted collision without moving into it. When
// `arrive_at` is set, execution also halts as soon as the true pose comes
// within `arrive_dist` of that point (simulator-side arrival detection).
StepOutcome step_agent(AgentState& state, const ActionSequence& actions,
                       const SimWorld& world, int execute_steps = 20,
                       const Vec2* arrive_at = nullptr, double arrive_dist = 0.0);

// Predicted-collision protocol event: 45 degree left turn in place.
void intervene(AgentState& state);

// Everything the metrics need from one episode.
struct EpisodeRecord {
    int world_id = 0;
    Pose start;
    Vec2 goal;
    std::vector<Vec2> trajectory;
    int interventions = 0;
    double final_true_dist = 0.0;
    double executed_length = 0.0;    // L
    double shortest_length = 0.0;    // L*
    bool reached = false;            // stopped by the believed criterion in budget
    int steps_used = 0;
};

// Action source abstraction so the expert oracle and the diffusion policy run
// through the same protocol loop.
using PolicyFn = std::function<ActionSequence(const SimWorld& world, AgentState& state,
                                              Rng& rng)>;

struct EpisodeConfig {
    double stop_dist = 0.25;        // believed-distance stop threshold (min tau_d)
    int execute_steps = 20;
    double budget_factor = 4.0;     // micro-step budget = factor * L* / step
    double step_m = 0.04;
    int min_budget_steps = 200;
    // Scan geometry pushed into the observation history; must match the
    // perception configuration of the policy under evaluation.
    int ray_count = 64;
    double fov = kPi / 2.0;
    double max_range = 5.0;
};

// Protocol loop: localize, act, execute with the collision gate, intervene on
// predicted collisions. Interventions never abort; all tau_c cells are scored
// from the single rollout.
EpisodeRecord run_episode(const SimWorld& world, int world_id, const Pose& start,
                          const Cell& goal, const PolicyFn& policy,
                          const LocalizerConfig& localizer, const EpisodeConfig& cfg,
                          Rng& rng);

// Diffusion-policy adapter: builds cues (planner + perception) from the
// believed pose and samples an action chunk.
PolicyFn make_diffusion_policy(const PolicyModel& model, Vec2 goal,
                               const std::vector<double>& pooled_plan);

// Expert oracle: follows the inflated-full-occupancy A* path from the true pose.
PolicyFn make_expert_policy(Vec2 goal, int horizon, double step_m = 0.04);

// Plan-only A* follower (the Loc-A* baseline): blind to furniture.
PolicyFn make_plan_astar_policy(Vec2 goal, int horizon, double step_m = 0.04);

// Sliding-window training samples along an expert demonstration: scan history
// from the true poses, goal in world meters, H agent-frame per-step deltas.
std::vector<TrainingSample> demo_to_samples(const SimWorld& w, int world_id,
                                            const ExpertDemo& demo, Vec2 goal,
                                            int horizon, int stride = 5,
                                            int ray_count = 64, double fov = kPi / 2.0,
                                            double max_range = 5.0);

// Plain-text dataset container (worlds' plan grids plus samples).
void save_dataset(const TrainingDataset& ds, const std::string& path);
TrainingDataset load_dataset(const std::string& path, int pool = 32);

// Episode manifest: `world_id start_x start_y start_r goal_x goal_y` lines
// (world meters).
struct ManifestEntry {
    int world_id = 0;
    Pose start;
    Vec2 goal;
};
void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> load_manifest(const std::string& path);

// Records CSV for the metrics module.
void save_records_csv(const std::vector<EpisodeRecord>& records, const std::string& path);
std::vector<EpisodeRecord> load_records_csv(const std::string& path);

}  // namespace glocnav
