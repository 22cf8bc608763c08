#pragma once

#include <limits>

#include "glocnav/simkit.hpp"

namespace glocnav {

// One (method, tau_d, tau_c) cell of the experiment matrix.
struct MetricsCell {
    std::string method;
    double tau_d = 0.0;
    double tau_c = 0.0;   // +inf = unlimited interventions
    int episodes = 0;
    double sr = 0.0;      // percent
    double spl = 0.0;     // percent
    double noc = 0.0;     // mean interventions, capped at finite tau_c
};

struct MetricsTable {
    std::vector<MetricsCell> cells;
};

// Success: stopped at the believed goal, true distance <= tau_d, interventions
// <= tau_c. tau_c may be +inf.
bool episode_success(const EpisodeRecord& r, double tau_d, double tau_c);

double compute_sr(const std::vector<EpisodeRecord>& records, double tau_d, double tau_c);
// Standard success-weighted-by-path-length: mean of S_i * L*_i / max(L_i, L*_i),
// in percent. Degenerate start=goal episodes contribute S_i.
double compute_spl(const std::vector<EpisodeRecord>& records, double tau_d, double tau_c);
// Mean interventions with each episode capped at tau_c when finite.
double compute_noc(const std::vector<EpisodeRecord>& records, double tau_c);

// Policy construction per (world, goal); lets the evaluator share one protocol
// loop across the diffusion model and the oracle baselines.
using PolicyFactory = std::function<PolicyFn(const SimWorld& world, int world_id,
                                             Vec2 goal)>;

// Episode fan-out over the manifest: per-episode rng substreams, results in
// manifest order regardless of worker count.
std::vector<EpisodeRecord> evaluate_policy(const std::vector<SimWorld>& worlds,
                                           const std::vector<ManifestEntry>& manifest,
                                           const PolicyFactory& factory,
                                           const LocalizerConfig& localizer,
                                           const EpisodeConfig& cfg, Rng& root);

struct MethodSpec {
    std::string name;
    // Checkpoint path, or the builtins "expert" / "plan-astar".
    std::string checkpoint;
};

struct ExperimentConfig {
    std::vector<MethodSpec> methods;
    std::string worlds_dir;
    std::string manifest_path;
    LocalizerConfig localizer;
    std::vector<double> tau_d = {0.25, 0.30, 0.35};
    std::vector<double> tau_c = {10, 30, 50,
                                 std::numeric_limits<double>::infinity()};
    std::uint64_t seed = 0;
    EpisodeConfig episode;
};

struct ExperimentResult {
    MetricsTable table;
    // Records per method, manifest order.
    std::vector<std::pair<std::string, std::vector<EpisodeRecord>>> records;
};

// Shared manifest and seeds across methods; one rollout per episode scores
// every (tau_d, tau_c) cell. Missing checkpoints are reported before any
// episode runs.
ExperimentResult run_experiment_matrix(const ExperimentConfig& cfg);

MetricsTable make_table(const std::string& method,
                        const std::vector<EpisodeRecord>& records,
                        const std::vector<double>& tau_d,
                        const std::vector<double>& tau_c);

// Deterministic fixed-precision emission; two runs with equal inputs produce
// byte-identical files.
void save_table_csv(const MetricsTable& t, const std::string& path);
std::string table_to_csv(const MetricsTable& t);
std::string table_to_markdown(const MetricsTable& t);

// Trajectory over the world raster: walls black, furniture gray, executed
// path red, start blue, goal green. PPM (P6) output.
void plot_episode(const EpisodeRecord& rec, const SimWorld& world,
                  const std::string& path);

}  // namespace glocnav
