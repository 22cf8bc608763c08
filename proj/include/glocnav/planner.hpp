#pragma once

#include <optional>
#include <vector>

#include "glocnav/geometry.hpp"
#include "glocnav/rng.hpp"

namespace glocnav {

class PlannerError : public std::runtime_error {
public:
    explicit PlannerError(const std::string& what) : std::runtime_error(what) {}
};

// Ordered 8-connected cell path from the rasterized current position to the goal.
struct PixelPath {
    std::vector<Cell> points;
    double cost = 0.0;  // 1 per axial step, sqrt(2) per diagonal
};

// Agent-frame truncation of the shortest path: exactly `horizon` points in
// meters, first point (0,0), padded by repeating the final point.
struct DirectionalCue {
    std::vector<Vec2> points;
};

inline constexpr int kDefaultCueHorizon = 32;

// Training-time perturbation bound growing sinusoidally over epochs:
// B_i = alpha * sin((i/N) * pi/2).
struct PerturbationSchedule {
    double alpha = 0.1;   // meters
    int total_epochs = 20;
};

// Minimum-cost 8-connected path, octile heuristic, deterministic tie-breaking
// (lower f, then lower h, then row-major cell index). Diagonal steps require
// both adjacent axial cells to be free (no corner cutting).
PixelPath astar_shortest_path(const Pose& start, const Cell& goal, const FloorPlan& plan);

// Pixel path -> world -> agent frame (r0 = heading of
// `current`), truncated/padded to `horizon` points.
DirectionalCue build_directional_cue(const PixelPath& path, const FloorPlan& plan,
                                     const Pose& current, int horizon = kDefaultCueHorizon);

double perturbation_bound(int epoch, const PerturbationSchedule& sched);

// Adds an independent U[0, bound) draw to each coordinate of each point.
DirectionalCue perturb_path(const DirectionalCue& cue, double bound, Rng& rng);

// Gaussian position noise (std 0.1 m per axis) and heading noise (std pi/36).
Pose perturb_pose(const Pose& p, Rng& rng, double pos_std = 0.1,
                  double heading_std = kPi / 36.0);

// Nearest free cell by BFS from the rasterized position; needed when a noisy
// believed pose lands inside an obstacle. Empty when no free cell exists.
std::optional<Cell> snap_to_free(const Cell& c, const FloorPlan& plan);

// Serialize cue/path points to CSV (x_m,y_m per row) for plotting.
void save_points_csv(const std::vector<Vec2>& pts, const std::string& path);

}  // namespace glocnav
