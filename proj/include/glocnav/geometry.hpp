#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace glocnav {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Normalize an angle into (-pi, pi].
inline double normalize_angle(double a) {
    a = std::fmod(a, 2.0 * kPi);
    if (a <= -kPi) a += 2.0 * kPi;
    if (a > kPi) a -= 2.0 * kPi;
    return a;
}

enum class Frame { PIXEL, WORLD, AGENT };

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline double dist(Vec2 a, Vec2 b) { return norm(a - b); }

// Position + heading tagged with the frame it lives in. Heading is normalized
// to (-pi, pi] on construction; conversions return new values.
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double heading = 0.0;
    Frame frame = Frame::WORLD;

    Pose() = default;
    Pose(double px, double py, double r, Frame f)
        : x(px), y(py), heading(normalize_angle(r)), frame(f) {}

    Vec2 position() const { return {x, y}; }
};

// Integer grid cell, row-major indexed as y * width + x.
struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell&) const = default;
};

class BoundsError : public std::runtime_error {
public:
    explicit BoundsError(const std::string& what) : std::runtime_error(what) {}
};

// Occupancy raster plus the metric calibration (mu, delta) of the
// pixel <-> world mapping: world = mu * pixel + delta. Single source of truth
// for all frames. Immutable after construction.
struct FloorPlan {
    int width = 0;
    int height = 0;
    double resolution_mu = 1.0;       // meters per pixel
    double offset_x = 0.0;            // meters
    double offset_y = 0.0;            // meters
    std::vector<std::uint8_t> grid;   // 1 = obstacle, row-major

    FloorPlan() = default;
    FloorPlan(int w, int h, double mu, double dx = 0.0, double dy = 0.0)
        : width(w), height(h), resolution_mu(mu), offset_x(dx), offset_y(dy),
          grid(static_cast<std::size_t>(w) * h, 0) {
        if (mu <= 0.0) throw std::invalid_argument("resolution_mu must be > 0");
        if (w <= 0 || h <= 0) throw std::invalid_argument("plan dimensions must be positive");
    }

    bool in_bounds(int cx, int cy) const {
        return cx >= 0 && cy >= 0 && cx < width && cy < height;
    }
    bool in_bounds(const Cell& c) const { return in_bounds(c.x, c.y); }

    bool occupied(int cx, int cy) const {
        return grid[static_cast<std::size_t>(cy) * width + cx] != 0;
    }
    bool occupied(const Cell& c) const { return occupied(c.x, c.y); }

    void set_occupied(int cx, int cy, bool v) {
        grid[static_cast<std::size_t>(cy) * width + cx] = v ? 1 : 0;
    }

    std::size_t cell_count() const { return grid.size(); }
};

// world = mu * pixel + delta, heading unchanged.
Pose px_to_world(const Pose& p, const FloorPlan& plan);

// Exact inverse of px_to_world (pre-rasterization). With rasterize=true the
// result is rounded to the nearest cell and bounds-checked for grid lookups.
Pose world_to_px(const Pose& p, const FloorPlan& plan, bool rasterize = false);

// Nearest grid cell for a world position; throws BoundsError when outside.
Cell world_to_cell(Vec2 world_pos, const FloorPlan& plan);
Vec2 cell_to_world(const Cell& c, const FloorPlan& plan);

// q_a = (q_w - q_w0) * R(r0). Origin maps to (0,0), one meter ahead of
// the heading maps to (1, 0), leftward to +Y.
Vec2 world_to_agent(Vec2 point, const Pose& origin);
std::vector<Vec2> world_to_agent(const std::vector<Vec2>& points, const Pose& origin);

// Inverse of world_to_agent.
Vec2 agent_to_world(Vec2 point, const Pose& origin);

// True iff every grid cell intersected by the segment a->b (supercover
// traversal; cell (i,j) covers [i-0.5,i+0.5) x [j-0.5,j+0.5)) is free.
// Coordinates are continuous pixel coordinates.
bool segment_traversable(const Pose& a, const Pose& b, const FloorPlan& plan);
bool segment_traversable_px(Vec2 a, Vec2 b, const FloorPlan& plan);

// All cells intersected by the segment, in traversal order.
std::vector<Cell> supercover_cells(Vec2 a, Vec2 b, const FloorPlan& plan);

// Disk inflation of the occupancy by `radius_cells`; used for agent-body
// collision checks.
FloorPlan inflate(const FloorPlan& plan, int radius_cells);

// 8-bit grayscale PGM (P5) + sidecar `key = value` metadata file
// (resolution_m_per_px, offset_x_m, offset_y_m). Luminance < 128 => occupied.
void save_plan(const FloorPlan& plan, const std::string& image_path,
               const std::string& meta_path);
FloorPlan load_plan(const std::string& image_path, const std::string& meta_path);

// Raw PGM helpers (also used for furniture overlays and plots).
void save_pgm(const std::vector<std::uint8_t>& gray, int w, int h, const std::string& path);
std::vector<std::uint8_t> load_pgm(const std::string& path, int& w, int& h);

}  // namespace glocnav
