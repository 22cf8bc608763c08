#include "glocnav/planner.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <limits>
#include <queue>

namespace glocnav {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488016887242097;

double octile(const Cell& a, const Cell& b) {
    int dx = std::abs(a.x - b.x);
    int dy = std::abs(a.y - b.y);
    int lo = std::min(dx, dy);
    int hi = std::max(dx, dy);
    return hi - lo + kSqrt2 * lo;
}

struct QueueEntry {
    double f;
    double h;
    int index;  // row-major cell index, final tie-break
    bool operator>(const QueueEntry& o) const {
        if (f != o.f) return f > o.f;
        if (h != o.h) return h > o.h;
        return index > o.index;
    }
};

}  // namespace

PixelPath astar_shortest_path(const Pose& start, const Cell& goal, const FloorPlan& plan) {
    if (start.frame != Frame::PIXEL)
        throw std::invalid_argument("astar_shortest_path expects a PIXEL start pose");
    Cell s{static_cast<int>(std::round(start.x)), static_cast<int>(std::round(start.y))};
    if (!plan.in_bounds(s) || !plan.in_bounds(goal))
        throw PlannerError("A*: endpoint outside plan bounds");
    if (plan.occupied(s) || plan.occupied(goal))
        throw PlannerError("A*: start or goal on an occupied cell");

    const int w = plan.width, h = plan.height;
    const int n = w * h;
    std::vector<double> g(n, std::numeric_limits<double>::infinity());
    std::vector<int> parent(n, -1);
    std::vector<char> closed(n, 0);
    auto idx = [w](const Cell& c) { return c.y * w + c.x; };

    std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> open;
    g[idx(s)] = 0.0;
    open.push({octile(s, goal), octile(s, goal), idx(s)});

    static const int dxs[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static const int dys[8] = {0, 0, 1, -1, 1, -1, 1, -1};

    int goal_idx = idx(goal);
    while (!open.empty()) {
        QueueEntry top = open.top();
        open.pop();
        int ci = top.index;
        if (closed[ci]) continue;
        closed[ci] = 1;
        if (ci == goal_idx) break;
        Cell c{ci % w, ci / w};
        for (int k = 0; k < 8; ++k) {
            Cell nb{c.x + dxs[k], c.y + dys[k]};
            if (!plan.in_bounds(nb) || plan.occupied(nb)) continue;
            bool diagonal = dxs[k] != 0 && dys[k] != 0;
            if (diagonal &&
                (plan.occupied(c.x + dxs[k], c.y) || plan.occupied(c.x, c.y + dys[k])))
                continue;  // no corner cutting
            double step = diagonal ? kSqrt2 : 1.0;
            int ni = idx(nb);
            double ng = g[ci] + step;
            if (ng < g[ni]) {
                g[ni] = ng;
                parent[ni] = ci;
                double hh = octile(nb, goal);
                open.push({ng + hh, hh, ni});
            }
        }
    }
    if (!closed[goal_idx]) throw PlannerError("A*: goal unreachable");

    PixelPath path;
    path.cost = g[goal_idx];
    for (int ci = goal_idx; ci != -1; ci = parent[ci])
        path.points.push_back({ci % w, ci / w});
    std::reverse(path.points.begin(), path.points.end());
    return path;
}

DirectionalCue build_directional_cue(const PixelPath& path, const FloorPlan& plan,
                                     const Pose& current, int horizon) {
    if (path.points.empty()) throw PlannerError("directional cue: empty path");
    if (current.frame != Frame::WORLD)
        throw std::invalid_argument("build_directional_cue expects a WORLD current pose");
    DirectionalCue cue;
    cue.points.reserve(horizon);
    int take = std::min<int>(horizon, static_cast<int>(path.points.size()));
    for (int i = 0; i < take; ++i) {
        Vec2 wpt = cell_to_world(path.points[i], plan);
        cue.points.push_back(world_to_agent(wpt, current));
    }
    // The path starts within one cell of the current position; pin the first
    // point to the exact agent origin so the cue contract holds.
    cue.points[0] = {0.0, 0.0};
    while (static_cast<int>(cue.points.size()) < horizon)
        cue.points.push_back(cue.points.back());
    return cue;
}

double perturbation_bound(int epoch, const PerturbationSchedule& sched) {
    if (epoch < 0) throw std::invalid_argument("perturbation_bound: negative epoch");
    if (epoch >= sched.total_epochs) return sched.alpha;
    return sched.alpha *
           std::sin((static_cast<double>(epoch) / sched.total_epochs) * (kPi / 2.0));
}

DirectionalCue perturb_path(const DirectionalCue& cue, double bound, Rng& rng) {
    if (bound < 0.0) throw std::invalid_argument("perturb_path: negative bound");
    DirectionalCue out;
    out.points.reserve(cue.points.size());
    for (const Vec2& p : cue.points) {
        if (bound == 0.0) {
            out.points.push_back(p);
        } else {
            out.points.push_back({p.x + rng.uniform(0.0, bound), p.y + rng.uniform(0.0, bound)});
        }
    }
    return out;
}

Pose perturb_pose(const Pose& p, Rng& rng, double pos_std, double heading_std) {
    if (p.frame != Frame::WORLD)
        throw std::invalid_argument("perturb_pose expects a WORLD pose");
    return Pose(p.x + rng.normal(0.0, pos_std), p.y + rng.normal(0.0, pos_std),
                p.heading + rng.normal(0.0, heading_std), Frame::WORLD);
}

std::optional<Cell> snap_to_free(const Cell& c, const FloorPlan& plan) {
    Cell start{std::clamp(c.x, 0, plan.width - 1), std::clamp(c.y, 0, plan.height - 1)};
    if (!plan.occupied(start)) return start;
    std::vector<char> seen(plan.cell_count(), 0);
    std::deque<Cell> q{start};
    seen[start.y * plan.width + start.x] = 1;
    static const int dxs[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static const int dys[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    while (!q.empty()) {
        Cell cur = q.front();
        q.pop_front();
        if (!plan.occupied(cur)) return cur;
        for (int k = 0; k < 8; ++k) {
            Cell nb{cur.x + dxs[k], cur.y + dys[k]};
            if (!plan.in_bounds(nb)) continue;
            char& mark = seen[nb.y * plan.width + nb.x];
            if (!mark) {
                mark = 1;
                q.push_back(nb);
            }
        }
    }
    return std::nullopt;
}

void save_points_csv(const std::vector<Vec2>& pts, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path);
    char buf[64];
    for (const Vec2& p : pts) {
        std::snprintf(buf, sizeof buf, "%.9f,%.9f\n", p.x, p.y);
        f << buf;
    }
}

}  // namespace glocnav
