#include "glocnav/simkit.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace glocnav {

namespace fs = std::filesystem;

void SimWorld::rebuild_composites() {
    if (furniture.width != plan.width || furniture.height != plan.height)
        throw SimError("furniture overlay size mismatch");
    full = plan;
    for (std::size_t i = 0; i < full.grid.size(); ++i)
        if (furniture.grid[i]) full.grid[i] = 1;
    full_inflated = inflate(full, 1);
}

namespace {

// Size (in cells) of the largest connected free component, 4-connected.
int largest_free_component(const FloorPlan& g, std::vector<std::uint8_t>* mask_out = nullptr) {
    std::vector<std::uint8_t> seen(g.grid.size(), 0);
    std::vector<std::uint8_t> best_mask;
    int best = 0;
    std::deque<Cell> q;
    for (int sy = 0; sy < g.height; ++sy) {
        for (int sx = 0; sx < g.width; ++sx) {
            std::size_t si = static_cast<std::size_t>(sy) * g.width + sx;
            if (seen[si] || g.grid[si]) continue;
            std::vector<std::uint8_t> mask(g.grid.size(), 0);
            int count = 0;
            seen[si] = 1;
            q.push_back({sx, sy});
            while (!q.empty()) {
                Cell c = q.front();
                q.pop_front();
                mask[static_cast<std::size_t>(c.y) * g.width + c.x] = 1;
                ++count;
                const int dx[4] = {1, -1, 0, 0};
                const int dy[4] = {0, 0, 1, -1};
                for (int d = 0; d < 4; ++d) {
                    int nx = c.x + dx[d], ny = c.y + dy[d];
                    if (!g.in_bounds(nx, ny)) continue;
                    std::size_t ni = static_cast<std::size_t>(ny) * g.width + nx;
                    if (seen[ni] || g.grid[ni]) continue;
                    seen[ni] = 1;
                    q.push_back({nx, ny});
                }
            }
            if (count > best) {
                best = count;
                if (mask_out) best_mask = std::move(mask);
            }
        }
    }
    if (mask_out) *mask_out = std::move(best_mask);
    return best;
}

int free_count(const FloorPlan& g) {
    int n = 0;
    for (auto v : g.grid)
        if (!v) ++n;
    return n;
}

void draw_border(FloorPlan& g) {
    for (int x = 0; x < g.width; ++x) {
        g.set_occupied(x, 0, true);
        g.set_occupied(x, g.height - 1, true);
    }
    for (int y = 0; y < g.height; ++y) {
        g.set_occupied(0, y, true);
        g.set_occupied(g.width - 1, y, true);
    }
}

// One interior wall across the whole plan with door gaps left open.
void draw_wall(FloorPlan& g, Rng& rng) {
    bool vertical = rng.uniform() < 0.5;
    int span = vertical ? g.height : g.width;
    int pos = 3 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(
                      std::max(1, (vertical ? g.width : g.height) - 6))));
    // Longer walls get more doorways so large plans stay traversable.
    int gaps = 1 + span / 48 + static_cast<int>(rng.next_below(2));
    std::vector<std::pair<int, int>> openings;
    for (int gi = 0; gi < gaps; ++gi) {
        // Door openings sized like real doorways (~0.3-0.5 m at 0.04 m/px),
        // wide enough to pass after body inflation.
        int gw = 8 + static_cast<int>(rng.next_below(5));
        int g0 = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(
                         std::max(1, span - gw - 2))));
        openings.emplace_back(g0, g0 + gw);
    }
    for (int t = 1; t < span - 1; ++t) {
        bool open = false;
        for (auto [a, b] : openings)
            if (t >= a && t < b) open = true;
        if (open) continue;
        if (vertical)
            g.set_occupied(pos, t, true);
        else
            g.set_occupied(t, pos, true);
    }
}

}  // namespace

SimWorld generate_world(std::uint64_t seed, int size_px, double furniture_density,
                        double mu) {
    if (size_px < 16) throw SimError("world size must be at least 16 px");
    Rng rng = make_root_rng(seed);
    SimWorld w;
    int n_walls = std::max(1, size_px / 24);
    for (int attempt = 0; attempt < 32; ++attempt) {
        w.plan = FloorPlan(size_px, size_px, mu);
        draw_border(w.plan);
        // Back off on wall count if repeated layouts fragment the free space.
        int walls = std::max(1, n_walls - attempt / 8);
        for (int i = 0; i < walls; ++i) draw_wall(w.plan, rng);
        FloorPlan infl = inflate(w.plan, 1);
        int fc = free_count(infl);
        if (fc > 0 && largest_free_component(infl) >= static_cast<int>(0.85 * fc)) break;
        if (attempt == 31) throw SimError("world generation failed to stay connected");
    }

    w.furniture = FloorPlan(size_px, size_px, mu);
    int plan_free = free_count(w.plan);
    int target = static_cast<int>(furniture_density * plan_free);
    int placed = 0;
    int tries = 8 * target + 64;
    FloorPlan full = w.plan;
    while (placed < target && tries-- > 0) {
        int rw = 2 + static_cast<int>(rng.next_below(3));
        int rh = 2 + static_cast<int>(rng.next_below(3));
        int x0 = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(
                         std::max(1, size_px - rw - 2))));
        int y0 = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(
                         std::max(1, size_px - rh - 2))));
        bool clear = true;
        for (int y = y0 - 1; y <= y0 + rh && clear; ++y)
            for (int x = x0 - 1; x <= x0 + rw && clear; ++x)
                if (!full.in_bounds(x, y) || full.occupied(x, y)) clear = false;
        if (!clear) continue;
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) full.set_occupied(x, y, true);
        FloorPlan infl = inflate(full, 1);
        int fc = free_count(infl);
        if (fc == 0 || largest_free_component(infl) < static_cast<int>(0.85 * fc)) {
            for (int y = y0; y < y0 + rh; ++y)
                for (int x = x0; x < x0 + rw; ++x) full.set_occupied(x, y, false);
            continue;
        }
        for (int y = y0; y < y0 + rh; ++y)
            for (int x = x0; x < x0 + rw; ++x) w.furniture.set_occupied(x, y, true);
        placed += rw * rh;
    }
    w.rebuild_composites();
    return w;
}

void save_world(const SimWorld& w, const std::string& dir) {
    fs::create_directories(dir);
    save_plan(w.plan, dir + "/plan.pgm", dir + "/plan.meta");
    std::vector<std::uint8_t> gray(w.furniture.grid.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = w.furniture.grid[i] ? 0 : 255;
    save_pgm(gray, w.furniture.width, w.furniture.height, dir + "/furniture.pgm");
}

SimWorld load_world(const std::string& dir) {
    SimWorld w;
    w.plan = load_plan(dir + "/plan.pgm", dir + "/plan.meta");
    int fw = 0, fh = 0;
    std::vector<std::uint8_t> gray = load_pgm(dir + "/furniture.pgm", fw, fh);
    w.furniture = FloorPlan(fw, fh, w.plan.resolution_mu, w.plan.offset_x, w.plan.offset_y);
    for (std::size_t i = 0; i < gray.size(); ++i)
        w.furniture.grid[i] = gray[i] < 128 ? 1 : 0;
    w.rebuild_composites();
    return w;
}

std::optional<Cell> sample_free_cell(const SimWorld& w, Rng& rng,
                                     const Cell* same_component_as) {
    const FloorPlan& g = w.full_inflated;
    std::vector<std::uint8_t> allowed;
    if (same_component_as) {
        if (!g.in_bounds(*same_component_as) || g.occupied(*same_component_as))
            return std::nullopt;
        // Flood fill from the anchor.
        allowed.assign(g.grid.size(), 0);
        std::deque<Cell> q{*same_component_as};
        allowed[static_cast<std::size_t>(same_component_as->y) * g.width +
                same_component_as->x] = 1;
        while (!q.empty()) {
            Cell c = q.front();
            q.pop_front();
            const int dx[4] = {1, -1, 0, 0};
            const int dy[4] = {0, 0, 1, -1};
            for (int d = 0; d < 4; ++d) {
                int nx = c.x + dx[d], ny = c.y + dy[d];
                if (!g.in_bounds(nx, ny)) continue;
                std::size_t ni = static_cast<std::size_t>(ny) * g.width + nx;
                if (allowed[ni] || g.grid[ni]) continue;
                allowed[ni] = 1;
                q.push_back({nx, ny});
            }
        }
    }
    std::vector<Cell> candidates;
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * g.width + x;
            if (g.grid[i]) continue;
            if (same_component_as && !allowed[i]) continue;
            candidates.push_back({x, y});
        }
    if (candidates.empty()) return std::nullopt;
    return candidates[rng.next_below(candidates.size())];
}

namespace {

// Arc-length resample of a world-frame polyline at `step_m` spacing.
std::vector<Vec2> resample_polyline(const std::vector<Vec2>& pts, double step_m) {
    std::vector<Vec2> out;
    if (pts.empty()) return out;
    out.push_back(pts.front());
    double carried = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        Vec2 a = pts[i], b = pts[i + 1];
        double seg = dist(a, b);
        if (seg <= 1e-12) continue;
        double t = step_m - carried;
        while (t <= seg) {
            out.push_back(a + (t / seg) * (b - a));
            t += step_m;
        }
        carried = seg - (t - step_m);
    }
    if (dist(out.back(), pts.back()) > 1e-9) out.push_back(pts.back());
    return out;
}

double polyline_length(const std::vector<Vec2>& pts) {
    double L = 0.0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) L += dist(pts[i], pts[i + 1]);
    return L;
}

}  // namespace

std::optional<ExpertDemo> expert_demonstrate(const SimWorld& w, const Cell& start,
                                             const Cell& goal, double step_m) {
    const FloorPlan& g = w.full_inflated;
    PixelPath path;
    try {
        Pose sp(start.x, start.y, 0.0, Frame::PIXEL);
        path = astar_shortest_path(sp, goal, g);
    } catch (const PlannerError&) {
        return std::nullopt;
    }
    std::vector<Vec2> world_pts;
    world_pts.reserve(path.points.size());
    for (const Cell& c : path.points) world_pts.push_back(cell_to_world(c, g));
    std::vector<Vec2> samples = resample_polyline(world_pts, step_m);
    ExpertDemo demo;
    demo.length = polyline_length(world_pts);
    demo.trajectory.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double heading = 0.0;
        if (i + 1 < samples.size()) {
            Vec2 d = samples[i + 1] - samples[i];
            heading = std::atan2(d.y, d.x);
        } else if (i > 0) {
            heading = demo.trajectory.back().heading;
        }
        demo.trajectory.emplace_back(samples[i].x, samples[i].y, heading, Frame::WORLD);
    }
    return demo;
}

LocalizerConfig parse_localizer(const std::string& name) {
    if (name == "gt") return LocalizerConfig::gt();
    if (name == "noisy-gt-low") return LocalizerConfig::noisy_gt(0.0, 0.5);
    if (name == "noisy-gt-high") return LocalizerConfig::noisy_gt(1.0, 2.0);
    if (name == "odom-drift") return LocalizerConfig::odom_drift();
    if (name == "jump-outlier") return LocalizerConfig::jump_outlier();
    throw SimError("unknown localizer: " + name +
                   " (expected gt|noisy-gt-low|noisy-gt-high|odom-drift|jump-outlier)");
}

Localizer::Localizer(const LocalizerConfig& cfg, const Pose& initial_true_pose)
    : cfg_(cfg), odom_pose_(initial_true_pose) {}

void Localizer::observe_motion(double segment_length, double heading_change, Rng& rng) {
    if (cfg_.kind != LocalizerKind::ODOM_DRIFT) return;
    double root = std::sqrt(std::max(0.0, segment_length));
    double h = normalize_angle(odom_pose_.heading + heading_change +
                               rng.normal(0.0, cfg_.drift_rot_std * root));
    double len = cfg_.scale * segment_length;
    double nx = rng.normal(0.0, cfg_.drift_trans_std * root);
    double ny = rng.normal(0.0, cfg_.drift_trans_std * root);
    odom_pose_ = Pose(odom_pose_.x + len * std::cos(h) + nx,
                      odom_pose_.y + len * std::sin(h) + ny, h, Frame::WORLD);
}

Pose Localizer::localize(const Pose& true_pose, const SimWorld& world, Rng& rng) {
    switch (cfg_.kind) {
        case LocalizerKind::GT:
            return true_pose;
        case LocalizerKind::NOISY_GT: {
            double mag = rng.uniform(cfg_.noise_lo, cfg_.noise_hi);
            double ang = rng.uniform(0.0, 2.0 * kPi);
            return Pose(true_pose.x + mag * std::cos(ang),
                        true_pose.y + mag * std::sin(ang), true_pose.heading,
                        Frame::WORLD);
        }
        case LocalizerKind::ODOM_DRIFT:
            return odom_pose_;
        case LocalizerKind::JUMP_OUTLIER: {
            if (rng.uniform() < cfg_.jump_prob) {
                // Teleport uniformly over the free disk around the true pose.
                for (int tries = 0; tries < 256; ++tries) {
                    double r = cfg_.jump_radius * std::sqrt(rng.uniform());
                    double a = rng.uniform(0.0, 2.0 * kPi);
                    Vec2 p{true_pose.x + r * std::cos(a), true_pose.y + r * std::sin(a)};
                    try {
                        Cell c = world_to_cell(p, world.full_inflated);
                        if (!world.full_inflated.occupied(c))
                            return Pose(p.x, p.y, true_pose.heading, Frame::WORLD);
                    } catch (const BoundsError&) {
                    }
                }
                return true_pose;
            }
            return Pose(true_pose.x + rng.normal(0.0, cfg_.base_noise_std),
                        true_pose.y + rng.normal(0.0, cfg_.base_noise_std),
                        true_pose.heading, Frame::WORLD);
        }
    }
    return true_pose;
}

StepOutcome step_agent(AgentState& state, const ActionSequence& actions,
                       const SimWorld& world, int execute_steps,
                       const Vec2* arrive_at, double arrive_dist) {
    StepOutcome out;
    const FloorPlan& g = world.full_inflated;
    int n = std::min<int>(execute_steps, static_cast<int>(actions.waypoints.size()));
    // The whole chunk is expressed in the body frame the policy planned from;
    // anchor it once so heading updates during execution don't rotate the rest
    // of the chunk.
    const Pose anchor = state.true_pose;
    Vec2 cum{0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        cum = cum + actions.waypoints[i];
        Vec2 target = agent_to_world(cum, anchor);
        Pose a = world_to_px(state.true_pose, g);
        Pose b;
        try {
            b = world_to_px(Pose(target.x, target.y, 0.0, Frame::WORLD), g);
        } catch (const std::exception&) {
            out.collision_predicted = true;
            break;
        }
        bool ok;
        try {
            ok = segment_traversable(a, b, g);
        } catch (const BoundsError&) {
            ok = false;
        }
        if (!ok) {
            out.collision_predicted = true;
            break;
        }
        double len = dist(state.true_pose.position(), target);
        double old_heading = state.true_pose.heading;
        double heading = len > 1e-9
                             ? std::atan2(target.y - state.true_pose.y,
                                          target.x - state.true_pose.x)
                             : old_heading;
        state.true_pose = Pose(target.x, target.y, heading, Frame::WORLD);
        state.path_length += len;
        out.executed_length += len;
        ++out.executed_steps;
        out.motion.emplace_back(len, normalize_angle(heading - old_heading));
        if (arrive_at && dist(state.true_pose.position(), *arrive_at) <= arrive_dist)
            break;
    }
    return out;
}

void intervene(AgentState& state) {
    state.true_pose = Pose(state.true_pose.x, state.true_pose.y,
                           state.true_pose.heading + kPi / 4.0, Frame::WORLD);
    ++state.interventions;
}

EpisodeRecord run_episode(const SimWorld& world, int world_id, const Pose& start,
                          const Cell& goal, const PolicyFn& policy,
                          const LocalizerConfig& localizer, const EpisodeConfig& cfg,
                          Rng& rng) {
    EpisodeRecord rec;
    rec.world_id = world_id;
    rec.start = start;
    rec.goal = cell_to_world(goal, world.plan);

    Cell start_cell = world_to_cell(start.position(), world.plan);
    auto demo = expert_demonstrate(world, start_cell, goal, cfg.step_m);
    if (!demo) throw SimError("run_episode: goal unreachable from start");
    rec.shortest_length = demo->length;

    int budget = std::max(cfg.min_budget_steps,
                          static_cast<int>(std::ceil(cfg.budget_factor * demo->length /
                                                     cfg.step_m)));

    AgentState st;
    st.true_pose = start;
    st.believed_pose = start;
    st.history = ObservationHistory::bootstrap(
        raycast_depth(start, world.full, cfg.ray_count, cfg.fov, cfg.max_range));
    Localizer loc(localizer, start);
    rec.trajectory.push_back(start.position());

    int steps = 0;
    while (steps < budget) {
        st.believed_pose = loc.localize(st.true_pose, world, rng);
        if (dist(st.believed_pose.position(), rec.goal) <= cfg.stop_dist ||
            dist(st.true_pose.position(), rec.goal) <= cfg.stop_dist) {
            rec.reached = true;
            break;
        }
        ActionSequence actions = policy(world, st, rng);
        StepOutcome out =
            step_agent(st, actions, world, cfg.execute_steps, &rec.goal, cfg.stop_dist);
        for (auto [len, dh] : out.motion) loc.observe_motion(len, dh, rng);
        if (out.collision_predicted) {
            intervene(st);
            loc.observe_motion(0.0, kPi / 4.0, rng);
        }
        steps += std::max(1, out.executed_steps);
        rec.trajectory.push_back(st.true_pose.position());
        st.history.push(raycast_depth(st.true_pose, world.full, cfg.ray_count, cfg.fov,
                                      cfg.max_range));
    }
    rec.interventions = st.interventions;
    rec.executed_length = st.path_length;
    rec.final_true_dist = dist(st.true_pose.position(), rec.goal);
    rec.steps_used = steps;
    return rec;
}

PolicyFn make_diffusion_policy(const PolicyModel& model, Vec2 goal,
                               const std::vector<double>& pooled_plan) {
    const PolicyModel* m = &model;
    return [m, goal, pooled_plan](const SimWorld& world, AgentState& st,
                                  Rng& rng) -> ActionSequence {
        tc::NoGradGuard guard;
        std::vector<Vec2> cue = directional_cue_points(world.plan, st.believed_pose, goal,
                                                       m->dcfg.cue_horizon, m->dcfg.variant);
        LocalCue lc = m->perception->compute_cue(st.history, pooled_plan, st.believed_pose);
        tc::Tensor cl = tc::Tensor::from({static_cast<int>(lc.vector.size())}, lc.vector);
        return sample_actions(*m, cl, cue, rng);
    };
}

namespace {

// Follow a world-frame path from `pose`: resample and convert to agent-frame
// per-step deltas, zero-padded to the horizon.
ActionSequence path_to_actions(const std::vector<Vec2>& world_pts, const Pose& pose,
                               int horizon, double step_m) {
    std::vector<Vec2> samples = resample_polyline(world_pts, step_m);
    ActionSequence a;
    Vec2 prev{0.0, 0.0};
    for (int i = 0; i < horizon; ++i) {
        Vec2 p = prev;
        if (static_cast<std::size_t>(i + 1) < samples.size())
            p = world_to_agent(samples[i + 1], pose);
        a.waypoints.push_back(p - prev);
        prev = p;
    }
    return a;
}

ActionSequence grid_astar_actions(const FloorPlan& grid, const Pose& pose, Vec2 goal,
                                  int horizon, double step_m) {
    try {
        Pose px = world_to_px(pose, grid);
        Cell sc{static_cast<int>(std::lround(px.x)), static_cast<int>(std::lround(px.y))};
        auto s = snap_to_free(sc, grid);
        auto g = snap_to_free(world_to_cell(goal, grid), grid);
        if (!s || !g) return ActionSequence{std::vector<Vec2>(horizon, Vec2{})};
        PixelPath path = astar_shortest_path(Pose(s->x, s->y, px.heading, Frame::PIXEL),
                                             *g, grid);
        std::vector<Vec2> world_pts;
        world_pts.reserve(path.points.size() + 1);
        world_pts.push_back(pose.position());
        for (const Cell& c : path.points) world_pts.push_back(cell_to_world(c, grid));
        return path_to_actions(world_pts, pose, horizon, step_m);
    } catch (const std::exception&) {
        return ActionSequence{std::vector<Vec2>(horizon, Vec2{})};
    }
}

}  // namespace

PolicyFn make_expert_policy(Vec2 goal, int horizon, double step_m) {
    return [goal, horizon, step_m](const SimWorld& world, AgentState& st,
                                   Rng&) -> ActionSequence {
        return grid_astar_actions(world.full_inflated, st.true_pose, goal, horizon, step_m);
    };
}

PolicyFn make_plan_astar_policy(Vec2 goal, int horizon, double step_m) {
    return [goal, horizon, step_m](const SimWorld& world, AgentState& st,
                                   Rng&) -> ActionSequence {
        FloorPlan infl = inflate(world.plan, 1);
        return grid_astar_actions(infl, st.believed_pose, goal, horizon, step_m);
    };
}

std::vector<TrainingSample> demo_to_samples(const SimWorld& w, int world_id,
                                            const ExpertDemo& demo, Vec2 goal,
                                            int horizon, int stride, int ray_count,
                                            double fov, double max_range) {
    std::vector<TrainingSample> out;
    const auto& traj = demo.trajectory;
    if (traj.empty()) return out;
    // Scans along the whole trajectory, computed once.
    std::vector<DepthScan> scans;
    scans.reserve(traj.size());
    for (const Pose& p : traj)
        scans.push_back(raycast_depth(p, w.full, ray_count, fov, max_range));
    for (std::size_t i = 0; i < traj.size(); i += static_cast<std::size_t>(stride)) {
        TrainingSample s;
        s.world = world_id;
        s.pose = traj[i];
        s.goal = goal;
        ObservationHistory h = ObservationHistory::bootstrap(scans[i >= 4 ? i - 4 : 0]);
        for (int back = kHistoryLength - 1; back >= 0; --back) {
            std::size_t j = i >= static_cast<std::size_t>(back) ? i - back : 0;
            h.push(scans[j]);
        }
        s.history = h;
        Vec2 prev{0.0, 0.0};
        for (int t = 1; t <= horizon; ++t) {
            std::size_t j = std::min(i + static_cast<std::size_t>(t), traj.size() - 1);
            Vec2 p = world_to_agent(traj[j].position(), traj[i]);
            s.expert_deltas.push_back(p - prev);
            prev = p;
        }
        out.push_back(std::move(s));
    }
    return out;
}

void save_dataset(const TrainingDataset& ds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw SimError("cannot write dataset: " + path);
    f.precision(17);
    f << "glocnav-dataset 1\n";
    f << "worlds " << ds.plans.size() << "\n";
    for (const FloorPlan& p : ds.plans) {
        f << "world " << p.width << " " << p.height << " " << p.resolution_mu << " "
          << p.offset_x << " " << p.offset_y << "\n";
        for (int y = 0; y < p.height; ++y) {
            for (int x = 0; x < p.width; ++x) f << (p.occupied(x, y) ? '1' : '0');
            f << "\n";
        }
    }
    f << "samples " << ds.samples.size() << "\n";
    for (const TrainingSample& s : ds.samples) {
        f << "sample " << s.world << " " << s.pose.x << " " << s.pose.y << " "
          << s.pose.heading << " " << s.goal.x << " " << s.goal.y << " "
          << s.history.scans.front().rays.size() << " " << s.expert_deltas.size() << " "
          << s.history.scans.front().fov << " " << s.history.scans.front().max_range
          << "\n";
        for (const DepthScan& scan : s.history.scans) {
            for (std::size_t r = 0; r < scan.rays.size(); ++r)
                f << (r ? " " : "") << scan.rays[r];
            f << "\n";
        }
        for (const Vec2& d : s.expert_deltas) f << d.x << " " << d.y << "\n";
    }
    if (!f) throw SimError("failed writing dataset: " + path);
}

TrainingDataset load_dataset(const std::string& path, int pool) {
    std::ifstream f(path);
    if (!f) throw SimError("cannot read dataset: " + path);
    std::string tag;
    int version = 0;
    f >> tag >> version;
    if (tag != "glocnav-dataset" || version != 1)
        throw SimError("unrecognized dataset header in " + path);
    TrainingDataset ds;
    std::size_t n_worlds = 0;
    f >> tag >> n_worlds;
    if (tag != "worlds") throw SimError("malformed dataset: " + path);
    for (std::size_t wi = 0; wi < n_worlds; ++wi) {
        int w = 0, h = 0;
        double mu = 0, ox = 0, oy = 0;
        f >> tag >> w >> h >> mu >> ox >> oy;
        if (tag != "world") throw SimError("malformed dataset: " + path);
        FloorPlan p(w, h, mu, ox, oy);
        for (int y = 0; y < h; ++y) {
            std::string row;
            f >> row;
            if (static_cast<int>(row.size()) != w)
                throw SimError("malformed dataset grid row: " + path);
            for (int x = 0; x < w; ++x) p.set_occupied(x, y, row[x] == '1');
        }
        ds.pooled.push_back(downsample_occupancy(p, pool));
        ds.plans.push_back(std::move(p));
    }
    std::size_t n_samples = 0;
    f >> tag >> n_samples;
    if (tag != "samples") throw SimError("malformed dataset: " + path);
    for (std::size_t si = 0; si < n_samples; ++si) {
        TrainingSample s;
        std::size_t rays = 0, horizon = 0;
        double x, y, r, gx, gy, fov, max_range;
        f >> tag >> s.world >> x >> y >> r >> gx >> gy >> rays >> horizon >> fov >>
            max_range;
        if (tag != "sample") throw SimError("malformed dataset sample: " + path);
        s.pose = Pose(x, y, r, Frame::WORLD);
        s.goal = {gx, gy};
        for (int k = 0; k < kHistoryLength; ++k) {
            DepthScan scan;
            scan.fov = fov;
            scan.max_range = max_range;
            scan.rays.resize(rays);
            for (auto& v : scan.rays) f >> v;
            s.history.scans.push_back(scan);
        }
        s.expert_deltas.resize(horizon);
        for (auto& d : s.expert_deltas) f >> d.x >> d.y;
        if (!f) throw SimError("truncated dataset: " + path);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw SimError("cannot write manifest: " + path);
    f.precision(17);
    for (const ManifestEntry& e : entries)
        f << e.world_id << " " << e.start.x << " " << e.start.y << " " << e.start.heading
          << " " << e.goal.x << " " << e.goal.y << "\n";
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SimError("cannot read manifest: " + path);
    std::vector<ManifestEntry> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        ManifestEntry e;
        double x, y, r;
        if (!(ss >> e.world_id >> x >> y >> r >> e.goal.x >> e.goal.y))
            throw SimError("malformed manifest line: " + line);
        e.start = Pose(x, y, r, Frame::WORLD);
        out.push_back(e);
    }
    return out;
}

void save_records_csv(const std::vector<EpisodeRecord>& records, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw SimError("cannot write records: " + path);
    f << "world_id,start_x,start_y,start_r,goal_x,goal_y,interventions,"
         "final_true_dist,executed_length,shortest_length,reached,steps_used,"
         "trajectory\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        return std::string(buf);
    };
    for (const EpisodeRecord& r : records) {
        f << r.world_id << "," << num(r.start.x) << "," << num(r.start.y) << ","
          << num(r.start.heading) << "," << num(r.goal.x) << "," << num(r.goal.y) << ","
          << r.interventions << "," << num(r.final_true_dist) << ","
          << num(r.executed_length) << "," << num(r.shortest_length) << ","
          << (r.reached ? 1 : 0) << "," << r.steps_used << ",";
        for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
            if (i) f << ";";
            f << num(r.trajectory[i].x) << ":" << num(r.trajectory[i].y);
        }
        f << "\n";
    }
}

std::vector<EpisodeRecord> load_records_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw SimError("cannot read records: " + path);
    std::vector<EpisodeRecord> out;
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char c : line) {
            if (c == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        fields.push_back(cur);
        if (fields.size() != 13) throw SimError("malformed records line: " + line);
        EpisodeRecord r;
        r.world_id = std::stoi(fields[0]);
        r.start = Pose(std::stod(fields[1]), std::stod(fields[2]), std::stod(fields[3]),
                       Frame::WORLD);
        r.goal = {std::stod(fields[4]), std::stod(fields[5])};
        r.interventions = std::stoi(fields[6]);
        r.final_true_dist = std::stod(fields[7]);
        r.executed_length = std::stod(fields[8]);
        r.shortest_length = std::stod(fields[9]);
        r.reached = std::stoi(fields[10]) != 0;
        r.steps_used = std::stoi(fields[11]);
        std::istringstream ts(fields[12]);
        std::string pair;
        while (std::getline(ts, pair, ';')) {
            auto colon = pair.find(':');
            if (colon == std::string::npos) throw SimError("malformed trajectory: " + line);
            r.trajectory.push_back(
                {std::stod(pair.substr(0, colon)), std::stod(pair.substr(colon + 1))});
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace glocnav
