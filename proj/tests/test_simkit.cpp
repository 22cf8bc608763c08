#include <filesystem>

#include "doctest.h"
#include "glocnav/simkit.hpp"

using namespace glocnav;

namespace {

// Corridor world: open 2 m passage along the middle row, walls elsewhere.
SimWorld corridor_world(int length_px = 64, double mu = 0.04) {
    SimWorld w;
    w.plan = FloorPlan(length_px, 9, mu);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < length_px; ++x)
            if (y < 2 || y > 6 || x == 0 || x == length_px - 1)
                w.plan.set_occupied(x, y, true);
    w.furniture = FloorPlan(length_px, 9, mu);
    w.rebuild_composites();
    return w;
}

}  // namespace

TEST_CASE("world generation: determinism, density zero, connectivity") {
    SimWorld a = generate_world(123, 64, 0.06);
    SimWorld b = generate_world(123, 64, 0.06);
    CHECK(a.plan.grid == b.plan.grid);
    CHECK(a.furniture.grid == b.furniture.grid);

    SimWorld empty = generate_world(5, 64, 0.0);
    for (auto c : empty.furniture.grid) CHECK(c == 0);

    // Furniture never overlaps walls; borders closed.
    for (std::size_t i = 0; i < a.plan.grid.size(); ++i)
        CHECK_FALSE((a.plan.grid[i] != 0 && a.furniture.grid[i] != 0));
    for (int x = 0; x < 64; ++x) {
        CHECK(a.plan.occupied(x, 0));
        CHECK(a.plan.occupied(x, 63));
    }

    // Flood-fill oracle: sampled start/goal pairs stay connected in the
    // inflated full occupancy across 50 seeded worlds.
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        SimWorld w = generate_world(seed, 48, 0.08);
        Rng rng = make_root_rng(seed + 1000);
        auto s = sample_free_cell(w, rng);
        REQUIRE(s.has_value());
        auto g = sample_free_cell(w, rng, &*s);
        REQUIRE(g.has_value());
        CHECK(expert_demonstrate(w, *s, *g).has_value());
    }
}

TEST_CASE("world save/load round trip") {
    namespace fs = std::filesystem;
    SimWorld w = generate_world(17, 48, 0.08);
    fs::path dir = fs::temp_directory_path() / "glocnav_sim_world";
    save_world(w, dir.string());
    SimWorld back = load_world(dir.string());
    CHECK(back.plan.grid == w.plan.grid);
    CHECK(back.furniture.grid == w.furniture.grid);
    CHECK(back.full.grid == w.full.grid);
    CHECK(back.plan.resolution_mu == doctest::Approx(w.plan.resolution_mu));
    fs::remove_all(dir);
}

TEST_CASE("expert demonstration in a straight 2 m corridor") {
    SimWorld w = corridor_world();
    Cell start{3, 4}, goal{53, 4};  // 50 cells * 0.04 = 2.0 m
    auto demo = expert_demonstrate(w, start, goal);
    REQUIRE(demo.has_value());
    CHECK(demo->length == doctest::Approx(2.0).epsilon(1e-9));
    CHECK(static_cast<int>(demo->trajectory.size()) ==
          doctest::Approx(51).epsilon(0.05));  // ~50 steps of 4 cm
    for (std::size_t i = 1; i < demo->trajectory.size() - 1; ++i) {
        double step = dist(demo->trajectory[i].position(),
                           demo->trajectory[i - 1].position());
        CHECK(step == doctest::Approx(0.04).epsilon(1e-6));
    }
}

TEST_CASE("expert trajectory avoids furniture the plan does not show") {
    SimWorld w = corridor_world();
    // Furniture bar across the straight-line row; the row below stays passable
    // even after body inflation.
    for (int x = 30; x <= 32; ++x) w.furniture.set_occupied(x, 3, true);
    w.rebuild_composites();
    auto demo = expert_demonstrate(w, {3, 4}, {53, 4});
    REQUIRE(demo.has_value());
    for (const Pose& p : demo->trajectory) {
        Cell c = world_to_cell(p.position(), w.full);
        CHECK_FALSE(w.full.occupied(c));
    }
    CHECK(demo->length > 2.0);  // detour around the block
}

TEST_CASE("training samples have full shape and agent-frame chunks") {
    SimWorld w = corridor_world();
    auto demo = expert_demonstrate(w, {3, 4}, {53, 4});
    REQUIRE(demo.has_value());
    Vec2 goal = cell_to_world({53, 4}, w.plan);
    auto samples = demo_to_samples(w, 0, *demo, goal, 16, 5);
    CHECK(samples.size() >= 9);
    for (const auto& s : samples) {
        CHECK(s.history.scans.size() == kHistoryLength);
        CHECK(s.expert_deltas.size() == 16);
        for (const Vec2& d : s.expert_deltas) {
            CHECK(norm(d) <= 0.05);  // ~4 cm per step, zero once arrived
        }
    }
    // First sample moves straight ahead in its own frame.
    CHECK(samples[0].expert_deltas[0].x == doctest::Approx(0.04).epsilon(1e-6));
    CHECK(std::abs(samples[0].expert_deltas[0].y) < 1e-9);
}

TEST_CASE("step_agent executes a straight chunk for 0.8 m") {
    SimWorld w = corridor_world(128);
    AgentState st;
    st.true_pose = px_to_world(Pose(5, 4, 0, Frame::PIXEL), w.plan);
    st.believed_pose = st.true_pose;
    ActionSequence a;
    for (int i = 0; i < 32; ++i) a.waypoints.push_back({0.04, 0.0});
    Vec2 before = st.true_pose.position();
    StepOutcome out = step_agent(st, a, w, 20);
    CHECK(out.executed_steps == 20);
    CHECK_FALSE(out.collision_predicted);
    CHECK(dist(st.true_pose.position(), before) == doctest::Approx(0.8).epsilon(1e-9));
    CHECK(st.path_length == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("step_agent halts before a wall and reports the collision") {
    SimWorld w = corridor_world();
    AgentState st;
    st.true_pose = px_to_world(Pose(5, 4, kPi / 2, Frame::PIXEL), w.plan);
    st.believed_pose = st.true_pose;
    ActionSequence a;
    for (int i = 0; i < 32; ++i) a.waypoints.push_back({0.04, 0.0});  // toward wall
    StepOutcome out = step_agent(st, a, w, 20);
    CHECK(out.collision_predicted);
    CHECK(out.executed_steps <= 2);  // corridor half-width minus inflation
    Cell c = world_to_cell(st.true_pose.position(), w.full_inflated);
    CHECK_FALSE(w.full_inflated.occupied(c));

    AgentState zero = st;
    double x = zero.true_pose.x;
    ActionSequence none;
    none.waypoints.assign(20, Vec2{});
    StepOutcome out2 = step_agent(zero, none, w, 20);
    CHECK_FALSE(out2.collision_predicted);
    CHECK(out2.executed_length == doctest::Approx(0.0));
    CHECK(zero.true_pose.x == doctest::Approx(x));
}

TEST_CASE("intervention turns 45 degrees left and counts") {
    AgentState st;
    st.true_pose = Pose(1, 1, 0, Frame::WORLD);
    intervene(st);
    CHECK(st.true_pose.heading == doctest::Approx(kPi / 4));
    CHECK(st.interventions == 1);
    for (int i = 0; i < 7; ++i) intervene(st);
    CHECK(st.interventions == 8);
    CHECK(std::abs(normalize_angle(st.true_pose.heading - 0.0)) < 1e-9);
    CHECK(st.true_pose.x == doctest::Approx(1.0));
}

TEST_CASE("localizers: ground truth, bounded noise, seeded determinism") {
    SimWorld w = corridor_world();
    Pose truth = px_to_world(Pose(10, 4, 0.3, Frame::PIXEL), w.plan);
    Rng rng = make_root_rng(55);

    Localizer gt(LocalizerConfig::gt(), truth);
    Pose b = gt.localize(truth, w, rng);
    CHECK(b.x == truth.x);
    CHECK(b.y == truth.y);

    Localizer noisy(LocalizerConfig::noisy_gt(1.0, 2.0), truth);
    for (int i = 0; i < 200; ++i) {
        Pose nb = noisy.localize(truth, w, rng);
        double err = dist(nb.position(), truth.position());
        CHECK(err >= 1.0 - 1e-9);
        CHECK(err < 2.0);
    }

    Rng r1 = make_root_rng(7), r2 = make_root_rng(7);
    Localizer o1(LocalizerConfig::odom_drift(), truth);
    Localizer o2(LocalizerConfig::odom_drift(), truth);
    o1.observe_motion(0.04, 0.0, r1);
    o2.observe_motion(0.04, 0.0, r2);
    Pose p1 = o1.localize(truth, w, r1);
    Pose p2 = o2.localize(truth, w, r2);
    CHECK(p1.x == p2.x);
    CHECK(p1.y == p2.y);
    CHECK(p1.heading == p2.heading);
}

TEST_CASE("expert-driven episode succeeds with near-optimal length") {
    SimWorld w = corridor_world();
    Pose start = px_to_world(Pose(3, 4, 0, Frame::PIXEL), w.plan);
    Cell goal{53, 4};
    Vec2 goal_w = cell_to_world(goal, w.plan);
    EpisodeConfig cfg;
    Rng rng = make_root_rng(2);
    EpisodeRecord rec = run_episode(w, 0, start, goal, make_expert_policy(goal_w, 32),
                                    LocalizerConfig::gt(), cfg, rng);
    CHECK(rec.reached);
    CHECK(rec.final_true_dist <= cfg.stop_dist + 1e-9);
    CHECK(rec.interventions == 0);
    CHECK(rec.shortest_length == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(rec.executed_length <= 1.10 * rec.shortest_length);
    CHECK(rec.executed_length >= rec.shortest_length - cfg.stop_dist - 0.05);
}

TEST_CASE("start equals goal: immediate success with zero length") {
    SimWorld w = corridor_world();
    Pose start = px_to_world(Pose(10, 4, 0, Frame::PIXEL), w.plan);
    Cell goal{10, 4};
    Rng rng = make_root_rng(3);
    EpisodeRecord rec = run_episode(w, 0, start, goal,
                                    make_expert_policy(cell_to_world(goal, w.plan), 32),
                                    LocalizerConfig::gt(), EpisodeConfig{}, rng);
    CHECK(rec.reached);
    CHECK(rec.executed_length == doctest::Approx(0.0));
    CHECK(rec.interventions == 0);
}

TEST_CASE("plan-blind A* follower hits furniture and triggers interventions") {
    SimWorld w = corridor_world();
    // Block the plan-optimal straight line; the row below stays passable.
    for (int x = 30; x <= 32; ++x) w.furniture.set_occupied(x, 3, true);
    w.rebuild_composites();
    Pose start = px_to_world(Pose(3, 4, 0, Frame::PIXEL), w.plan);
    Cell goal{53, 4};
    Vec2 goal_w = cell_to_world(goal, w.plan);
    Rng rng = make_root_rng(4);
    EpisodeConfig cfg;
    EpisodeRecord rec = run_episode(w, 0, start, goal,
                                    make_plan_astar_policy(goal_w, 32),
                                    LocalizerConfig::gt(), cfg, rng);
    CHECK(rec.interventions > 0);  // the plan-only path runs into the block
    // The collision gate kept the true pose out of obstacles throughout.
    for (const Vec2& p : rec.trajectory) {
        Cell c = world_to_cell(p, w.full);
        CHECK_FALSE(w.full.occupied(c));
    }
}

TEST_CASE("manifest and records round trips") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "glocnav_sim_io";
    fs::create_directories(dir);

    std::vector<ManifestEntry> entries;
    entries.push_back({0, Pose(0.12, 0.34, -1.2, Frame::WORLD), {1.5, 0.7}});
    entries.push_back({3, Pose(2.0, 0.1, 3.0, Frame::WORLD), {0.2, 0.2}});
    std::string mpath = (dir / "manifest.txt").string();
    save_manifest(entries, mpath);
    auto back = load_manifest(mpath);
    REQUIRE(back.size() == 2);
    CHECK(back[1].world_id == 3);
    CHECK(back[0].start.x == doctest::Approx(0.12));
    CHECK(back[1].goal.y == doctest::Approx(0.2));

    std::vector<EpisodeRecord> recs(2);
    recs[0].world_id = 1;
    recs[0].start = Pose(0.1, 0.2, 0.3, Frame::WORLD);
    recs[0].goal = {1.0, 1.1};
    recs[0].trajectory = {{0.1, 0.2}, {0.5, 0.6}, {1.0, 1.1}};
    recs[0].interventions = 2;
    recs[0].final_true_dist = 0.12;
    recs[0].executed_length = 1.4;
    recs[0].shortest_length = 1.3;
    recs[0].reached = true;
    recs[0].steps_used = 40;
    recs[1] = recs[0];
    recs[1].reached = false;
    recs[1].interventions = 0;
    std::string rpath = (dir / "records.csv").string();
    save_records_csv(recs, rpath);
    auto rback = load_records_csv(rpath);
    REQUIRE(rback.size() == 2);
    CHECK(rback[0].interventions == 2);
    CHECK(rback[0].reached);
    CHECK_FALSE(rback[1].reached);
    CHECK(rback[0].trajectory.size() == 3);
    CHECK(rback[0].trajectory[1].x == doctest::Approx(0.5));
    fs::remove_all(dir);
}

TEST_CASE("dataset file round trip") {
    namespace fs = std::filesystem;
    SimWorld w = corridor_world();
    auto demo = expert_demonstrate(w, {3, 4}, {53, 4});
    REQUIRE(demo.has_value());
    TrainingDataset ds;
    ds.plans.push_back(w.plan);
    ds.pooled.push_back(downsample_occupancy(w.plan, 4));
    auto samples = demo_to_samples(w, 0, *demo, cell_to_world({53, 4}, w.plan), 8, 10, 16);
    ds.samples = samples;
    REQUIRE_FALSE(ds.samples.empty());

    fs::path dir = fs::temp_directory_path() / "glocnav_sim_ds";
    fs::create_directories(dir);
    std::string path = (dir / "d.txt").string();
    save_dataset(ds, path);
    TrainingDataset back = load_dataset(path, 4);
    REQUIRE(back.samples.size() == ds.samples.size());
    REQUIRE(back.plans.size() == 1);
    CHECK(back.plans[0].grid == w.plan.grid);
    CHECK(back.pooled[0] == ds.pooled[0]);
    const auto& s0 = ds.samples[0];
    const auto& b0 = back.samples[0];
    CHECK(b0.pose.x == doctest::Approx(s0.pose.x));
    CHECK(b0.expert_deltas.size() == s0.expert_deltas.size());
    CHECK(b0.history.scans[4].rays == s0.history.scans[4].rays);
    fs::remove_all(dir);
}
