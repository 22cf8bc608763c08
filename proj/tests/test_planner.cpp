#include <queue>

#include "doctest.h"
#include "glocnav/planner.hpp"

using namespace glocnav;

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

// Dijkstra oracle with the same neighbor rule as the planner: 8-connected,
// no corner cutting, axial cost 1, diagonal cost sqrt(2).
double dijkstra_cost(const Cell& start, const Cell& goal, const FloorPlan& plan) {
    const double INF = 1e18;
    std::vector<double> d(plan.cell_count(), INF);
    auto idx = [&](const Cell& c) {
        return static_cast<std::size_t>(c.y) * plan.width + c.x;
    };
    using QE = std::pair<double, int>;
    std::priority_queue<QE, std::vector<QE>, std::greater<>> q;
    d[idx(start)] = 0.0;
    q.push({0.0, static_cast<int>(idx(start))});
    while (!q.empty()) {
        auto [dc, ci] = q.top();
        q.pop();
        if (dc > d[ci] + 1e-12) continue;
        Cell c{ci % plan.width, ci / plan.width};
        if (c == goal) return dc;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                Cell n{c.x + dx, c.y + dy};
                if (!plan.in_bounds(n) || plan.occupied(n)) continue;
                if (dx != 0 && dy != 0 &&
                    (plan.occupied(c.x + dx, c.y) || plan.occupied(c.x, c.y + dy)))
                    continue;
                double w = (dx != 0 && dy != 0) ? kSqrt2 : 1.0;
                if (dc + w < d[idx(n)] - 1e-12) {
                    d[idx(n)] = dc + w;
                    q.push({dc + w, static_cast<int>(idx(n))});
                }
            }
    }
    return INF;
}

}  // namespace

TEST_CASE("A* on simple grids matches closed-form costs") {
    FloorPlan plan(10, 10, 0.04);
    PixelPath straight = astar_shortest_path(Pose(0, 0, 0, Frame::PIXEL), {0, 9}, plan);
    CHECK(straight.cost == doctest::Approx(9.0));
    CHECK(straight.points.front() == Cell{0, 0});
    CHECK(straight.points.back() == Cell{0, 9});

    PixelPath diag = astar_shortest_path(Pose(0, 0, 0, Frame::PIXEL), {9, 9}, plan);
    CHECK(diag.cost == doctest::Approx(9.0 * kSqrt2));
}

TEST_CASE("A* rejects bad endpoints") {
    FloorPlan plan(8, 8, 0.04);
    plan.set_occupied(3, 3, true);
    CHECK_THROWS_AS(astar_shortest_path(Pose(3, 3, 0, Frame::PIXEL), {0, 0}, plan),
                    PlannerError);
    CHECK_THROWS_AS(astar_shortest_path(Pose(0, 0, 0, Frame::PIXEL), {3, 3}, plan),
                    PlannerError);
    // Wall off a cell entirely.
    for (int x = 5; x <= 7; ++x)
        for (int y = 5; y <= 7; ++y)
            if (x != 6 || y != 6) plan.set_occupied(x, y, true);
    CHECK_THROWS_AS(astar_shortest_path(Pose(0, 0, 0, Frame::PIXEL), {6, 6}, plan),
                    PlannerError);
}

TEST_CASE("A* cost equals the Dijkstra oracle on random grids") {
    Rng rng = make_root_rng(99);
    int solved = 0;
    for (int trial = 0; trial < 100; ++trial) {
        FloorPlan plan(64, 64, 0.04);
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x)
                if (rng.uniform() < 0.2) plan.set_occupied(x, y, true);
        Cell s{static_cast<int>(rng.next_below(64)), static_cast<int>(rng.next_below(64))};
        Cell g{static_cast<int>(rng.next_below(64)), static_cast<int>(rng.next_below(64))};
        if (plan.occupied(s) || plan.occupied(g)) continue;
        double oracle = dijkstra_cost(s, g, plan);
        if (oracle >= 1e17) {
            CHECK_THROWS_AS(
                astar_shortest_path(Pose(s.x, s.y, 0, Frame::PIXEL), g, plan),
                PlannerError);
            continue;
        }
        PixelPath p = astar_shortest_path(Pose(s.x, s.y, 0, Frame::PIXEL), g, plan);
        CHECK(p.cost == doctest::Approx(oracle).epsilon(1e-12));
        // Structural validity: free cells, 8-adjacent consecutive steps.
        for (std::size_t i = 0; i < p.points.size(); ++i) {
            CHECK_FALSE(plan.occupied(p.points[i]));
            if (i > 0) {
                int dx = std::abs(p.points[i].x - p.points[i - 1].x);
                int dy = std::abs(p.points[i].y - p.points[i - 1].y);
                CHECK(std::max(dx, dy) == 1);
            }
        }
        ++solved;
    }
    CHECK(solved >= 50);
}

TEST_CASE("directional cue shape and padding") {
    FloorPlan plan(40, 40, 0.04);
    Pose current = px_to_world(Pose(5, 5, 0, Frame::PIXEL), plan);

    PixelPath degenerate;
    degenerate.points = {{5, 5}};
    DirectionalCue cue = build_directional_cue(degenerate, plan, current, 32);
    REQUIRE(cue.points.size() == 32);
    for (const Vec2& p : cue.points) {
        CHECK(std::abs(p.x) < 1e-9);
        CHECK(std::abs(p.y) < 1e-9);
    }
}

TEST_CASE("straight-ahead cue spans about 1.24 m at 4 cm spacing") {
    FloorPlan plan(40, 40, 0.04);
    PixelPath path;
    for (int i = 0; i < 32; ++i) path.points.push_back({5 + i, 5});
    Pose current = px_to_world(Pose(5, 5, 0, Frame::PIXEL), plan);
    DirectionalCue cue = build_directional_cue(path, plan, current, 32);
    REQUIRE(cue.points.size() == 32);
    CHECK(std::abs(cue.points[0].x) < 1e-9);
    CHECK(std::abs(cue.points[0].y) < 1e-9);
    for (int i = 0; i < 32; ++i) {
        CHECK(cue.points[i].x == doctest::Approx(0.04 * i).epsilon(1e-9));
        CHECK(std::abs(cue.points[i].y) < 1e-9);
    }
    CHECK(cue.points.back().x == doctest::Approx(1.24));
}

TEST_CASE("short paths pad with the final point") {
    FloorPlan plan(40, 40, 0.04);
    PixelPath path;
    path.points = {{5, 5}, {6, 5}, {7, 5}};
    Pose current = px_to_world(Pose(5, 5, 0, Frame::PIXEL), plan);
    DirectionalCue cue = build_directional_cue(path, plan, current, 32);
    REQUIRE(cue.points.size() == 32);
    for (std::size_t i = 3; i < 32; ++i) {
        CHECK(cue.points[i].x == doctest::Approx(cue.points[2].x));
        CHECK(cue.points[i].y == doctest::Approx(cue.points[2].y));
    }
}

TEST_CASE("perturbation bound follows the sinusoidal curriculum") {
    PerturbationSchedule sched;  // alpha = 0.1, N = 20
    CHECK(perturbation_bound(0, sched) == doctest::Approx(0.0));
    CHECK(perturbation_bound(20, sched) == doctest::Approx(0.1));
    CHECK(perturbation_bound(10, sched) ==
          doctest::Approx(0.1 * std::sin(kPi / 4)).epsilon(1e-12));
    CHECK(perturbation_bound(25, sched) == doctest::Approx(0.1));  // clamped past N
    double prev = -1.0;
    for (int i = 0; i <= 20; ++i) {
        double b = perturbation_bound(i, sched);
        CHECK(b >= prev - 1e-15);
        prev = b;
    }
}

TEST_CASE("path perturbation support and statistics") {
    DirectionalCue cue;
    for (int i = 0; i < 32; ++i) cue.points.push_back({0.04 * i, 0.0});

    Rng rng = make_root_rng(3);
    DirectionalCue same = perturb_path(cue, 0.0, rng);
    for (int i = 0; i < 32; ++i) {
        CHECK(same.points[i].x == cue.points[i].x);
        CHECK(same.points[i].y == cue.points[i].y);
    }

    double bound = 0.05;
    double sum = 0.0;
    int n = 0;
    for (int rep = 0; rep < 320; ++rep) {
        DirectionalCue p = perturb_path(cue, bound, rng);
        for (int i = 0; i < 32; ++i) {
            double dx = p.points[i].x - cue.points[i].x;
            double dy = p.points[i].y - cue.points[i].y;
            CHECK(dx >= 0.0);
            CHECK(dx < bound);
            CHECK(dy >= 0.0);
            CHECK(dy < bound);
            sum += dx + dy;
            n += 2;
        }
    }
    CHECK(sum / n == doctest::Approx(0.025).epsilon(0.08));
}

TEST_CASE("pose perturbation statistics") {
    Rng rng = make_root_rng(17);
    Pose p(1.0, 2.0, 0.3, Frame::WORLD);

    Pose same = perturb_pose(p, rng, 0.0, 0.0);
    CHECK(same.x == p.x);
    CHECK(same.y == p.y);
    CHECK(same.heading == p.heading);

    double sx = 0.0, sx2 = 0.0;
    const int N = 10000;
    for (int i = 0; i < N; ++i) {
        Pose q = perturb_pose(p, rng);
        double dx = q.x - p.x;
        sx += dx;
        sx2 += dx * dx;
        CHECK(q.heading > -kPi);
        CHECK(q.heading <= kPi);
    }
    double var = sx2 / N - (sx / N) * (sx / N);
    CHECK(std::sqrt(var) == doctest::Approx(0.1).epsilon(0.05));
}

TEST_CASE("snap_to_free finds the nearest free cell") {
    FloorPlan plan(10, 10, 0.04);
    for (int x = 2; x <= 4; ++x)
        for (int y = 2; y <= 4; ++y) plan.set_occupied(x, y, true);
    auto snapped = snap_to_free({3, 3}, plan);
    REQUIRE(snapped.has_value());
    CHECK_FALSE(plan.occupied(*snapped));
    int d = std::abs(snapped->x - 3) + std::abs(snapped->y - 3);
    CHECK(d <= 2);

    auto already = snap_to_free({0, 0}, plan);
    REQUIRE(already.has_value());
    CHECK(*already == Cell{0, 0});

    FloorPlan solid(4, 4, 0.04);
    for (int i = 0; i < 16; ++i) solid.grid[i] = 1;
    CHECK_FALSE(snap_to_free({1, 1}, solid).has_value());
}
