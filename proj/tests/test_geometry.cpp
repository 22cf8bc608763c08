#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "glocnav/geometry.hpp"
#include "glocnav/rng.hpp"

using namespace glocnav;

namespace {

FloorPlan empty_plan(int w, int h, double mu = 0.01, double dx = 0.0, double dy = 0.0) {
    return FloorPlan(w, h, mu, dx, dy);
}

// Dense-sampling oracle for segment traversability: walk the segment at 0.1 px
// steps and test the cell under each sample.
bool segment_free_by_sampling(Vec2 a, Vec2 b, const FloorPlan& plan) {
    double len = dist(a, b);
    int steps = std::max(1, static_cast<int>(std::ceil(len / 0.1)));
    for (int i = 0; i <= steps; ++i) {
        double t = static_cast<double>(i) / steps;
        Vec2 p = a + t * (b - a);
        int cx = static_cast<int>(std::lround(p.x));
        int cy = static_cast<int>(std::lround(p.y));
        if (!plan.in_bounds(cx, cy) || plan.occupied(cx, cy)) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("pixel/world transform matches the calibration directly") {
    FloorPlan p1 = empty_plan(300, 300, 0.01);
    Pose w1 = px_to_world(Pose(100, 200, 0, Frame::PIXEL), p1);
    CHECK(w1.x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w1.y == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(w1.heading == doctest::Approx(0.0));

    FloorPlan p2 = empty_plan(10, 10, 0.05, -1.0, 2.0);
    Pose w2 = px_to_world(Pose(0, 0, kPi / 2, Frame::PIXEL), p2);
    CHECK(w2.x == doctest::Approx(-1.0));
    CHECK(w2.y == doctest::Approx(2.0));
    CHECK(w2.heading == doctest::Approx(kPi / 2));

    Pose b1 = world_to_px(Pose(1.0, 2.0, 0, Frame::WORLD), p1);
    CHECK(b1.x == doctest::Approx(100.0));
    CHECK(b1.y == doctest::Approx(200.0));

    FloorPlan p3 = empty_plan(10, 10, 0.02, 0.5, 0.5);
    Pose b2 = world_to_px(Pose(0.5, 0.5, 1, Frame::WORLD), p3);
    CHECK(b2.x == doctest::Approx(0.0));
    CHECK(b2.y == doctest::Approx(0.0));
    CHECK(b2.heading == doctest::Approx(1.0));
}

TEST_CASE("pixel/world round trip is the identity to 1e-9") {
    Rng rng = make_root_rng(42);
    FloorPlan plan = empty_plan(500, 400, 0.037, -2.3, 1.7);
    for (int i = 0; i < 1000; ++i) {
        Pose p(rng.uniform(0, 499), rng.uniform(0, 399), rng.uniform(-kPi, kPi),
               Frame::PIXEL);
        Pose back = world_to_px(px_to_world(p, plan), plan);
        CHECK(std::abs(back.x - p.x) < 1e-9);
        CHECK(std::abs(back.y - p.y) < 1e-9);
        CHECK(std::abs(normalize_angle(back.heading - p.heading)) < 1e-9);
    }
}

TEST_CASE("out-of-bounds pixels are rejected") {
    FloorPlan plan = empty_plan(10, 10, 0.1);
    CHECK_THROWS_AS(px_to_world(Pose(20, 0, 0, Frame::PIXEL), plan), BoundsError);
    CHECK_THROWS_AS(world_to_px(Pose(5.0, 0.1, 0, Frame::WORLD), plan, true), BoundsError);
}

TEST_CASE("agent-frame transform: origin, ahead, diagonal") {
    CHECK(world_to_agent({3, 4}, Pose(3, 4, 0.37, Frame::WORLD)).x == doctest::Approx(0.0));
    CHECK(world_to_agent({3, 4}, Pose(3, 4, 0.37, Frame::WORLD)).y == doctest::Approx(0.0));

    Vec2 ahead = world_to_agent({0, 1}, Pose(0, 0, kPi / 2, Frame::WORLD));
    CHECK(ahead.x == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(ahead.y) < 1e-12);

    Vec2 diag = world_to_agent({2, 2}, Pose(1, 1, kPi / 4, Frame::WORLD));
    CHECK(diag.x == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
    CHECK(std::abs(diag.y) < 1e-9);
}

TEST_CASE("agent-frame transform is rigid and invertible") {
    Rng rng = make_root_rng(7);
    for (int i = 0; i < 200; ++i) {
        Pose origin(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-kPi, kPi),
                    Frame::WORLD);
        Vec2 a{rng.uniform(-5, 5), rng.uniform(-5, 5)};
        Vec2 b{rng.uniform(-5, 5), rng.uniform(-5, 5)};
        Vec2 aa = world_to_agent(a, origin);
        Vec2 bb = world_to_agent(b, origin);
        CHECK(std::abs(dist(aa, bb) - dist(a, b)) < 1e-9);
        Vec2 back = agent_to_world(aa, origin);
        CHECK(std::abs(back.x - a.x) < 1e-9);
        CHECK(std::abs(back.y - a.y) < 1e-9);
    }
}

TEST_CASE("leftward of the agent maps to positive Y") {
    // Heading 0, left is -Y in image rows? No: left is +Y in the agent frame
    // by contract; a point rotated +90 degrees from the heading lands on +Y.
    Pose origin(0, 0, 0, Frame::WORLD);
    Vec2 left_world{0, 1};  // +90 deg from heading 0 in world axes
    Vec2 a = world_to_agent(left_world, origin);
    CHECK(std::abs(a.x) < 1e-12);
    CHECK(a.y == doctest::Approx(1.0));
}

TEST_CASE("segment traversability: degenerate and forced cases") {
    FloorPlan plan = empty_plan(20, 20, 0.05);
    for (int x = 0; x < 20; ++x) plan.set_occupied(x, 10, true);
    CHECK(segment_traversable(Pose(3, 3, 0, Frame::PIXEL), Pose(3, 3, 0, Frame::PIXEL),
                              plan));
    CHECK_FALSE(segment_traversable(Pose(5, 2, 0, Frame::PIXEL),
                                    Pose(5, 18, 0, Frame::PIXEL), plan));
}

TEST_CASE("segment traversability matches the dense sampling oracle") {
    Rng rng = make_root_rng(13);
    FloorPlan plan = empty_plan(40, 40, 0.05);
    for (int i = 0; i < 200; ++i)
        plan.set_occupied(static_cast<int>(rng.next_below(40)),
                          static_cast<int>(rng.next_below(40)), true);
    int mismatches = 0;
    for (int i = 0; i < 200; ++i) {
        Vec2 a{rng.uniform(0.0, 39.0), rng.uniform(0.0, 39.0)};
        Vec2 b{rng.uniform(0.0, 39.0), rng.uniform(0.0, 39.0)};
        bool fast = segment_traversable_px(a, b, plan);
        bool oracle = segment_free_by_sampling(a, b, plan);
        if (oracle != fast) {
            // Only allowed divergence: the supercover catches a corner clip
            // shorter than the 0.1 px sampling step.
            CHECK((oracle && !fast));
            ++mismatches;
        }
        CHECK(segment_traversable_px(b, a, plan) == fast);
    }
    CHECK(mismatches <= 2);
}

TEST_CASE("inflation grows obstacles by a disk") {
    FloorPlan plan = empty_plan(9, 9, 0.04);
    plan.set_occupied(4, 4, true);
    FloorPlan fat = inflate(plan, 1);
    CHECK(fat.occupied(4, 4));
    CHECK(fat.occupied(3, 4));
    CHECK(fat.occupied(4, 5));
    CHECK_FALSE(fat.occupied(3, 3));  // corner beyond radius 1
    CHECK_FALSE(fat.occupied(2, 4));
}

TEST_CASE("plan image + metadata round trip") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "glocnav_geo_test";
    fs::create_directories(dir);
    FloorPlan plan = empty_plan(17, 11, 0.04, -0.5, 0.25);
    Rng rng = make_root_rng(5);
    for (int i = 0; i < 40; ++i)
        plan.set_occupied(static_cast<int>(rng.next_below(17)),
                          static_cast<int>(rng.next_below(11)), true);
    std::string img = (dir / "p.pgm").string();
    std::string meta = (dir / "p.meta").string();
    save_plan(plan, img, meta);
    FloorPlan back = load_plan(img, meta);
    CHECK(back.width == plan.width);
    CHECK(back.height == plan.height);
    CHECK(back.resolution_mu == doctest::Approx(plan.resolution_mu));
    CHECK(back.offset_x == doctest::Approx(plan.offset_x));
    CHECK(back.offset_y == doctest::Approx(plan.offset_y));
    CHECK(back.grid == plan.grid);
    fs::remove_all(dir);
}
