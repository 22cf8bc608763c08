#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "glocnav/metrics.hpp"

using namespace glocnav;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

EpisodeRecord rec(bool reached, double final_dist, int interventions, double L,
                  double Lstar) {
    EpisodeRecord r;
    r.reached = reached;
    r.final_true_dist = final_dist;
    r.interventions = interventions;
    r.executed_length = L;
    r.shortest_length = Lstar;
    return r;
}

}  // namespace

TEST_CASE("success rate arithmetic") {
    std::vector<EpisodeRecord> all_good(4, rec(true, 0.0, 0, 1.0, 1.0));
    CHECK(compute_sr(all_good, 0.25, kInf) == doctest::Approx(100.0));

    std::vector<EpisodeRecord> one{rec(true, 0.2, 5, 2.0, 1.9)};
    CHECK(compute_sr(one, 0.25, 10) == doctest::Approx(100.0));
    CHECK(compute_sr(one, 0.15, 10) == doctest::Approx(0.0));
    CHECK(compute_sr(one, 0.25, 4) == doctest::Approx(0.0));

    CHECK_THROWS_AS(compute_sr({}, 0.25, kInf), SimError);
}

TEST_CASE("hand-enumerated 10-record fixture") {
    std::vector<EpisodeRecord> rs = {
        rec(true, 0.10, 0, 1.0, 1.0),   // success everywhere
        rec(true, 0.28, 2, 2.0, 1.5),   // needs tau_d >= 0.30
        rec(true, 0.05, 12, 1.2, 1.0),  // needs tau_c >= 12
        rec(false, 0.05, 0, 1.0, 1.0),  // never stopped -> failure
        rec(true, 0.40, 0, 1.0, 1.0),   // too far at every tau_d
        rec(true, 0.20, 30, 3.0, 1.0),  // needs tau_c >= 30
        rec(true, 0.22, 9, 2.0, 2.0),
        rec(true, 0.33, 50, 4.0, 2.0),  // needs tau_d 0.35, tau_c >= 50
        rec(true, 0.24, 11, 1.0, 1.0),  // tau_c >= 11
        rec(false, 0.90, 3, 5.0, 1.0),
    };
    CHECK(compute_sr(rs, 0.25, 10) == doctest::Approx(20.0));   // records 0 and 6
    CHECK(compute_sr(rs, 0.25, 30) == doctest::Approx(50.0));   // + records 2, 5, 8
    CHECK(compute_sr(rs, 0.30, 10) == doctest::Approx(30.0));   // + record 1
    CHECK(compute_sr(rs, 0.35, kInf) == doctest::Approx(70.0));  // all but 3, 4, 9
}

TEST_CASE("SPL arithmetic and bounds") {
    std::vector<EpisodeRecord> perfect{rec(true, 0.1, 0, 1.0, 1.0)};
    CHECK(compute_spl(perfect, 0.25, kInf) == doctest::Approx(100.0));

    std::vector<EpisodeRecord> doubled{rec(true, 0.1, 0, 2.0, 1.0)};
    CHECK(compute_spl(doubled, 0.25, kInf) == doctest::Approx(50.0));

    std::vector<EpisodeRecord> failed{rec(false, 0.1, 0, 0.5, 1.0)};
    CHECK(compute_spl(failed, 0.25, kInf) == doctest::Approx(0.0));

    // Shorter-than-optimal execution cannot exceed 1 per episode.
    std::vector<EpisodeRecord> shortcut{rec(true, 0.1, 0, 0.5, 1.0)};
    CHECK(compute_spl(shortcut, 0.25, kInf) == doctest::Approx(100.0));

    // Degenerate start=goal contributes the success indicator.
    std::vector<EpisodeRecord> degenerate{rec(true, 0.0, 0, 0.0, 0.0)};
    CHECK(compute_spl(degenerate, 0.25, kInf) == doctest::Approx(100.0));
}

TEST_CASE("NoC mean and finite-threshold cap") {
    std::vector<EpisodeRecord> rs{rec(true, 0.1, 2, 1, 1), rec(true, 0.1, 4, 1, 1)};
    CHECK(compute_noc(rs, kInf) == doctest::Approx(3.0));

    std::vector<EpisodeRecord> capped{rec(true, 0.1, 5, 1, 1), rec(false, 0.5, 50, 1, 1)};
    CHECK(compute_noc(capped, 10) == doctest::Approx(7.5));
    CHECK(compute_noc(capped, kInf) == doctest::Approx(27.5));

    std::vector<EpisodeRecord> zeros(3, rec(true, 0.1, 0, 1, 1));
    CHECK(compute_noc(zeros, kInf) == doctest::Approx(0.0));
}

TEST_CASE("table-wide invariants: monotone SR, SPL <= SR") {
    Rng rng = make_root_rng(77);
    std::vector<EpisodeRecord> rs;
    for (int i = 0; i < 60; ++i) {
        double lstar = rng.uniform(0.5, 3.0);
        rs.push_back(rec(rng.uniform() < 0.8, rng.uniform(0.0, 0.6),
                         static_cast<int>(rng.next_below(60)),
                         lstar * rng.uniform(1.0, 2.0), lstar));
    }
    std::vector<double> tds = {0.25, 0.30, 0.35};
    std::vector<double> tcs = {10, 30, 50, kInf};
    MetricsTable t = make_table("m", rs, tds, tcs);
    REQUIRE(t.cells.size() == 12);
    for (const MetricsCell& c : t.cells) {
        CHECK(c.spl <= c.sr + 1e-9);
        CHECK(c.sr >= 0.0);
        CHECK(c.sr <= 100.0);
        CHECK(c.noc >= 0.0);
    }
    for (std::size_t i = 0; i < tds.size(); ++i)
        for (std::size_t j = 0; j < tcs.size(); ++j) {
            double sr = compute_sr(rs, tds[i], tcs[j]);
            if (i + 1 < tds.size()) CHECK(compute_sr(rs, tds[i + 1], tcs[j]) >= sr);
            if (j + 1 < tcs.size()) CHECK(compute_sr(rs, tds[i], tcs[j + 1]) >= sr);
        }
}

TEST_CASE("table serialization is deterministic") {
    std::vector<EpisodeRecord> rs{rec(true, 0.1, 1, 1.5, 1.2),
                                  rec(false, 0.4, 7, 2.0, 1.0)};
    MetricsTable t1 = make_table("model", rs, {0.25}, {10, kInf});
    MetricsTable t2 = make_table("model", rs, {0.25}, {10, kInf});
    CHECK(table_to_csv(t1) == table_to_csv(t2));
    CHECK(table_to_csv(t1).find("inf") != std::string::npos);
    CHECK_FALSE(table_to_markdown(t1).empty());
}

TEST_CASE("experiment matrix flags a missing checkpoint by name") {
    ExperimentConfig cfg;
    cfg.methods = {{"ghost", "/nonexistent/ghost.ckpt"}};
    cfg.worlds_dir = "/nonexistent";
    cfg.manifest_path = "/nonexistent/manifest.txt";
    try {
        run_experiment_matrix(cfg);
        FAIL("expected a config error");
    } catch (const tc::ConfigError& e) {
        CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
}

TEST_CASE("plot emission writes a valid PPM raster") {
    namespace fs = std::filesystem;
    SimWorld w = generate_world(3, 48, 0.05);
    EpisodeRecord r;
    r.start = px_to_world(Pose(5, 5, 0, Frame::PIXEL), w.plan);
    r.goal = cell_to_world({40, 40}, w.plan);
    r.trajectory = {r.start.position(), cell_to_world({20, 20}, w.plan), r.goal};
    fs::path dir = fs::temp_directory_path() / "glocnav_plot";
    fs::create_directories(dir);
    std::string path = (dir / "ep.ppm").string();
    plot_episode(r, w, path);
    std::ifstream f(path, std::ios::binary);
    std::string head(2, '\0');
    f.read(head.data(), 2);
    CHECK(head == "P6");
    f.seekg(0, std::ios::end);
    CHECK(f.tellg() > 48 * 48 * 3);
    fs::remove_all(dir);
}
