#include "glocnav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "glocnav/parallel.hpp"

namespace glocnav {

bool episode_success(const EpisodeRecord& r, double tau_d, double tau_c) {
    return r.reached && r.final_true_dist <= tau_d &&
           static_cast<double>(r.interventions) <= tau_c;
}

double compute_sr(const std::vector<EpisodeRecord>& records, double tau_d, double tau_c) {
    if (records.empty()) throw SimError("compute_sr: empty record set");
    int wins = 0;
    for (const auto& r : records)
        if (episode_success(r, tau_d, tau_c)) ++wins;
    return 100.0 * wins / static_cast<double>(records.size());
}

double compute_spl(const std::vector<EpisodeRecord>& records, double tau_d, double tau_c) {
    if (records.empty()) throw SimError("compute_spl: empty record set");
    double sum = 0.0;
    for (const auto& r : records) {
        if (!episode_success(r, tau_d, tau_c)) continue;
        if (r.shortest_length <= 1e-12) {
            sum += 1.0;  // start = goal
        } else {
            sum += r.shortest_length / std::max(r.executed_length, r.shortest_length);
        }
    }
    return 100.0 * sum / static_cast<double>(records.size());
}

double compute_noc(const std::vector<EpisodeRecord>& records, double tau_c) {
    if (records.empty()) throw SimError("compute_noc: empty record set");
    double sum = 0.0;
    for (const auto& r : records)
        sum += std::isfinite(tau_c) ? std::min(static_cast<double>(r.interventions), tau_c)
                                    : static_cast<double>(r.interventions);
    return sum / static_cast<double>(records.size());
}

std::vector<EpisodeRecord> evaluate_policy(const std::vector<SimWorld>& worlds,
                                           const std::vector<ManifestEntry>& manifest,
                                           const PolicyFactory& factory,
                                           const LocalizerConfig& localizer,
                                           const EpisodeConfig& cfg, Rng& root) {
    std::vector<EpisodeRecord> out(manifest.size());
    std::string error;
    int n = static_cast<int>(manifest.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads())
    for (int i = 0; i < n; ++i) {
        try {
            const ManifestEntry& e = manifest[i];
            if (e.world_id < 0 || e.world_id >= static_cast<int>(worlds.size()))
                throw SimError("manifest world id out of range");
            const SimWorld& w = worlds[e.world_id];
            Cell goal = world_to_cell(e.goal, w.plan);
            PolicyFn policy = factory(w, e.world_id, e.goal);
            Rng rng = root.substream(static_cast<std::uint64_t>(i));
            out[i] = run_episode(w, e.world_id, e.start, goal, policy, localizer, cfg, rng);
        } catch (const std::exception& ex) {
#pragma omp critical
            if (error.empty()) error = ex.what();
        }
    }
    if (!error.empty()) throw SimError("evaluate_policy: " + error);
    return out;
}

MetricsTable make_table(const std::string& method,
                        const std::vector<EpisodeRecord>& records,
                        const std::vector<double>& tau_d,
                        const std::vector<double>& tau_c) {
    MetricsTable t;
    for (double td : tau_d)
        for (double tcv : tau_c) {
            MetricsCell c;
            c.method = method;
            c.tau_d = td;
            c.tau_c = tcv;
            c.episodes = static_cast<int>(records.size());
            c.sr = compute_sr(records, td, tcv);
            c.spl = compute_spl(records, td, tcv);
            c.noc = compute_noc(records, tcv);
            t.cells.push_back(c);
        }
    return t;
}

ExperimentResult run_experiment_matrix(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    // Validate every checkpoint up front so a gap is reported by name.
    for (const MethodSpec& m : cfg.methods) {
        if (m.checkpoint == "expert" || m.checkpoint == "plan-astar") continue;
        if (!fs::exists(m.checkpoint))
            throw tc::ConfigError("missing checkpoint for method '" + m.name +
                                  "': " + m.checkpoint);
    }
    std::vector<ManifestEntry> manifest = load_manifest(cfg.manifest_path);
    int max_world = -1;
    for (const auto& e : manifest) max_world = std::max(max_world, e.world_id);
    std::vector<SimWorld> worlds;
    for (int w = 0; w <= max_world; ++w)
        worlds.push_back(load_world(cfg.worlds_dir + "/world_" + std::to_string(w)));

    ExperimentResult result;
    for (const MethodSpec& m : cfg.methods) {
        Rng root = make_root_rng(cfg.seed);
        PolicyFactory factory;
        std::shared_ptr<PolicyModel> model;
        std::shared_ptr<std::vector<std::vector<double>>> pooled;
        if (m.checkpoint == "expert") {
            factory = [&](const SimWorld&, int, Vec2 goal) {
                return make_expert_policy(goal, kDefaultCueHorizon);
            };
        } else if (m.checkpoint == "plan-astar") {
            factory = [&](const SimWorld&, int, Vec2 goal) {
                return make_plan_astar_policy(goal, kDefaultCueHorizon);
            };
        } else {
            model = std::make_shared<PolicyModel>(PolicyModel::load(m.checkpoint));
            pooled = std::make_shared<std::vector<std::vector<double>>>();
            for (const SimWorld& w : worlds)
                pooled->push_back(downsample_occupancy(w.plan, model->pcfg.plan_pool));
            factory = [model, pooled](const SimWorld&, int world_id, Vec2 goal) {
                return make_diffusion_policy(*model, goal, (*pooled)[world_id]);
            };
        }
        EpisodeConfig ecfg = cfg.episode;
        if (model) {
            // Scans pushed by the protocol loop must match the model's sensor.
            ecfg.ray_count = model->pcfg.ray_count;
            ecfg.fov = model->pcfg.fov;
            ecfg.max_range = model->pcfg.max_range;
        }
        std::vector<EpisodeRecord> records =
            evaluate_policy(worlds, manifest, factory, cfg.localizer, ecfg, root);
        MetricsTable t = make_table(m.name, records, cfg.tau_d, cfg.tau_c);
        result.table.cells.insert(result.table.cells.end(), t.cells.begin(), t.cells.end());
        result.records.emplace_back(m.name, std::move(records));
    }
    return result;
}

namespace {

std::string fmt(double v) {
    char buf[48];
    if (std::isinf(v)) return "inf";
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

}  // namespace

std::string table_to_csv(const MetricsTable& t) {
    std::ostringstream ss;
    ss << "method,tau_d,tau_c,episodes,sr,spl,noc\n";
    for (const MetricsCell& c : t.cells)
        ss << c.method << "," << fmt(c.tau_d) << "," << fmt(c.tau_c) << "," << c.episodes
           << "," << fmt(c.sr) << "," << fmt(c.spl) << "," << fmt(c.noc) << "\n";
    return ss.str();
}

void save_table_csv(const MetricsTable& t, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimError("cannot write table: " + path);
    f << table_to_csv(t);
}

std::string table_to_markdown(const MetricsTable& t) {
    std::ostringstream ss;
    ss << "| method | tau_d | tau_c | episodes | SR % | SPL % | NoC |\n";
    ss << "|---|---|---|---|---|---|---|\n";
    for (const MetricsCell& c : t.cells)
        ss << "| " << c.method << " | " << fmt(c.tau_d) << " | " << fmt(c.tau_c) << " | "
           << c.episodes << " | " << fmt(c.sr) << " | " << fmt(c.spl) << " | "
           << fmt(c.noc) << " |\n";
    return ss.str();
}

void plot_episode(const EpisodeRecord& rec, const SimWorld& world,
                  const std::string& path) {
    int w = world.plan.width, h = world.plan.height;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3, 255);
    auto put = [&](int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        if (x < 0 || y < 0 || x >= w || y >= h) return;
        std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
        rgb[i] = r;
        rgb[i + 1] = g;
        rgb[i + 2] = b;
    };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (world.plan.occupied(x, y))
                put(x, y, 0, 0, 0);
            else if (world.furniture.occupied(x, y))
                put(x, y, 150, 150, 150);
        }
    auto world_px = [&](Vec2 p) {
        Pose px = world_to_px(Pose(p.x, p.y, 0.0, Frame::WORLD), world.plan);
        return Cell{static_cast<int>(std::lround(px.x)), static_cast<int>(std::lround(px.y))};
    };
    for (std::size_t i = 0; i + 1 < rec.trajectory.size(); ++i) {
        Cell a = world_px(rec.trajectory[i]);
        Cell b = world_px(rec.trajectory[i + 1]);
        int steps = std::max({std::abs(b.x - a.x), std::abs(b.y - a.y), 1});
        for (int s = 0; s <= steps; ++s) {
            double t = static_cast<double>(s) / steps;
            put(static_cast<int>(std::lround(a.x + t * (b.x - a.x))),
                static_cast<int>(std::lround(a.y + t * (b.y - a.y))), 220, 30, 30);
        }
    }
    Cell sc = world_px(rec.start.position());
    Cell gc = world_px(rec.goal);
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            put(sc.x + dx, sc.y + dy, 30, 60, 220);
            put(gc.x + dx, gc.y + dy, 30, 180, 60);
        }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SimError("cannot write plot: " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

}  // namespace glocnav
