// glocnav command-line front end: world/dataset generation, training,
// evaluation, reporting, and plotting. GLOCNAV_THREADS caps the worker pool;
// all randomness flows from --seed.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "glocnav/metrics.hpp"
#include "glocnav/parallel.hpp"

namespace fs = std::filesystem;
using namespace glocnav;

namespace {

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok == "inf") {
            out.push_back(std::numeric_limits<double>::infinity());
        } else {
            out.push_back(std::stod(tok));
        }
    }
    if (out.empty()) throw CLI::ValidationError("empty threshold list");
    return out;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string k = trim(line.substr(0, eq));
        std::string v = trim(line.substr(eq + 1));
        if (!k.empty()) kv[k] = v;
    }
    return kv;
}

template <typename T>
T get_or(const std::map<std::string, std::string>& kv, const std::string& key, T def) {
    auto it = kv.find(key);
    if (it == kv.end()) return def;
    if constexpr (std::is_same_v<T, std::string>) {
        return it->second;
    } else if constexpr (std::is_same_v<T, bool>) {
        return it->second == "1" || it->second == "true";
    } else if constexpr (std::is_integral_v<T>) {
        return static_cast<T>(std::stoll(it->second));
    } else {
        return static_cast<T>(std::stod(it->second));
    }
}

PolicyVariant parse_variant(const std::string& s) {
    if (s == "full") return PolicyVariant::Full;
    if (s == "no-path") return PolicyVariant::NoPath;
    if (s == "no-depth") return PolicyVariant::NoDepth;
    throw std::runtime_error("unknown variant: " + s + " (full|no-path|no-depth)");
}

int count_worlds(const std::string& dir) {
    int n = 0;
    while (fs::exists(dir + "/world_" + std::to_string(n) + "/plan.pgm")) ++n;
    if (n == 0) throw std::runtime_error("no worlds found under " + dir);
    return n;
}

int cmd_gen_worlds(std::uint64_t seed, int count, int size, double density,
                   const std::string& out, int manifest_episodes) {
    fs::create_directories(out);
    Rng root = make_root_rng(seed);
    std::vector<ManifestEntry> manifest;
    for (int i = 0; i < count; ++i) {
        Rng wrng = root.substream(static_cast<std::uint64_t>(i));
        SimWorld w = generate_world(seed * 1000003ull + static_cast<std::uint64_t>(i),
                                    size, density);
        save_world(w, out + "/world_" + std::to_string(i));
        for (int e = 0; e < manifest_episodes; ++e) {
            for (int tries = 0; tries < 64; ++tries) {
                auto s = sample_free_cell(w, wrng);
                if (!s) break;
                auto g = sample_free_cell(w, wrng, &*s);
                if (!g || *g == *s) continue;
                if (!expert_demonstrate(w, *s, *g)) continue;
                Vec2 sw = cell_to_world(*s, w.plan);
                double heading = wrng.uniform(-kPi, kPi);
                manifest.push_back({i, Pose(sw.x, sw.y, heading, Frame::WORLD),
                                    cell_to_world(*g, w.plan)});
                break;
            }
        }
        std::cout << "world_" << i << " written\n";
    }
    if (manifest_episodes > 0) save_manifest(manifest, out + "/manifest.txt");
    return 0;
}

int cmd_gen_dataset(const std::string& worlds_dir, int episodes_per_world,
                    const std::string& out, std::uint64_t seed, int horizon,
                    int stride) {
    int n = count_worlds(worlds_dir);
    Rng root = make_root_rng(seed);
    TrainingDataset ds;
    for (int i = 0; i < n; ++i) {
        SimWorld w = load_world(worlds_dir + "/world_" + std::to_string(i));
        Rng wrng = root.substream(static_cast<std::uint64_t>(i));
        int made = 0, tries = 0;
        while (made < episodes_per_world && tries++ < 64 * episodes_per_world) {
            auto s = sample_free_cell(w, wrng);
            if (!s) break;
            auto g = sample_free_cell(w, wrng, &*s);
            if (!g || *g == *s) continue;
            auto demo = expert_demonstrate(w, *s, *g);
            if (!demo || demo->trajectory.size() < 2) continue;
            Vec2 goal = cell_to_world(*g, w.plan);
            auto samples = demo_to_samples(w, i, *demo, goal, horizon, stride);
            ds.samples.insert(ds.samples.end(), samples.begin(), samples.end());
            ++made;
        }
        ds.pooled.push_back(downsample_occupancy(w.plan, 32));
        ds.plans.push_back(w.plan);
        std::cout << "world_" << i << ": " << made << " demos, total samples "
                  << ds.samples.size() << "\n";
    }
    save_dataset(ds, out);
    std::cout << "dataset: " << ds.samples.size() << " samples -> " << out << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out) {
    auto kv = read_kv_file(config_path);
    DiffusionConfig dcfg;
    dcfg.horizon = get_or(kv, "horizon", dcfg.horizon);
    dcfg.cue_horizon = get_or(kv, "cue_horizon", dcfg.cue_horizon);
    dcfg.k_steps = get_or(kv, "k_steps", dcfg.k_steps);
    dcfg.c1 = get_or(kv, "c1", dcfg.c1);
    dcfg.c2 = get_or(kv, "c2", dcfg.c2);
    dcfg.c3 = get_or(kv, "c3", dcfg.c3);
    dcfg.temb_dim = get_or(kv, "temb_dim", dcfg.temb_dim);
    dcfg.cue_block_dim = get_or(kv, "cue_block_dim", dcfg.cue_block_dim);
    dcfg.action_scale = get_or(kv, "action_scale", dcfg.action_scale);
    dcfg.cue_injection_block = get_or(kv, "cue_injection_block", dcfg.cue_injection_block);
    dcfg.variant = parse_variant(get_or<std::string>(kv, "variant", "full"));

    PerceptionConfig pcfg;
    pcfg.ray_count = get_or(kv, "ray_count", pcfg.ray_count);
    pcfg.embed_dim = get_or(kv, "embed_dim", pcfg.embed_dim);
    pcfg.attention_heads = get_or(kv, "attention_heads", pcfg.attention_heads);
    pcfg.attention_layers = get_or(kv, "attention_layers", pcfg.attention_layers);
    pcfg.plan_feat_dim = get_or(kv, "plan_feat_dim", pcfg.plan_feat_dim);
    pcfg.plan_pool = get_or(kv, "plan_pool", pcfg.plan_pool);
    pcfg.cue_dim = get_or(kv, "cue_dim", pcfg.cue_dim);
    pcfg.cue_hidden = get_or(kv, "cue_hidden", pcfg.cue_hidden);

    TrainConfig tcfg;
    tcfg.epochs = get_or(kv, "epochs", tcfg.epochs);
    tcfg.batch = get_or(kv, "batch", tcfg.batch);
    tcfg.lr_max = get_or(kv, "lr_max", tcfg.lr_max);
    tcfg.alpha = get_or(kv, "alpha", tcfg.alpha);
    tcfg.perturbation = get_or(kv, "perturbation", tcfg.perturbation);
    tcfg.seed = get_or<std::uint64_t>(kv, "seed", 0);

    TrainingDataset ds = load_dataset(data_path, pcfg.plan_pool);
    std::cout << "loaded " << ds.samples.size() << " samples over " << ds.plans.size()
              << " worlds\n";
    Rng rng = make_root_rng(tcfg.seed);
    PolicyModel model = PolicyModel::create(dcfg, pcfg, rng);
    std::cout << "parameters: " << model.store.total_params() << "\n";
    TrainingResult res = training_run(model, ds, tcfg);
    for (std::size_t e = 0; e < res.epoch_loss.size(); ++e)
        std::cout << "epoch " << (e + 1) << " loss " << res.epoch_loss[e] << "\n";
    model.save(out);
    std::cout << "checkpoint -> " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& worlds,
             const std::string& manifest, const std::string& localizer,
             const std::string& taud, const std::string& tauc, std::uint64_t seed,
             const std::string& out) {
    ExperimentConfig cfg;
    std::string name = checkpoint == "expert" || checkpoint == "plan-astar"
                           ? checkpoint
                           : fs::path(checkpoint).stem().string();
    cfg.methods = {{name, checkpoint}};
    cfg.worlds_dir = worlds;
    cfg.manifest_path = manifest;
    cfg.localizer = parse_localizer(localizer);
    cfg.tau_d = parse_list(taud);
    cfg.tau_c = parse_list(tauc);
    cfg.seed = seed;
    cfg.episode.stop_dist = *std::min_element(cfg.tau_d.begin(), cfg.tau_d.end());
    ExperimentResult res = run_experiment_matrix(cfg);
    fs::create_directories(out);
    save_table_csv(res.table, out + "/metrics.csv");
    for (const auto& [method, records] : res.records)
        save_records_csv(records, out + "/records_" + method + ".csv");
    std::cout << table_to_markdown(res.table);
    return 0;
}

int cmd_report(const std::string& records_path, const std::string& format,
               const std::string& taud, const std::string& tauc) {
    std::vector<EpisodeRecord> records = load_records_csv(records_path);
    MetricsTable t = make_table(fs::path(records_path).stem().string(), records,
                                parse_list(taud), parse_list(tauc));
    if (format == "csv") {
        std::cout << table_to_csv(t);
    } else if (format == "md") {
        std::cout << table_to_markdown(t);
    } else {
        throw std::runtime_error("unknown format: " + format + " (csv|md)");
    }
    return 0;
}

int cmd_plot(const std::string& records_path, const std::string& worlds,
             const std::string& out) {
    std::vector<EpisodeRecord> records = load_records_csv(records_path);
    fs::create_directories(out);
    std::map<int, SimWorld> cache;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const EpisodeRecord& r = records[i];
        if (!cache.count(r.world_id))
            cache.emplace(r.world_id,
                          load_world(worlds + "/world_" + std::to_string(r.world_id)));
        plot_episode(r, cache.at(r.world_id),
                     out + "/episode_" + std::to_string(i) + ".ppm");
    }
    std::cout << records.size() << " plots -> " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Floor-plan-guided diffusion navigation toolkit"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    int count = 10, size = 64, manifest_episodes = 5;
    double density = 0.06;
    std::string out, worlds, manifest, data, config, checkpoint, records;
    std::string localizer = "gt", taud = "0.25,0.30,0.35", tauc = "10,30,50,inf";
    std::string format = "csv";
    int episodes_per_world = 4, horizon = 32, stride = 5;

    auto* gw = app.add_subcommand("gen-worlds", "Generate seeded synthetic worlds");
    gw->add_option("--seed", seed);
    gw->add_option("--count", count);
    gw->add_option("--size", size, "World side length in pixels");
    gw->add_option("--density", density, "Furniture density in [0, 0.3]");
    gw->add_option("--out", out)->required();
    gw->add_option("--manifest-episodes", manifest_episodes,
                   "Evaluation start/goal pairs per world (manifest.txt)");

    auto* gd = app.add_subcommand("gen-dataset", "Expert demonstrations -> dataset");
    gd->add_option("--worlds", worlds)->required();
    gd->add_option("--episodes-per-world", episodes_per_world);
    gd->add_option("--out", out)->required();
    gd->add_option("--seed", seed);
    gd->add_option("--horizon", horizon);
    gd->add_option("--stride", stride);

    auto* tr = app.add_subcommand("train", "Train the diffusion policy");
    tr->add_option("--config", config)->required()->check(CLI::ExistingFile);
    tr->add_option("--data", data)->required()->check(CLI::ExistingFile);
    tr->add_option("--out", out)->required();

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint over a manifest");
    ev->add_option("--checkpoint", checkpoint,
                   "Checkpoint path, or builtin 'expert' / 'plan-astar'")->required();
    ev->add_option("--worlds", worlds)->required();
    ev->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
    ev->add_option("--localizer", localizer,
                   "gt|noisy-gt-low|noisy-gt-high|odom-drift|jump-outlier");
    ev->add_option("--taud", taud);
    ev->add_option("--tauc", tauc);
    ev->add_option("--seed", seed);
    ev->add_option("--out", out)->required();

    auto* rp = app.add_subcommand("report", "Metrics table from a records CSV");
    rp->add_option("--records", records)->required()->check(CLI::ExistingFile);
    rp->add_option("--format", format, "csv|md");
    rp->add_option("--taud", taud);
    rp->add_option("--tauc", tauc);

    auto* pl = app.add_subcommand("plot", "Trajectory plots from a records CSV");
    pl->add_option("--record", records)->required()->check(CLI::ExistingFile);
    pl->add_option("--worlds", worlds)->required();
    pl->add_option("--out", out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gw->parsed())
            return cmd_gen_worlds(seed, count, size, density, out, manifest_episodes);
        if (gd->parsed())
            return cmd_gen_dataset(worlds, episodes_per_world, out, seed, horizon, stride);
        if (tr->parsed()) return cmd_train(config, data, out);
        if (ev->parsed())
            return cmd_eval(checkpoint, worlds, manifest, localizer, taud, tauc, seed, out);
        if (rp->parsed()) return cmd_report(records, format, taud, tauc);
        if (pl->parsed()) return cmd_plot(records, worlds, out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
