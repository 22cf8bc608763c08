#include "glocnav/perception.hpp"

#include <cmath>

namespace glocnav {

DepthScan raycast_depth(const Pose& p, const FloorPlan& world, int ray_count,
                        double fov, double max_range) {
    if (p.frame != Frame::WORLD)
        throw std::invalid_argument("raycast_depth expects a WORLD pose");
    Cell c = world_to_cell(p.position(), world);
    if (world.occupied(c)) throw PerceptionError("raycast_depth: pose inside obstacle");
    DepthScan scan;
    scan.fov = fov;
    scan.max_range = max_range;
    scan.rays.resize(ray_count);
    double step = world.resolution_mu / 2.0;
    for (int i = 0; i < ray_count; ++i) {
        double frac = ray_count == 1 ? 0.5 : static_cast<double>(i) / (ray_count - 1);
        double ang = p.heading - fov / 2.0 + frac * fov;
        double dx = std::cos(ang), dy = std::sin(ang);
        double t = step;
        double reading = max_range;
        while (t < max_range) {
            double wx = p.x + t * dx;
            double wy = p.y + t * dy;
            double px = (wx - world.offset_x) / world.resolution_mu;
            double py = (wy - world.offset_y) / world.resolution_mu;
            int cx = static_cast<int>(std::lround(px));
            int cy = static_cast<int>(std::lround(py));
            if (!world.in_bounds(cx, cy) || world.occupied(cx, cy)) {
                reading = t;
                break;
            }
            t += step;
        }
        scan.rays[i] = reading;
    }
    return scan;
}

std::vector<double> downsample_occupancy(const FloorPlan& plan, int pool) {
    std::vector<double> out(static_cast<std::size_t>(pool) * pool, 0.0);
    for (int by = 0; by < pool; ++by) {
        int y0 = by * plan.height / pool;
        int y1 = std::max(y0 + 1, (by + 1) * plan.height / pool);
        for (int bx = 0; bx < pool; ++bx) {
            int x0 = bx * plan.width / pool;
            int x1 = std::max(x0 + 1, (bx + 1) * plan.width / pool);
            double acc = 0.0;
            int n = 0;
            for (int y = y0; y < y1 && y < plan.height; ++y)
                for (int x = x0; x < x1 && x < plan.width; ++x) {
                    acc += plan.occupied(x, y) ? 1.0 : 0.0;
                    ++n;
                }
            out[static_cast<std::size_t>(by) * pool + bx] = n ? acc / n : 0.0;
        }
    }
    return out;
}

PerceptionEncoder::PerceptionEncoder(tc::ParamStore& store, const PerceptionConfig& cfg,
                                     Rng& rng)
    : cfg_(cfg) {
    using tc::Tensor;
    int r = cfg.ray_count, d = cfg.embed_dim;
    auto s = [](int fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
    scan_w_ = store.add("percep.scan_embed.w", {r, d}, rng, s(r));
    scan_b_ = store.add_zeros("percep.scan_embed.b", {d});
    if (!cfg.raw_scan_embedding) {
        attn_.resize(cfg.attention_layers);
        for (int l = 0; l < cfg.attention_layers; ++l) {
            std::string p = "percep.attn" + std::to_string(l) + ".";
            attn_[l].wq = store.add(p + "wq", {d, d}, rng, s(d));
            attn_[l].wk = store.add(p + "wk", {d, d}, rng, s(d));
            attn_[l].wv = store.add(p + "wv", {d, d}, rng, s(d));
            attn_[l].wo = store.add(p + "wo", {d, d}, rng, s(d));
        }
    }
    int pp = cfg.plan_pool * cfg.plan_pool;
    plan_w1_ = store.add("percep.plan.w1", {pp, cfg.plan_feat_dim}, rng, s(pp));
    plan_b1_ = store.add_zeros("percep.plan.b1", {cfg.plan_feat_dim});
    plan_w2_ = store.add("percep.plan.w2", {cfg.plan_feat_dim, cfg.plan_feat_dim}, rng,
                         s(cfg.plan_feat_dim));
    plan_b2_ = store.add_zeros("percep.plan.b2", {cfg.plan_feat_dim});
    int cue_in = d + cfg.plan_feat_dim + 4;
    cue_w1_ = store.add("percep.cue.w1", {cue_in, cfg.cue_hidden}, rng, s(cue_in));
    cue_b1_ = store.add_zeros("percep.cue.b1", {cfg.cue_hidden});
    cue_w2_ = store.add("percep.cue.w2", {cfg.cue_hidden, cfg.cue_dim}, rng,
                        s(cfg.cue_hidden));
    cue_b2_ = store.add_zeros("percep.cue.b2", {cfg.cue_dim});
}

PerceptionEncoder::PerceptionEncoder(tc::ParamStore& store, const PerceptionConfig& cfg)
    : cfg_(cfg) {
    bind(store);
}

void PerceptionEncoder::bind(tc::ParamStore& store) {
    scan_w_ = store.get("percep.scan_embed.w");
    scan_b_ = store.get("percep.scan_embed.b");
    if (!cfg_.raw_scan_embedding) {
        attn_.resize(cfg_.attention_layers);
        for (int l = 0; l < cfg_.attention_layers; ++l) {
            std::string p = "percep.attn" + std::to_string(l) + ".";
            attn_[l].wq = store.get(p + "wq");
            attn_[l].wk = store.get(p + "wk");
            attn_[l].wv = store.get(p + "wv");
            attn_[l].wo = store.get(p + "wo");
        }
    }
    plan_w1_ = store.get("percep.plan.w1");
    plan_b1_ = store.get("percep.plan.b1");
    plan_w2_ = store.get("percep.plan.w2");
    plan_b2_ = store.get("percep.plan.b2");
    cue_w1_ = store.get("percep.cue.w1");
    cue_b1_ = store.get("percep.cue.b1");
    cue_w2_ = store.get("percep.cue.w2");
    cue_b2_ = store.get("percep.cue.b2");
}

tc::Tensor PerceptionEncoder::fuse_history(const ObservationHistory& h) const {
    using namespace tc;
    if (!h.complete()) throw PerceptionError("fuse_history: incomplete history");
    int r = cfg_.ray_count;
    if (cfg_.raw_scan_embedding) {
        // Ablation path: depth-blind. The scan content is discarded so the
        // cue carries only pose and floor-plan information; the embedding
        // layer is kept so the parameter layout matches the full model.
        const DepthScan& s = h.scans.back();
        if (static_cast<int>(s.rays.size()) != r)
            throw PerceptionError("fuse_history: unexpected ray count");
        std::vector<Scalar> row(r, 0.0);
        Tensor x = Tensor::from({1, r}, std::move(row));
        Tensor e = add_row_bias(matmul(x, scan_w_), scan_b_);
        return reshape(e, {cfg_.embed_dim});
    }
    std::vector<Scalar> rows(static_cast<std::size_t>(kHistoryLength) * r);
    for (int i = 0; i < kHistoryLength; ++i) {
        const DepthScan& s = h.scans[i];
        if (static_cast<int>(s.rays.size()) != r)
            throw PerceptionError("fuse_history: unexpected ray count");
        for (int j = 0; j < r; ++j)
            rows[static_cast<std::size_t>(i) * r + j] = s.rays[j] / s.max_range;
    }
    Tensor x = Tensor::from({kHistoryLength, r}, std::move(rows));
    Tensor e = add_row_bias(matmul(x, scan_w_), scan_b_);
    for (const AttnLayer& layer : attn_) {
        Tensor q = matmul(e, layer.wq);
        Tensor k = matmul(e, layer.wk);
        Tensor v = matmul(e, layer.wv);
        Tensor o = matmul(scaled_dot_attention(q, k, v, cfg_.attention_heads), layer.wo);
        e = add(e, o);  // residual
    }
    return mean_rows(e);
}

tc::Tensor PerceptionEncoder::encode_plan_input(const std::vector<double>& pooled) const {
    using namespace tc;
    int pp = cfg_.plan_pool * cfg_.plan_pool;
    if (static_cast<int>(pooled.size()) != pp)
        throw PerceptionError("encode_plan_input: wrong pooled size");
    Tensor x = Tensor::from({1, pp}, std::vector<Scalar>(pooled.begin(), pooled.end()));
    Tensor h = silu(add_row_bias(matmul(x, plan_w1_), plan_b1_));
    Tensor y = add_row_bias(matmul(h, plan_w2_), plan_b2_);
    return reshape(y, {cfg_.plan_feat_dim});
}

tc::Tensor PerceptionEncoder::encode_floorplan(const FloorPlan& plan) const {
    return encode_plan_input(downsample_occupancy(plan, cfg_.plan_pool));
}

tc::Tensor PerceptionEncoder::local_cue(const tc::Tensor& fused,
                                        const tc::Tensor& plan_feat,
                                        const Pose& pose) const {
    using namespace tc;
    if (fused.dim(0) != cfg_.embed_dim || plan_feat.dim(0) != cfg_.plan_feat_dim)
        throw ConfigError("local_cue: feature dimensions do not match config");
    Tensor pose_t = Tensor::from(
        {4}, {pose.x, pose.y, std::cos(pose.heading), std::sin(pose.heading)});
    Tensor cat = concat_vec({fused, plan_feat, pose_t});
    Tensor x = reshape(cat, {1, cat.dim(0)});
    Tensor h = silu(add_row_bias(matmul(x, cue_w1_), cue_b1_));
    Tensor y = add_row_bias(matmul(h, cue_w2_), cue_b2_);
    return reshape(y, {cfg_.cue_dim});
}

LocalCue PerceptionEncoder::compute_cue(const ObservationHistory& h,
                                        const std::vector<double>& pooled_plan,
                                        const Pose& pose) const {
    tc::Tensor fused = fuse_history(h);
    tc::Tensor pf = encode_plan_input(pooled_plan);
    tc::Tensor c = local_cue(fused, pf, pose);
    return LocalCue{c.data()};
}

}  // namespace glocnav
