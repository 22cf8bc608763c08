#include "glocnav/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace glocnav {

using tc::Scalar;
using tc::Tensor;

NoiseSchedule make_schedule(int k_steps) {
    if (k_steps < 1) throw std::invalid_argument("make_schedule: K must be >= 1");
    NoiseSchedule s;
    s.steps = k_steps;
    s.alpha_bar.resize(k_steps + 1);
    s.betas.resize(k_steps);
    const double off = 0.008;
    auto f = [&](double k) {
        double x = ((k / k_steps) + off) / (1.0 + off) * (kPi / 2.0);
        double c = std::cos(x);
        return c * c;
    };
    double f0 = f(0.0);
    for (int k = 0; k <= k_steps; ++k) s.alpha_bar[k] = f(k) / f0;
    for (int k = 1; k <= k_steps; ++k) {
        double beta = 1.0 - s.alpha_bar[k] / s.alpha_bar[k - 1];
        // Clip only the reverse-process betas; alpha_bar stays exact so the
        // forward corruption follows the closed form at every k.
        s.betas[k - 1] = std::min(beta, 0.999);
    }
    return s;
}

std::pair<ActionSequence, ActionSequence> forward_diffuse(const ActionSequence& a0, int k,
                                                          const NoiseSchedule& sched,
                                                          Rng& rng) {
    if (k < 0 || k > sched.steps)
        throw std::invalid_argument("forward_diffuse: k outside [0, K]");
    double ab = sched.alpha_bar[k];
    double c0 = std::sqrt(ab);
    double c1 = std::sqrt(1.0 - ab);
    ActionSequence ak, eps;
    ak.waypoints.reserve(a0.waypoints.size());
    eps.waypoints.reserve(a0.waypoints.size());
    for (const Vec2& w : a0.waypoints) {
        Vec2 e{rng.normal(), rng.normal()};
        eps.waypoints.push_back(e);
        ak.waypoints.push_back({c0 * w.x + c1 * e.x, c0 * w.y + c1 * e.y});
    }
    return {ak, eps};
}

ActionSequence ddpm_posterior_step(const ActionSequence& ak, const ActionSequence& eps,
                                   int k, const NoiseSchedule& sched,
                                   const ActionSequence& z) {
    if (k < 1 || k > sched.steps)
        throw std::invalid_argument("ddpm_posterior_step: k outside [1, K]");
    double beta = sched.betas[k - 1];
    double alpha = 1.0 - beta;
    double ab_k = sched.alpha_bar[k];
    double ab_prev = sched.alpha_bar[k - 1];
    double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    double eps_coef = beta / std::sqrt(1.0 - ab_k);
    double sigma = k > 1 ? std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab_k)) : 0.0;
    ActionSequence out;
    out.waypoints.resize(ak.waypoints.size());
    for (std::size_t i = 0; i < ak.waypoints.size(); ++i) {
        out.waypoints[i].x = inv_sqrt_alpha * (ak.waypoints[i].x - eps_coef * eps.waypoints[i].x) +
                             sigma * z.waypoints[i].x;
        out.waypoints[i].y = inv_sqrt_alpha * (ak.waypoints[i].y - eps_coef * eps.waypoints[i].y) +
                             sigma * z.waypoints[i].y;
    }
    return out;
}

// ---------------------------------------------------------------- UNet

namespace {
Scalar he_scale(int fan_in) { return 1.0 / std::sqrt(static_cast<Scalar>(fan_in)); }

Tensor linear_vec(const Tensor& x, const Tensor& w, const Tensor& b) {
    // x: [n], w: [n,m], b: [m] -> [m]
    Tensor row = tc::reshape(x, {1, x.dim(0)});
    return tc::reshape(tc::add_row_bias(tc::matmul(row, w), b), {w.shape()[1]});
}
}  // namespace

UNet::ResBlock UNet::make_res(tc::ParamStore& s, const std::string& p, int cin, int cout,
                              Rng& rng) {
    ResBlock r;
    r.w1 = s.add(p + "w1", {cout, cin, 3}, rng, he_scale(cin * 3));
    r.b1 = s.add_zeros(p + "b1", {cout});
    r.w2 = s.add(p + "w2", {cout, cout, 3}, rng, he_scale(cout * 3));
    r.b2 = s.add_zeros(p + "b2", {cout});
    r.wskip = s.add(p + "wskip", {cout, cin, 1}, rng, he_scale(cin));
    r.bskip = s.add_zeros(p + "bskip", {cout});
    return r;
}

UNet::ResBlock UNet::bind_res(tc::ParamStore& s, const std::string& p) {
    ResBlock r;
    r.w1 = s.get(p + "w1");
    r.b1 = s.get(p + "b1");
    r.w2 = s.get(p + "w2");
    r.b2 = s.get(p + "b2");
    r.wskip = s.get(p + "wskip");
    r.bskip = s.get(p + "bskip");
    return r;
}

UNet::Module UNet::make_module(tc::ParamStore& s, const std::string& p, int cin, int cout,
                               int cond_dim, Rng& rng) {
    Module m;
    m.a = make_res(s, p + "a.", cin, cout, rng);
    m.b = make_res(s, p + "b.", cout, cout, rng);
    m.cond_w = s.add(p + "cond.w", {cond_dim, cout}, rng, he_scale(cond_dim));
    m.cond_b = s.add_zeros(p + "cond.b", {cout});
    return m;
}

UNet::Module UNet::bind_module(tc::ParamStore& s, const std::string& p) {
    Module m;
    m.a = bind_res(s, p + "a.");
    m.b = bind_res(s, p + "b.");
    m.cond_w = s.get(p + "cond.w");
    m.cond_b = s.get(p + "cond.b");
    return m;
}

UNet::UNet(tc::ParamStore& store, const DiffusionConfig& cfg, int local_cue_dim, Rng& rng)
    : cfg_(cfg), cl_dim_(local_cue_dim) {
    if (cfg.horizon % 4 != 0)
        throw tc::ConfigError("UNet: horizon must be divisible by 4");
    int dc = local_cue_dim + cfg.temb_dim;
    temb_w1_ = store.add("unet.temb.w1", {cfg.temb_dim, cfg.temb_dim}, rng,
                         he_scale(cfg.temb_dim));
    temb_b1_ = store.add_zeros("unet.temb.b1", {cfg.temb_dim});
    temb_w2_ = store.add("unet.temb.w2", {cfg.temb_dim, cfg.temb_dim}, rng,
                         he_scale(cfg.temb_dim));
    temb_b2_ = store.add_zeros("unet.temb.b2", {cfg.temb_dim});
    d1_ = make_module(store, "unet.d1.", 2, cfg.c1, dc, rng);
    down2_w_ = store.add("unet.down2.w", {cfg.c1, cfg.c1, 3}, rng, he_scale(cfg.c1 * 3));
    down2_b_ = store.add_zeros("unet.down2.b", {cfg.c1});
    d2_ = make_module(store, "unet.d2.", cfg.c1, cfg.c2, dc, rng);
    down3_w_ = store.add("unet.down3.w", {cfg.c2, cfg.c2, 3}, rng, he_scale(cfg.c2 * 3));
    down3_b_ = store.add_zeros("unet.down3.b", {cfg.c2});
    d3_ = make_module(store, "unet.d3.", cfg.c2, cfg.c3, dc, rng);
    mid_ = make_module(store, "unet.mid.", cfg.c3, cfg.c3, dc, rng);
    u1_ = make_module(store, "unet.u1.", cfg.c3 + cfg.c2, cfg.c2, dc, rng);
    u2_ = make_module(store, "unet.u2.", cfg.c2 + cfg.c1, cfg.c1, dc, rng);
    final_w_ = store.add("unet.final.w", {2, cfg.c1, 3}, rng, he_scale(cfg.c1 * 3));
    final_b_ = store.add_zeros("unet.final.b", {2});

    int cue_in = 2 * cfg.cue_horizon + cfg.temb_dim;
    int cb = cfg.cue_block_dim;
    cue_in_w_ = store.add("unet.cue.in.w", {cue_in, cb}, rng, he_scale(cue_in));
    cue_in_b_ = store.add_zeros("unet.cue.in.b", {cb});
    cue_r1a_ = store.add("unet.cue.r1.wa", {cb, cb}, rng, he_scale(cb));
    cue_r1a_b_ = store.add_zeros("unet.cue.r1.ba", {cb});
    cue_r1b_ = store.add("unet.cue.r1.wb", {cb, cb}, rng, he_scale(cb));
    cue_r1b_b_ = store.add_zeros("unet.cue.r1.bb", {cb});
    cue_r2a_ = store.add("unet.cue.r2.wa", {cb, cb}, rng, he_scale(cb));
    cue_r2a_b_ = store.add_zeros("unet.cue.r2.ba", {cb});
    cue_r2b_ = store.add("unet.cue.r2.wb", {cb, cb}, rng, he_scale(cb));
    cue_r2b_b_ = store.add_zeros("unet.cue.r2.bb", {cb});
    f1_w_ = store.add("unet.cue.f1.w", {cb, cfg.c1}, rng, he_scale(cb));
    f1_b_ = store.add_zeros("unet.cue.f1.b", {cfg.c1});
    f2_w_ = store.add("unet.cue.f2.w", {cb, cfg.c1}, rng, he_scale(cb));
    f2_b_ = store.add_zeros("unet.cue.f2.b", {cfg.c1});
}

UNet::UNet(tc::ParamStore& store, const DiffusionConfig& cfg, int local_cue_dim)
    : cfg_(cfg), cl_dim_(local_cue_dim) {
    temb_w1_ = store.get("unet.temb.w1");
    temb_b1_ = store.get("unet.temb.b1");
    temb_w2_ = store.get("unet.temb.w2");
    temb_b2_ = store.get("unet.temb.b2");
    d1_ = bind_module(store, "unet.d1.");
    down2_w_ = store.get("unet.down2.w");
    down2_b_ = store.get("unet.down2.b");
    d2_ = bind_module(store, "unet.d2.");
    down3_w_ = store.get("unet.down3.w");
    down3_b_ = store.get("unet.down3.b");
    d3_ = bind_module(store, "unet.d3.");
    mid_ = bind_module(store, "unet.mid.");
    u1_ = bind_module(store, "unet.u1.");
    u2_ = bind_module(store, "unet.u2.");
    final_w_ = store.get("unet.final.w");
    final_b_ = store.get("unet.final.b");
    cue_in_w_ = store.get("unet.cue.in.w");
    cue_in_b_ = store.get("unet.cue.in.b");
    cue_r1a_ = store.get("unet.cue.r1.wa");
    cue_r1a_b_ = store.get("unet.cue.r1.ba");
    cue_r1b_ = store.get("unet.cue.r1.wb");
    cue_r1b_b_ = store.get("unet.cue.r1.bb");
    cue_r2a_ = store.get("unet.cue.r2.wa");
    cue_r2a_b_ = store.get("unet.cue.r2.ba");
    cue_r2b_ = store.get("unet.cue.r2.wb");
    cue_r2b_b_ = store.get("unet.cue.r2.bb");
    f1_w_ = store.get("unet.cue.f1.w");
    f1_b_ = store.get("unet.cue.f1.b");
    f2_w_ = store.get("unet.cue.f2.w");
    f2_b_ = store.get("unet.cue.f2.b");
}

Tensor UNet::run_res(const ResBlock& r, const Tensor& x) const {
    Tensor h = tc::silu(tc::conv1d(x, r.w1, r.b1, 1));
    h = tc::silu(tc::conv1d(h, r.w2, r.b2, 1));
    return tc::add(h, tc::conv1d(x, r.wskip, r.bskip, 1));
}

Tensor UNet::run_module(const Module& m, const Tensor& x, const Tensor& cond,
                        const Tensor* extra) const {
    Tensor a = run_res(m.a, x);
    a = tc::add_channel_bias(a, linear_vec(cond, m.cond_w, m.cond_b));
    if (extra && cfg_.cue_injection_block == 1) a = tc::add_channel_bias(a, *extra);
    Tensor b = run_res(m.b, a);
    if (extra && cfg_.cue_injection_block == 2) b = tc::add_channel_bias(b, *extra);
    return b;
}

Tensor UNet::predict(const Tensor& actions, const Tensor& local_cue,
                     const std::vector<Vec2>& cue_points, int k) const {
    using namespace tc;
    if (actions.shape().size() != 2 || actions.dim(0) != cfg_.horizon || actions.dim(1) != 2)
        throw ConfigError("UNet::predict: actions must be [H,2]");
    if (local_cue.dim(0) != cl_dim_)
        throw ConfigError("UNet::predict: local cue dimension mismatch");
    if (static_cast<int>(cue_points.size()) != cfg_.cue_horizon)
        throw ConfigError("UNet::predict: cue point count mismatch");

    Tensor temb_in = Tensor::from({cfg_.temb_dim}, sinusoidal_embedding(k, cfg_.temb_dim));
    Tensor temb = linear_vec(silu(linear_vec(temb_in, temb_w1_, temb_b1_)), temb_w2_, temb_b2_);
    Tensor cond = concat_vec({local_cue, temb});

    std::vector<Scalar> cue_flat;
    cue_flat.reserve(2 * cue_points.size());
    for (const Vec2& p : cue_points) {
        cue_flat.push_back(p.x);
        cue_flat.push_back(p.y);
    }
    Tensor g = concat_vec({Tensor::from({2 * cfg_.cue_horizon}, std::move(cue_flat)), temb});
    g = linear_vec(g, cue_in_w_, cue_in_b_);
    Tensor r1 = add(g, linear_vec(silu(linear_vec(g, cue_r1a_, cue_r1a_b_)), cue_r1b_, cue_r1b_b_));
    Tensor r2 = add(r1, linear_vec(silu(linear_vec(r1, cue_r2a_, cue_r2a_b_)), cue_r2b_, cue_r2b_b_));
    Tensor f1 = linear_vec(r1, f1_w_, f1_b_);
    Tensor f2 = linear_vec(r2, f2_w_, f2_b_);

    // [H,2] -> [2,H]
    Tensor x = transpose2(actions);
    Tensor d1o = run_module(d1_, x, cond, &f2);
    Tensor h = conv1d(d1o, down2_w_, down2_b_, 2);
    Tensor d2o = run_module(d2_, h, cond, nullptr);
    h = conv1d(d2o, down3_w_, down3_b_, 2);
    Tensor d3o = run_module(d3_, h, cond, nullptr);
    Tensor m = run_module(mid_, d3o, cond, nullptr);
    Tensor u = concat_channels(upsample_nearest2(m), d2o);
    Tensor u1o = run_module(u1_, u, cond, nullptr);
    u = concat_channels(upsample_nearest2(u1o), d1o);
    Tensor u2o = run_module(u2_, u, cond, &f1);
    Tensor out = conv1d(u2o, final_w_, final_b_, 1);
    return transpose2(out);
}

// ---------------------------------------------------------------- policy

PolicyModel PolicyModel::create(const DiffusionConfig& dcfg, const PerceptionConfig& pcfg,
                                Rng& rng) {
    PolicyModel m;
    m.dcfg = dcfg;
    m.pcfg = pcfg;
    if (dcfg.variant == PolicyVariant::NoDepth) m.pcfg.raw_scan_embedding = true;
    m.sched = make_schedule(dcfg.k_steps);
    m.perception = std::make_unique<PerceptionEncoder>(m.store, m.pcfg, rng);
    m.unet = std::make_unique<UNet>(m.store, dcfg, m.pcfg.cue_dim, rng);
    return m;
}

namespace {
void put_cfg(tc::ParamStore& s, const std::string& name, double v) {
    s.put(name, Tensor::from({1}, {v}));
}
double get_cfg(const tc::ParamStore& s, const std::string& name) {
    return s.get(name).item();
}
}  // namespace

void PolicyModel::save(const std::string& path) const {
    tc::ParamStore out;
    put_cfg(out, "cfg.horizon", dcfg.horizon);
    put_cfg(out, "cfg.cue_horizon", dcfg.cue_horizon);
    put_cfg(out, "cfg.k_steps", dcfg.k_steps);
    put_cfg(out, "cfg.c1", dcfg.c1);
    put_cfg(out, "cfg.c2", dcfg.c2);
    put_cfg(out, "cfg.c3", dcfg.c3);
    put_cfg(out, "cfg.temb_dim", dcfg.temb_dim);
    put_cfg(out, "cfg.cue_block_dim", dcfg.cue_block_dim);
    put_cfg(out, "cfg.action_scale", dcfg.action_scale);
    put_cfg(out, "cfg.cue_injection_block", dcfg.cue_injection_block);
    put_cfg(out, "cfg.variant", static_cast<double>(dcfg.variant));
    put_cfg(out, "cfg.ray_count", pcfg.ray_count);
    put_cfg(out, "cfg.fov", pcfg.fov);
    put_cfg(out, "cfg.max_range", pcfg.max_range);
    put_cfg(out, "cfg.embed_dim", pcfg.embed_dim);
    put_cfg(out, "cfg.attention_heads", pcfg.attention_heads);
    put_cfg(out, "cfg.attention_layers", pcfg.attention_layers);
    put_cfg(out, "cfg.plan_feat_dim", pcfg.plan_feat_dim);
    put_cfg(out, "cfg.plan_pool", pcfg.plan_pool);
    put_cfg(out, "cfg.cue_dim", pcfg.cue_dim);
    put_cfg(out, "cfg.cue_hidden", pcfg.cue_hidden);
    for (const auto& name : store.names()) out.put(name, store.get(name));
    out.save(path);
}

PolicyModel PolicyModel::load(const std::string& path) {
    PolicyModel m;
    m.store.load(path);
    const tc::ParamStore& s = m.store;
    m.dcfg.horizon = static_cast<int>(get_cfg(s, "cfg.horizon"));
    m.dcfg.cue_horizon = static_cast<int>(get_cfg(s, "cfg.cue_horizon"));
    m.dcfg.k_steps = static_cast<int>(get_cfg(s, "cfg.k_steps"));
    m.dcfg.c1 = static_cast<int>(get_cfg(s, "cfg.c1"));
    m.dcfg.c2 = static_cast<int>(get_cfg(s, "cfg.c2"));
    m.dcfg.c3 = static_cast<int>(get_cfg(s, "cfg.c3"));
    m.dcfg.temb_dim = static_cast<int>(get_cfg(s, "cfg.temb_dim"));
    m.dcfg.cue_block_dim = static_cast<int>(get_cfg(s, "cfg.cue_block_dim"));
    m.dcfg.action_scale = get_cfg(s, "cfg.action_scale");
    m.dcfg.cue_injection_block = static_cast<int>(get_cfg(s, "cfg.cue_injection_block"));
    m.dcfg.variant = static_cast<PolicyVariant>(static_cast<int>(get_cfg(s, "cfg.variant")));
    m.pcfg.ray_count = static_cast<int>(get_cfg(s, "cfg.ray_count"));
    m.pcfg.fov = get_cfg(s, "cfg.fov");
    m.pcfg.max_range = get_cfg(s, "cfg.max_range");
    m.pcfg.embed_dim = static_cast<int>(get_cfg(s, "cfg.embed_dim"));
    m.pcfg.attention_heads = static_cast<int>(get_cfg(s, "cfg.attention_heads"));
    m.pcfg.attention_layers = static_cast<int>(get_cfg(s, "cfg.attention_layers"));
    m.pcfg.plan_feat_dim = static_cast<int>(get_cfg(s, "cfg.plan_feat_dim"));
    m.pcfg.plan_pool = static_cast<int>(get_cfg(s, "cfg.plan_pool"));
    m.pcfg.cue_dim = static_cast<int>(get_cfg(s, "cfg.cue_dim"));
    m.pcfg.cue_hidden = static_cast<int>(get_cfg(s, "cfg.cue_hidden"));
    m.pcfg.raw_scan_embedding = m.dcfg.variant == PolicyVariant::NoDepth;
    m.sched = make_schedule(m.dcfg.k_steps);
    m.perception = std::make_unique<PerceptionEncoder>(m.store, m.pcfg);
    m.unet = std::make_unique<UNet>(m.store, m.dcfg, m.pcfg.cue_dim);
    return m;
}

namespace {
Tensor actions_to_tensor(const ActionSequence& a) {
    std::vector<Scalar> flat;
    flat.reserve(2 * a.waypoints.size());
    for (const Vec2& w : a.waypoints) {
        flat.push_back(w.x);
        flat.push_back(w.y);
    }
    return Tensor::from({static_cast<int>(a.waypoints.size()), 2}, std::move(flat));
}

ActionSequence tensor_to_actions(const Tensor& t) {
    ActionSequence a;
    a.waypoints.resize(t.dim(0));
    for (int i = 0; i < t.dim(0); ++i)
        a.waypoints[i] = {t.data()[2 * i], t.data()[2 * i + 1]};
    return a;
}
}  // namespace

tc::Tensor predict_noise(const PolicyModel& model, const ActionSequence& ak_scaled,
                         const tc::Tensor& local_cue, const std::vector<Vec2>& cue_points,
                         int k) {
    return model.unet->predict(actions_to_tensor(ak_scaled), local_cue, cue_points, k);
}

ActionSequence denoise_step(const PolicyModel& model, const ActionSequence& ak_scaled,
                            const tc::Tensor& local_cue, const std::vector<Vec2>& cue_points,
                            int k, Rng& rng) {
    Tensor eps = predict_noise(model, ak_scaled, local_cue, cue_points, k);
    ActionSequence z;
    z.waypoints.resize(ak_scaled.waypoints.size());
    if (k > 1)
        for (Vec2& v : z.waypoints) v = {rng.normal(), rng.normal()};
    return ddpm_posterior_step(ak_scaled, tensor_to_actions(eps), k, model.sched, z);
}

ActionSequence sample_actions(const PolicyModel& model, const tc::Tensor& local_cue,
                              const std::vector<Vec2>& cue_points, Rng& rng) {
    ActionSequence a;
    a.waypoints.resize(model.dcfg.horizon);
    for (Vec2& v : a.waypoints) v = {rng.normal(), rng.normal()};
    for (int k = model.sched.steps; k >= 1; --k)
        a = denoise_step(model, a, local_cue, cue_points, k, rng);
    for (Vec2& v : a.waypoints) v = model.dcfg.action_scale * v;
    return a;
}

// ---------------------------------------------------------------- training

std::vector<Vec2> directional_cue_points(const FloorPlan& plan, const Pose& believed,
                                         Vec2 goal, int horizon, PolicyVariant variant) {
    auto goal_cue = [&]() {
        Vec2 g = world_to_agent(goal, believed);
        return std::vector<Vec2>(horizon, g);
    };
    if (variant == PolicyVariant::NoPath) return goal_cue();
    try {
        Pose px = world_to_px(believed, plan);
        Cell start{static_cast<int>(std::lround(px.x)), static_cast<int>(std::lround(px.y))};
        auto snapped = snap_to_free(start, plan);
        auto goal_cell = snap_to_free(world_to_cell(goal, plan), plan);
        if (!snapped || !goal_cell) return goal_cue();
        Pose start_pose(snapped->x, snapped->y, px.heading, Frame::PIXEL);
        PixelPath path = astar_shortest_path(start_pose, *goal_cell, plan);
        return build_directional_cue(path, plan, believed, horizon).points;
    } catch (const std::exception&) {
        // Believed pose out of the map or goal unreachable on the plan.
        return goal_cue();
    }
}

TrainingResult training_run(PolicyModel& model, const TrainingDataset& dataset,
                            const TrainConfig& cfg) {
    if (dataset.samples.empty())
        throw tc::ConfigError("training_run: empty dataset");
    Rng rng = make_root_rng(cfg.seed);
    PerturbationSchedule psched{cfg.alpha, cfg.epochs};
    TrainingResult result;
    std::vector<std::size_t> order(dataset.samples.size());
    std::iota(order.begin(), order.end(), 0);

    // Exponential moving average of the weights; the averaged parameters
    // become the deployed model. Substantially reduces run-to-run variance
    // of the sampled behavior.
    const bool use_ema = cfg.ema_decay > 0.0;
    std::vector<std::vector<tc::Scalar>> ema;
    if (use_ema) {
        ema.reserve(model.store.names().size());
        for (const auto& nm : model.store.names())
            ema.push_back(model.store.get(nm).data());
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = tc::cosine_lr(epoch, cfg.lr_max, cfg.epochs);
        double bound = cfg.perturbation ? perturbation_bound(epoch, psched) : 0.0;
        // Fisher-Yates with the run rng.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.next_below(i)]);

        double epoch_loss = 0.0;
        std::size_t done = 0;
        while (done < order.size()) {
            std::size_t batch_end = std::min(done + cfg.batch, order.size());
            int bsize = static_cast<int>(batch_end - done);
            model.store.zero_grads();
            for (std::size_t bi = done; bi < batch_end; ++bi) {
                const TrainingSample& sample = dataset.samples[order[bi]];
                const FloorPlan& plan = dataset.plans[sample.world];
                Pose pose = sample.pose;
                if (cfg.perturbation)
                    pose = perturb_pose(pose, rng, cfg.pose_noise_std, cfg.heading_noise_std);
                std::vector<Vec2> cue = directional_cue_points(
                    plan, pose, sample.goal, model.dcfg.cue_horizon, model.dcfg.variant);
                if (cfg.perturbation && bound > 0.0) {
                    DirectionalCue dc{cue};
                    cue = perturb_path(dc, bound, rng).points;
                }
                Tensor cl = model.perception->local_cue(
                    model.perception->fuse_history(sample.history),
                    model.perception->encode_plan_input(dataset.pooled[sample.world]), pose);

                ActionSequence a0;
                a0.waypoints.reserve(sample.expert_deltas.size());
                for (const Vec2& d : sample.expert_deltas)
                    a0.waypoints.push_back((1.0 / model.dcfg.action_scale) * d);
                int k = 1 + static_cast<int>(rng.next_below(model.sched.steps));
                auto [ak, eps] = forward_diffuse(a0, k, model.sched, rng);
                Tensor eps_pred = predict_noise(model, ak, cl, cue, k);
                Tensor loss = tc::mse_loss(eps_pred, actions_to_tensor(eps));
                epoch_loss += loss.item();
                tc::backward(tc::scale(loss, 1.0 / bsize));
            }
            model.store.adamw_step(lr);
            if (use_ema) {
                const double d = cfg.ema_decay;
                const auto& names = model.store.names();
                for (std::size_t pi = 0; pi < names.size(); ++pi) {
                    const auto& v = model.store.get(names[pi]).data();
                    auto& s = ema[pi];
                    for (std::size_t j = 0; j < s.size(); ++j)
                        s[j] = d * s[j] + (1.0 - d) * v[j];
                }
            }
            done = batch_end;
        }
        result.epoch_loss.push_back(epoch_loss / dataset.samples.size());
    }
    if (use_ema) {
        const auto& names = model.store.names();
        for (std::size_t pi = 0; pi < names.size(); ++pi)
            model.store.get(names[pi]).data() = ema[pi];
    }
    return result;
}

}  // namespace glocnav
