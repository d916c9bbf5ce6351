// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "rayrope/errors.hpp"
#include "rayrope/parallel.hpp"

namespace rayrope {

namespace fs = std::filesystem;

double psnr_from_mse(double mse) {
    if (mse <= 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double capped_psnr(double psnr) { return std::min(psnr, 99.0); }

namespace {

std::ofstream open_csv(const fs::path& path, const RunConfig& cfg, const std::string& header) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << "# config_hash=" << cfg.hash() << " seed=" << cfg.seed << "\n";
    f << header << "\n";
    return f;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

ModelSample to_model_sample(const SceneSample& s, int target_index) {
    ModelSample m;
    m.cameras = s.cameras;
    m.images = s.images;
    m.depths = s.depths;
    m.target_index = target_index;
    return m;
}

double sample_mse(std::span<const double> pred, std::span<const double> target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

} // namespace

GenDataOutcome run_gen_data(const RunConfig& cfg) {
    DatasetParams params;
    params.num_scenes = cfg.dataset.num_scenes;
    params.views_per_scene = cfg.dataset.views_per_scene;
    params.image_size = cfg.dataset.image_size;
    params.fov_min_deg = cfg.dataset.fov_min_deg;
    params.fov_max_deg = cfg.dataset.fov_max_deg;
    params.radius_min = cfg.dataset.radius_min;
    params.radius_max = cfg.dataset.radius_max;
    params.randomize_world_frame = cfg.dataset.randomize_world_frame;
    params.seed = cfg.seed;
    params.config_hash = cfg.hash();
    set_parallel_threads(cfg.threads);

    GenDataOutcome out;
    out.dir = cfg.dataset.path;
    out.summary = make_dataset(params, out.dir);
    return out;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::int64_t t = 0;
};

template <class T>
void adam_step(std::vector<std::pair<std::string, Tensor<T>>>& params, AdamState& state,
               double lr, double beta1, double beta2, double grad_scale) {
    constexpr double eps = 1e-8;
    if (state.m.empty()) {
        for (auto& [name, p] : params) {
            state.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
            state.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        }
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].second;
        auto vals = p.mutable_values();
        const auto grads = p.grad();
        for (std::size_t k = 0; k < vals.size(); ++k) {
            const double g = (grads.empty() ? 0.0 : static_cast<double>(grads[k])) * grad_scale;
            auto& m = state.m[i][k];
            auto& v = state.v[i][k];
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            vals[k] = static_cast<T>(static_cast<double>(vals[k]) -
                                     lr * (m / c1) / (std::sqrt(v / c2) + eps));
        }
        p.zero_grad();
    }
}

std::vector<SceneSample> load_split(const RunConfig& cfg, const std::string& split) {
    const auto dirs = list_scene_dirs(cfg.dataset.path, split);
    if (dirs.empty())
        throw config_error("no '" + split + "' scenes under " + cfg.dataset.path +
                           " (run gen-data first)");
    std::vector<SceneSample> out;
    out.reserve(dirs.size());
    for (const auto& d : dirs) out.push_back(load_scene_dir(d));
    return out;
}

/// PSNR of predicting `image` for every validation target.
double constant_image_psnr(const Image& image, const std::vector<SceneSample>& val,
                           const TokenGrid& grid) {
    const std::vector<double> pred = patchify_rgb(image, grid);
    double acc = 0.0;
    for (const auto& s : val) {
        const std::vector<double> target = patchify_rgb(s.images[static_cast<std::size_t>(s.target_index)], grid);
        acc += capped_psnr(psnr_from_mse(sample_mse(pred, target)));
    }
    return acc / static_cast<double>(val.size());
}

template <class T>
double validation_psnr(ToyModel<T>& model, const std::vector<SceneSample>& val, std::size_t limit) {
    const std::size_t n = limit == 0 ? val.size() : std::min(limit, val.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ForwardResult<T> fwd = toy_forward(model, to_model_sample(val[i], val[i].target_index));
        std::vector<double> pred(fwd.prediction.values().begin(), fwd.prediction.values().end());
        acc += capped_psnr(psnr_from_mse(sample_mse(pred, fwd.target)));
    }
    return acc / static_cast<double>(n);
}

template <class T>
TrainOutcome train_impl(const RunConfig& cfg) {
    set_parallel_threads(cfg.threads);
    const std::vector<SceneSample> train = load_split(cfg, "train");
    const std::vector<SceneSample> val = load_split(cfg, "val");
    if (cfg.model.image_size != cfg.dataset.image_size)
        throw config_error("model.image_size must match dataset.image_size");
    const TokenGrid grid = cfg.model.grid();

    ToyModel<T> model = init_toy_model<T>(cfg.model, cfg.encoding, cfg.seed);
    auto params = model.named_params();
    AdamState adam;
    std::mt19937_64 rng(cfg.seed ^ 0x5851f42d4c957f2dULL);

    // Baseline: mean of the training targets.
    Image mean_img = Image::make(grid.image_size, grid.image_size, 3);
    for (const auto& s : train) {
        const Image& img = s.images[static_cast<std::size_t>(s.target_index)];
        for (std::size_t i = 0; i < mean_img.data.size(); ++i) mean_img.data[i] += img.data[i];
    }
    for (auto& v : mean_img.data) v /= static_cast<float>(train.size());

    TrainOutcome out;
    out.metrics_csv = cfg.resolve_out(cfg.train.metrics);
    out.checkpoint = cfg.resolve_out(cfg.train.checkpoint);
    out.mean_image_psnr = constant_image_psnr(mean_img, val, grid);

    std::ofstream csv = open_csv(out.metrics_csv, cfg, "step,lr,loss,val_psnr");
    csv << "# mean_image_psnr=" << fmt(out.mean_image_psnr) << "\n";

    const int views = static_cast<int>(train.front().cameras.size());
    for (int step = 0; step < cfg.train.steps; ++step) {
        const double warm = cfg.train.warmup_steps > 0
                                ? std::min(1.0, static_cast<double>(step + 1) / cfg.train.warmup_steps)
                                : 1.0;
        const double lr = cfg.train.lr * warm;

        double loss_acc = 0.0;
        for (int b = 0; b < cfg.train.batch_size; ++b) {
            const auto& scene = train[rng() % train.size()];
            const int target = static_cast<int>(rng() % static_cast<std::uint64_t>(views));
            ForwardResult<T> fwd = toy_forward(model, to_model_sample(scene, target));
            const double loss = static_cast<double>(fwd.loss.scalar());
            if (!std::isfinite(loss))
                throw numeric_error("non-finite loss at step " + std::to_string(step) +
                                    " (config " + cfg.hash() + ")");
            loss_acc += loss;
            backward(fwd.loss);
        }
        loss_acc /= cfg.train.batch_size;
        adam_step(params, adam, lr, cfg.train.beta1, cfg.train.beta2,
                  1.0 / cfg.train.batch_size);

        std::string val_cell;
        if (cfg.train.val_every > 0 && (step + 1) % cfg.train.val_every == 0) {
            val_cell = fmt(capped_psnr(
                validation_psnr(model, val, static_cast<std::size_t>(cfg.train.val_subset))));
        }
        csv << step << "," << fmt(lr) << "," << fmt(loss_acc) << "," << val_cell << "\n";
        out.final_loss = loss_acc;
    }
    out.steps = cfg.train.steps;
    out.final_val_psnr = validation_psnr(model, val, 0);
    csv << "# final_val_psnr=" << fmt(out.final_val_psnr) << "\n";

    auto meta = model_meta(cfg.model, cfg.encoding);
    meta["config_hash"] = cfg.hash();
    meta["seed"] = std::to_string(cfg.seed);
    std::error_code ec;
    fs::create_directories(out.checkpoint.parent_path(), ec);
    write_checkpoint(out.checkpoint, model_state(model), meta);
    return out;
}

} // namespace

TrainOutcome run_train(const RunConfig& cfg) {
    validate_strategy(cfg.encoding);
    return cfg.dtype == "f32" ? train_impl<float>(cfg) : train_impl<double>(cfg);
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

template <class T>
EvalOutcome eval_impl(const RunConfig& cfg, const Checkpoint& ckpt) {
    set_parallel_threads(cfg.threads);
    const ModelConfig mc = model_config_from_meta(ckpt.meta);
    const EncodingStrategy strategy = strategy_from_meta(ckpt.meta);
    ToyModel<T> model = init_toy_model<T>(mc, strategy, 0);
    load_model_state(model, ckpt.tensors);

    const std::vector<SceneSample> samples = load_split(cfg, cfg.eval.split);
    if (mc.image_size != samples.front().images.front().width)
        throw config_error("checkpoint image size " + std::to_string(mc.image_size) +
                           " does not match dataset");
    const TokenGrid grid = mc.grid();

    EvalOutcome out;
    out.csv = cfg.resolve_out(cfg.eval.out_csv);
    std::ofstream csv = open_csv(out.csv, cfg, "scene_seed,mse,psnr");
    double acc = 0.0;
    for (const auto& s : samples) {
        ForwardResult<T> fwd = toy_forward(model, to_model_sample(s, s.target_index));
        std::vector<double> pred(fwd.prediction.values().begin(), fwd.prediction.values().end());
        const double mse = sample_mse(pred, fwd.target);
        const double psnr = capped_psnr(psnr_from_mse(mse));
        acc += psnr;
        csv << s.seed << "," << fmt(mse) << "," << fmt(psnr) << "\n";
        if (cfg.eval.dump_images) {
            const Image img = unpatchify_rgb(pred, grid);
            write_ppm(out.csv.parent_path() / ("pred_scene_" + std::to_string(s.seed) + ".ppm"),
                      img);
        }
    }
    out.samples = static_cast<int>(samples.size());
    out.mean_psnr = acc / out.samples;
    csv << "# mean_psnr=" << fmt(out.mean_psnr) << "\n";
    return out;
}

} // namespace

EvalOutcome run_eval(const RunConfig& cfg) {
    const Checkpoint ckpt = read_checkpoint(cfg.resolve_out(cfg.eval.checkpoint));
    return cfg.dtype == "f32" ? eval_impl<float>(cfg, ckpt) : eval_impl<double>(cfg, ckpt);
}

// ---------------------------------------------------------------------------
// Similarity sweeps (appendix settings a/b/c): two cameras, center patches,
// unit q/k vectors, untrained encoding path.

namespace {

struct SweepSetup {
    Camera cam1, cam2;
    double d1 = 1.0, d2 = 1.0;
};

Camera sweep_camera(const Eigen::Matrix3d& R, const Eigen::Vector3d& center) {
    // 48 px, 60-degree FOV, principal point at the exact center pixel so the
    // central patch ray passes through it.
    const int size = 48;
    const double f = (size / 2.0) / std::tan(M_PI / 6.0);
    return make_camera(f, f, size / 2.0, size / 2.0, R, -R * center, size, size);
}

Eigen::Matrix3d look_at_rotation(const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
    const Eigen::Vector3d forward = (to - from).normalized();
    const Eigen::Vector3d up(0, 1, 0);
    const Eigen::Vector3d right = up.cross(forward).normalized();
    Eigen::Matrix3d R;
    R.row(0) = right;
    R.row(1) = forward.cross(right);
    R.row(2) = forward;
    return R;
}

SweepSetup sweep_setup(const std::string& setting, double param) {
    SweepSetup s;
    s.cam1 = sweep_camera(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero());
    if (setting == "a") {
        s.cam2 = sweep_camera(Eigen::Matrix3d::Identity(), Eigen::Vector3d(param, 0, 0));
    } else if (setting == "b") {
        const Eigen::Matrix3d R =
            Eigen::AngleAxisd(param, Eigen::Vector3d::UnitY()).toRotationMatrix();
        s.cam2 = sweep_camera(R, Eigen::Vector3d::Zero());
    } else if (setting == "c") {
        // Both central rays hit (0, 0, 1) at z-depth 1; d2 is swept around the
        // true depth.
        const double alpha = M_PI / 6.0;
        const Eigen::Vector3d point(0, 0, 1);
        const Eigen::Vector3d c2(std::sin(alpha), 0, 1.0 - std::cos(alpha));
        s.cam2 = sweep_camera(look_at_rotation(c2, point), c2);
        s.d2 = param;
    } else {
        throw config_error("unknown sweep setting '" + setting + "'");
    }
    return s;
}

/// q^T rho(x1 - x2) k with q = k = 1-vectors: sums the relative blocks.
double pair_similarity(const SweepSetup& s, double sigma, const RunConfig& cfg) {
    EncodingStrategy strategy = cfg.encoding;
    strategy.kind = EncodingKind::rayrope;
    strategy.rays_per_patch = cfg.sweep.rays_per_patch;
    const int rays = strategy.rays_per_patch;
    const int components = 6 * rays;
    const int dim = cfg.sweep.dim;
    if (dim % (2 * components) != 0)
        throw config_error("sweep.dim must be divisible by " + std::to_string(2 * components));
    const auto freqs = strategy_frequencies(strategy, dim);

    const TokenGrid grid{s.cam1.width, s.cam1.width / 3};
    const int center = grid.patches_per_side() / 2;
    const RayLayout layout = rays == 1 ? RayLayout::center_only : RayLayout::three_corners;

    auto token_intervals = [&](const Camera& cam, double d) {
        std::vector<ProjectedRayInterval> ivals;
        for (const auto& ray : patch_rays(cam, center, center, grid.patch_size, layout)) {
            const RaySegment seg = make_segment(cam, ray, d, sigma);
            ivals.push_back(scale_interval(project_segment(s.cam1, seg), 1.0 / s.cam1.width));
        }
        return ivals;
    };
    const auto iv1 = token_intervals(s.cam1, s.d1);
    const auto iv2 = token_intervals(s.cam2, s.d2);
    const BlockEncoding enc1 = build_encoding(iv1, rays, freqs, dim);
    const BlockEncoding enc2 = build_encoding(iv2, rays, freqs, dim);
    const BlockEncoding rel = relative_product(enc1, enc2);

    std::vector<double> ones(static_cast<std::size_t>(dim), 1.0);
    const std::vector<double> rk = apply_encoding(rel, ones, ApplyMode::output);
    double sim = 0.0;
    for (std::size_t i = 0; i < rk.size(); ++i) sim += rk[i];
    return sim;
}

} // namespace

std::vector<SweepRow> similarity_sweep(const RunConfig& cfg) {
    if (cfg.encoding.kind != EncodingKind::rayrope)
        throw config_error("similarity-sweep supports the ray-segment encoding only");
    if (cfg.sweep.grid_steps < 2) throw config_error("sweep.grid_steps must be >= 2");
    std::vector<SweepRow> rows;
    for (const double sigma : cfg.sweep.sigmas) {
        for (int i = 0; i < cfg.sweep.grid_steps; ++i) {
            const double param = cfg.sweep.grid_min +
                                 (cfg.sweep.grid_max - cfg.sweep.grid_min) * i /
                                     (cfg.sweep.grid_steps - 1);
            const SweepSetup setup = sweep_setup(cfg.sweep.setting, param);
            rows.push_back({param, sigma, pair_similarity(setup, sigma, cfg)});
        }
    }
    return rows;
}

std::filesystem::path run_similarity_sweep(const RunConfig& cfg) {
    const auto rows = similarity_sweep(cfg);
    const fs::path path = cfg.resolve_out(cfg.sweep.out_csv);
    std::ofstream csv = open_csv(path, cfg, "setting,param,sigma,similarity");
    for (const auto& r : rows)
        csv << cfg.sweep.setting << "," << fmt(r.param) << "," << fmt(r.sigma) << ","
            << fmt(r.similarity) << "\n";
    return path;
}

// ---------------------------------------------------------------------------
// Benchmarks

namespace {

template <class T>
std::pair<double, double> time_phase(ToyModel<T>& model, const ModelSample& sample, bool with_backward,
                                     int warmup, int repeats) {
    using clock = std::chrono::steady_clock;
    std::vector<double> ms;
    for (int i = 0; i < warmup + repeats; ++i) {
        const auto t0 = clock::now();
        ForwardResult<T> fwd = toy_forward(model, sample);
        if (with_backward) {
            backward(fwd.loss);
            for (auto& [name, p] : model.named_params()) p.zero_grad();
        }
        const auto t1 = clock::now();
        if (i >= warmup)
            ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(ms.begin(), ms.end());
    const auto q = [&ms](double p) {
        const double idx = p * (ms.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(idx);
        const std::size_t hi = std::min(lo + 1, ms.size() - 1);
        return ms[lo] + (ms[hi] - ms[lo]) * (idx - lo);
    };
    return {q(0.5), q(0.75) - q(0.25)};
}

template <class T>
void bench_strategy(const RunConfig& cfg, const std::string& name, int n_views,
                    std::vector<BenchRow>& rows) {
    EncodingStrategy strategy;
    strategy.kind = encoding_kind_from_string(name);
    strategy.omega_min = cfg.encoding.omega_min;
    strategy.omega_max = cfg.encoding.omega_max;

    ModelConfig mc;
    mc.layers = cfg.bench.layers;
    mc.dim = cfg.bench.dim;
    mc.heads = cfg.bench.heads;
    mc.ff_dim = cfg.model.ff_dim;
    mc.image_size = cfg.bench.image_size;
    mc.patch_size = cfg.bench.patch_size;

    DatasetParams dp;
    dp.views_per_scene = n_views;
    dp.image_size = mc.image_size;
    const SceneSample scene = generate_sample(dp, cfg.seed * 2); // even: deterministic split
    ModelSample sample = to_model_sample(scene, scene.target_index);

    ToyModel<T> model = init_toy_model<T>(mc, strategy, cfg.seed);
    for (const bool with_backward : {false, true}) {
        const auto [median, iqr] =
            time_phase(model, sample, with_backward, cfg.bench.warmup, cfg.bench.repeats);
        rows.push_back({name, n_views, with_backward ? "forward_backward" : "forward", median, iqr,
                        cfg.bench.repeats});
    }
}

} // namespace

std::vector<BenchRow> bench_rows(const RunConfig& cfg) {
    if (cfg.bench.warmup < 3 || cfg.bench.repeats < 10)
        throw config_error("bench requires >= 3 warmup and >= 10 timed repeats");
    set_parallel_threads(cfg.threads);
    std::vector<BenchRow> rows;
    for (const auto& name : cfg.bench.strategies)
        for (const int n : cfg.bench.n_views) {
            if (cfg.dtype == "f32")
                bench_strategy<float>(cfg, name, n, rows);
            else
                bench_strategy<double>(cfg, name, n, rows);
        }
    return rows;
}

std::filesystem::path run_bench(const RunConfig& cfg) {
    const auto rows = bench_rows(cfg);
    const fs::path path = cfg.resolve_out(cfg.bench.out_csv);
    std::ofstream csv = open_csv(path, cfg, "strategy,n_views,phase,median_ms,iqr_ms,repeats");
    for (const auto& r : rows)
        csv << r.strategy << "," << r.n_views << "," << r.phase << "," << fmt(r.median_ms) << ","
            << fmt(r.iqr_ms) << "," << r.repeats << "\n";
    return path;
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckOutcome run_grad_check(const RunConfig& cfg) {
    set_parallel_threads(cfg.threads);
    ModelConfig mc;
    mc.layers = cfg.gradcheck.layers;
    mc.dim = cfg.gradcheck.dim;
    mc.heads = cfg.gradcheck.heads;
    mc.ff_dim = 64;
    mc.image_size = cfg.gradcheck.image_size;
    mc.patch_size = 4;

    DatasetParams dp;
    dp.views_per_scene = cfg.gradcheck.views;
    dp.image_size = mc.image_size;
    const SceneSample scene = generate_sample(dp, cfg.seed * 2);
    const ModelSample sample = to_model_sample(scene, scene.target_index);

    // Finite differences are meaningful in 64-bit only.
    ToyModel<double> model = init_toy_model<double>(mc, cfg.encoding, cfg.seed);
    auto params = model.named_params();
    GradCheckOutcome out;
    out.report = grad_check([&]() { return toy_forward(model, sample).loss; }, params,
                            cfg.gradcheck.step, cfg.gradcheck.tolerance);

    out.csv = cfg.resolve_out(cfg.gradcheck.out_csv);
    std::ofstream csv = open_csv(out.csv, cfg, "param,max_rel_err,max_abs_err,pass");
    for (const auto& e : out.report.entries)
        csv << e.name << "," << fmt(e.max_rel_err) << "," << fmt(e.max_abs_err) << ","
            << (e.pass ? 1 : 0) << "\n";
    csv << "# max_rel_err=" << fmt(out.report.max_rel_err) << " pass=" << (out.report.pass ? 1 : 0)
        << "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Depth dumps

namespace {

template <class T>
DumpOutcome dump_impl(const RunConfig& cfg, const Checkpoint& ckpt) {
    const EncodingStrategy strategy = strategy_from_meta(ckpt.meta);
    if (strategy.kind != EncodingKind::rayrope)
        throw config_error("dump-depth requires a rayrope checkpoint, got " +
                           to_string(strategy.kind));
    const ModelConfig mc = model_config_from_meta(ckpt.meta);
    ToyModel<T> model = init_toy_model<T>(mc, strategy, 0);
    load_model_state(model, ckpt.tensors);

    if (cfg.dump.scene.empty()) throw config_error("dump.scene must name a scene directory");
    const SceneSample scene = load_scene_dir(cfg.dump.scene);

    DepthDiagnostics diag;
    toy_forward(model, to_model_sample(scene, scene.target_index), &diag);

    const fs::path dir = cfg.resolve_out(cfg.dump.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    const TokenGrid grid = mc.grid();
    const int side = grid.patches_per_side();
    const int views = static_cast<int>(scene.cameras.size());

    DumpOutcome out;
    out.dir = dir;
    std::ofstream csv = open_csv(dir / "stats.csv", cfg,
                                 "layer,mean_depth,mean_sigma,min_sigma,max_sigma");
    for (std::size_t l = 0; l < diag.depth.size(); ++l) {
        // One map per quantity per layer: views stacked vertically.
        Image dmap = Image::make(side, side * views, 1);
        Image smap = Image::make(side, side * views, 1);
        double sum_d = 0.0, sum_s = 0.0;
        double min_s = std::numeric_limits<double>::infinity(), max_s = 0.0;
        for (int tok = 0; tok < static_cast<int>(diag.depth[l].size()); ++tok) {
            const double d = diag.depth[l][static_cast<std::size_t>(tok)];
            const double s = diag.sigma[l][static_cast<std::size_t>(tok)];
            dmap.data[static_cast<std::size_t>(tok)] = static_cast<float>(d);
            smap.data[static_cast<std::size_t>(tok)] = static_cast<float>(s);
            sum_d += d;
            sum_s += s;
            min_s = std::min(min_s, s);
            max_s = std::max(max_s, s);
        }
        write_pfm(dir / ("layer_" + std::to_string(l) + "_depth.pfm"), dmap);
        write_pfm(dir / ("layer_" + std::to_string(l) + "_sigma.pfm"), smap);
        out.maps_written += 2;
        const double n = static_cast<double>(diag.depth[l].size());
        csv << l << "," << fmt(sum_d / n) << "," << fmt(sum_s / n) << "," << fmt(min_s) << ","
            << fmt(max_s) << "\n";
    }
    return out;
}

} // namespace

DumpOutcome run_dump_depth(const RunConfig& cfg) {
    const Checkpoint ckpt = read_checkpoint(cfg.resolve_out(cfg.dump.checkpoint));
    return cfg.dtype == "f32" ? dump_impl<float>(cfg, ckpt) : dump_impl<double>(cfg, ckpt);
}

} // namespace rayrope
