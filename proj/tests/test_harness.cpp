// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "rayrope/errors.hpp"
#include "rayrope/harness.hpp"

using namespace rayrope;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Small everything: 1-layer dim-12 model on 8 px images, single-ray
/// encoding.
RunConfig tiny_config(const fs::path& root) {
    RunConfig cfg;
    cfg.out_dir = (root / "out").string();
    cfg.dataset.path = (root / "data").string();
    cfg.dataset.num_scenes = 6;
    cfg.dataset.views_per_scene = 3;
    cfg.dataset.image_size = 8;
    cfg.encoding.rays_per_patch = 1;
    cfg.model.layers = 1;
    cfg.model.dim = 12;
    cfg.model.heads = 1;
    cfg.model.ff_dim = 16;
    cfg.model.image_size = 8;
    cfg.model.patch_size = 4;
    cfg.train.steps = 4;
    cfg.train.batch_size = 1;
    cfg.train.val_every = 2;
    cfg.train.val_subset = 2;
    cfg.threads = 1;
    return cfg;
}

} // namespace

TEST_CASE("config parsing") {
    SUBCASE("unknown keys are rejected") {
        nlohmann::json j = {{"trian", {{"steps", 10}}}};
        CHECK_THROWS_AS(RunConfig::from_json(j), config_error);
        nlohmann::json nested = {{"train", {{"stepz", 10}}}};
        try {
            RunConfig::from_json(nested);
            FAIL("expected config_error");
        } catch (const config_error& e) {
            CHECK(std::string(e.what()).find("train.stepz") != std::string::npos);
        }
    }
    SUBCASE("dotted overrides parse values as JSON when possible") {
        nlohmann::json j = nlohmann::json::object();
        apply_override(j, "train.steps=123");
        apply_override(j, "encoding.kind=prope");
        apply_override(j, "sweep.sigmas=[0.0,0.5]");
        const RunConfig cfg = RunConfig::from_json(j);
        CHECK(cfg.train.steps == 123);
        CHECK(cfg.encoding.kind == EncodingKind::prope);
        CHECK(cfg.sweep.sigmas == std::vector<double>{0.0, 0.5});
        CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), config_error);
    }
    SUBCASE("bad values are rejected") {
        nlohmann::json j = {{"dtype", "f16"}};
        CHECK_THROWS_AS(RunConfig::from_json(j), config_error);
        nlohmann::json j2 = {{"encoding", {{"kind", "nope"}}}};
        CHECK_THROWS_AS(RunConfig::from_json(j2), config_error);
        nlohmann::json j3 = {{"encoding", {{"kind", "gta"}, {"point_at_infinity", true}}}};
        CHECK_THROWS_AS(RunConfig::from_json(j3), config_error);
    }
    SUBCASE("the hash tracks content") {
        RunConfig a;
        RunConfig b;
        CHECK(a.hash() == b.hash());
        b.train.steps += 1;
        CHECK(a.hash() != b.hash());
    }
    SUBCASE("environment variable overrides the output root") {
        setenv("RAYROPE_OUT_ROOT", "/tmp/rayrope_env_root", 1);
        const RunConfig cfg = RunConfig::from_json(nlohmann::json::object());
        unsetenv("RAYROPE_OUT_ROOT");
        CHECK(cfg.out_dir == "/tmp/rayrope_env_root");
    }
}

TEST_CASE("psnr helpers") {
    CHECK(std::isinf(psnr_from_mse(0.0)));
    CHECK(capped_psnr(psnr_from_mse(0.0)) == 99.0);
    // constant offset of 0.1: mse = 0.01, psnr = 20 dB
    CHECK(psnr_from_mse(0.01) == doctest::Approx(20.0));
}

TEST_CASE("gen-data") {
    const fs::path root = temp_dir("rayrope_h_gen");
    RunConfig cfg = tiny_config(root);

    const GenDataOutcome out = run_gen_data(cfg);
    CHECK(out.summary.scenes == 6);
    CHECK(out.summary.ppm_files == 18);
    CHECK(out.summary.pfm_files == 18);

    SUBCASE("rerunning the same config reproduces identical files") {
        std::map<fs::path, std::string> before;
        for (const auto& entry : fs::recursive_directory_iterator(cfg.dataset.path))
            if (entry.is_regular_file()) before[entry.path()] = slurp(entry.path());
        fs::remove_all(cfg.dataset.path);
        run_gen_data(cfg);
        for (const auto& [path, bytes] : before) CHECK(slurp(path) == bytes);
    }
    SUBCASE("unwritable output directory fails with the path in the message") {
        RunConfig bad = cfg;
        const fs::path blocker = root / "blocker";
        std::ofstream(blocker) << "file";
        bad.dataset.path = (blocker / "nested").string();
        try {
            run_gen_data(bad);
            FAIL("expected failure");
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("blocker") != std::string::npos);
        }
    }
}

TEST_CASE("train, eval, dump") {
    const fs::path root = temp_dir("rayrope_h_train");
    RunConfig cfg = tiny_config(root);
    run_gen_data(cfg);

    SUBCASE("zero steps leaves the checkpoint at initialization") {
        RunConfig zero = cfg;
        zero.train.steps = 0;
        const TrainOutcome out = run_train(zero);
        const Checkpoint ckpt = read_checkpoint(out.checkpoint);
        ToyModel<double> fresh = init_toy_model<double>(zero.model, zero.encoding, zero.seed);
        const auto state = model_state(fresh);
        REQUIRE(state.size() == ckpt.tensors.size());
        for (std::size_t i = 0; i < state.size(); ++i)
            CHECK(state[i].data == ckpt.tensors[i].data);

        // untrained model predicts 0.5 everywhere: eval PSNR is computable by
        // hand from the targets
        RunConfig ev = zero;
        const EvalOutcome eout = run_eval(ev);
        const auto dirs = list_scene_dirs(zero.dataset.path, "val");
        double expect = 0.0;
        for (const auto& d : dirs) {
            const SceneSample s = load_scene_dir(d);
            const auto target = patchify_rgb(s.images[static_cast<std::size_t>(s.target_index)],
                                             zero.model.grid());
            double mse = 0.0;
            for (const double t : target) mse += (0.5 - t) * (0.5 - t);
            mse /= static_cast<double>(target.size());
            expect += capped_psnr(psnr_from_mse(mse));
        }
        expect /= static_cast<double>(dirs.size());
        CHECK(eout.mean_psnr == doctest::Approx(expect).epsilon(1e-9));
        CHECK(eout.samples == static_cast<int>(dirs.size()));
    }

    SUBCASE("training runs are deterministic for a fixed seed") {
        const TrainOutcome a = run_train(cfg);
        const std::string metrics_a = slurp(a.metrics_csv);
        const std::string blob_a = slurp(fs::path(a.checkpoint.string() + ".blob"));
        CHECK(metrics_a.find("# config_hash=") == 0);
        CHECK(metrics_a.find("step,lr,loss,val_psnr") != std::string::npos);

        const TrainOutcome b = run_train(cfg); // same config, overwrites
        CHECK(slurp(b.metrics_csv) == metrics_a);
        CHECK(a.final_val_psnr == b.final_val_psnr);
        CHECK(slurp(fs::path(b.checkpoint.string() + ".blob")) == blob_a);
    }

    SUBCASE("f32 training runs and stays finite") {
        RunConfig f32 = cfg;
        f32.dtype = "f32";
        f32.out_dir = (root / "out_f32").string();
        const TrainOutcome out = run_train(f32);
        CHECK(std::isfinite(out.final_loss));
        CHECK(std::isfinite(out.final_val_psnr));
    }

    SUBCASE("eval rejects a dataset that does not match the checkpoint") {
        const TrainOutcome out = run_train(cfg);
        RunConfig other = cfg;
        other.dataset.path = (root / "data_big").string();
        other.dataset.image_size = 16;
        run_gen_data(other);
        CHECK_THROWS_AS(run_eval(other), config_error);
        (void)out;
    }

    SUBCASE("dump-depth writes layers x 2 maps and respects known depth") {
        // larger images so whole patches land on foreground
        RunConfig kd = tiny_config(root / "kd");
        kd.dataset.image_size = 16;
        kd.model.image_size = 16;
        kd.dataset.num_scenes = 4;
        kd.encoding.known_depth = true;
        kd.encoding.rays_per_patch = 3;
        kd.model.dim = 36; // head dim 36 = 2 * 18 components
        kd.train.steps = 0;
        run_gen_data(kd);
        const TrainOutcome out = run_train(kd);
        kd.dump.checkpoint = out.checkpoint.string();

        const int side = kd.model.grid().patches_per_side();
        const int ps = kd.model.patch_size;
        int known_tokens = 0;
        for (const auto& scene_dir : list_scene_dirs(kd.dataset.path, "val")) {
            kd.dump.scene = scene_dir.string();
            const DumpOutcome dump = run_dump_depth(kd);
            CHECK(dump.maps_written == kd.model.layers * 2);
            CHECK(fs::exists(dump.dir / "stats.csv"));

            const SceneSample scene = load_scene_dir(scene_dir);
            const Image dmap = read_pfm(dump.dir / "layer_0_depth.pfm");
            const Image smap = read_pfm(dump.dir / "layer_0_sigma.pfm");
            for (int v = 0; v < 2; ++v) { // reference views (target is view 2)
                const Image& depth = scene.depths[static_cast<std::size_t>(v)];
                for (int pr = 0; pr < side; ++pr)
                    for (int pc = 0; pc < side; ++pc) {
                        // substitution rule: all three corner samples valid
                        const auto pixels =
                            patch_ray_pixels(pr, pc, ps, RayLayout::three_corners);
                        bool valid = true;
                        for (const auto& px : pixels) {
                            const int x = std::min(static_cast<int>(px.x()), depth.width - 1);
                            const int y = std::min(static_cast<int>(px.y()), depth.height - 1);
                            const float z = depth.at(x, y, 0);
                            if (!(z > 0.0f) || !std::isfinite(z)) valid = false;
                        }
                        const float dumped = dmap.at(pc, v * side + pr, 0);
                        const float sdump = smap.at(pc, v * side + pr, 0);
                        if (valid) {
                            // dumped value is the stored z at the first ray
                            CHECK(dumped == depth.at(pc * ps, pr * ps, 0));
                            CHECK(sdump == 0.0f);
                            ++known_tokens;
                        } else {
                            CHECK(sdump > 0.0f);
                        }
                    }
            }
        }
        CHECK(known_tokens > 0);

        // a non-rayrope checkpoint is rejected
        RunConfig pl = cfg;
        pl.encoding = EncodingStrategy{};
        pl.encoding.kind = EncodingKind::plucker_input;
        pl.train.steps = 0;
        pl.out_dir = (root / "out_pl").string();
        const TrainOutcome pout = run_train(pl);
        pl.dump.checkpoint = pout.checkpoint.string();
        pl.dump.scene = list_scene_dirs(pl.dataset.path, "val").front().string();
        CHECK_THROWS_AS(run_dump_depth(pl), config_error);
    }

    SUBCASE("training aborts on non-finite loss with step and config hash") {
        RunConfig bad = cfg;
        bad.train.lr = 1e18; // divergence by construction
        bad.train.steps = 50;
        bad.train.warmup_steps = 0;
        bad.out_dir = (root / "out_bad").string();
        try {
            run_train(bad);
            // divergence is not guaranteed at this scale; nothing to assert
        } catch (const numeric_error& e) {
            const std::string msg = e.what();
            CHECK(msg.find("step") != std::string::npos);
            CHECK(msg.find(bad.hash()) != std::string::npos);
        }
    }
}

TEST_CASE("similarity sweeps") {
    RunConfig cfg;
    cfg.out_dir = temp_dir("rayrope_h_sweep").string();
    cfg.sweep.rays_per_patch = 1;
    cfg.sweep.dim = 96;

    SUBCASE("setting a peaks at zero displacement") {
        cfg.sweep.setting = "a";
        cfg.sweep.grid_min = -2.0;
        cfg.sweep.grid_max = 2.0;
        cfg.sweep.grid_steps = 41;
        cfg.sweep.sigmas = {0.0};
        const auto rows = similarity_sweep(cfg);
        double best_param = -1.0, best = -1e30;
        for (const auto& r : rows)
            if (r.similarity > best) {
                best = r.similarity;
                best_param = r.param;
            }
        CHECK(best_param == doctest::Approx(0.0));
    }
    SUBCASE("setting b peaks at zero rotation") {
        cfg.sweep.setting = "b";
        cfg.sweep.grid_min = -1.2;
        cfg.sweep.grid_max = 1.2;
        cfg.sweep.grid_steps = 41;
        cfg.sweep.sigmas = {0.0};
        const auto rows = similarity_sweep(cfg);
        double best_param = -1.0, best = -1e30;
        for (const auto& r : rows)
            if (r.similarity > best) {
                best = r.similarity;
                best_param = r.param;
            }
        CHECK(best_param == doctest::Approx(0.0));
    }
    SUBCASE("setting c peaks within one grid step of the true depth") {
        cfg.sweep.setting = "c";
        cfg.sweep.grid_min = 0.2;
        cfg.sweep.grid_max = 3.0;
        cfg.sweep.grid_steps = 29; // 0.1 spacing
        cfg.sweep.sigmas = {0.0, 0.2};
        const auto rows = similarity_sweep(cfg);
        for (const double sigma : cfg.sweep.sigmas) {
            double best_param = -1.0, best = -1e30;
            for (const auto& r : rows) {
                if (r.sigma != sigma) continue;
                if (r.similarity > best) {
                    best = r.similarity;
                    best_param = r.param;
                }
            }
            INFO("sigma " << sigma);
            CHECK(std::abs(best_param - 1.0) <= 0.1 + 1e-9);
        }
    }
    SUBCASE("csv output carries the header and hash") {
        cfg.sweep.setting = "c";
        cfg.sweep.grid_steps = 5;
        cfg.sweep.sigmas = {0.0};
        const fs::path csv = run_similarity_sweep(cfg);
        const std::string text = slurp(csv);
        CHECK(text.find("# config_hash=") == 0);
        CHECK(text.find("setting,param,sigma,similarity") != std::string::npos);
    }
    SUBCASE("non-rayrope strategies are rejected") {
        cfg.encoding = EncodingStrategy{};
        cfg.encoding.kind = EncodingKind::gta;
        CHECK_THROWS_AS(similarity_sweep(cfg), config_error);
    }
}

TEST_CASE("grad-check command") {
    RunConfig cfg;
    cfg.out_dir = temp_dir("rayrope_h_gc").string();
    cfg.encoding.rays_per_patch = 1;
    cfg.gradcheck.layers = 1;
    cfg.gradcheck.dim = 12;
    cfg.gradcheck.heads = 1;
    cfg.gradcheck.image_size = 8;
    cfg.gradcheck.views = 2;
    const GradCheckOutcome out = run_grad_check(cfg);
    CHECK(out.report.pass);
    CHECK(out.report.max_rel_err < 1e-3);
    const std::string text = slurp(out.csv);
    CHECK(text.find("param,max_rel_err") != std::string::npos);
}

TEST_CASE("bench command") {
    RunConfig cfg;
    cfg.out_dir = temp_dir("rayrope_h_bench").string();
    cfg.threads = 1; // steadier timings than oversubscribing the box
    cfg.bench.strategies = {"rayrope", "prope"};
    cfg.bench.n_views = {2};
    cfg.bench.repeats = 14;
    cfg.bench.warmup = 4;
    cfg.bench.dim = 144;
    cfg.bench.heads = 2;
    cfg.bench.layers = 1;
    cfg.bench.image_size = 16;

    const auto rows = bench_rows(cfg);
    REQUIRE(rows.size() == 4); // 2 strategies x {forward, forward_backward}
    for (const auto& r : rows) {
        CHECK(r.median_ms > 0.0);
        CHECK(r.repeats == 14);
    }
    SUBCASE("repeat runs land within 20% on the median") {
        const auto again = bench_rows(cfg);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const double ratio = again[i].median_ms / rows[i].median_ms;
            CHECK(ratio > 0.8);
            CHECK(ratio < 1.25);
        }
    }
    SUBCASE("insufficient repeats are rejected") {
        cfg.bench.repeats = 5;
        CHECK_THROWS_AS(bench_rows(cfg), config_error);
    }
}
