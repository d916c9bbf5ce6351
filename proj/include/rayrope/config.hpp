// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rayrope/model.hpp"
#include "rayrope/posenc.hpp"

namespace rayrope {

/// Harness configuration. Parsed strictly: unknown keys are rejected so typos
/// fail loudly instead of silently running defaults.
struct RunConfig {
    std::uint64_t seed = 1;
    std::string dtype = "f64"; // "f32" | "f64"
    int threads = 2;
    std::string out_dir = "out";

    EncodingStrategy encoding;
    ModelConfig model;

    struct Dataset {
        std::string path = "data";
        int num_scenes = 64;
        int views_per_scene = 3;
        int image_size = 32;
        double fov_min_deg = 30.0;
        double fov_max_deg = 70.0;
        double radius_min = 1.6;
        double radius_max = 2.6;
        bool randomize_world_frame = false;
    } dataset;

    struct Train {
        int steps = 2000;
        int batch_size = 2;
        double lr = 3e-4;
        double beta1 = 0.9;
        double beta2 = 0.95;
        int warmup_steps = 100;
        int val_every = 200;
        int val_subset = 16;
        std::string checkpoint = "model.ckpt";
        std::string metrics = "metrics.csv";
    } train;

    struct Eval {
        std::string checkpoint = "model.ckpt";
        std::string split = "val";
        std::string out_csv = "eval.csv";
        bool dump_images = false;
    } eval;

    struct Sweep {
        std::string setting = "c"; // a | b | c
        int dim = 96;
        int rays_per_patch = 1;
        double grid_min = 0.2;
        double grid_max = 3.0;
        int grid_steps = 57;
        std::vector<double> sigmas = {0.0, 0.2, 0.5};
        std::string out_csv = "sweep.csv";
    } sweep;

    struct Bench {
        std::vector<std::string> strategies = {"rayrope", "prope"};
        std::vector<int> n_views = {2, 3, 4, 6};
        int repeats = 10;
        int warmup = 3;
        int dim = 144;
        int heads = 2;
        int layers = 2;
        int image_size = 32;
        int patch_size = 4;
        std::string out_csv = "bench.csv";
    } bench;

    struct Dump {
        std::string checkpoint = "model.ckpt";
        std::string scene;      // scene directory
        std::string out_dir = "depth_dump";
    } dump;

    struct GradCheckCfg {
        int layers = 2;
        int dim = 36;
        int heads = 1;
        int image_size = 16;
        int views = 3;
        double step = 1e-5;
        double tolerance = 1e-3;
        std::string out_csv = "grad_check.csv";
    } gradcheck;

    nlohmann::json to_json() const;
    std::string hash() const; // FNV-1a over the canonical serialization

    std::filesystem::path resolve_out(const std::string& name) const;

    static RunConfig defaults();
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides);
};

/// Applies one `a.b.c=value` override; the value is parsed as JSON when
/// possible, else taken as a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

} // namespace rayrope
