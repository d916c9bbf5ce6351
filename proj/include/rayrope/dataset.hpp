// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// Bit-exact dataset files: binary PPM images, PFM depth maps, a plain-text
// camera list, and a JSON meta record per scene directory.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rayrope/geometry.hpp"
#include "rayrope/image.hpp"

namespace rayrope {

void write_ppm(const std::filesystem::path& path, const Image& rgb);
Image read_ppm(const std::filesystem::path& path);

void write_pfm(const std::filesystem::path& path, const Image& gray);
Image read_pfm(const std::filesystem::path& path);

/// One line per view: fx fy cx cy qw qx qy qz tx ty tz width height
/// (world-to-camera quaternion), full double precision. The overload taking
/// explicit quaternions writes them verbatim, which keeps read/write round
/// trips bit-exact (re-extracting a quaternion from its own rotation matrix
/// is not a fixed point in floating point).
void write_cameras(const std::filesystem::path& path, std::span<const Camera> cams);
void write_cameras(const std::filesystem::path& path, std::span<const Camera> cams,
                   std::span<const Eigen::Vector4d> quats);
std::vector<Camera> read_cameras(const std::filesystem::path& path,
                                 std::vector<Eigen::Vector4d>* quats = nullptr);

struct SceneSample {
    std::uint64_t seed = 0;
    std::string split;
    double scale = 1.0;           // pose-normalization scale applied to depths
    int target_index = 0;
    std::vector<Camera> cameras;  // rotations reconstructed from `quats`
    std::vector<Eigen::Vector4d> quats;
    std::vector<Image> images;
    std::vector<Image> depths;
};

struct DatasetParams {
    int num_scenes = 64;
    int views_per_scene = 3;
    int image_size = 32;
    double fov_min_deg = 30.0;
    double fov_max_deg = 70.0;
    double radius_min = 1.6;
    double radius_max = 2.6;
    bool randomize_world_frame = false;
    std::uint64_t seed = 1;
    std::string config_hash;
};

struct DatasetSummary {
    int scenes = 0;
    int ppm_files = 0;
    int pfm_files = 0;
    int train_scenes = 0;
    int val_scenes = 0;
};

/// Renders and writes scene_<seed>/view_<i>.{ppm,pfm} + cameras.txt +
/// meta.json. Cameras sit on a sphere looking at the origin with uniform FOV
/// and radius; poses are stored normalized to the first camera (optionally
/// re-randomized rigidly afterwards); split is train/val by seed parity.
DatasetSummary make_dataset(const DatasetParams& params, const std::filesystem::path& out_dir);

SceneSample load_scene_dir(const std::filesystem::path& scene_dir);

/// Scene directories under a dataset root, sorted; split filter "" keeps all.
std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& dataset_dir,
                                                   const std::string& split = "");

/// In-memory sample generation (no disk) for tests and benchmarks.
SceneSample generate_sample(const DatasetParams& params, std::uint64_t scene_seed);

} // namespace rayrope
