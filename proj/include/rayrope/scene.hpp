// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// Procedural desk-scale scenes and a deterministic first-hit raycaster with
// analytic z-depth ground truth.

#pragma once

#include <cstdint>

#include "rayrope/geometry.hpp"
#include "rayrope/image.hpp"

namespace rayrope {

struct Sphere {
    Eigen::Vector3d center;
    double radius = 0.1;
    Eigen::Vector3d albedo;
};

/// Axis-aligned checkered rectangle: normal along `axis`, in-plane center and
/// half extents over the remaining two axes in ascending order.
struct CheckerQuad {
    int axis = 2;
    double offset = 0.0;
    Eigen::Vector2d center2 = Eigen::Vector2d::Zero();
    Eigen::Vector2d half_extents = Eigen::Vector2d(0.3, 0.3);
    Eigen::Vector3d albedo_a;
    Eigen::Vector3d albedo_b;
    double cell = 0.1;
};

struct Scene {
    std::uint64_t seed = 0;
    std::vector<Sphere> spheres;
    std::vector<CheckerQuad> quads;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();

    std::size_t primitive_count() const { return spheres.size() + quads.size(); }
};

/// 3-8 primitives sampled deterministically from the seed, all inside the
/// unit ball.
Scene generate_scene(std::uint64_t seed);

struct RenderResult {
    Image rgb;    // [0, 1]
    Image depth;  // camera-frame z of the first hit, +inf for background
};

/// First-hit intersection per pixel center, Lambert shading under a fixed
/// light along (1, 1, 1). Deterministic across runs and thread counts.
RenderResult render(const Scene& scene, const Camera& cam, int width, int height);

} // namespace rayrope
