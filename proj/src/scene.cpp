// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/scene.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "rayrope/parallel.hpp"

namespace rayrope {

namespace {

constexpr double kRayTMin = 1e-4;

Eigen::Vector3d sample_color(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.15, 0.95);
    const double r = u(rng), g = u(rng), b = u(rng);
    return {r, g, b};
}

} // namespace

Scene generate_scene(std::uint64_t seed) {
    Scene scene;
    scene.seed = seed;
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
    std::uniform_int_distribution<int> count_dist(3, 8);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int count = count_dist(rng);
    for (int i = 0; i < count; ++i) {
        const bool make_quad = unit(rng) < 0.25 && scene.quads.size() < 2;
        if (make_quad) {
            CheckerQuad q;
            q.axis = static_cast<int>(rng() % 3);
            std::uniform_real_distribution<double> off(-0.45, 0.45);
            std::uniform_real_distribution<double> ext(0.15, 0.45);
            std::uniform_real_distribution<double> ctr(-0.25, 0.25);
            q.offset = off(rng);
            q.center2 = Eigen::Vector2d(ctr(rng), ctr(rng));
            q.half_extents = Eigen::Vector2d(ext(rng), ext(rng));
            q.albedo_a = sample_color(rng);
            q.albedo_b = sample_color(rng);
            std::uniform_real_distribution<double> cell(0.08, 0.22);
            q.cell = cell(rng);
            // Shrink until the farthest corner stays inside the unit ball.
            const auto corner = [&q]() {
                const double a = std::abs(q.center2.x()) + q.half_extents.x();
                const double b = std::abs(q.center2.y()) + q.half_extents.y();
                return std::sqrt(q.offset * q.offset + a * a + b * b);
            };
            const double r = corner();
            if (r > 0.98) {
                q.center2 *= 0.98 / r;
                q.half_extents *= 0.98 / r;
                q.offset *= 0.98 / r;
            }
            scene.quads.push_back(q);
        } else {
            Sphere s;
            std::uniform_real_distribution<double> rad(0.08, 0.3);
            s.radius = rad(rng);
            std::uniform_real_distribution<double> pos(-1.0, 1.0);
            Eigen::Vector3d c(pos(rng), pos(rng), pos(rng));
            const double max_norm = 0.98 - s.radius;
            if (c.norm() > max_norm) c *= max_norm / c.norm();
            s.center = c;
            s.albedo = sample_color(rng);
            scene.spheres.push_back(s);
        }
    }
    std::uniform_real_distribution<double> bg(0.02, 0.2);
    scene.background = Eigen::Vector3d(bg(rng), bg(rng), bg(rng));
    return scene;
}

namespace {

struct Hit {
    double t = std::numeric_limits<double>::infinity();
    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    Eigen::Vector3d albedo = Eigen::Vector3d::Zero();
};

/// Ray parameterized so t equals camera-frame z-depth (direction has unit z
/// in the camera frame).
bool trace(const Scene& scene, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, Hit& hit) {
    bool found = false;
    for (const auto& s : scene.spheres) {
        const Eigen::Vector3d oc = origin - s.center;
        const double a = dir.dot(dir);
        const double b = 2.0 * dir.dot(oc);
        const double c = oc.dot(oc) - s.radius * s.radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc < 0.0) continue;
        const double sq = std::sqrt(disc);
        for (const double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
            if (t <= kRayTMin || t >= hit.t) continue;
            hit.t = t;
            const Eigen::Vector3d p = origin + t * dir;
            hit.normal = (p - s.center) / s.radius;
            hit.albedo = s.albedo;
            found = true;
            break;
        }
    }
    for (const auto& q : scene.quads) {
        if (std::abs(dir[q.axis]) < 1e-12) continue;
        const double t = (q.offset - origin[q.axis]) / dir[q.axis];
        if (t <= kRayTMin || t >= hit.t) continue;
        const int u_ax = q.axis == 0 ? 1 : 0;
        const int v_ax = q.axis == 2 ? 1 : 2;
        const Eigen::Vector3d p = origin + t * dir;
        const double du = p[u_ax] - q.center2.x();
        const double dv = p[v_ax] - q.center2.y();
        if (std::abs(du) > q.half_extents.x() || std::abs(dv) > q.half_extents.y()) continue;
        hit.t = t;
        Eigen::Vector3d n = Eigen::Vector3d::Zero();
        n[q.axis] = dir[q.axis] > 0.0 ? -1.0 : 1.0;
        hit.normal = n;
        const long long parity = static_cast<long long>(std::floor(du / q.cell)) +
                                 static_cast<long long>(std::floor(dv / q.cell));
        hit.albedo = (parity % 2 + 2) % 2 == 0 ? q.albedo_a : q.albedo_b;
        found = true;
    }
    return found;
}

} // namespace

RenderResult render(const Scene& scene, const Camera& cam, int width, int height) {
    RenderResult out;
    out.rgb = Image::make(width, height, 3);
    out.depth = Image::make(width, height, 1, std::numeric_limits<float>::infinity());
    const Eigen::Vector3d origin = cam.center();
    const Eigen::Vector3d light = Eigen::Vector3d(1, 1, 1).normalized();

    parallel_for(height, 8, [&](std::int64_t y0, std::int64_t y1) {
        for (std::int64_t y = y0; y < y1; ++y) {
            for (int x = 0; x < width; ++x) {
                const Eigen::Vector3d dir =
                    pixel_dir_z1(cam, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5);
                Hit hit;
                if (trace(scene, origin, dir, hit)) {
                    const double lambert = 0.2 + 0.8 * std::max(0.0, hit.normal.dot(light));
                    for (int c = 0; c < 3; ++c)
                        out.rgb.at(x, static_cast<int>(y), c) =
                            static_cast<float>(std::min(1.0, hit.albedo[c] * lambert));
                    out.depth.at(x, static_cast<int>(y), 0) = static_cast<float>(hit.t);
                } else {
                    for (int c = 0; c < 3; ++c)
                        out.rgb.at(x, static_cast<int>(y), c) = static_cast<float>(scene.background[c]);
                }
            }
        }
    });
    return out;
}

} // namespace rayrope
