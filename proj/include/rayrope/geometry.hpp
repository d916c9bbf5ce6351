// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole cameras, rigid transforms, patch rays, and the projection of ray
// segments into a query camera's frame. World-to-camera convention
// throughout: x_cam = R x_world + t.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace rayrope {

/// Depth floor for the near endpoint of a segment (scene-normalized units).
inline constexpr double kDepthFloor = 1e-3;
/// Query-frame depths inside (-kDepthEps, kDepthEps) are clamped to
/// sign * kDepthEps before any division; sign(0) counts as +1.
inline constexpr double kDepthEps = 1e-4;

struct Camera {
    Eigen::Matrix3d K = Eigen::Matrix3d::Identity();       // upper triangular, zero skew
    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();       // rigid world-to-camera
    int width = 0;
    int height = 0;
    Eigen::Matrix<double, 3, 4> P = Eigen::Matrix<double, 3, 4>::Zero(); // K [R|t], cached

    double fx() const { return K(0, 0); }
    double fy() const { return K(1, 1); }
    double cx() const { return K(0, 2); }
    double cy() const { return K(1, 2); }
    Eigen::Matrix3d rotation() const { return T.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return T.topRightCorner<3, 1>(); }
    Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }
};

/// Validates orthonormality (1e-9), det(R) = +1, fx/fy > 0, and caches P.
Camera make_camera(double fx, double fy, double cx, double cy, const Eigen::Matrix3d& R,
                   const Eigen::Vector3d& t, int width, int height);
Camera make_camera(const Eigen::Matrix3d& K, const Eigen::Matrix4d& T, int width, int height);

bool is_rigid(const Eigen::Matrix4d& G, double tol = 1e-9);

struct Ray {
    Eigen::Vector3d origin;    // camera center, world frame
    Eigen::Vector3d dir;       // unit direction, world frame
};

enum class RayLayout { three_corners, center_only };

/// Pixel coordinates of the rays a patch contributes: top-left, top-right,
/// bottom-left corners, or the patch center.
std::vector<Eigen::Vector2d> patch_ray_pixels(int patch_row, int patch_col, int patch_size,
                                              RayLayout layout);

/// Unit world rays through the selected patch pixels. Rejects patches that do
/// not fit inside the image.
std::vector<Ray> patch_rays(const Camera& cam, int patch_row, int patch_col, int patch_size,
                            RayLayout layout);

/// Back-projects one pixel to a world ray (not normalized: camera-frame z
/// component is exactly 1, so "length" along it is z-depth).
Eigen::Vector3d pixel_dir_z1(const Camera& cam, double u, double v);

/// |K^-1 (u, v, 1)|: converts a z-depth into length along the unit ray.
double depth_scale(const Camera& cam, double u, double v);

struct RaySegment {
    Eigen::Vector4d center;    // homogeneous world point, w = 1
    Eigen::Vector4d point_lo;  // at depth max(d - sigma, floor) along the ray
    Eigen::Vector4d point_hi;  // at depth d + sigma; w = 0 encodes a direction
    double depth = 0.0;
    double sigma = 0.0;
};

/// Depth d > 0 and sigma >= 0 measured along the supplied unit ray.
RaySegment make_segment(const Camera& cam, const Ray& ray, double d, double sigma,
                        double depth_floor = kDepthFloor);

/// Segment whose point is the direction at infinity (disparity 0 under
/// projection; sigma has no effect).
RaySegment make_infinite_segment(const Camera& cam, const Ray& ray);

/// Componentwise interval of the projected 6-vector
/// (x, y, z, u, v, q): query-frame camera center, pixel coordinates, and
/// disparity 1/d' of the point. lo == hi on components 0-2 always.
struct ProjectedRayInterval {
    std::array<double, 6> lo{};
    std::array<double, 6> hi{};
};

/// Projects one homogeneous point already in the query camera frame.
/// w = 1 for finite points, 0 for directions. Writes (u, v, q).
void project_cam_point(double fx, double fy, double cx, double cy, double hx, double hy,
                       double hz, double w, double d_eps, double& u, double& v, double& q);

ProjectedRayInterval project_segment(const Camera& query, const RaySegment& seg,
                                     double d_eps = kDepthEps);

/// Re-expresses cameras after the world moves by rigid G (points p -> G p):
/// extrinsics become T G^-1. Rejects non-rigid G.
std::vector<Camera> apply_global_rigid(const Eigen::Matrix4d& G, std::span<const Camera> cams);

struct NormalizedCameras {
    std::vector<Camera> cameras;   // first extrinsics = identity
    double scale = 1.0;            // applied to world units (multiply depths by it)
};

/// Moves the world frame to the first camera and rescales so the median
/// inter-camera distance is 1. Relative poses are preserved.
NormalizedCameras normalize_to_first_camera(std::span<const Camera> cams);

// Quaternion helpers for the on-disk camera format.
Eigen::Matrix3d rotation_from_quat(double qw, double qx, double qy, double qz);
Eigen::Vector4d quat_from_rotation(const Eigen::Matrix3d& R); // (w, x, y, z), w >= 0

} // namespace rayrope
