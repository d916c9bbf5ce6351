// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rayrope/errors.hpp"

namespace rayrope {

namespace {

void check_rotation(const Eigen::Matrix3d& R, const char* what) {
    const double ortho = (R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-9)
        throw std::invalid_argument(std::string(what) + ": rotation not orthonormal (|R^T R - I| = " +
                                    std::to_string(ortho) + ")");
    if (std::abs(R.determinant() - 1.0) > 1e-9)
        throw std::invalid_argument(std::string(what) + ": det(R) != +1");
}

} // namespace

Camera make_camera(double fx, double fy, double cx, double cy, const Eigen::Matrix3d& R,
                   const Eigen::Vector3d& t, int width, int height) {
    Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
    K(0, 0) = fx;
    K(1, 1) = fy;
    K(0, 2) = cx;
    K(1, 2) = cy;
    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
    T.topLeftCorner<3, 3>() = R;
    T.topRightCorner<3, 1>() = t;
    return make_camera(K, T, width, height);
}

Camera make_camera(const Eigen::Matrix3d& K, const Eigen::Matrix4d& T, int width, int height) {
    if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0))
        throw std::invalid_argument("make_camera: focal lengths must be positive");
    check_rotation(T.topLeftCorner<3, 3>(), "make_camera");
    Camera cam;
    cam.K = K;
    cam.T = T;
    cam.width = width;
    cam.height = height;
    cam.P = K * T.topRows<3>();
    return cam;
}

bool is_rigid(const Eigen::Matrix4d& G, double tol) {
    const Eigen::Matrix3d R = G.topLeftCorner<3, 3>();
    if ((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    if (std::abs(R.determinant() - 1.0) > tol) return false;
    return G.row(3).isApprox(Eigen::RowVector4d(0, 0, 0, 1), tol) ||
           (G.row(3) - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() <= tol;
}

std::vector<Eigen::Vector2d> patch_ray_pixels(int patch_row, int patch_col, int patch_size,
                                              RayLayout layout) {
    const double u0 = static_cast<double>(patch_col) * patch_size;
    const double v0 = static_cast<double>(patch_row) * patch_size;
    if (layout == RayLayout::center_only)
        return {Eigen::Vector2d(u0 + 0.5 * patch_size, v0 + 0.5 * patch_size)};
    return {Eigen::Vector2d(u0, v0),
            Eigen::Vector2d(u0 + patch_size, v0),
            Eigen::Vector2d(u0, v0 + patch_size)};
}

Eigen::Vector3d pixel_dir_z1(const Camera& cam, double u, double v) {
    const Eigen::Vector3d cam_dir((u - cam.cx()) / cam.fx(), (v - cam.cy()) / cam.fy(), 1.0);
    return cam.rotation().transpose() * cam_dir;
}

double depth_scale(const Camera& cam, double u, double v) {
    const Eigen::Vector3d cam_dir((u - cam.cx()) / cam.fx(), (v - cam.cy()) / cam.fy(), 1.0);
    return cam_dir.norm();
}

std::vector<Ray> patch_rays(const Camera& cam, int patch_row, int patch_col, int patch_size,
                            RayLayout layout) {
    const int u_end = (patch_col + 1) * patch_size;
    const int v_end = (patch_row + 1) * patch_size;
    if (patch_row < 0 || patch_col < 0 || u_end > cam.width || v_end > cam.height)
        throw std::invalid_argument("patch_rays: patch (" + std::to_string(patch_row) + ", " +
                                    std::to_string(patch_col) + ") size " +
                                    std::to_string(patch_size) + " outside " +
                                    std::to_string(cam.width) + "x" + std::to_string(cam.height));
    const Eigen::Vector3d origin = cam.center();
    std::vector<Ray> rays;
    for (const auto& px : patch_ray_pixels(patch_row, patch_col, patch_size, layout))
        rays.push_back({origin, pixel_dir_z1(cam, px.x(), px.y()).normalized()});
    return rays;
}

RaySegment make_segment(const Camera& cam, const Ray& ray, double d, double sigma,
                        double depth_floor) {
    if (!std::isfinite(d) || !std::isfinite(sigma))
        throw std::invalid_argument("make_segment: non-finite depth or sigma");
    if (!(d > 0.0) || sigma < 0.0)
        throw std::invalid_argument("make_segment: requires d > 0 and sigma >= 0");
    const Eigen::Vector3d c = cam.center();
    const double t_lo = std::max(d - sigma, depth_floor);
    const double t_hi = d + sigma;
    RaySegment seg;
    seg.center = Eigen::Vector4d(c.x(), c.y(), c.z(), 1.0);
    seg.point_lo = Eigen::Vector4d(0, 0, 0, 1.0);
    seg.point_lo.head<3>() = c + t_lo * ray.dir;
    seg.point_hi = Eigen::Vector4d(0, 0, 0, 1.0);
    seg.point_hi.head<3>() = c + t_hi * ray.dir;
    seg.depth = d;
    seg.sigma = sigma;
    return seg;
}

RaySegment make_infinite_segment(const Camera& cam, const Ray& ray) {
    const Eigen::Vector3d c = cam.center();
    RaySegment seg;
    seg.center = Eigen::Vector4d(c.x(), c.y(), c.z(), 1.0);
    seg.point_lo = Eigen::Vector4d(ray.dir.x(), ray.dir.y(), ray.dir.z(), 0.0);
    seg.point_hi = seg.point_lo;
    seg.depth = std::numeric_limits<double>::infinity();
    seg.sigma = 0.0;
    return seg;
}

void project_cam_point(double fx, double fy, double cx, double cy, double hx, double hy,
                       double hz, double w, double d_eps, double& u, double& v, double& q) {
    double d = hz;
    if (std::abs(d) < d_eps) d = (d < 0.0 ? -d_eps : d_eps);
    // The pinhole form K h / h_z covers finite points and directions alike;
    // only the disparity distinguishes them (w / d' is 0 at infinity).
    u = fx * hx / d + cx;
    v = fy * hy / d + cy;
    q = w / d;
}

ProjectedRayInterval project_segment(const Camera& query, const RaySegment& seg, double d_eps) {
    const Eigen::Matrix3d R = query.rotation();
    const Eigen::Vector3d t = query.translation();

    ProjectedRayInterval out;
    const Eigen::Vector3d c_q = R * seg.center.head<3>() + t * seg.center.w();
    for (int i = 0; i < 3; ++i) {
        out.lo[static_cast<std::size_t>(i)] = c_q[i];
        out.hi[static_cast<std::size_t>(i)] = c_q[i];
    }

    const Eigen::Vector4d pts[2] = {seg.point_lo, seg.point_hi};
    double uvq[2][3];
    for (int e = 0; e < 2; ++e) {
        const Eigen::Vector3d h = R * pts[e].head<3>() + t * pts[e].w();
        project_cam_point(query.fx(), query.fy(), query.cx(), query.cy(), h.x(), h.y(), h.z(),
                          pts[e].w(), d_eps, uvq[e][0], uvq[e][1], uvq[e][2]);
    }
    for (int c = 0; c < 3; ++c) {
        out.lo[static_cast<std::size_t>(3 + c)] = std::min(uvq[0][c], uvq[1][c]);
        out.hi[static_cast<std::size_t>(3 + c)] = std::max(uvq[0][c], uvq[1][c]);
    }
    return out;
}

std::vector<Camera> apply_global_rigid(const Eigen::Matrix4d& G, std::span<const Camera> cams) {
    if (!is_rigid(G)) throw std::invalid_argument("apply_global_rigid: G is not rigid");
    Eigen::Matrix4d G_inv = Eigen::Matrix4d::Identity();
    const Eigen::Matrix3d R = G.topLeftCorner<3, 3>();
    G_inv.topLeftCorner<3, 3>() = R.transpose();
    G_inv.topRightCorner<3, 1>() = -R.transpose() * G.topRightCorner<3, 1>();
    std::vector<Camera> out;
    out.reserve(cams.size());
    for (const auto& cam : cams) out.push_back(make_camera(cam.K, cam.T * G_inv, cam.width, cam.height));
    return out;
}

NormalizedCameras normalize_to_first_camera(std::span<const Camera> cams) {
    if (cams.empty()) throw std::invalid_argument("normalize_to_first_camera: empty camera list");

    // World frame moves to the first camera: T_i' = T_i T_0^-1.
    const Eigen::Matrix4d T0 = cams[0].T;
    std::vector<Camera> moved = apply_global_rigid(T0, cams);

    double scale = 1.0;
    if (cams.size() >= 2) {
        std::vector<double> dists;
        for (std::size_t i = 0; i < moved.size(); ++i)
            for (std::size_t j = i + 1; j < moved.size(); ++j)
                dists.push_back((moved[i].center() - moved[j].center()).norm());
        std::sort(dists.begin(), dists.end());
        double median;
        const std::size_t n = dists.size();
        if (n % 2 == 1)
            median = dists[n / 2];
        else
            median = 0.5 * (dists[n / 2 - 1] + dists[n / 2]);
        if (median > 1e-12) scale = 1.0 / median;
    }

    NormalizedCameras out;
    out.scale = scale;
    out.cameras.reserve(moved.size());
    for (const auto& cam : moved) {
        Eigen::Matrix4d T = cam.T;
        T.topRightCorner<3, 1>() *= scale;
        out.cameras.push_back(make_camera(cam.K, T, cam.width, cam.height));
    }
    return out;
}

Eigen::Matrix3d rotation_from_quat(double qw, double qx, double qy, double qz) {
    return Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
}

Eigen::Vector4d quat_from_rotation(const Eigen::Matrix3d& R) {
    Eigen::Quaterniond q(R);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return Eigen::Vector4d(q.w(), q.x(), q.y(), q.z());
}

} // namespace rayrope
