// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/posenc.hpp"

#include <cmath>
#include <stdexcept>

#include "rayrope/errors.hpp"

namespace rayrope {

std::string to_string(EncodingKind kind) {
    switch (kind) {
        case EncodingKind::rayrope: return "rayrope";
        case EncodingKind::rope_on_rays: return "rope_on_rays";
        case EncodingKind::cape: return "cape";
        case EncodingKind::gta: return "gta";
        case EncodingKind::prope: return "prope";
        case EncodingKind::plucker_input: return "plucker_input";
    }
    return "?";
}

EncodingKind encoding_kind_from_string(const std::string& s) {
    if (s == "rayrope") return EncodingKind::rayrope;
    if (s == "rope_on_rays") return EncodingKind::rope_on_rays;
    if (s == "cape") return EncodingKind::cape;
    if (s == "gta") return EncodingKind::gta;
    if (s == "prope") return EncodingKind::prope;
    if (s == "plucker_input") return EncodingKind::plucker_input;
    throw config_error("unknown encoding.kind '" + s + "'");
}

void validate_strategy(const EncodingStrategy& s) {
    if (s.rays_per_patch != 1 && s.rays_per_patch != 3)
        throw config_error("encoding.rays_per_patch must be 1 or 3");
    if (!(s.omega_min > 0.0) || !(s.omega_max > 0.0) || s.omega_min > s.omega_max)
        throw config_error("encoding frequency range must satisfy 0 < omega_min <= omega_max");
    if (s.kind == EncodingKind::rayrope) return;

    // The ray-segment flags are meaningless for the baselines; reject values
    // that differ from the defaults instead of silently ignoring them.
    EncodingStrategy defaults;
    const std::string k = to_string(s.kind);
    if (s.point_at_infinity)
        throw config_error("encoding.point_at_infinity applies only to rayrope (kind is " + k + ")");
    if (!s.use_sigma)
        throw config_error("encoding.use_sigma applies only to rayrope (kind is " + k + ")");
    if (!s.encode_value_output)
        throw config_error("encoding.encode_value_output applies only to rayrope (kind is " + k + ")");
    if (s.rays_per_patch != defaults.rays_per_patch)
        throw config_error("encoding.rays_per_patch applies only to rayrope (kind is " + k + ")");
    if (s.single_frequency && s.kind != EncodingKind::rope_on_rays)
        throw config_error("encoding.single_frequency applies only to rayrope/rope_on_rays (kind is " + k + ")");
}

int strategy_components(const EncodingStrategy& strategy) {
    // rope_on_rays rotates on the fixed 6-vector (center, direction); only
    // rayrope spreads components over per-patch rays.
    return strategy.kind == EncodingKind::rope_on_rays ? 6 : 6 * strategy.rays_per_patch;
}

EncodingStrategy ablation_config(int variant, EncodingStrategy base) {
    base.kind = EncodingKind::rayrope;
    switch (variant) {
        case 1: base.use_sigma = false; break;
        case 2: base.point_at_infinity = true; break;
        case 3: base.known_depth = true; break;
        case 4: base.rays_per_patch = 1; break;
        case 5: base.single_frequency = true; break;
        case 6: base.encode_value_output = false; break;
        default:
            throw config_error("ablation variant must be 1..6, got " + std::to_string(variant));
    }
    return base;
}

std::vector<double> strategy_frequencies(const EncodingStrategy& strategy, int head_dim) {
    const int components = strategy_components(strategy);
    if (head_dim <= 0 || head_dim % (2 * components) != 0)
        throw config_error("head dim " + std::to_string(head_dim) + " must be divisible by " +
                           std::to_string(2 * components) + " for " + to_string(strategy.kind) +
                           " with " + std::to_string(strategy.rays_per_patch) + " rays");
    const int f = head_dim / (2 * components);
    if (strategy.single_frequency)
        return std::vector<double>(static_cast<std::size_t>(f),
                                   std::sqrt(strategy.omega_min * strategy.omega_max));
    return frequency_schedule(f, strategy.omega_min, strategy.omega_max);
}

// ---------------------------------------------------------------------------

std::vector<TokenSegments> rayrope_positions(std::span<const Camera> cams, const TokenGrid& grid,
                                             std::span<const double> depth_z,
                                             std::span<const double> sigma_z,
                                             std::span<const Image> known_depths,
                                             const EncodingStrategy& strategy,
                                             PositionStats* stats) {
    const int per_view = grid.tokens_per_view();
    const int n_tokens = static_cast<int>(cams.size()) * per_view;
    if (static_cast<int>(depth_z.size()) != n_tokens)
        throw std::invalid_argument("rayrope_positions: depth count " +
                                    std::to_string(depth_z.size()) + " != token count " +
                                    std::to_string(n_tokens));
    const bool have_sigma = !sigma_z.empty();
    if (have_sigma && sigma_z.size() != depth_z.size())
        throw std::invalid_argument("rayrope_positions: sigma count mismatch");
    const RayLayout layout =
        strategy.rays_per_patch == 1 ? RayLayout::center_only : RayLayout::three_corners;
    const int side = grid.patches_per_side();

    PositionStats local;
    std::vector<TokenSegments> out(static_cast<std::size_t>(n_tokens));
    for (std::size_t view = 0; view < cams.size(); ++view) {
        const Camera& cam = cams[view];
        const Image* known =
            (strategy.known_depth && view < known_depths.size() && !known_depths[view].empty())
                ? &known_depths[view]
                : nullptr;
        for (int pr = 0; pr < side; ++pr) {
            for (int pc = 0; pc < side; ++pc) {
                const int tok = static_cast<int>(view) * per_view + pr * side + pc;
                const auto pixels = patch_ray_pixels(pr, pc, grid.patch_size, layout);
                const auto rays = patch_rays(cam, pr, pc, grid.patch_size, layout);
                auto& dst = out[static_cast<std::size_t>(tok)];

                if (strategy.point_at_infinity) {
                    for (const auto& ray : rays) dst.rays.push_back(make_infinite_segment(cam, ray));
                    continue;
                }

                // A token switches to known depth only if every one of its
                // rays samples a finite positive value.
                std::vector<double> known_z;
                bool use_known = known != nullptr;
                if (known) {
                    for (const auto& px : pixels) {
                        const int x = std::min(std::max(static_cast<int>(px.x()), 0), known->width - 1);
                        const int y = std::min(std::max(static_cast<int>(px.y()), 0), known->height - 1);
                        const double z = known->at(x, y, 0);
                        known_z.push_back(z);
                        if (!(z > 0.0) || !std::isfinite(z)) use_known = false;
                    }
                    if (!use_known) ++local.invalid_known;
                    else ++local.substituted_tokens;
                }

                for (std::size_t r = 0; r < rays.size(); ++r) {
                    const double scale = depth_scale(cam, pixels[r].x(), pixels[r].y());
                    double z = use_known ? known_z[r] : depth_z[static_cast<std::size_t>(tok)];
                    double s = use_known ? 0.0
                                         : (strategy.use_sigma && have_sigma
                                                ? sigma_z[static_cast<std::size_t>(tok)]
                                                : 0.0);
                    dst.rays.push_back(make_segment(cam, rays[r], z * scale, s * scale));
                }
            }
        }
    }
    if (stats) *stats = local;
    return out;
}

std::vector<ProjectedRayInterval> project_token(const Camera& query, const TokenSegments& token,
                                                double uv_scale) {
    std::vector<ProjectedRayInterval> out;
    out.reserve(token.rays.size());
    for (const auto& seg : token.rays)
        out.push_back(scale_interval(project_segment(query, seg), uv_scale));
    return out;
}

// ---------------------------------------------------------------------------
// Camera-matrix baselines

namespace {

Eigen::Matrix4d lifted_intrinsics(const Eigen::Matrix3d& K) {
    Eigen::Matrix4d out = Eigen::Matrix4d::Identity();
    out.topLeftCorner<3, 3>() = K;
    return out;
}

/// Standard 2D RoPE blocks on integer patch indices: the tail's block slots
/// are split half for u, half for v, base-10000 schedule per axis.
std::vector<Block2> rope_tail(int tail_dim, int patch_u, int patch_v) {
    const int blocks = tail_dim / 2;
    const int per_axis = blocks / 2;
    std::vector<Block2> out;
    out.reserve(static_cast<std::size_t>(blocks));
    for (int axis = 0; axis < 2; ++axis) {
        const double pos = axis == 0 ? patch_u : patch_v;
        for (int m = 0; m < per_axis; ++m) {
            const double freq = std::pow(10000.0, -2.0 * m / (2.0 * per_axis));
            out.push_back(rope_block(freq, pos));
        }
    }
    return out;
}

} // namespace

CameraBlockEncoding baseline_encoding(EncodingKind kind, const Camera& cam, int patch_u,
                                      int patch_v, int dim) {
    CameraBlockEncoding enc;
    enc.kind = kind;
    enc.dim = dim;
    switch (kind) {
        case EncodingKind::cape: {
            if (dim % 4 != 0)
                throw std::invalid_argument("cape: dim " + std::to_string(dim) + " must be divisible by 4");
            enc.cam_copies = dim / 4;
            enc.query_block = cam.T;
            enc.key_value_block = cam.T.inverse();
            enc.applies_to_value_output = false;
            break;
        }
        case EncodingKind::gta:
        case EncodingKind::prope: {
            if (dim % 8 != 0)
                throw std::invalid_argument(to_string(kind) + ": dim " + std::to_string(dim) +
                                            " must be divisible by 8");
            enc.cam_copies = dim / 8;
            Eigen::Matrix4d E = cam.T;
            if (kind == EncodingKind::prope) E = lifted_intrinsics(cam.K) * cam.T;
            const double cond_probe = E.norm() * E.inverse().norm();
            if (!std::isfinite(cond_probe))
                throw std::invalid_argument(to_string(kind) + ": singular lifted camera matrix");
            enc.query_block = E;
            enc.key_value_block = E.inverse();
            enc.tail = rope_tail(dim / 2, patch_u, patch_v);
            enc.applies_to_value_output = true;
            break;
        }
        default:
            throw std::invalid_argument("baseline_encoding: kind " + to_string(kind) +
                                        " has no camera-matrix encoding");
    }
    return enc;
}

void apply_baseline(const CameraBlockEncoding& enc, std::span<const double> in,
                    std::span<double> out, BaselineSide side) {
    if (static_cast<int>(in.size()) != enc.dim || static_cast<int>(out.size()) != enc.dim)
        throw std::invalid_argument("apply_baseline: vector length mismatch");
    Eigen::Matrix4d M;
    switch (side) {
        case BaselineSide::query: M = enc.query_block.transpose(); break;
        case BaselineSide::key_value: M = enc.key_value_block; break;
        case BaselineSide::output: M = enc.query_block; break;
    }
    std::size_t off = 0;
    for (int c = 0; c < enc.cam_copies; ++c, off += 4) {
        Eigen::Vector4d x(in[off], in[off + 1], in[off + 2], in[off + 3]);
        Eigen::Vector4d y = M * x;
        for (int i = 0; i < 4; ++i) out[off + static_cast<std::size_t>(i)] = y[i];
    }
    for (const Block2& raw : enc.tail) {
        const Block2 blk = side == BaselineSide::output ? raw : raw.transposed();
        const double x0 = in[off], x1 = in[off + 1];
        out[off] = blk.a * x0 - blk.b * x1;
        out[off + 1] = blk.b * x0 + blk.a * x1;
        off += 2;
    }
    for (; off < in.size(); ++off) out[off] = in[off];
}

// ---------------------------------------------------------------------------
// Input raymaps

std::vector<std::array<double, 6>> input_raymaps(RaymapKind kind, std::span<const Camera> cams,
                                                 const TokenGrid& grid) {
    const int side = grid.patches_per_side();
    std::vector<std::array<double, 6>> out;
    out.reserve(cams.size() * static_cast<std::size_t>(grid.tokens_per_view()));
    for (const auto& cam : cams) {
        const Eigen::Vector3d c = cam.center();
        for (int pr = 0; pr < side; ++pr) {
            for (int pc = 0; pc < side; ++pc) {
                const auto px = patch_ray_pixels(pr, pc, grid.patch_size, RayLayout::center_only)[0];
                if (kind == RaymapKind::plucker) {
                    const Eigen::Vector3d dir = pixel_dir_z1(cam, px.x(), px.y()).normalized();
                    const Eigen::Vector3d moment = c.cross(dir);
                    out.push_back({dir.x(), dir.y(), dir.z(), moment.x(), moment.y(), moment.z()});
                } else {
                    const Eigen::Vector3d cam_dir =
                        Eigen::Vector3d((px.x() - cam.cx()) / cam.fx(),
                                        (px.y() - cam.cy()) / cam.fy(), 1.0)
                            .normalized();
                    out.push_back({cam_dir.x(), cam_dir.y(), cam_dir.z(),
                                   px.x() / cam.width, px.y() / cam.height, 0.0});
                }
            }
        }
    }
    return out;
}

RaymapKind strategy_raymap(EncodingKind kind) {
    // Plucker raymaps are the absolute baseline's input; every other strategy
    // receives the pose-independent CamRay map so target tokens carry signal
    // without breaking SE(3) invariance.
    return kind == EncodingKind::plucker_input ? RaymapKind::plucker : RaymapKind::camray;
}

std::vector<std::array<double, 6>> rope_on_rays_positions(std::span<const Camera> cams,
                                                          const TokenGrid& grid) {
    const int side = grid.patches_per_side();
    std::vector<std::array<double, 6>> out;
    out.reserve(cams.size() * static_cast<std::size_t>(grid.tokens_per_view()));
    for (const auto& cam : cams) {
        const Eigen::Vector3d c = cam.center();
        for (int pr = 0; pr < side; ++pr) {
            for (int pc = 0; pc < side; ++pc) {
                const auto px = patch_ray_pixels(pr, pc, grid.patch_size, RayLayout::center_only)[0];
                const Eigen::Vector3d dir = pixel_dir_z1(cam, px.x(), px.y()).normalized();
                out.push_back({c.x(), c.y(), c.z(), dir.x(), dir.y(), dir.z()});
            }
        }
    }
    return out;
}

} // namespace rayrope
