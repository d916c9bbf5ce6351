// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace rayrope {

// ---------------------------------------------------------------------------
// Geometry construction

namespace {

ViewGeometry build_view_geometry(std::span<const Camera> cams, const TokenGrid& grid,
                                 const EncodingStrategy& strategy,
                                 std::span<const Image> known_depths) {
    ViewGeometry geom;
    geom.cameras.assign(cams.begin(), cams.end());
    geom.grid = grid;
    geom.rays_per_patch = strategy.rays_per_patch;
    geom.point_at_infinity = strategy.point_at_infinity;
    const RayLayout layout =
        strategy.rays_per_patch == 1 ? RayLayout::center_only : RayLayout::three_corners;
    const int side = grid.patches_per_side();

    for (std::size_t view = 0; view < cams.size(); ++view) {
        const Camera& cam = cams[view];
        const Image* known =
            (strategy.known_depth && view < known_depths.size() && !known_depths[view].empty())
                ? &known_depths[view]
                : nullptr;
        for (int pr = 0; pr < side; ++pr) {
            for (int pc = 0; pc < side; ++pc) {
                const auto pixels = patch_ray_pixels(pr, pc, grid.patch_size, layout);
                const auto rays = patch_rays(cam, pr, pc, grid.patch_size, layout);

                bool use_known = known != nullptr;
                std::vector<double> known_z(pixels.size(), 0.0);
                if (known) {
                    for (std::size_t r = 0; r < pixels.size(); ++r) {
                        const int x = std::min(std::max(static_cast<int>(pixels[r].x()), 0),
                                               known->width - 1);
                        const int y = std::min(std::max(static_cast<int>(pixels[r].y()), 0),
                                               known->height - 1);
                        known_z[r] = known->at(x, y, 0);
                        if (!(known_z[r] > 0.0) || !std::isfinite(known_z[r])) use_known = false;
                    }
                    if (use_known) ++geom.substituted_tokens;
                    else ++geom.invalid_known;
                }
                for (std::size_t r = 0; r < rays.size(); ++r) {
                    TokenRayGeom rg;
                    rg.origin = rays[r].origin;
                    rg.dir = rays[r].dir;
                    rg.depth_scale = depth_scale(cam, pixels[r].x(), pixels[r].y());
                    rg.known = use_known;
                    rg.known_z = use_known ? known_z[r] : 0.0;
                    geom.rays.push_back(rg);
                }
            }
        }
    }
    return geom;
}

std::shared_ptr<const TokenTransforms> build_token_transforms(std::span<const Camera> cams,
                                                              const TokenGrid& grid,
                                                              const EncodingStrategy& strategy,
                                                              int head_dim,
                                                              std::span<const double> freqs) {
    auto tt = std::make_shared<TokenTransforms>();
    tt->head_dim = head_dim;
    const int side = grid.patches_per_side();

    if (strategy.kind == EncodingKind::rope_on_rays) {
        if (head_dim % 12 != 0)
            throw std::invalid_argument("rope_on_rays: head dim must be divisible by 12");
        tt->cam_copies = 0;
        tt->tail_blocks = head_dim / 2;
        tt->value_output = false;
        const int f_count = static_cast<int>(freqs.size());
        const auto positions = rope_on_rays_positions(cams, grid);
        const std::size_t n_tokens = positions.size();
        tt->q_cam.assign(n_tokens, Eigen::Matrix4d::Identity());
        tt->kv_cam = tt->q_cam;
        tt->out_cam = tt->q_cam;
        for (const auto& pos : positions) {
            for (int c = 0; c < 6; ++c) {
                for (int f = 0; f < f_count; ++f) {
                    const Block2 blk = rope_block(freqs[static_cast<std::size_t>(f)],
                                                  pos[static_cast<std::size_t>(c)]);
                    tt->q_tail.push_back(blk.transposed());
                    tt->kv_tail.push_back(blk.transposed());
                    tt->out_tail.push_back(blk);
                }
            }
        }
        return tt;
    }

    // CaPE / GTA / PRoPE: one camera block per view, rope tail on patch
    // indices for GTA/PRoPE.
    for (std::size_t view = 0; view < cams.size(); ++view) {
        for (int pr = 0; pr < side; ++pr) {
            for (int pc = 0; pc < side; ++pc) {
                const CameraBlockEncoding enc =
                    baseline_encoding(strategy.kind, cams[view], pc, pr, head_dim);
                tt->cam_copies = enc.cam_copies;
                tt->tail_blocks = static_cast<int>(enc.tail.size());
                tt->value_output = enc.applies_to_value_output;
                tt->q_cam.push_back(enc.query_block.transpose());
                tt->kv_cam.push_back(enc.key_value_block);
                tt->out_cam.push_back(enc.query_block);
                for (const Block2& blk : enc.tail) {
                    tt->q_tail.push_back(blk.transposed());
                    tt->kv_tail.push_back(blk.transposed());
                    tt->out_tail.push_back(blk);
                }
            }
        }
    }
    return tt;
}

} // namespace

AttentionGeometry build_attention_geometry(std::span<const Camera> cams, const TokenGrid& grid,
                                           const EncodingStrategy& strategy, int head_dim,
                                           std::span<const Image> known_depths) {
    validate_strategy(strategy);
    AttentionGeometry geom;
    geom.strategy = strategy;
    geom.head_dim = head_dim;
    geom.view = build_view_geometry(cams, grid, strategy, known_depths);
    switch (strategy.kind) {
        case EncodingKind::rayrope:
        case EncodingKind::rope_on_rays:
            geom.freqs = strategy_frequencies(strategy, head_dim);
            break;
        default:
            break;
    }
    switch (strategy.kind) {
        case EncodingKind::cape:
        case EncodingKind::gta:
        case EncodingKind::prope:
        case EncodingKind::rope_on_rays:
            geom.baseline = build_token_transforms(cams, grid, strategy, head_dim, geom.freqs);
            break;
        default:
            break;
    }
    return geom;
}

// ---------------------------------------------------------------------------
// projected_bounds

namespace {

struct RayBackward {
    double dcomp_dt[2][3]; // endpoint x (u, v, q)
    std::uint8_t arg_lo[3];
    std::uint8_t arg_hi[3];
    double dtlo_dz = 0.0, dtlo_ds = 0.0, dthi_dz = 0.0, dthi_ds = 0.0;
    bool active = false;
};

} // namespace

template <class T>
Tensor<T> projected_bounds(const Tensor<T>& depth_z, const Tensor<T>& sigma_z,
                           const ViewGeometry& geom, int token_begin, int token_end,
                           const Camera& query_cam) {
    const int rays = geom.rays_per_patch;
    const int C = geom.components();
    const int rows = token_end - token_begin;
    if (rows <= 0 || token_end > geom.tokens())
        throw std::invalid_argument("projected_bounds: bad token range");
    const bool have_depth = depth_z.defined();
    const bool have_sigma = sigma_z.defined();
    if (have_depth && depth_z.numel() != geom.tokens())
        throw std::invalid_argument("projected_bounds: depth count " +
                                    std::to_string(depth_z.numel()) + " != tokens " +
                                    std::to_string(geom.tokens()));

    const Eigen::Matrix3d R = query_cam.rotation();
    const Eigen::Vector3d t = query_cam.translation();
    const double fx = query_cam.fx(), fy = query_cam.fy();
    const double cx = query_cam.cx(), cy = query_cam.cy();
    const double uv_scale = 1.0 / query_cam.width;

    std::vector<T> value(static_cast<std::size_t>(rows) * 2 * C);
    auto back = std::make_shared<std::vector<RayBackward>>(
        static_cast<std::size_t>(rows) * rays);

    for (int r_out = 0; r_out < rows; ++r_out) {
        const int tok = token_begin + r_out;
        T* lo = value.data() + static_cast<std::size_t>(r_out) * 2 * C;
        T* hi = lo + C;
        for (int k = 0; k < rays; ++k) {
            const TokenRayGeom& rg = geom.rays[static_cast<std::size_t>(tok) * rays + k];
            RayBackward& rb = (*back)[static_cast<std::size_t>(r_out) * rays + k];
            const int base = 6 * k;

            const Eigen::Vector3d c_q = R * rg.origin + t;
            for (int i = 0; i < 3; ++i) {
                lo[base + i] = static_cast<T>(c_q[i]);
                hi[base + i] = static_cast<T>(c_q[i]);
            }

            if (geom.point_at_infinity) {
                const Eigen::Vector3d h = R * rg.dir;
                double u, v, q;
                project_cam_point(fx, fy, cx, cy, h.x(), h.y(), h.z(), 0.0, kDepthEps, u, v, q);
                u *= uv_scale;
                v *= uv_scale;
                lo[base + 3] = hi[base + 3] = static_cast<T>(u);
                lo[base + 4] = hi[base + 4] = static_cast<T>(v);
                lo[base + 5] = hi[base + 5] = static_cast<T>(q);
                continue;
            }

            const double z = rg.known ? rg.known_z
                                      : (have_depth ? static_cast<double>(depth_z.value_at(tok)) : 1.0);
            const double sz = rg.known ? 0.0
                                       : (have_sigma ? static_cast<double>(sigma_z.value_at(tok)) : 0.0);
            const double t_d = z * rg.depth_scale;
            const double t_s = sz * rg.depth_scale;
            const double t_lo_raw = t_d - t_s;
            const bool lo_clamped = t_lo_raw < kDepthFloor;
            const double t_ends[2] = {std::max(t_lo_raw, kDepthFloor), t_d + t_s};

            const Eigen::Vector3d rho = R * rg.dir;
            double uvq[2][3];
            for (int e = 0; e < 2; ++e) {
                const Eigen::Vector3d p = rg.origin + t_ends[e] * rg.dir;
                const Eigen::Vector3d h = R * p + t;
                double u, v, q;
                project_cam_point(fx, fy, cx, cy, h.x(), h.y(), h.z(), 1.0, kDepthEps, u, v, q);
                uvq[e][0] = u * uv_scale;
                uvq[e][1] = v * uv_scale;
                uvq[e][2] = q;
                const bool unclamped = std::abs(h.z()) >= kDepthEps;
                const double dc = unclamped ? h.z() : (h.z() < 0.0 ? -kDepthEps : kDepthEps);
                const double dc2 = dc * dc;
                rb.dcomp_dt[e][0] =
                    uv_scale * (fx * rho.x() / dc - (unclamped ? fx * h.x() * rho.z() / dc2 : 0.0));
                rb.dcomp_dt[e][1] =
                    uv_scale * (fy * rho.y() / dc - (unclamped ? fy * h.y() * rho.z() / dc2 : 0.0));
                rb.dcomp_dt[e][2] = unclamped ? -rho.z() / dc2 : 0.0;
            }
            for (int c = 0; c < 3; ++c) {
                // Ties route lo through the near endpoint and hi through the
                // far one, so a zero-width segment still collects both grads.
                const bool first_lo = uvq[0][c] <= uvq[1][c];
                rb.arg_lo[c] = first_lo ? 0 : 1;
                rb.arg_hi[c] = first_lo ? 1 : 0;
                lo[base + 3 + c] = static_cast<T>(uvq[rb.arg_lo[c]][c]);
                hi[base + 3 + c] = static_cast<T>(uvq[rb.arg_hi[c]][c]);
            }
            rb.active = !rg.known && (have_depth || have_sigma);
            rb.dtlo_dz = lo_clamped ? 0.0 : rg.depth_scale;
            rb.dtlo_ds = lo_clamped ? 0.0 : -rg.depth_scale;
            rb.dthi_dz = rg.depth_scale;
            rb.dthi_ds = rg.depth_scale;
        }
    }

    std::vector<Tensor<T>> inputs;
    int depth_idx = -1, sigma_idx = -1;
    if (have_depth) {
        depth_idx = static_cast<int>(inputs.size());
        inputs.push_back(depth_z);
    }
    if (have_sigma) {
        sigma_idx = static_cast<int>(inputs.size());
        inputs.push_back(sigma_z);
    }

    return Tensor<T>::from_op(
        std::move(inputs), {rows, 2 * C}, std::move(value),
        [back, rays, C, rows, token_begin, depth_idx, sigma_idx](const auto& self, auto& in) {
            std::span<T> dz = depth_idx >= 0 && in[static_cast<std::size_t>(depth_idx)].requires_grad()
                                  ? in[static_cast<std::size_t>(depth_idx)].grad_buffer()
                                  : std::span<T>{};
            std::span<T> ds = sigma_idx >= 0 && in[static_cast<std::size_t>(sigma_idx)].requires_grad()
                                  ? in[static_cast<std::size_t>(sigma_idx)].grad_buffer()
                                  : std::span<T>{};
            if (dz.empty() && ds.empty()) return;
            for (int r_out = 0; r_out < rows; ++r_out) {
                const T* g_lo = self.grad.data() + static_cast<std::size_t>(r_out) * 2 * C;
                const T* g_hi = g_lo + C;
                for (int k = 0; k < rays; ++k) {
                    const RayBackward& rb = (*back)[static_cast<std::size_t>(r_out) * rays + k];
                    if (!rb.active) continue;
                    double acc_t[2] = {0.0, 0.0};
                    for (int c = 0; c < 3; ++c) {
                        acc_t[rb.arg_lo[c]] +=
                            static_cast<double>(g_lo[6 * k + 3 + c]) * rb.dcomp_dt[rb.arg_lo[c]][c];
                        acc_t[rb.arg_hi[c]] +=
                            static_cast<double>(g_hi[6 * k + 3 + c]) * rb.dcomp_dt[rb.arg_hi[c]][c];
                    }
                    const std::size_t tok = static_cast<std::size_t>(token_begin + r_out);
                    if (!dz.empty())
                        dz[tok] += static_cast<T>(acc_t[0] * rb.dtlo_dz + acc_t[1] * rb.dthi_dz);
                    if (!ds.empty())
                        ds[tok] += static_cast<T>(acc_t[0] * rb.dtlo_ds + acc_t[1] * rb.dthi_ds);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// apply_expected_blocks

template <class T>
Tensor<T> apply_expected_blocks(const Tensor<T>& x, const Tensor<T>& bounds, ApplyMode mode,
                                std::span<const double> freqs, int heads) {
    if (x.ndim() != 2 || bounds.ndim() != 2 || x.dim(0) != bounds.dim(0))
        throw std::invalid_argument("apply_expected_blocks: rows of " + shape_str(x.shape()) +
                                    " and " + shape_str(bounds.shape()) + " disagree");
    const std::int64_t M = x.dim(0);
    const int D = static_cast<int>(x.dim(1));
    const int C = static_cast<int>(bounds.dim(1)) / 2;
    const int F = static_cast<int>(freqs.size());
    if (heads <= 0 || D % heads != 0)
        throw std::invalid_argument("apply_expected_blocks: heads must divide dim");
    const int dh = D / heads;
    if (dh != 2 * C * F)
        throw std::invalid_argument("apply_expected_blocks: head dim " + std::to_string(dh) +
                                    " != 2 * " + std::to_string(C) + " components * " +
                                    std::to_string(F) + " freqs");
    const int slots = C * F;
    const bool transpose = mode != ApplyMode::output;

    auto blocks = std::make_shared<std::vector<Block2>>(static_cast<std::size_t>(M) * slots);
    auto bgrads = std::make_shared<std::vector<Block2Grad>>(static_cast<std::size_t>(M) * slots);
    std::vector<T> value(static_cast<std::size_t>(M) * D);
    const T* xv = x.values().data();
    const T* bv = bounds.values().data();

    parallel_for(M, 32, [&](std::int64_t m0, std::int64_t m1) {
        for (std::int64_t m = m0; m < m1; ++m) {
            Block2* blk_row = blocks->data() + m * slots;
            Block2Grad* grad_row = bgrads->data() + m * slots;
            const T* b_row = bv + m * 2 * C;
            for (int c = 0; c < C; ++c)
                for (int f = 0; f < F; ++f)
                    blk_row[c * F + f] = expected_block_with_grad(
                        freqs[static_cast<std::size_t>(f)], static_cast<double>(b_row[c]),
                        static_cast<double>(b_row[C + c]), grad_row[c * F + f]);
            const T* x_row = xv + m * D;
            T* y_row = value.data() + m * D;
            for (int h = 0; h < heads; ++h) {
                const T* xp = x_row + h * dh;
                T* yp = y_row + h * dh;
                for (int s = 0; s < slots; ++s) {
                    const Block2 blk = transpose ? blk_row[s].transposed() : blk_row[s];
                    const double x0 = static_cast<double>(xp[2 * s]);
                    const double x1 = static_cast<double>(xp[2 * s + 1]);
                    yp[2 * s] = static_cast<T>(blk.a * x0 - blk.b * x1);
                    yp[2 * s + 1] = static_cast<T>(blk.b * x0 + blk.a * x1);
                }
            }
        }
    });

    return Tensor<T>::from_op(
        {x, bounds}, {M, D}, std::move(value),
        [blocks, bgrads, M, D, C, F, dh, heads, slots, transpose](const auto& self, auto& in) {
            const T* xv = in[0].values().data();
            std::span<T> gx = in[0].requires_grad() ? in[0].grad_buffer() : std::span<T>{};
            std::span<T> gb = in[1].requires_grad() ? in[1].grad_buffer() : std::span<T>{};
            // rows write disjoint grad slices, so row-parallelism is exact
            parallel_for(M, 32, [&](std::int64_t m0, std::int64_t m1) {
            for (std::int64_t m = m0; m < m1; ++m) {
                const Block2* blk_row = blocks->data() + m * slots;
                const Block2Grad* grad_row = bgrads->data() + m * slots;
                const T* go_row = self.grad.data() + m * D;
                const T* x_row = xv + m * D;
                for (int s = 0; s < slots; ++s) {
                    const Block2 raw = blk_row[s];
                    const Block2 blk = transpose ? raw.transposed() : raw;
                    double dL_da = 0.0, dL_db_applied = 0.0;
                    for (int h = 0; h < heads; ++h) {
                        const std::size_t i0 = static_cast<std::size_t>(m * D + h * dh + 2 * s);
                        const double g0 = static_cast<double>(go_row[h * dh + 2 * s]);
                        const double g1 = static_cast<double>(go_row[h * dh + 2 * s + 1]);
                        const double x0 = static_cast<double>(x_row[h * dh + 2 * s]);
                        const double x1 = static_cast<double>(x_row[h * dh + 2 * s + 1]);
                        if (!gx.empty()) {
                            // transpose of the applied matrix
                            gx[i0] += static_cast<T>(blk.a * g0 + blk.b * g1);
                            gx[i0 + 1] += static_cast<T>(-blk.b * g0 + blk.a * g1);
                        }
                        dL_da += g0 * x0 + g1 * x1;
                        dL_db_applied += -g0 * x1 + g1 * x0;
                    }
                    if (gb.empty()) continue;
                    // d(applied b)/d(raw b) is -1 under transpose.
                    const double dL_db = transpose ? -dL_db_applied : dL_db_applied;
                    const Block2Grad& bg = grad_row[s];
                    const int c = s / F;
                    gb[static_cast<std::size_t>(m * 2 * C + c)] +=
                        static_cast<T>(dL_da * bg.da_dlo + dL_db * bg.db_dlo);
                    gb[static_cast<std::size_t>(m * 2 * C + C + c)] +=
                        static_cast<T>(dL_da * bg.da_dhi + dL_db * bg.db_dhi);
                }
            }
            });
        });
}

// ---------------------------------------------------------------------------
// apply_token_transforms

template <class T>
Tensor<T> apply_token_transforms(const Tensor<T>& x, std::shared_ptr<const TokenTransforms> ttp,
                                 TransformSide side, int heads) {
    const TokenTransforms& tt = *ttp;
    const std::int64_t M = x.dim(0);
    const int D = static_cast<int>(x.dim(1));
    const int dh = tt.head_dim;
    if (heads * dh != D)
        throw std::invalid_argument("apply_token_transforms: dim mismatch");
    if (tt.cam_copies * 4 + tt.tail_blocks * 2 != dh)
        throw std::invalid_argument("apply_token_transforms: malformed transform layout");
    if (static_cast<std::size_t>(M) != tt.q_cam.size())
        throw std::invalid_argument("apply_token_transforms: token count mismatch");

    const std::vector<Eigen::Matrix4d>& cams = side == TransformSide::query ? tt.q_cam
                                               : side == TransformSide::key_value ? tt.kv_cam
                                                                                  : tt.out_cam;
    const std::vector<Block2>& tails = side == TransformSide::query ? tt.q_tail
                                       : side == TransformSide::key_value ? tt.kv_tail
                                                                          : tt.out_tail;

    std::vector<T> value(static_cast<std::size_t>(M) * D);
    const T* xv = x.values().data();
    for (std::int64_t m = 0; m < M; ++m) {
        const Eigen::Matrix4d& Mt = cams[static_cast<std::size_t>(m)];
        const Block2* tail = tails.empty() ? nullptr : tails.data() + m * tt.tail_blocks;
        for (int h = 0; h < heads; ++h) {
            const T* xp = xv + m * D + h * dh;
            T* yp = value.data() + m * D + h * dh;
            int off = 0;
            for (int c = 0; c < tt.cam_copies; ++c, off += 4) {
                const Eigen::Vector4d in(static_cast<double>(xp[off]), static_cast<double>(xp[off + 1]),
                                         static_cast<double>(xp[off + 2]), static_cast<double>(xp[off + 3]));
                const Eigen::Vector4d out = Mt * in;
                for (int i = 0; i < 4; ++i) yp[off + i] = static_cast<T>(out[i]);
            }
            for (int b = 0; b < tt.tail_blocks; ++b, off += 2) {
                const Block2 blk = tail[b];
                const double x0 = static_cast<double>(xp[off]);
                const double x1 = static_cast<double>(xp[off + 1]);
                yp[off] = static_cast<T>(blk.a * x0 - blk.b * x1);
                yp[off + 1] = static_cast<T>(blk.b * x0 + blk.a * x1);
            }
        }
    }

    // Transforms are constants; only x receives gradient.
    return Tensor<T>::from_op(
        {x}, {M, D}, std::move(value),
        [ttp, side, M, D, dh, heads](const auto& self, auto& in) {
            if (!in[0].requires_grad()) return;
            auto gx = in[0].grad_buffer();
            const std::vector<Eigen::Matrix4d>& cams = side == TransformSide::query ? ttp->q_cam
                                                       : side == TransformSide::key_value
                                                           ? ttp->kv_cam
                                                           : ttp->out_cam;
            const std::vector<Block2>& tails = side == TransformSide::query ? ttp->q_tail
                                               : side == TransformSide::key_value ? ttp->kv_tail
                                                                                  : ttp->out_tail;
            for (std::int64_t m = 0; m < M; ++m) {
                const Eigen::Matrix4d Mt = cams[static_cast<std::size_t>(m)].transpose();
                const Block2* tail = tails.empty() ? nullptr : tails.data() + m * ttp->tail_blocks;
                for (int h = 0; h < heads; ++h) {
                    const T* gp = self.grad.data() + m * D + h * dh;
                    T* dp = gx.data() + m * D + h * dh;
                    int off = 0;
                    for (int c = 0; c < ttp->cam_copies; ++c, off += 4) {
                        const Eigen::Vector4d g(static_cast<double>(gp[off]), static_cast<double>(gp[off + 1]),
                                                static_cast<double>(gp[off + 2]), static_cast<double>(gp[off + 3]));
                        const Eigen::Vector4d d = Mt * g;
                        for (int i = 0; i < 4; ++i) dp[off + i] += static_cast<T>(d[i]);
                    }
                    for (int b = 0; b < ttp->tail_blocks; ++b, off += 2) {
                        const Block2 blk = tail[b];
                        const double g0 = static_cast<double>(gp[off]);
                        const double g1 = static_cast<double>(gp[off + 1]);
                        dp[off] += static_cast<T>(blk.a * g0 + blk.b * g1);
                        dp[off + 1] += static_cast<T>(-blk.b * g0 + blk.a * g1);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// Attention

template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& keys, const Tensor<T>& values, int heads) {
    if (keys.dim(0) == 0) throw std::invalid_argument("attention: empty key set");
    check_same_shape(keys.shape(), values.shape(), "attention keys/values");
    if (q.ndim() != 2 || q.dim(1) != keys.dim(1))
        throw std::invalid_argument("attention: query " + shape_str(q.shape()) +
                                    " incompatible with keys " + shape_str(keys.shape()));
    const int D = static_cast<int>(q.dim(1));
    if (heads <= 0 || D % heads != 0) throw std::invalid_argument("attention: heads must divide dim");
    const std::int64_t dh = D / heads;
    std::vector<Tensor<T>> head_outs;
    head_outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor<T> qh = slice(q, 1, h * dh, dh);
        Tensor<T> kh = slice(keys, 1, h * dh, dh);
        Tensor<T> vh = slice(values, 1, h * dh, dh);
        Tensor<T> weights = softmax_last(matmul_bt(qh, kh));
        head_outs.push_back(matmul(weights, vh));
    }
    return heads == 1 ? head_outs[0] : concat(head_outs, 1);
}

template <class T>
QkvBundle<T> project_qkv(const AttentionLayerParams<T>& params, const Tensor<T>& tokens,
                         const EncodingStrategy& strategy) {
    QkvBundle<T> out;
    out.q = add_rows(matmul(tokens, params.Wq), params.bq);
    out.k = add_rows(matmul(tokens, params.Wk), params.bk);
    out.v = add_rows(matmul(tokens, params.Wv), params.bv);
    const std::int64_t M = tokens.dim(0);
    if (strategy.is_rayrope() && params.Wd.defined())
        out.depth = reshape(exp(add_rows(matmul(tokens, params.Wd), params.bd)), {M});
    if (strategy.is_rayrope() && strategy.use_sigma && params.Wsigma.defined())
        out.sigma = reshape(exp(add_rows(matmul(tokens, params.Wsigma), params.bsigma)), {M});
    return out;
}

template <class T>
Tensor<T> grouped_encoded_attention(const QkvBundle<T>& q_side, const QkvBundle<T>& kv_side,
                                    const AttentionGeometry& q_geom,
                                    const AttentionGeometry& kv_geom, bool same_set, int heads) {
    const EncodingStrategy& strategy = q_geom.strategy;
    if (kv_geom.strategy.kind != strategy.kind)
        throw std::invalid_argument("grouped_encoded_attention: strategy mismatch between sides");
    const std::int64_t Mq = q_side.q.dim(0);
    if (Mq != q_geom.view.tokens() || kv_side.k.dim(0) != kv_geom.view.tokens())
        throw std::invalid_argument("grouped_encoded_attention: token/camera count mismatch");

    if (strategy.kind == EncodingKind::plucker_input)
        return attention(q_side.q, kv_side.k, kv_side.v, heads);

    if (q_geom.baseline) {
        const bool vo = q_geom.baseline->value_output;
        Tensor<T> Qe = apply_token_transforms(q_side.q, q_geom.baseline, TransformSide::query, heads);
        Tensor<T> Ke =
            apply_token_transforms(kv_side.k, kv_geom.baseline, TransformSide::key_value, heads);
        Tensor<T> Ve = vo ? apply_token_transforms(kv_side.v, kv_geom.baseline,
                                                   TransformSide::key_value, heads)
                          : kv_side.v;
        Tensor<T> out = attention(Qe, Ke, Ve, heads);
        if (vo) out = apply_token_transforms(out, q_geom.baseline, TransformSide::output, heads);
        return out;
    }

    // RayRoPE: group query tokens by camera, re-encode all keys/values in
    // each query frame.
    const int hw = q_geom.view.tokens_per_view();
    const int Mk = kv_geom.view.tokens();
    std::vector<Tensor<T>> per_view;
    per_view.reserve(q_geom.view.cameras.size());
    for (std::size_t n = 0; n < q_geom.view.cameras.size(); ++n) {
        const Camera& qcam = q_geom.view.cameras[n];
        const std::int64_t row0 = static_cast<std::int64_t>(n) * hw;
        Tensor<T> bounds_kv =
            projected_bounds(kv_side.depth, kv_side.sigma, kv_geom.view, 0, Mk, qcam);
        Tensor<T> bounds_q =
            same_set ? slice(bounds_kv, 0, row0, hw)
                     : projected_bounds(q_side.depth, q_side.sigma, q_geom.view,
                                        static_cast<int>(row0), static_cast<int>(row0) + hw, qcam);
        Tensor<T> Qn = apply_expected_blocks(slice(q_side.q, 0, row0, hw), bounds_q,
                                             ApplyMode::query, q_geom.freqs, heads);
        Tensor<T> Kn =
            apply_expected_blocks(kv_side.k, bounds_kv, ApplyMode::key_value, q_geom.freqs, heads);
        Tensor<T> Vn = strategy.encode_value_output
                           ? apply_expected_blocks(kv_side.v, bounds_kv, ApplyMode::key_value,
                                                   q_geom.freqs, heads)
                           : kv_side.v;
        Tensor<T> On = attention(Qn, Kn, Vn, heads);
        if (strategy.encode_value_output)
            On = apply_expected_blocks(On, bounds_q, ApplyMode::output, q_geom.freqs, heads);
        per_view.push_back(On);
    }
    return per_view.size() == 1 ? per_view[0] : concat(per_view, 0);
}

template <class T>
Tensor<T> multiview_self_attention(const AttentionLayerParams<T>& params, const Tensor<T>& tokens,
                                   const AttentionGeometry& geom, int heads) {
    QkvBundle<T> bundle = project_qkv(params, tokens, geom.strategy);
    return grouped_encoded_attention(bundle, bundle, geom, geom, /*same_set=*/true, heads);
}

template <class T>
Tensor<T> multiview_cross_attention(const AttentionLayerParams<T>& params,
                                    const Tensor<T>& q_tokens, const Tensor<T>& kv_tokens,
                                    const AttentionGeometry& q_geom,
                                    const AttentionGeometry& kv_geom, int heads) {
    QkvBundle<T> qb = project_qkv(params, q_tokens, q_geom.strategy);
    QkvBundle<T> kb = project_qkv(params, kv_tokens, kv_geom.strategy);
    return grouped_encoded_attention(qb, kb, q_geom, kv_geom, /*same_set=*/false, heads);
}

// ---------------------------------------------------------------------------
// Scalar reference path

std::vector<double> attention_ref(std::span<const double> q,
                                  const std::vector<std::vector<double>>& keys,
                                  const std::vector<std::vector<double>>& values, int heads) {
    if (keys.empty()) throw std::invalid_argument("attention_ref: empty key set");
    const int D = static_cast<int>(q.size());
    const int dh = D / heads;
    std::vector<double> out(static_cast<std::size_t>(D), 0.0);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        std::vector<double> scores(keys.size());
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < keys.size(); ++j) {
            double s = 0.0;
            for (int i = 0; i < dh; ++i) s += q[static_cast<std::size_t>(off + i)] * keys[j][static_cast<std::size_t>(off + i)];
            scores[j] = s;
            mx = std::max(mx, s);
        }
        double denom = 0.0;
        for (auto& s : scores) {
            s = std::exp(s - mx);
            denom += s;
        }
        for (std::size_t j = 0; j < keys.size(); ++j) {
            const double w = scores[j] / denom;
            for (int i = 0; i < dh; ++i)
                out[static_cast<std::size_t>(off + i)] += w * values[j][static_cast<std::size_t>(off + i)];
        }
    }
    return out;
}

std::vector<double> encoded_attention_single_query(std::span<const double> q,
                                                   std::span<const ProjectedRayInterval> q_intervals,
                                                   std::span<const EncodedToken> kv,
                                                   std::span<const double> freqs, int heads,
                                                   bool encode_value_output) {
    if (kv.empty()) throw std::invalid_argument("encoded_attention_single_query: empty key set");
    const int D = static_cast<int>(q.size());
    const int dh = D / heads;
    const int rays = static_cast<int>(q_intervals.size());

    const BlockEncoding q_enc = build_encoding(q_intervals, rays, freqs, dh);
    auto apply_heads = [&](std::span<const double> vec, const BlockEncoding& enc, ApplyMode mode) {
        std::vector<double> out(vec.size());
        for (int h = 0; h < heads; ++h)
            apply_encoding(enc, vec.subspan(static_cast<std::size_t>(h) * dh, static_cast<std::size_t>(dh)),
                           std::span<double>(out).subspan(static_cast<std::size_t>(h) * dh,
                                                          static_cast<std::size_t>(dh)),
                           mode);
        return out;
    };

    const std::vector<double> q_enc_vec = apply_heads(q, q_enc, ApplyMode::query);
    std::vector<std::vector<double>> keys, values;
    keys.reserve(kv.size());
    values.reserve(kv.size());
    for (const auto& token : kv) {
        if (static_cast<int>(token.key.size()) != D || static_cast<int>(token.value.size()) != D)
            throw std::invalid_argument("encoded_attention_single_query: token width mismatch");
        const BlockEncoding enc = build_encoding(token.intervals, rays, freqs, dh);
        keys.push_back(apply_heads(token.key, enc, ApplyMode::key_value));
        values.push_back(encode_value_output ? apply_heads(token.value, enc, ApplyMode::key_value)
                                             : token.value);
    }
    std::vector<double> out = attention_ref(q_enc_vec, keys, values, heads);
    if (encode_value_output) out = apply_heads(out, q_enc, ApplyMode::output);
    return out;
}

// ---------------------------------------------------------------------------

#define RAYROPE_INSTANTIATE(T)                                                                     \
    template Tensor<T> projected_bounds<T>(const Tensor<T>&, const Tensor<T>&, const ViewGeometry&, \
                                           int, int, const Camera&);                               \
    template Tensor<T> apply_expected_blocks<T>(const Tensor<T>&, const Tensor<T>&, ApplyMode,     \
                                                std::span<const double>, int);                     \
    template Tensor<T> apply_token_transforms<T>(const Tensor<T>&,                                 \
                                                 std::shared_ptr<const TokenTransforms>,           \
                                                 TransformSide, int);                              \
    template Tensor<T> attention<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);    \
    template QkvBundle<T> project_qkv<T>(const AttentionLayerParams<T>&, const Tensor<T>&,         \
                                         const EncodingStrategy&);                                 \
    template Tensor<T> grouped_encoded_attention<T>(const QkvBundle<T>&, const QkvBundle<T>&,      \
                                                    const AttentionGeometry&,                      \
                                                    const AttentionGeometry&, bool, int);          \
    template Tensor<T> multiview_self_attention<T>(const AttentionLayerParams<T>&, const Tensor<T>&, \
                                                   const AttentionGeometry&, int);                 \
    template Tensor<T> multiview_cross_attention<T>(const AttentionLayerParams<T>&, const Tensor<T>&, \
                                                    const Tensor<T>&, const AttentionGeometry&,    \
                                                    const AttentionGeometry&, int);

RAYROPE_INSTANTIATE(float)
RAYROPE_INSTANTIATE(double)

#undef RAYROPE_INSTANTIATE

} // namespace rayrope
