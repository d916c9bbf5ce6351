// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// Interchangeable positional-encoding strategies for multi-view attention:
// RayRoPE position assembly plus the CaPE/GTA/PRoPE/rope-on-rays/Plucker
// baselines behind one configuration type.

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rayrope/geometry.hpp"
#include "rayrope/image.hpp"
#include "rayrope/rope.hpp"

namespace rayrope {

enum class EncodingKind { rayrope, rope_on_rays, cape, gta, prope, plucker_input };

std::string to_string(EncodingKind kind);
EncodingKind encoding_kind_from_string(const std::string& s);

struct EncodingStrategy {
    EncodingKind kind = EncodingKind::rayrope;
    bool use_sigma = true;          // variant 1 off: deterministic positions
    bool point_at_infinity = false; // variant 2: p^inf instead of p^d
    int rays_per_patch = 3;         // variant 4 uses 1
    bool single_frequency = false;  // variant 5: geometric-mean frequency only
    bool encode_value_output = true;// variant 6 off: q/k encoding only
    bool known_depth = false;       // substitute observed depth, sigma = 0
    double omega_min = 0.05;
    double omega_max = 50.0;

    bool is_rayrope() const { return kind == EncodingKind::rayrope; }
};

/// Rejects flag combinations outside the kind's meaningful set (for example
/// point_at_infinity on CaPE). known_depth is accepted by every kind because
/// the input-level depth channel applies to all of them.
void validate_strategy(const EncodingStrategy& strategy);

/// Named ablation variants 1-6 mapped onto strategy flags.
EncodingStrategy ablation_config(int variant, EncodingStrategy base = {});

/// Number of rotary position components per token for the strategy.
int strategy_components(const EncodingStrategy& strategy);

/// Head-dim frequency schedule for a strategy (single_frequency collapses the
/// schedule to its geometric mean).
std::vector<double> strategy_frequencies(const EncodingStrategy& strategy, int head_dim);

struct TokenGrid {
    int image_size = 32;
    int patch_size = 4;

    int patches_per_side() const { return image_size / patch_size; }
    int tokens_per_view() const { return patches_per_side() * patches_per_side(); }
};

// ---------------------------------------------------------------------------
// RayRoPE position assembly (reference path; the attention module mirrors
// this arithmetic inside the autodiff graph).

struct TokenSegments {
    std::vector<RaySegment> rays;   // rays_per_patch entries
};

struct PositionStats {
    int substituted_tokens = 0;     // tokens using known depth
    int invalid_known = 0;          // tokens whose known depth was unusable
};

/// Per-token ray segments for all views. Depths and sigmas are z-depths in
/// the source camera (one value per token); known depth maps, where present
/// and valid, replace the prediction with sigma = 0.
std::vector<TokenSegments> rayrope_positions(std::span<const Camera> cams, const TokenGrid& grid,
                                             std::span<const double> depth_z,
                                             std::span<const double> sigma_z,
                                             std::span<const Image> known_depths,
                                             const EncodingStrategy& strategy,
                                             PositionStats* stats = nullptr);

/// Component-scaled projected intervals of one token's segments in a query
/// camera's frame, ray-major.
std::vector<ProjectedRayInterval> project_token(const Camera& query, const TokenSegments& token,
                                                double uv_scale);

// ---------------------------------------------------------------------------
// Camera-matrix baselines (CaPE / GTA / PRoPE)

/// Transform pair for one token under a camera-matrix baseline: a 4x4 block
/// repeated along the diagonal plus an optional 2D-RoPE tail on patch indices.
struct CameraBlockEncoding {
    EncodingKind kind = EncodingKind::cape;
    int dim = 0;
    int cam_copies = 0;             // D/4 for CaPE, D/8 for GTA/PRoPE
    Eigen::Matrix4d query_block = Eigen::Matrix4d::Identity();     // E_i
    Eigen::Matrix4d key_value_block = Eigen::Matrix4d::Identity(); // E_j^-1
    std::vector<Block2> tail;       // query-side rotations; inverse = transpose
    bool applies_to_value_output = false;
};

/// Builds the per-token transform pair. GTA/PRoPE use base-10000 2D RoPE on
/// integer patch indices for the tail; PRoPE lifts K to 4x4 and uses P = K T.
CameraBlockEncoding baseline_encoding(EncodingKind kind, const Camera& cam,
                                      int patch_u, int patch_v, int dim);

enum class BaselineSide { query, key_value, output };
void apply_baseline(const CameraBlockEncoding& enc, std::span<const double> in,
                    std::span<double> out, BaselineSide side);

// ---------------------------------------------------------------------------
// Input raymaps

enum class RaymapKind { plucker, camray };

/// Per-token 6-vectors at patch centers. Plucker: (direction, center x
/// direction) in world frame. CamRay: intrinsics-only camera-frame direction
/// padded as (dir, u/W, v/H, 0).
std::vector<std::array<double, 6>> input_raymaps(RaymapKind kind, std::span<const Camera> cams,
                                                 const TokenGrid& grid);

/// Which raymap a strategy concatenates to its input tokens.
RaymapKind strategy_raymap(EncodingKind kind);

/// Rotary positions for the rope-on-rays baseline: the global raymap
/// (center, direction) per token, degenerate intervals.
std::vector<std::array<double, 6>> rope_on_rays_positions(std::span<const Camera> cams,
                                                          const TokenGrid& grid);

} // namespace rayrope
