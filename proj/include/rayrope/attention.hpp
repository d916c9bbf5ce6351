// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// Multi-view attention: vanilla attention, encoded attention with per-layer
// depth/uncertainty heads, and the batched per-query-camera procedure
// (grouped by view, generalizing to cross-attention). The geometry that does
// not depend on layer activations is prebuilt once and cached.

#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rayrope/posenc.hpp"
#include "rayrope/tensor.hpp"

namespace rayrope {

// ---------------------------------------------------------------------------
// Layer-independent geometry

struct TokenRayGeom {
    Eigen::Vector3d origin;
    Eigen::Vector3d dir;      // unit, world frame
    double depth_scale = 1.0; // |K^-1 (u, v, 1)| at the ray's pixel
    bool known = false;       // substitute known_z with sigma = 0
    double known_z = 0.0;
};

struct ViewGeometry {
    std::vector<Camera> cameras;
    TokenGrid grid;
    int rays_per_patch = 3;
    bool point_at_infinity = false;
    std::vector<TokenRayGeom> rays; // [views * tokens_per_view * rays_per_patch]
    int substituted_tokens = 0;
    int invalid_known = 0;

    int tokens_per_view() const { return grid.tokens_per_view(); }
    int tokens() const { return static_cast<int>(cameras.size()) * tokens_per_view(); }
    int components() const { return 6 * rays_per_patch; }
};

/// Per-token constant transforms for the camera-matrix and rope-on-rays
/// baselines, with the side-specific matrices already baked (query side
/// transposed, key/value side inverted, output side direct).
struct TokenTransforms {
    int head_dim = 0;
    int cam_copies = 0;   // 4x4 blocks at the front of each head
    int tail_blocks = 0;  // rotary pairs after the camera blocks
    bool value_output = false;
    std::vector<Eigen::Matrix4d> q_cam, kv_cam, out_cam; // per token
    std::vector<Block2> q_tail, kv_tail, out_tail;       // token-major
};

struct AttentionGeometry {
    EncodingStrategy strategy;
    int head_dim = 0;
    std::vector<double> freqs; // rayrope / rope_on_rays schedule, else empty
    ViewGeometry view;
    std::shared_ptr<const TokenTransforms> baseline; // cape/gta/prope/rope_on_rays
};

AttentionGeometry build_attention_geometry(std::span<const Camera> cams, const TokenGrid& grid,
                                           const EncodingStrategy& strategy, int head_dim,
                                           std::span<const Image> known_depths = {});

// ---------------------------------------------------------------------------
// Differentiable building blocks

/// Projects each token's ray segment into the query camera and returns the
/// componentwise interval rows [tokens, 2C] as (lo..., hi...), already
/// component-scaled. Gradients flow into depth_z / sigma_z except where known
/// depth was substituted. Either tensor may be undefined (treated as fixed
/// depth 1 / sigma 0 and leaving no gradient path).
template <class T>
Tensor<T> projected_bounds(const Tensor<T>& depth_z, const Tensor<T>& sigma_z,
                           const ViewGeometry& geom, int token_begin, int token_end,
                           const Camera& query_cam);

/// Applies the expected-RoPE blocks derived from `bounds` to x (one bounds
/// row per x row), per head. Differentiable in both arguments.
template <class T>
Tensor<T> apply_expected_blocks(const Tensor<T>& x, const Tensor<T>& bounds, ApplyMode mode,
                                std::span<const double> freqs, int heads);

enum class TransformSide { query, key_value, output };

/// Applies per-token constant block-diagonal transforms (camera 4x4 blocks
/// plus rotary tail) per head. The shared pointer keeps the transforms alive
/// for the backward pass.
template <class T>
Tensor<T> apply_token_transforms(const Tensor<T>& x, std::shared_ptr<const TokenTransforms> tt,
                                 TransformSide side, int heads);

// ---------------------------------------------------------------------------
// Attention

/// Eq.-style softmax(q k) value mixture per head over an explicit key set.
template <class T>
Tensor<T> attention(const Tensor<T>& q, const Tensor<T>& keys, const Tensor<T>& values, int heads);

template <class T>
struct AttentionLayerParams {
    Tensor<T> Wq, bq, Wk, bk, Wv, bv, Wo, bo; // D x D plus row biases
    Tensor<T> Wd, bd, Wsigma, bsigma;         // D x 1 heads; undefined when unused
};

/// Projected q/k/v plus predicted (d, sigma) for a token batch.
template <class T>
struct QkvBundle {
    Tensor<T> q, k, v;          // [tokens, D]
    Tensor<T> depth, sigma;     // [tokens], undefined for strategies without heads
};

template <class T>
QkvBundle<T> project_qkv(const AttentionLayerParams<T>& params, const Tensor<T>& tokens,
                         const EncodingStrategy& strategy);

/// Batched multiview attention grouped by query camera. Returns encoded head
/// outputs [q_tokens, D] (before the output projection W_o). Self-attention
/// passes the same bundle/geometry for both sides.
template <class T>
Tensor<T> grouped_encoded_attention(const QkvBundle<T>& q_side, const QkvBundle<T>& kv_side,
                                    const AttentionGeometry& q_geom,
                                    const AttentionGeometry& kv_geom, bool same_set, int heads);

template <class T>
Tensor<T> multiview_self_attention(const AttentionLayerParams<T>& params, const Tensor<T>& tokens,
                                   const AttentionGeometry& geom, int heads);

template <class T>
Tensor<T> multiview_cross_attention(const AttentionLayerParams<T>& params,
                                    const Tensor<T>& q_tokens, const Tensor<T>& kv_tokens,
                                    const AttentionGeometry& q_geom,
                                    const AttentionGeometry& kv_geom, int heads);

// ---------------------------------------------------------------------------
// Scalar reference path (oracles, similarity sweeps)

/// Single-query attention over explicit keys/values, multi-head, no encoding.
std::vector<double> attention_ref(std::span<const double> q,
                                  const std::vector<std::vector<double>>& keys,
                                  const std::vector<std::vector<double>>& values, int heads);

struct EncodedToken {
    std::vector<double> key, value;
    std::vector<ProjectedRayInterval> intervals; // per ray, in the query frame, scaled
};

/// Encoded attention for one query token: rho^T q, E[rho(-x_j)] k_j / v_j,
/// attention, then rho o, with blocks built at head dimension.
std::vector<double> encoded_attention_single_query(std::span<const double> q,
                                                   std::span<const ProjectedRayInterval> q_intervals,
                                                   std::span<const EncodedToken> kv,
                                                   std::span<const double> freqs, int heads,
                                                   bool encode_value_output);

} // namespace rayrope
