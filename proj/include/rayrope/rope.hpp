// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0
//
// SO(2) rotary blocks and their analytic expectation over a uniform position
// interval, plus the block-diagonal encodings built from projected rays.

#pragma once

#include <span>
#include <vector>

#include "rayrope/geometry.hpp"

namespace rayrope {

/// Below this value of omega * (x_max - x_min) the closed form is 0/0 and the
/// expectation falls back to a plain rotation at the interval midpoint.
inline constexpr double kWidthEps = 1e-8;

/// The 2x2 matrix [[a, -b], [b, a]]: a scaled rotation. Pure rotations have
/// a^2 + b^2 = 1; expected blocks have magnitude <= 1.
struct Block2 {
    double a = 1.0;
    double b = 0.0;

    double magnitude_sq() const { return a * a + b * b; }
    Block2 transposed() const { return {a, -b}; }
};

/// cos/sin block for a deterministic position.
Block2 rope_block(double omega, double x);

/// Analytic mean of rope_block over x ~ U(x_min, x_max). Rejects x_min > x_max.
Block2 expected_block(double omega, double x_min, double x_max);

/// Derivatives of the expected block with respect to the interval endpoints.
struct Block2Grad {
    double da_dlo = 0.0, db_dlo = 0.0;
    double da_dhi = 0.0, db_dhi = 0.0;
};
Block2 expected_block_with_grad(double omega, double x_min, double x_max, Block2Grad& grad);

/// Log-spaced frequency schedule from omega_max down to omega_min; a single
/// entry degenerates to the geometric mean of the two bounds.
std::vector<double> frequency_schedule(int count, double omega_min, double omega_max);

/// Component pre-scaling: pixel coordinates are divided by the image width so
/// the six interval components live on commensurate ranges. Centers and
/// disparity pass through.
ProjectedRayInterval scale_interval(const ProjectedRayInterval& in, double uv_scale);

/// Block-diagonal encoding of one token: one Block2 per (component, frequency)
/// slot, component-major (slot = component * F + f). Components are the six
/// interval entries of each ray, ray-major.
struct BlockEncoding {
    int dim = 0;                 // feature dimension D = 2 * blocks.size()
    int components = 0;          // 6 * rays_per_patch
    std::vector<double> freqs;   // F = dim / (2 * components) entries
    std::vector<Block2> blocks;

    bool same_layout(const BlockEncoding& o) const {
        return dim == o.dim && components == o.components && freqs == o.freqs;
    }
};

/// Expected encoding of one token from its per-ray projected intervals
/// (already component-scaled). D must be divisible by 2 * 6 * rays_per_patch.
BlockEncoding build_encoding(std::span<const ProjectedRayInterval> per_ray_intervals,
                             int rays_per_patch, std::span<const double> freqs, int dim);

/// Identity encoding with the same layout rules.
BlockEncoding identity_encoding(int rays_per_patch, std::span<const double> freqs, int dim);

enum class ApplyMode {
    query,      // rho^T q: blockwise transpose
    key_value,  // E[rho(-x)] k: equals the blockwise transpose
    output,     // rho o: direct
};

void apply_encoding(const BlockEncoding& enc, std::span<const double> in, std::span<double> out,
                    ApplyMode mode);
std::vector<double> apply_encoding(const BlockEncoding& enc, std::span<const double> in,
                                   ApplyMode mode);

/// Blockwise E[rho(x_i)] E[rho(-x_j)]: the encoding of the relative position
/// of two independent intervals.
BlockEncoding relative_product(const BlockEncoding& enc_i, const BlockEncoding& enc_j);

} // namespace rayrope
