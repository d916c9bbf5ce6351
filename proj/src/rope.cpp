// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/rope.hpp"

#include <cmath>
#include <stdexcept>

namespace rayrope {

Block2 rope_block(double omega, double x) {
    return {std::cos(omega * x), std::sin(omega * x)};
}

Block2 expected_block(double omega, double x_min, double x_max) {
    if (x_min > x_max)
        throw std::invalid_argument("expected_block: x_min > x_max");
    const double width = omega * (x_max - x_min);
    if (std::abs(width) <= kWidthEps)
        return rope_block(omega, 0.5 * (x_min + x_max));
    const double inv = 1.0 / width;
    return {(std::sin(omega * x_max) - std::sin(omega * x_min)) * inv,
            (std::cos(omega * x_min) - std::cos(omega * x_max)) * inv};
}

Block2 expected_block_with_grad(double omega, double x_min, double x_max, Block2Grad& grad) {
    if (x_min > x_max)
        throw std::invalid_argument("expected_block: x_min > x_max");
    const double delta = x_max - x_min;
    if (std::abs(omega * delta) <= kWidthEps) {
        const double mid = 0.5 * (x_min + x_max);
        const Block2 blk = rope_block(omega, mid);
        grad.da_dlo = grad.da_dhi = -0.5 * omega * blk.b;
        grad.db_dlo = grad.db_dhi = 0.5 * omega * blk.a;
        return blk;
    }
    const double inv = 1.0 / (omega * delta);
    const double sin_lo = std::sin(omega * x_min), cos_lo = std::cos(omega * x_min);
    const double sin_hi = std::sin(omega * x_max), cos_hi = std::cos(omega * x_max);
    Block2 blk{(sin_hi - sin_lo) * inv, (cos_lo - cos_hi) * inv};
    grad.da_dlo = (blk.a - cos_lo) / delta;
    grad.da_dhi = (cos_hi - blk.a) / delta;
    grad.db_dlo = (blk.b - sin_lo) / delta;
    grad.db_dhi = (sin_hi - blk.b) / delta;
    return blk;
}

std::vector<double> frequency_schedule(int count, double omega_min, double omega_max) {
    if (count < 1) throw std::invalid_argument("frequency_schedule: count must be >= 1");
    if (!(omega_min > 0.0) || !(omega_max > 0.0))
        throw std::invalid_argument("frequency_schedule: frequencies must be positive");
    std::vector<double> f;
    f.reserve(static_cast<std::size_t>(count));
    if (count == 1) {
        f.push_back(std::sqrt(omega_min * omega_max));
        return f;
    }
    const double ratio = omega_min / omega_max;
    for (int i = 0; i < count; ++i)
        f.push_back(omega_max * std::pow(ratio, static_cast<double>(i) / (count - 1)));
    return f;
}

ProjectedRayInterval scale_interval(const ProjectedRayInterval& in, double uv_scale) {
    ProjectedRayInterval out = in;
    for (int c = 3; c <= 4; ++c) {
        out.lo[static_cast<std::size_t>(c)] *= uv_scale;
        out.hi[static_cast<std::size_t>(c)] *= uv_scale;
    }
    return out;
}

namespace {

void check_layout(int rays_per_patch, std::size_t freq_count, int dim) {
    const int components = 6 * rays_per_patch;
    if (dim <= 0 || dim % (2 * components) != 0)
        throw std::invalid_argument("build_encoding: dim " + std::to_string(dim) +
                                    " must be divisible by " + std::to_string(2 * components) +
                                    " (2 x 6 x rays_per_patch)");
    const int f = dim / (2 * components);
    if (static_cast<std::size_t>(f) != freq_count)
        throw std::invalid_argument("build_encoding: schedule has " + std::to_string(freq_count) +
                                    " frequencies, layout needs " + std::to_string(f));
}

} // namespace

BlockEncoding build_encoding(std::span<const ProjectedRayInterval> per_ray_intervals,
                             int rays_per_patch, std::span<const double> freqs, int dim) {
    if (static_cast<int>(per_ray_intervals.size()) != rays_per_patch)
        throw std::invalid_argument("build_encoding: got " +
                                    std::to_string(per_ray_intervals.size()) + " intervals for " +
                                    std::to_string(rays_per_patch) + " rays");
    check_layout(rays_per_patch, freqs.size(), dim);
    BlockEncoding enc;
    enc.dim = dim;
    enc.components = 6 * rays_per_patch;
    enc.freqs.assign(freqs.begin(), freqs.end());
    enc.blocks.resize(static_cast<std::size_t>(dim / 2));
    const int f_count = static_cast<int>(freqs.size());
    for (int r = 0; r < rays_per_patch; ++r) {
        const auto& iv = per_ray_intervals[static_cast<std::size_t>(r)];
        for (int c = 0; c < 6; ++c) {
            const int comp = r * 6 + c;
            for (int f = 0; f < f_count; ++f)
                enc.blocks[static_cast<std::size_t>(comp * f_count + f)] =
                    expected_block(freqs[static_cast<std::size_t>(f)],
                                   iv.lo[static_cast<std::size_t>(c)],
                                   iv.hi[static_cast<std::size_t>(c)]);
        }
    }
    return enc;
}

BlockEncoding identity_encoding(int rays_per_patch, std::span<const double> freqs, int dim) {
    check_layout(rays_per_patch, freqs.size(), dim);
    BlockEncoding enc;
    enc.dim = dim;
    enc.components = 6 * rays_per_patch;
    enc.freqs.assign(freqs.begin(), freqs.end());
    enc.blocks.assign(static_cast<std::size_t>(dim / 2), Block2{1.0, 0.0});
    return enc;
}

void apply_encoding(const BlockEncoding& enc, std::span<const double> in, std::span<double> out,
                    ApplyMode mode) {
    if (static_cast<int>(in.size()) != enc.dim || static_cast<int>(out.size()) != enc.dim)
        throw std::invalid_argument("apply_encoding: vector length " + std::to_string(in.size()) +
                                    " does not match dim " + std::to_string(enc.dim));
    const bool transpose = mode != ApplyMode::output;
    for (std::size_t k = 0; k < enc.blocks.size(); ++k) {
        const Block2 blk = transpose ? enc.blocks[k].transposed() : enc.blocks[k];
        const double x0 = in[2 * k], x1 = in[2 * k + 1];
        out[2 * k] = blk.a * x0 - blk.b * x1;
        out[2 * k + 1] = blk.b * x0 + blk.a * x1;
    }
}

std::vector<double> apply_encoding(const BlockEncoding& enc, std::span<const double> in,
                                   ApplyMode mode) {
    std::vector<double> out(in.size());
    apply_encoding(enc, in, out, mode);
    return out;
}

BlockEncoding relative_product(const BlockEncoding& enc_i, const BlockEncoding& enc_j) {
    if (!enc_i.same_layout(enc_j))
        throw std::invalid_argument("relative_product: encodings have different layouts");
    BlockEncoding out = enc_i;
    for (std::size_t k = 0; k < out.blocks.size(); ++k) {
        const Block2& zi = enc_i.blocks[k];
        const Block2& zj = enc_j.blocks[k];
        // z_i * conj(z_j) in complex form.
        out.blocks[k] = {zi.a * zj.a + zi.b * zj.b, zi.b * zj.a - zi.a * zj.b};
    }
    return out;
}

} // namespace rayrope
