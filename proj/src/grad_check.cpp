// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#include "rayrope/grad_check.hpp"

#include <cmath>

namespace rayrope {

GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn,
                           std::vector<std::pair<std::string, Tensor<double>>> params,
                           double step, double tolerance) {
    for (auto& [name, p] : params) p.zero_grad();

    Tensor<double> loss = loss_fn();
    if (!std::isfinite(loss.scalar()))
        throw numeric_error("grad_check: non-finite loss at the unperturbed point");
    backward(loss);

    GradCheckReport report;
    for (auto& [name, p] : params) {
        GradCheckEntry entry;
        entry.name = name;
        std::vector<double> analytic(p.grad().begin(), p.grad().end());
        if (analytic.empty()) analytic.assign(static_cast<std::size_t>(p.numel()), 0.0);
        auto vals = p.mutable_values();
        for (std::int64_t i = 0; i < p.numel(); ++i) {
            const double keep = vals[static_cast<std::size_t>(i)];
            vals[static_cast<std::size_t>(i)] = keep + step;
            const double up = loss_fn().scalar();
            vals[static_cast<std::size_t>(i)] = keep - step;
            const double dn = loss_fn().scalar();
            vals[static_cast<std::size_t>(i)] = keep;
            if (!std::isfinite(up) || !std::isfinite(dn))
                throw numeric_error("grad_check: non-finite loss while perturbing " + name +
                                    "[" + std::to_string(i) + "]");
            const double fd = (up - dn) / (2.0 * step);
            const double an = analytic[static_cast<std::size_t>(i)];
            const double abs_err = std::abs(fd - an);
            const double denom = std::max(std::abs(fd), std::abs(an));
            // Near-zero gradients are compared absolutely; a relative metric
            // on them only amplifies finite-difference noise.
            const double rel = denom > 1e-6 ? abs_err / denom : abs_err;
            if (rel > entry.max_rel_err) {
                entry.max_rel_err = rel;
                entry.worst_index = i;
            }
            entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
        }
        entry.pass = entry.max_rel_err <= tolerance;
        report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
        report.pass = report.pass && entry.pass;
        report.entries.push_back(std::move(entry));
    }
    return report;
}

} // namespace rayrope
