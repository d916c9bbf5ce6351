// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rayrope/tensor.hpp"

namespace rayrope {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::int64_t worst_index = -1;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool pass = true;
};

/// Compares the reverse-mode gradient of a deterministic scalar computation
/// against central finite differences, parameter by parameter. 64-bit only;
/// single differences in 32-bit are dominated by rounding.
///
/// `loss_fn` must rebuild the graph from the current parameter values on every
/// call. Gradients on the parameters are cleared before the analytic pass.
GradCheckReport grad_check(const std::function<Tensor<double>()>& loss_fn,
                           std::vector<std::pair<std::string, Tensor<double>>> params,
                           double step = 1e-5, double tolerance = 1e-3);

} // namespace rayrope
