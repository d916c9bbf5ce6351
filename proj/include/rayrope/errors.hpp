// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rayrope {

/// Bad configuration, CLI arguments, or file contents. Maps to exit code 2.
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric failure at runtime (non-finite loss, divergence). Maps to exit code 3.
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace rayrope
