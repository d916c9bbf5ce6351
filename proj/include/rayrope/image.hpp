// Copyright Contributors to the rayrope project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

namespace rayrope {

/// Row-major interleaved image. RGB uses 3 channels in [0, 1]; depth maps use
/// 1 channel with +inf for background.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<float> data;

    static Image make(int w, int h, int c, float fill = 0.0f) {
        Image img;
        img.width = w;
        img.height = h;
        img.channels = c;
        img.data.assign(static_cast<std::size_t>(w) * h * c, fill);
        return img;
    }

    float& at(int x, int y, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool empty() const { return data.empty(); }
};

} // namespace rayrope
