#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "mixgda/tensor.hpp"

namespace mixgda {

/// Binary P6 dump of an {H,W,C} image in [-1,1]; values outside the range
/// (gVAT can exceed it) are clamped for display. Single-channel images are
/// replicated to gray.
inline void write_ppm(const std::string& path, const Tensor& image) {
    const int h = image.shape[0], w = image.shape[1], c = image.shape[2];
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f << "P6\n" << w << " " << h << "\n255\n";
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int ch = 0; ch < 3; ++ch) {
                const double v = image.data[static_cast<size_t>((i * w + j) * c + std::min(ch, c - 1))];
                const double b = std::round((std::min(std::max(v, -1.0), 1.0) + 1.0) * 127.5);
                f.put(static_cast<char>(static_cast<unsigned char>(b)));
            }
    if (!f) throw std::runtime_error("write failed on " + path);
}

}  // namespace mixgda
