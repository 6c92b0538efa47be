#pragma once

#include <filesystem>
#include <iosfwd>
#include <utility>
#include <vector>

#include "ggnet/checkpoint.hpp"
#include "ggnet/decoder.hpp"

namespace ggnet {

using Point2 = std::pair<double, double>;  // (x, y)

/// Sampling locations of the k*k ActPoints at feature cell (x, y), in
/// feature-map coordinates: the regular grid plus the learned offsets.
template <typename Scalar>
std::vector<Point2> actpoint_locations(const Tensor<Scalar>& offsets, int kernel, int x, int y, int batch = 0) {
    std::vector<Point2> out;
    const int half = kernel / 2;
    for (int ky = 0; ky < kernel; ++ky) {
        for (int kx = 0; kx < kernel; ++kx) {
            const int t = ky * kernel + kx;
            out.emplace_back(x - half + kx + static_cast<double>(offsets(batch, 2 * t, y, x)),
                             y - half + ky + static_cast<double>(offsets(batch, 2 * t + 1, y, x)));
        }
    }
    return out;
}

struct InteractionView {
    PointCandidate point;
    std::vector<std::vector<Point2>> steps;  // per gaze step, image-pixel coordinates
};

struct Visualization {
    Tensor<float> canvas;  // (1, 3, H, W)
    std::vector<InteractionView> interactions;
};

/// Draws the top `count` interaction points and their ActPoints onto the image.
/// Gaze step 1 is cyan, the final step magenta, interaction points yellow.
Visualization visualize(const Tensor<float>& image, const Checkpoint& ck, int count = 1);

/// Binary P6, 8 bits per channel.
void write_ppm(std::ostream& os, const Tensor<float>& rgb);
void save_ppm(const std::filesystem::path& path, const Tensor<float>& rgb);
/// Returns (1, 3, H, W) in [0, 1].
Tensor<float> read_ppm(std::istream& is);

} // namespace ggnet
