#include "ggnet/visualize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace ggnet {

namespace {

void put_pixel(Tensor<float>& canvas, double px, double py, float r, float g, float b) {
    const int x = static_cast<int>(std::floor(px));
    const int y = static_cast<int>(std::floor(py));
    if (x < 0 || y < 0 || x >= canvas.width() || y >= canvas.height()) return;
    canvas(0, 0, y, x) = r;
    canvas(0, 1, y, x) = g;
    canvas(0, 2, y, x) = b;
}

// Centre of feature cell coordinate `f` in image pixels.
double to_pixel(double f, int stride) { return (f + 0.5) * stride; }

} // namespace

Visualization visualize(const Tensor<float>& image, const Checkpoint& ck, int count) {
    const auto& mc = ck.model;
    const auto fw = forward_infer(image, ck.params, mc);
    Visualization out;
    out.canvas = image;
    for (auto& v : out.canvas.data()) v = std::clamp(v, 0.0f, 1.0f);

    std::vector<const Tensor<float>*> offsets;
    if (mc.gaze1) offsets.push_back(&fw.actpoints_step1.offsets);
    if (mc.gaze2) offsets.push_back(&fw.actpoints_final.offsets);
    const int k = mc.actpoint_kernel();
    const float colors[2][3] = {{0.0f, 1.0f, 1.0f}, {1.0f, 0.0f, 1.0f}};

    for (const auto& c : select_candidates(fw.interaction_heatmap(), count)) {
        InteractionView view{c, {}};
        for (std::size_t s = 0; s < offsets.size(); ++s) {
            std::vector<Point2> pts;
            for (const auto& [fx, fy] : actpoint_locations(*offsets[s], k, c.x, c.y)) {
                pts.emplace_back(to_pixel(fx, mc.stride), to_pixel(fy, mc.stride));
            }
            for (const auto& [px, py] : pts) put_pixel(out.canvas, px, py, colors[s][0], colors[s][1], colors[s][2]);
            view.steps.push_back(std::move(pts));
        }
        put_pixel(out.canvas, to_pixel(c.x, mc.stride), to_pixel(c.y, mc.stride), 1.0f, 1.0f, 0.0f);
        out.interactions.push_back(std::move(view));
    }
    return out;
}

void write_ppm(std::ostream& os, const Tensor<float>& rgb) {
    if (rgb.batch() != 1 || rgb.channels() != 3) throw DimensionError("write_ppm: expected (1, 3, H, W), got " + rgb.shape().str());
    os << "P6\n" << rgb.width() << ' ' << rgb.height() << "\n255\n";
    for (int y = 0; y < rgb.height(); ++y) {
        for (int x = 0; x < rgb.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(rgb(0, c, y, x), 0.0f, 1.0f);
                os.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f))));
            }
        }
    }
    if (!os) throw DataError("write_ppm: write failed");
}

void save_ppm(const std::filesystem::path& path, const Tensor<float>& rgb) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_ppm(os, rgb);
}

Tensor<float> read_ppm(std::istream& is) {
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    if (!(is >> magic >> w >> h >> maxval) || magic != "P6" || maxval != 255 || w <= 0 || h <= 0) {
        throw DataError("read_ppm: unsupported header");
    }
    is.get();
    Tensor<float> out(1, 3, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int v = is.get();
                if (v == std::char_traits<char>::eof()) throw DataError("read_ppm: truncated payload");
                out(0, c, y, x) = static_cast<float>(v) / 255.0f;
            }
        }
    }
    return out;
}

} // namespace ggnet
