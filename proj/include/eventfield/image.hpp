#pragma once

#include <cstddef>
#include <vector>

namespace evf {

/// Dense floating-point image stored row-major with interleaved channels.
///
/// Used for linear-space intensity frames (1 or 3 channels) and for
/// backgrounds and rendered views.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> values;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), values(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) { return values[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return values[index(x, y, c)]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

using IntensityFrame = Image;

/// Per-pixel accumulated event signal over a time window, in log-intensity units.
struct AccumulationImage {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    AccumulationImage() = default;
    AccumulationImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

    double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

}  // namespace evf
