#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "coverhead/errors.hpp"

namespace coverhead {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

// 8-bit RGB image, interleaved row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    Image() = default;
    Image(int w, int h) : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::size_t offset(int x, int y) const {
        return (static_cast<std::size_t>(y) * width + x) * 3;
    }
    Rgb at(int x, int y) const {
        const std::size_t o = offset(x, y);
        return {rgb[o], rgb[o + 1], rgb[o + 2]};
    }
    void set(int x, int y, Rgb c) {
        const std::size_t o = offset(x, y);
        rgb[o] = c.r;
        rgb[o + 1] = c.g;
        rgb[o + 2] = c.b;
    }

    bool operator==(const Image&) const = default;
};

// Binary PPM (P6), maxval 255. The reader accepts standard whitespace and
// '#' comments in the header.
void write_ppm(const Image& image, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

// Display colors shared by the renderer and the segmentation-map exporter.
// The first 9 entries follow the default registry order; further indices get
// procedural golden-angle hues so custom registries stay distinguishable.
Rgb species_color(std::size_t species_index);

inline constexpr Rgb kSoilColor{55, 42, 30};
inline constexpr Rgb kWallColor{205, 205, 215};
inline constexpr Rgb kBackgroundLabelColor{0, 0, 0};     // segmentation export
inline constexpr Rgb kIrrelevantLabelColor{128, 128, 128};

} // namespace coverhead
