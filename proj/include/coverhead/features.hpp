#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "coverhead/errors.hpp"
#include "coverhead/image.hpp"

namespace coverhead {

// Per-channel z-score statistics fitted on a training set.
struct NormStats {
    std::vector<double> mean;
    std::vector<double> sd;    // floored at kSdFloor

    static constexpr double kSdFloor = 1e-8;
    std::size_t channels() const { return mean.size(); }
    bool operator==(const NormStats&) const = default;
};

// Dense per-pixel feature volume, channel-planar (one row-major plane per
// channel), float32 to match the on-disk FMAP payload bit for bit.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int width, int height, int channels)
        : width_(width), height_(height), channels_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, 0.0f) {}

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    std::size_t pixels() const { return static_cast<std::size_t>(width_) * height_; }

    float at(int c, int x, int y) const { return data_[plane_offset(c) + idx(x, y)]; }
    float& at(int c, int x, int y) { return data_[plane_offset(c) + idx(x, y)]; }

    std::span<const float> plane(int c) const {
        return {data_.data() + plane_offset(c), pixels()};
    }
    std::span<float> plane(int c) {
        return {data_.data() + plane_offset(c), pixels()};
    }
    const std::vector<float>& data() const { return data_; }
    std::vector<float>& data() { return data_; }

    // Stats that produced this map, when it has been normalized.
    const std::optional<NormStats>& normalization() const { return norm_; }
    void set_normalization(NormStats stats) { norm_ = std::move(stats); }

    bool operator==(const FeatureMap& o) const {
        return width_ == o.width_ && height_ == o.height_ && channels_ == o.channels_ &&
               data_ == o.data_;
    }

private:
    std::size_t plane_offset(int c) const { return static_cast<std::size_t>(c) * pixels(); }
    std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

    int width_ = 0;
    int height_ = 0;
    int channels_ = 0;
    std::vector<float> data_;
    std::optional<NormStats> norm_;
};

// Channel layout of the handcrafted extractor, D = 14:
//   0..2   R, G, B scaled to [0,1]
//   3..5   box mean of R, G, B over the (2r+1)^2 window, clamp-to-edge
//   6..8   box standard deviation of R, G, B over the same window
//   9      gradient magnitude of intensity, central differences
//   10..13 box means of cos(hue), sin(hue), cos(2 hue), sin(2 hue)
inline constexpr int kFeatureChannels = 14;
inline constexpr int kDefaultFeatureRadius = 3;

// Deterministic per-pixel features. radius >= 1.
FeatureMap extract_features(const Image& image, int radius = kDefaultFeatureRadius);

// Z-score statistics over every pixel of every map; maps must share a channel
// count and the list must be non-empty.
NormStats fit_normalizer(std::span<const FeatureMap* const> maps);
NormStats fit_normalizer(std::span<const FeatureMap> maps);

// Applies training-set statistics; never refits.
FeatureMap apply_normalizer(const FeatureMap& map, const NormStats& stats);

// Mirror along the x axis (every channel plane).
FeatureMap hflip(const FeatureMap& map);

// FMAP container: magic "FMAP", u16 LE version = 1, u32 LE width, height,
// channels, then channels * height * width float32 LE, planar.
void write_fmap(const FeatureMap& map, const std::filesystem::path& path);
FeatureMap read_fmap(const std::filesystem::path& path);

} // namespace coverhead
