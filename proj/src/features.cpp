#include "coverhead/features.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

namespace coverhead {

namespace {

// Box sums with clamp-to-edge replication: the window always holds (2r+1)^2
// samples, out-of-range indices repeat the edge sample. Prefix sums give O(1)
// per pixel. Integer accumulation keeps the filter exact and order free, so
// mirroring an image mirrors the output bit for bit.
template <typename T>
void box_filter(const std::vector<T>& src, std::vector<T>& dst, int width, int height, int r,
                std::vector<T>& scratch, std::vector<T>& prefix) {
    scratch.resize(src.size());
    // Horizontal pass.
    prefix.resize(static_cast<std::size_t>(std::max(width, height)) + 1);
    for (int y = 0; y < height; ++y) {
        const T* row = src.data() + static_cast<std::size_t>(y) * width;
        prefix[0] = 0;
        for (int x = 0; x < width; ++x) {
            prefix[x + 1] = prefix[x] + row[x];
        }
        T* out = scratch.data() + static_cast<std::size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            const int lo = x - r;
            const int hi = x + r;
            T sum = prefix[std::min(hi, width - 1) + 1] - prefix[std::max(lo, 0)];
            if (lo < 0) {
                sum += static_cast<T>(-lo) * row[0];
            }
            if (hi > width - 1) {
                sum += static_cast<T>(hi - (width - 1)) * row[width - 1];
            }
            out[x] = sum;
        }
    }
    // Vertical pass over the horizontal sums.
    dst.resize(src.size());
    std::vector<T> column(static_cast<std::size_t>(height));
    for (int x = 0; x < width; ++x) {
        prefix[0] = 0;
        for (int y = 0; y < height; ++y) {
            column[y] = scratch[static_cast<std::size_t>(y) * width + x];
            prefix[y + 1] = prefix[y] + column[y];
        }
        for (int y = 0; y < height; ++y) {
            const int lo = y - r;
            const int hi = y + r;
            T sum = prefix[std::min(hi, height - 1) + 1] - prefix[std::max(lo, 0)];
            if (lo < 0) {
                sum += static_cast<T>(-lo) * column[0];
            }
            if (hi > height - 1) {
                sum += static_cast<T>(hi - (height - 1)) * column[height - 1];
            }
            dst[static_cast<std::size_t>(y) * width + x] = sum;
        }
    }
}

constexpr double kHueScale = 1048576.0;  // 2^20 fixed point for the hue moments

} // namespace

FeatureMap extract_features(const Image& image, int radius) {
    if (radius < 1) {
        throw ConfigError("extract_features: radius must be >= 1, got " + std::to_string(radius));
    }
    if (image.width <= 0 || image.height <= 0) {
        throw DomainError("extract_features: empty image");
    }
    const int w = image.width;
    const int h = image.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    const double window = static_cast<double>(2 * radius + 1) * (2 * radius + 1);

    FeatureMap map(w, h, kFeatureChannels);

    std::vector<std::int64_t> chan(n), sums, sq(n), sq_sums, scratch, prefix;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::int64_t v = image.rgb[i * 3 + c];
            chan[i] = v;
            sq[i] = v * v;
        }
        box_filter(chan, sums, w, h, radius, scratch, prefix);
        box_filter(sq, sq_sums, w, h, radius, scratch, prefix);
        auto raw = map.plane(c);
        auto mean = map.plane(3 + c);
        auto sd = map.plane(6 + c);
        for (std::size_t i = 0; i < n; ++i) {
            const double m = static_cast<double>(sums[i]) / window;
            const double var = static_cast<double>(sq_sums[i]) / window - m * m;
            raw[i] = static_cast<float>(static_cast<double>(chan[i]) / 255.0);
            mean[i] = static_cast<float>(m / 255.0);
            sd[i] = static_cast<float>(std::sqrt(std::max(0.0, var)) / 255.0);
        }
    }

    // Gradient magnitude of intensity, central differences, clamp-to-edge.
    std::vector<double> intensity(n);
    for (std::size_t i = 0; i < n; ++i) {
        intensity[i] = (static_cast<double>(image.rgb[i * 3]) + image.rgb[i * 3 + 1] +
                        image.rgb[i * 3 + 2]) /
                       (3.0 * 255.0);
    }
    auto grad = map.plane(9);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto at = [&](int xx, int yy) {
                return intensity[static_cast<std::size_t>(std::clamp(yy, 0, h - 1)) * w +
                                 std::clamp(xx, 0, w - 1)];
            };
            const double gx = (at(x + 1, y) - at(x - 1, y)) / 2.0;
            const double gy = (at(x, y + 1) - at(x, y - 1)) / 2.0;
            grad[static_cast<std::size_t>(y) * w + x] =
                static_cast<float>(std::sqrt(gx * gx + gy * gy));
        }
    }

    // Circular hue moments. The per-pixel direction comes from the RGB color
    // wheel without trigonometry; components are quantized to 2^-20 so the box
    // sums stay integer and order free.
    std::vector<std::int64_t> hue_q(n), hue_sums;
    std::array<std::vector<double>, 4> hue_vals;
    for (auto& v : hue_vals) {
        v.resize(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double rn = image.rgb[i * 3] / 255.0;
        const double gn = image.rgb[i * 3 + 1] / 255.0;
        const double bn = image.rgb[i * 3 + 2] / 255.0;
        const double a = 2.0 * rn - gn - bn;
        const double b = std::numbers::sqrt3 * (gn - bn);
        const double rho = std::sqrt(a * a + b * b);
        double ch = 0.0, sh = 0.0;
        if (rho > 1e-12) {
            ch = a / rho;
            sh = b / rho;
        }
        hue_vals[0][i] = ch;
        hue_vals[1][i] = sh;
        hue_vals[2][i] = ch * ch - sh * sh;
        hue_vals[3][i] = 2.0 * ch * sh;
    }
    for (int m = 0; m < 4; ++m) {
        for (std::size_t i = 0; i < n; ++i) {
            hue_q[i] = std::llround(hue_vals[m][i] * kHueScale);
        }
        box_filter(hue_q, hue_sums, w, h, radius, scratch, prefix);
        auto plane = map.plane(10 + m);
        for (std::size_t i = 0; i < n; ++i) {
            plane[i] = static_cast<float>(static_cast<double>(hue_sums[i]) / (window * kHueScale));
        }
    }
    return map;
}

NormStats fit_normalizer(std::span<const FeatureMap* const> maps) {
    if (maps.empty()) {
        throw ConfigError("fit_normalizer: empty map list");
    }
    const int channels = maps.front()->channels();
    std::vector<double> sum(channels, 0.0);
    std::vector<double> lo(channels, std::numeric_limits<double>::infinity());
    std::vector<double> hi(channels, -std::numeric_limits<double>::infinity());
    std::size_t count = 0;
    for (const FeatureMap* map : maps) {
        if (map->channels() != channels) {
            throw ConfigError("fit_normalizer: inconsistent channel counts");
        }
        count += map->pixels();
        for (int c = 0; c < channels; ++c) {
            for (float v : map->plane(c)) {
                if (!std::isfinite(v)) {
                    throw NumericError("fit_normalizer: non-finite feature value");
                }
                sum[c] += v;
                lo[c] = std::min(lo[c], static_cast<double>(v));
                hi[c] = std::max(hi[c], static_cast<double>(v));
            }
        }
    }
    NormStats stats;
    stats.mean.resize(channels);
    stats.sd.resize(channels);
    std::vector<double> ss(channels, 0.0);
    for (int c = 0; c < channels; ++c) {
        stats.mean[c] = lo[c] == hi[c] ? lo[c] : sum[c] / static_cast<double>(count);
    }
    for (const FeatureMap* map : maps) {
        for (int c = 0; c < channels; ++c) {
            const double m = stats.mean[c];
            for (float v : map->plane(c)) {
                const double d = v - m;
                ss[c] += d * d;
            }
        }
    }
    for (int c = 0; c < channels; ++c) {
        stats.sd[c] = std::max(NormStats::kSdFloor,
                               std::sqrt(ss[c] / static_cast<double>(count)));
    }
    return stats;
}

NormStats fit_normalizer(std::span<const FeatureMap> maps) {
    std::vector<const FeatureMap*> ptrs;
    ptrs.reserve(maps.size());
    for (const auto& m : maps) {
        ptrs.push_back(&m);
    }
    return fit_normalizer(std::span<const FeatureMap* const>(ptrs));
}

FeatureMap apply_normalizer(const FeatureMap& map, const NormStats& stats) {
    if (static_cast<std::size_t>(map.channels()) != stats.channels()) {
        throw ConfigError("apply_normalizer: stats have " + std::to_string(stats.channels()) +
                          " channels, map has " + std::to_string(map.channels()));
    }
    FeatureMap out(map.width(), map.height(), map.channels());
    for (int c = 0; c < map.channels(); ++c) {
        const double m = stats.mean[c];
        const double inv = 1.0 / stats.sd[c];
        auto src = map.plane(c);
        auto dst = out.plane(c);
        for (std::size_t i = 0; i < src.size(); ++i) {
            dst[i] = static_cast<float>((static_cast<double>(src[i]) - m) * inv);
        }
    }
    out.set_normalization(stats);
    return out;
}

FeatureMap hflip(const FeatureMap& map) {
    FeatureMap out(map.width(), map.height(), map.channels());
    const int w = map.width();
    for (int c = 0; c < map.channels(); ++c) {
        auto src = map.plane(c);
        auto dst = out.plane(c);
        for (int y = 0; y < map.height(); ++y) {
            const std::size_t row = static_cast<std::size_t>(y) * w;
            for (int x = 0; x < w; ++x) {
                dst[row + x] = src[row + (w - 1 - x)];
            }
        }
    }
    if (map.normalization()) {
        out.set_normalization(*map.normalization());
    }
    return out;
}

namespace {

constexpr char kFmapMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint16_t kFmapVersion = 1;
constexpr std::uint64_t kMaxFmapValues = 1ULL << 31;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace

void write_fmap(const FeatureMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    std::string header;
    header.append(kFmapMagic, 4);
    put_u16(header, kFmapVersion);
    put_u32(header, static_cast<std::uint32_t>(map.width()));
    put_u32(header, static_cast<std::uint32_t>(map.height()));
    put_u32(header, static_cast<std::uint32_t>(map.channels()));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    static_assert(sizeof(float) == 4);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(map.data().data()),
                  static_cast<std::streamsize>(map.data().size() * 4));
    } else {
        std::string payload;
        payload.reserve(map.data().size() * 4);
        for (float v : map.data()) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(payload, bits);
        }
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

FeatureMap read_fmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    unsigned char header[18];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (in.gcount() != sizeof(header)) {
        throw ParseError("fmap: truncated header in " + path.string());
    }
    if (std::memcmp(header, kFmapMagic, 4) != 0) {
        throw ParseError("fmap: bad magic '" + std::string(reinterpret_cast<char*>(header), 4) +
                         "' (expected FMAP) in " + path.string());
    }
    const std::uint16_t version = get_u16(header + 4);
    if (version != kFmapVersion) {
        throw ParseError("fmap: unsupported version " + std::to_string(version) + " in " +
                         path.string());
    }
    const std::uint32_t width = get_u32(header + 6);
    const std::uint32_t height = get_u32(header + 10);
    const std::uint32_t channels = get_u32(header + 14);
    const std::uint64_t values =
        static_cast<std::uint64_t>(width) * height * channels;
    if (width == 0 || height == 0 || channels == 0 || values > kMaxFmapValues) {
        throw ParseError("fmap: dimension overflow " + std::to_string(width) + "x" +
                         std::to_string(height) + "x" + std::to_string(channels) + " in " +
                         path.string());
    }
    FeatureMap map(static_cast<int>(width), static_cast<int>(height),
                   static_cast<int>(channels));
    const std::uint64_t bytes = values * 4;
    if constexpr (std::endian::native == std::endian::little) {
        in.read(reinterpret_cast<char*>(map.data().data()), static_cast<std::streamsize>(bytes));
        if (in.gcount() != static_cast<std::streamsize>(bytes)) {
            throw ParseError("fmap: truncated payload in " + path.string() + " (expected " +
                             std::to_string(bytes) + " bytes, got " + std::to_string(in.gcount()) +
                             ")");
        }
    } else {
        std::vector<unsigned char> raw(bytes);
        in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
        if (in.gcount() != static_cast<std::streamsize>(bytes)) {
            throw ParseError("fmap: truncated payload in " + path.string() + " (expected " +
                             std::to_string(bytes) + " bytes, got " + std::to_string(in.gcount()) +
                             ")");
        }
        for (std::uint64_t i = 0; i < values; ++i) {
            const std::uint32_t bits = get_u32(raw.data() + i * 4);
            std::memcpy(&map.data()[i], &bits, 4);
        }
    }
    return map;
}

} // namespace coverhead
