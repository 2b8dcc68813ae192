#include "coverhead/image.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace coverhead {

void write_ppm(const Image& image, const std::filesystem::path& path) {
    if (image.width <= 0 || image.height <= 0 ||
        image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
        throw DomainError("write_ppm: image dimensions do not match payload");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()),
              static_cast<std::streamsize>(image.rgb.size()));
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in, const std::string& path) {
    std::string token;
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') {
                c = in.get();
            }
        } else if (std::isspace(c)) {
            c = in.get();
        } else {
            break;
        }
    }
    while (c != EOF && !std::isspace(c)) {
        token.push_back(static_cast<char>(c));
        c = in.get();
    }
    if (token.empty()) {
        throw ParseError("ppm: truncated header in " + path);
    }
    return token;
}

int parse_header_int(std::istream& in, const std::string& path, const char* what) {
    const std::string tok = next_token(in, path);
    try {
        std::size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size() || v < 0) {
            throw std::invalid_argument(tok);
        }
        return v;
    } catch (const std::exception&) {
        throw ParseError(std::string("ppm: bad ") + what + " '" + tok + "' in " + path);
    }
}

} // namespace

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    const std::string magic = next_token(in, path.string());
    if (magic != "P6") {
        throw ParseError("ppm: magic '" + magic + "' is not P6 in " + path.string());
    }
    const int width = parse_header_int(in, path.string(), "width");
    const int height = parse_header_int(in, path.string(), "height");
    const int maxval = parse_header_int(in, path.string(), "maxval");
    if (maxval != 255) {
        throw ParseError("ppm: maxval " + std::to_string(maxval) + " unsupported (need 255) in " +
                         path.string());
    }
    if (width == 0 || height == 0 ||
        static_cast<long long>(width) * height > (1LL << 30)) {
        throw ParseError("ppm: unreasonable dimensions " + std::to_string(width) + "x" +
                         std::to_string(height) + " in " + path.string());
    }
    // Exactly one whitespace byte separates header and payload.
    Image image(width, height);
    in.read(reinterpret_cast<char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) {
        throw ParseError("ppm: truncated payload in " + path.string() + " (expected " +
                         std::to_string(image.rgb.size()) + " bytes, got " +
                         std::to_string(in.gcount()) + ")");
    }
    return image;
}

Rgb species_color(std::size_t species_index) {
    static constexpr std::array<Rgb, 9> kPalette{{
        {190, 200, 120},  // Ach_mil   pale yellow-green
        {110, 60, 160},   // Cen_jac   purple
        {225, 180, 40},   // Lot_cor   yellow
        {35, 130, 60},    // Med_lup   mid green
        {110, 165, 95},   // Pla_lan   grey-green
        {235, 130, 35},   // Sco_aut   orange
        {165, 40, 80},    // Tri_pra   red-pink
        {60, 170, 145},   // Grasses   teal
        {176, 150, 96},   // Dead_litter pale straw
    }};
    if (species_index < kPalette.size()) {
        return kPalette[species_index];
    }
    // Golden-angle hue wheel for registries beyond the default nine.
    const double hue = std::fmod(static_cast<double>(species_index) * 137.50776405, 360.0);
    const double h6 = hue / 60.0;
    const double f = h6 - std::floor(h6);
    const auto to_byte = [](double v) { return static_cast<std::uint8_t>(40.0 + 180.0 * v); };
    const std::uint8_t lo = to_byte(0.15);
    const std::uint8_t hi = to_byte(1.0);
    const std::uint8_t up = to_byte(0.15 + 0.85 * f);
    const std::uint8_t down = to_byte(1.0 - 0.85 * f);
    switch (static_cast<int>(std::floor(h6)) % 6) {
        case 0: return {hi, up, lo};
        case 1: return {down, hi, lo};
        case 2: return {lo, hi, up};
        case 3: return {lo, down, hi};
        case 4: return {up, lo, hi};
        default: return {hi, lo, down};
    }
}

} // namespace coverhead
