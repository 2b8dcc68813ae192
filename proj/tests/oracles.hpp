#pragma once

// Independent reference implementations used to check the engine. Everything
// here is written as literally as possible (plain double loops, std::exp) and
// must stay decoupled from the library's fast paths.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <vector>

#include "coverhead/features.hpp"
#include "coverhead/head.hpp"
#include "coverhead/rng.hpp"

namespace oracle {

struct ForwardOracle {
    std::vector<double> p_bio, p_bg, p_irr;    // per pixel
    std::vector<double> p_species;             // pixel-major, S per pixel
    double a_bio = 0, a_bg = 0, a_irr = 0;
    std::vector<double> cover_percent;
};

// Literal per-pixel evaluation of the calculation model: species logistics,
// residual split with threshold kappa, area sums, cover aggregation.
inline ForwardOracle forward_reference(const coverhead::FeatureMap& features,
                                       const coverhead::HeadParams& params) {
    const int w = features.width();
    const int h = features.height();
    const std::size_t s_count = params.species;
    const std::size_t d = params.dims;
    const double kappa = std::log1p(std::exp(params.kappa_raw));  // softplus

    ForwardOracle out;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    out.p_bio.resize(n);
    out.p_bg.resize(n);
    out.p_irr.resize(n);
    out.p_species.resize(n * s_count);
    std::vector<double> species_sum(s_count, 0.0);

    std::size_t i = 0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x, ++i) {
            double q = 0.0;
            for (std::size_t p = 0; p < s_count; ++p) {
                double score = params.bias[p];
                for (std::size_t k = 0; k < d; ++k) {
                    score += params.weights[p * d + k] *
                             static_cast<double>(features.at(static_cast<int>(k), x, y));
                }
                const double prob = 1.0 / (1.0 + std::exp(-score));
                out.p_species[i * s_count + p] = prob;
                species_sum[p] += prob;
                q += prob;
            }
            double s_bg = params.bias[s_count];
            double s_irr = params.bias[s_count + 1];
            for (std::size_t k = 0; k < d; ++k) {
                s_bg += params.weights[s_count * d + k] *
                        static_cast<double>(features.at(static_cast<int>(k), x, y));
                s_irr += params.weights[(s_count + 1) * d + k] *
                         static_cast<double>(features.at(static_cast<int>(k), x, y));
            }
            const double residual = kappa / (kappa + q);
            const double u = 1.0 / (1.0 + std::exp(-(s_bg - s_irr)));
            out.p_bio[i] = q / (kappa + q);
            out.p_bg[i] = residual * u;
            out.p_irr[i] = residual * (1.0 - u);
            out.a_bio += out.p_bio[i];
            out.a_bg += out.p_bg[i];
            out.a_irr += out.p_irr[i];
        }
    }
    out.cover_percent.resize(s_count);
    for (std::size_t p = 0; p < s_count; ++p) {
        out.cover_percent[p] = 100.0 * species_sum[p] / (out.a_bio + out.a_bg);
    }
    return out;
}

// Fraction-scale MAE of the reference forward; the quantity the engine's
// backward differentiates.
inline double loss_reference(const coverhead::FeatureMap& features,
                             const coverhead::HeadParams& params,
                             const coverhead::CoverVector& target_percent) {
    const ForwardOracle fwd = forward_reference(features, params);
    double acc = 0.0;
    for (std::size_t p = 0; p < fwd.cover_percent.size(); ++p) {
        acc += std::abs(fwd.cover_percent[p] / 100.0 - target_percent[p] / 100.0);
    }
    return acc / static_cast<double>(fwd.cover_percent.size());
}

// Central finite differences through any scalar function of the parameters.
struct FiniteDiff {
    std::vector<double> weights;
    std::vector<double> bias;
    double kappa_raw = 0.0;
};

inline FiniteDiff finite_difference_gradient(
    coverhead::HeadParams params, double step,
    const std::function<double(const coverhead::HeadParams&)>& loss) {
    FiniteDiff grad;
    grad.weights.resize(params.weights.size());
    grad.bias.resize(params.bias.size());
    for (std::size_t i = 0; i < params.weights.size(); ++i) {
        const double save = params.weights[i];
        params.weights[i] = save + step;
        const double up = loss(params);
        params.weights[i] = save - step;
        const double down = loss(params);
        params.weights[i] = save;
        grad.weights[i] = (up - down) / (2.0 * step);
    }
    for (std::size_t i = 0; i < params.bias.size(); ++i) {
        const double save = params.bias[i];
        params.bias[i] = save + step;
        const double up = loss(params);
        params.bias[i] = save - step;
        const double down = loss(params);
        params.bias[i] = save;
        grad.bias[i] = (up - down) / (2.0 * step);
    }
    {
        const double save = params.kappa_raw;
        params.kappa_raw = save + step;
        const double up = loss(params);
        params.kappa_raw = save - step;
        const double down = loss(params);
        params.kappa_raw = save;
        grad.kappa_raw = (up - down) / (2.0 * step);
    }
    return grad;
}

// Random head-oracle instance: features roughly N(0,1), parameters spread
// enough to exercise saturated and linear logistic regions.
struct Instance {
    coverhead::FeatureMap features;
    coverhead::HeadParams params;
};

inline Instance random_instance(int w, int h, std::size_t s_count, std::size_t d,
                                std::uint64_t seed) {
    Instance inst;
    inst.features = coverhead::FeatureMap(w, h, static_cast<int>(d));
    coverhead::Rng rng(seed);
    for (auto& v : inst.features.data()) {
        v = static_cast<float>(rng.normal(0.0, 1.0));
    }
    inst.params.species = s_count;
    inst.params.dims = d;
    inst.params.weights.resize((s_count + 2) * d);
    inst.params.bias.resize(s_count + 2);
    for (auto& v : inst.params.weights) {
        v = rng.normal(0.0, 0.8);
    }
    for (auto& v : inst.params.bias) {
        v = rng.normal(0.0, 0.8);
    }
    inst.params.kappa_raw = rng.uniform(-1.0, 2.0);
    return inst;
}

// Minimal reference P6 reader, independent of the library's parser.
struct PpmData {
    int width = 0, height = 0, maxval = 0;
    std::vector<unsigned char> rgb;
};

inline PpmData read_p6_reference(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("reference ppm reader: cannot open " + path);
    }
    auto skip = [&in]() {
        int c = in.peek();
        while (c == '#' || std::isspace(c)) {
            if (c == '#') {
                std::string line;
                std::getline(in, line);
            } else {
                in.get();
            }
            c = in.peek();
        }
    };
    std::string magic;
    in >> magic;
    if (magic != "P6") {
        throw std::runtime_error("reference ppm reader: not P6");
    }
    PpmData data;
    skip();
    in >> data.width;
    skip();
    in >> data.height;
    skip();
    in >> data.maxval;
    in.get();  // single whitespace after maxval
    data.rgb.resize(static_cast<std::size_t>(data.width) * data.height * 3);
    in.read(reinterpret_cast<char*>(data.rgb.data()),
            static_cast<std::streamsize>(data.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(data.rgb.size())) {
        throw std::runtime_error("reference ppm reader: truncated payload");
    }
    return data;
}

} // namespace oracle
