#include "coverhead/head.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "coverhead/numeric.hpp"
#include "coverhead/rng.hpp"

namespace coverhead {

double HeadParams::kappa() const {
    return softplus(kappa_raw);
}

HeadParams HeadParams::init(std::size_t species, std::size_t dims, std::uint64_t seed) {
    if (species == 0 || dims == 0) {
        throw ConfigError("head init: species and dims must be positive");
    }
    HeadParams p;
    p.species = species;
    p.dims = dims;
    p.weights.resize(p.rows() * dims);
    p.bias.assign(p.rows(), 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims));
    Rng rng(mix_seed(seed, {0x68656164}));  // head stream
    for (auto& w : p.weights) {
        w = rng.uniform(-scale, scale);
    }
    p.kappa_raw = softplus_inverse(1.0);
    return p;
}

void HeadParams::check_finite() const {
    if (weights.size() != rows() * dims || bias.size() != rows()) {
        throw ConfigError("head params: shape mismatch");
    }
    for (double w : weights) {
        if (!std::isfinite(w)) {
            throw NumericError("head params: non-finite weight");
        }
    }
    for (double b : bias) {
        if (!std::isfinite(b)) {
            throw NumericError("head params: non-finite bias");
        }
    }
    if (!std::isfinite(kappa_raw)) {
        throw NumericError("head params: non-finite kappa_raw");
    }
}

namespace {

constexpr std::size_t kMaxDims = 512;

// Scratch buffers for the two training passes and forward's probability
// sweep.
struct HeadWorkspace {
    std::vector<double> p;  // N x S pixel probabilities
    std::vector<double> u;  // N background/irrelevant splits
    std::vector<double> r;  // N residual masses
};

struct PassOneSums {
    std::vector<double> species_mass;  // sum_i P^p_i per species
    double a_irr = 0.0;
    double a_bg = 0.0;
    double a_bio = 0.0;
};

// Pixel loop shared by forward and backward: per-pixel feature gather from
// the channel planes, scores, logistics, residual split, per-species mass.
// Templated on compile-time S and D (0 = dynamic) so the production shape
// gets fully unrolled inner loops. When maps != nullptr the probability
// fields are materialized as well.
template <int CS, int CD>
PassOneSums pass_one_impl(const FeatureMap& map, bool mirror_x, const HeadParams& params,
                          HeadWorkspace& ws, ProbabilityMaps* maps) {
    const std::size_t s_count = CS > 0 ? static_cast<std::size_t>(CS) : params.species;
    const std::size_t d = CD > 0 ? static_cast<std::size_t>(CD) : params.dims;
    const int w = map.width();
    const int h = map.height();
    const std::size_t n = map.pixels();
    const double kappa = params.kappa();

    ws.p.resize(n * s_count);
    ws.u.resize(n);
    ws.r.resize(n);

    PassOneSums sums;
    sums.species_mass.assign(s_count, 0.0);

    const double* wmat = params.weights.data();
    const double* bias = params.bias.data();
    const double* wbg = wmat + s_count * d;
    const double* wirr = wmat + (s_count + 1) * d;

    const float* planes[kMaxDims];
    for (std::size_t k = 0; k < d; ++k) {
        planes[k] = map.plane(static_cast<int>(k)).data();
    }

    std::size_t i = 0;
    for (int y = 0; y < h; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x, ++i) {
            const std::size_t src = row + static_cast<std::size_t>(mirror_x ? w - 1 - x : x);
            double f[CD > 0 ? CD : kMaxDims];
            for (std::size_t k = 0; k < d; ++k) {
                f[k] = planes[k][src];
            }

            double* p_row = ws.p.data() + i * s_count;
            for (std::size_t c = 0; c < s_count; ++c) {
                const double* wrow = wmat + c * d;
                double score = bias[c];
                for (std::size_t k = 0; k < d; ++k) {
                    score += wrow[k] * f[k];
                }
                p_row[c] = score;
            }
            // Separate logistic block: clamp + no-branch exp vectorize.
            // NaN scores propagate into the area sums and are rejected there.
            for (std::size_t c = 0; c < s_count; ++c) {
                const double s = p_row[c];
                const double t = s < -745.0 ? -745.0 : (s > 40.0 ? 40.0 : s);
                const double e = fast_exp_core(t);
                p_row[c] = e / (1.0 + e);
            }
            double q = 0.0;
            for (std::size_t c = 0; c < s_count; ++c) {
                const double prob = p_row[c];
                q += prob;
                sums.species_mass[c] += prob;
            }
            double diff = bias[s_count] - bias[s_count + 1];
            for (std::size_t k = 0; k < d; ++k) {
                diff += (wbg[k] - wirr[k]) * f[k];
            }
            const double u = logistic(diff);
            const double r = kappa / (kappa + q);
            ws.u[i] = u;
            ws.r[i] = r;
            const double p_bio = q / (kappa + q);
            const double p_bg = r * u;
            const double p_irr = r * (1.0 - u);
            sums.a_bio += p_bio;
            sums.a_bg += p_bg;
            sums.a_irr += p_irr;
            if (maps) {
                for (std::size_t c = 0; c < s_count; ++c) {
                    maps->p_species[c * n + i] = p_row[c];
                }
                maps->p_bio[i] = p_bio;
                maps->p_bg[i] = p_bg;
                maps->p_irr[i] = p_irr;
            }
        }
    }
    return sums;
}

PassOneSums run_pass_one(const FeatureMap& map, bool mirror_x, const HeadParams& params,
                         HeadWorkspace& ws, ProbabilityMaps* maps) {
    if (params.dims > kMaxDims) {
        throw ConfigError("head: feature dimension above " + std::to_string(kMaxDims));
    }
    if (params.species == 9 && params.dims == 14) {
        return pass_one_impl<9, 14>(map, mirror_x, params, ws, maps);
    }
    return pass_one_impl<0, 0>(map, mirror_x, params, ws, maps);
}

// Gradient accumulation over the stored probabilities; same gather pattern
// as pass one. Returns dL/dkappa before the softplus chain factor.
template <int CS, int CD>
double pass_two_impl(const FeatureMap& map, bool mirror_x, const HeadParams& params,
                     const HeadWorkspace& ws, const std::vector<double>& g, double inv_denom,
                     double big_g, double inv_kappa, HeadGradients& grad) {
    const std::size_t s_count = CS > 0 ? static_cast<std::size_t>(CS) : params.species;
    const std::size_t d = CD > 0 ? static_cast<std::size_t>(CD) : params.dims;
    const int w = map.width();
    const int h = map.height();

    double* gw = grad.weights.data();
    double* gb = grad.bias.data();
    double* gw_bg = gw + s_count * d;
    double* gw_irr = gw + (s_count + 1) * d;
    double dkappa = 0.0;

    const float* planes[kMaxDims];
    for (std::size_t k = 0; k < d; ++k) {
        planes[k] = map.plane(static_cast<int>(k)).data();
    }

    std::size_t i = 0;
    for (int y = 0; y < h; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x, ++i) {
            const std::size_t src = row + static_cast<std::size_t>(mirror_x ? w - 1 - x : x);
            double f[CD > 0 ? CD : kMaxDims];
            for (std::size_t k = 0; k < d; ++k) {
                f[k] = planes[k][src];
            }

            const double* p_row = ws.p.data() + i * s_count;
            const double u = ws.u[i];
            const double r = ws.r[i];
            const double one_minus_u = 1.0 - u;

            // r = kappa/(kappa+q):  dr/dq = -r^2/kappa,  dr/dkappa = q r^2/kappa^2
            const double dl_dq = -big_g * one_minus_u * r * r * inv_kappa;
            double q = 0.0;
            for (std::size_t c = 0; c < s_count; ++c) {
                q += p_row[c];
                const double dl_dp = g[c] * inv_denom + dl_dq;
                const double ds = dl_dp * p_row[c] * (1.0 - p_row[c]);
                gb[c] += ds;
                double* grow = gw + c * d;
                for (std::size_t k = 0; k < d; ++k) {
                    grow[k] += ds * f[k];
                }
            }
            dkappa += big_g * one_minus_u * q * r * r * inv_kappa * inv_kappa;

            // u = logistic(s_bg - s_irr); A_irr picks up r * (1 - u).
            const double dd = -big_g * r * u * one_minus_u;
            gb[s_count] += dd;
            gb[s_count + 1] -= dd;
            for (std::size_t k = 0; k < d; ++k) {
                const double v = dd * f[k];
                gw_bg[k] += v;
                gw_irr[k] -= v;
            }
        }
    }
    return dkappa;
}

CoverVector covers_from_sums(const PassOneSums& sums, std::size_t n) {
    const double denom = sums.a_bio + sums.a_bg;
    if (!std::isfinite(denom)) {
        throw NumericError("head forward: non-finite area sums");
    }
    if (!(denom >= kDegenerateDenom)) {
        throw NumericError("head forward: degenerate denominator A_bio + A_bg = " +
                           std::to_string(denom) + " (image predicted almost entirely "
                           "irrelevant, " + std::to_string(n) + " pixels)");
    }
    CoverVector cover(sums.species_mass.size());
    for (std::size_t c = 0; c < sums.species_mass.size(); ++c) {
        cover[c] = 100.0 * sums.species_mass[c] / denom;
    }
    return cover;
}

} // namespace

ForwardResult forward(const FeatureMap& features, const HeadParams& params) {
    params.check_finite();
    if (static_cast<std::size_t>(features.channels()) != params.dims) {
        throw ConfigError("head forward: feature map has " +
                          std::to_string(features.channels()) + " channels, params expect " +
                          std::to_string(params.dims));
    }
    for (float v : features.data()) {
        if (!std::isfinite(v)) {
            throw NumericError("head forward: non-finite feature value");
        }
    }

    const std::size_t n = features.pixels();
    HeadWorkspace ws;

    ForwardResult result;
    result.maps.width = features.width();
    result.maps.height = features.height();
    result.maps.species = params.species;
    result.maps.p_species.resize(params.species * n);
    result.maps.p_bio.resize(n);
    result.maps.p_bg.resize(n);
    result.maps.p_irr.resize(n);

    const PassOneSums sums = run_pass_one(features, false, params, ws, &result.maps);
    result.areas.bio = sums.a_bio;
    result.areas.bg = sums.a_bg;
    result.areas.irr = sums.a_irr;
    result.areas.total = sums.a_bio + sums.a_bg + sums.a_irr;
    result.cover = covers_from_sums(sums, n);
    return result;
}

double loss_mae(const CoverVector& predicted, const CoverVector& target) {
    if (predicted.size() != target.size()) {
        throw ConfigError("loss_mae: species count mismatch (" +
                          std::to_string(predicted.size()) + " vs " +
                          std::to_string(target.size()) + ")");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        acc += std::abs(predicted[i] - target[i]);
    }
    return acc / static_cast<double>(predicted.size());
}

BackwardResult backward(const FeatureMap& features, const HeadParams& params,
                        const CoverVector& target_percent, bool mirror_x) {
    params.check_finite();
    const std::size_t s_count = params.species;
    const std::size_t d = params.dims;
    if (static_cast<std::size_t>(features.channels()) != d) {
        throw ConfigError("head backward: feature map has " +
                          std::to_string(features.channels()) + " channels, params expect " +
                          std::to_string(d));
    }
    if (target_percent.size() != s_count) {
        throw ConfigError("head backward: target has " + std::to_string(target_percent.size()) +
                          " species, params expect " + std::to_string(s_count));
    }

    const std::size_t n = features.pixels();
    thread_local HeadWorkspace ws;
    const PassOneSums sums = run_pass_one(features, mirror_x, params, ws, nullptr);
    const double denom = sums.a_bio + sums.a_bg;

    BackwardResult result;
    result.cover = covers_from_sums(sums, n);

    // Residuals on the percent scale, with the exact expression forward uses,
    // so a target equal to forward's output sits exactly on the MAE kink and
    // gets the zero subgradient. Gradients stay on the fraction scale.
    std::vector<double> g(s_count);
    double loss_pp = 0.0;
    double g_dot_cover = 0.0;
    const double inv_s = 1.0 / static_cast<double>(s_count);
    for (std::size_t c = 0; c < s_count; ++c) {
        const double residual_pp = result.cover[c] - target_percent[c];
        loss_pp += std::abs(residual_pp) * inv_s;
        const double sign = residual_pp > 0.0 ? 1.0 : (residual_pp < 0.0 ? -1.0 : 0.0);
        g[c] = sign * inv_s;
        g_dot_cover += g[c] * (result.cover[c] / 100.0);
    }
    result.loss_pp = loss_pp;

    // dL/dA_irr: shrinking the relevant denominator scales every cover up.
    const double big_g = g_dot_cover / denom;
    const double inv_denom = 1.0 / denom;
    const double inv_kappa = 1.0 / params.kappa();

    result.grad.weights.assign(params.weights.size(), 0.0);
    result.grad.bias.assign(params.bias.size(), 0.0);
    const double dkappa = (params.species == 9 && params.dims == 14)
                              ? pass_two_impl<9, 14>(features, mirror_x, params, ws, g, inv_denom,
                                                     big_g, inv_kappa, result.grad)
                              : pass_two_impl<0, 0>(features, mirror_x, params, ws, g, inv_denom,
                                                    big_g, inv_kappa, result.grad);
    result.grad.kappa_raw = dkappa * softplus_grad(params.kappa_raw);

    if (!std::isfinite(result.loss_pp) || !std::isfinite(result.grad.kappa_raw)) {
        throw NumericError("head backward: non-finite intermediates");
    }
    for (double v : result.grad.weights) {
        if (!std::isfinite(v)) {
            throw NumericError("head backward: non-finite weight gradient");
        }
    }
    for (double v : result.grad.bias) {
        if (!std::isfinite(v)) {
            throw NumericError("head backward: non-finite bias gradient");
        }
    }
    return result;
}

std::vector<std::uint8_t> segmentation_map(const ProbabilityMaps& maps) {
    const std::size_t n = maps.pixels();
    const std::size_t s_count = maps.species;
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (maps.p_bio[i] > 0.5) {
            std::size_t best = 0;
            double best_p = maps.p_species[i];
            for (std::size_t c = 1; c < s_count; ++c) {
                const double p = maps.p_species[c * n + i];
                if (p > best_p) {
                    best_p = p;
                    best = c;
                }
            }
            labels[i] = static_cast<std::uint8_t>(best);
        } else {
            labels[i] = maps.p_bg[i] >= maps.p_irr[i] ? background_label(s_count)
                                                      : irrelevant_label(s_count);
        }
    }
    return labels;
}

void write_segmap_ppm(const std::vector<std::uint8_t>& labels, int width, int height,
                      std::size_t species, const std::filesystem::path& path) {
    if (labels.size() != static_cast<std::size_t>(width) * height) {
        throw DomainError("write_segmap_ppm: label count does not match dimensions");
    }
    Image image(width, height);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Rgb color;
        if (labels[i] < species) {
            color = species_color(labels[i]);
        } else if (labels[i] == background_label(species)) {
            color = kBackgroundLabelColor;
        } else {
            color = kIrrelevantLabelColor;
        }
        image.rgb[i * 3] = color.r;
        image.rgb[i * 3 + 1] = color.g;
        image.rgb[i * 3 + 2] = color.b;
    }
    write_ppm(image, path);
}

void write_params_json(const HeadParams& params, const SpeciesRegistry& registry,
                       const std::filesystem::path& path) {
    if (registry.count() != params.species) {
        throw ConfigError("write_params_json: registry has " + std::to_string(registry.count()) +
                          " species, params expect " + std::to_string(params.species));
    }
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["registry"] = registry.names();
    doc["dims"] = params.dims;
    doc["weights"] = nlohmann::json::array();
    for (std::size_t r = 0; r < params.rows(); ++r) {
        auto row = params.weight_row(r);
        doc["weights"].push_back(std::vector<double>(row.begin(), row.end()));
    }
    doc["bias"] = params.bias;
    doc["kappa_raw"] = params.kappa_raw;

    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << doc.dump(2) << '\n';
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

ParamsFile read_params_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("params json: " + std::string(e.what()) + " in " + path.string());
    }
    try {
        if (doc.at("format_version").get<int>() != 1) {
            throw ParseError("params json: unsupported format_version in " + path.string());
        }
        ParamsFile result;
        result.registry = SpeciesRegistry(doc.at("registry").get<std::vector<std::string>>());
        HeadParams& p = result.params;
        p.species = result.registry.count();
        p.dims = doc.at("dims").get<std::size_t>();
        p.bias = doc.at("bias").get<std::vector<double>>();
        p.kappa_raw = doc.at("kappa_raw").get<double>();
        const auto& rows = doc.at("weights");
        if (rows.size() != p.rows()) {
            throw ParseError("params json: expected " + std::to_string(p.rows()) +
                             " weight rows, found " + std::to_string(rows.size()) + " in " +
                             path.string());
        }
        p.weights.reserve(p.rows() * p.dims);
        for (const auto& row : rows) {
            const auto vals = row.get<std::vector<double>>();
            if (vals.size() != p.dims) {
                throw ParseError("params json: weight row length mismatch in " + path.string());
            }
            p.weights.insert(p.weights.end(), vals.begin(), vals.end());
        }
        if (p.bias.size() != p.rows()) {
            throw ParseError("params json: bias length mismatch in " + path.string());
        }
        p.check_finite();
        return result;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("params json: " + std::string(e.what()) + " in " + path.string());
    }
}

} // namespace coverhead
