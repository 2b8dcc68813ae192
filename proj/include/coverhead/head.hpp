#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coverhead/features.hpp"
#include "coverhead/registry.hpp"

namespace coverhead {

// Linear per-pixel classification head. Rows 0..S-1 of the weight matrix
// score the species; rows S and S+1 score background and irrelevant content.
// The plant/residual split threshold kappa is learned through a softplus
// reparametrization so it stays positive without constraints.
struct HeadParams {
    std::size_t species = 0;   // S
    std::size_t dims = 0;      // D
    std::vector<double> weights;  // (S+2) x D, row-major
    std::vector<double> bias;     // S+2
    double kappa_raw = 0.0;

    std::size_t rows() const { return species + 2; }
    double kappa() const;

    std::span<const double> weight_row(std::size_t row) const {
        return {weights.data() + row * dims, dims};
    }
    std::span<double> weight_row(std::size_t row) {
        return {weights.data() + row * dims, dims};
    }

    // Uniform weights with scale 1/sqrt(D), zero bias, kappa = 1.
    static HeadParams init(std::size_t species, std::size_t dims, std::uint64_t seed);

    // Throws NumericError on any non-finite parameter.
    void check_finite() const;
};

// Per-pixel probability fields. Species probabilities are independent
// logistics and do not sum to one; bio/background/irrelevant partition the
// pixel and do.
struct ProbabilityMaps {
    int width = 0;
    int height = 0;
    std::size_t species = 0;
    std::vector<double> p_species;  // S planes, row-major within each plane
    std::vector<double> p_bio;
    std::vector<double> p_bg;
    std::vector<double> p_irr;

    std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
    std::span<const double> species_plane(std::size_t p) const {
        return {p_species.data() + p * pixels(), pixels()};
    }
};

// Probability mass summed over the image, in pixel units.
struct AggregateAreas {
    double bio = 0.0;
    double bg = 0.0;
    double irr = 0.0;
    double total = 0.0;
};

struct ForwardResult {
    ProbabilityMaps maps;
    AggregateAreas areas;
    CoverVector cover;  // percent per species
};

// Full forward evaluation: pixel scores -> probabilities -> areas -> covers.
// Throws NumericError on non-finite inputs or when the relevant-area
// denominator A_bio + A_bg falls below kDegenerateDenom.
ForwardResult forward(const FeatureMap& features, const HeadParams& params);

inline constexpr double kDegenerateDenom = 1e-12;

// Mean absolute error over species, percentage points.
double loss_mae(const CoverVector& predicted, const CoverVector& target);

struct HeadGradients {
    std::vector<double> weights;  // same shape as HeadParams::weights
    std::vector<double> bias;
    double kappa_raw = 0.0;
};

struct BackwardResult {
    HeadGradients grad;   // gradient of the fraction-scale MAE
    CoverVector cover;    // percent, identical to forward's output
    double loss_pp = 0.0; // MAE in percentage points
};

// Analytic gradients of mean_p |cover_p/100 - target_p/100| with the
// subgradient at exact zero residuals taken as 0. Covers are internally
// fractions during training; loss_pp reports percentage points. mirror_x
// reads the feature map horizontally mirrored (the flip augmentation).
BackwardResult backward(const FeatureMap& features, const HeadParams& params,
                        const CoverVector& target_percent, bool mirror_x = false);

// Pixel labels: 0..S-1 species, S background, S+1 irrelevant. A pixel is a
// plant pixel when P_bio > 1/2 (equivalently sum_p P^p > kappa); the label is
// then the argmax species. Ties resolve to the lower index.
std::vector<std::uint8_t> segmentation_map(const ProbabilityMaps& maps);

inline std::uint8_t background_label(std::size_t species) {
    return static_cast<std::uint8_t>(species);
}
inline std::uint8_t irrelevant_label(std::size_t species) {
    return static_cast<std::uint8_t>(species + 1);
}

// Segmentation map rendered with the species palette; background black,
// irrelevant grey.
void write_segmap_ppm(const std::vector<std::uint8_t>& labels, int width, int height,
                      std::size_t species, const std::filesystem::path& path);

// Params persistence (JSON): registry names, dims, row-major weights, bias,
// kappa_raw, format version.
void write_params_json(const HeadParams& params, const SpeciesRegistry& registry,
                       const std::filesystem::path& path);

struct ParamsFile {
    HeadParams params;
    SpeciesRegistry registry;
};

ParamsFile read_params_json(const std::filesystem::path& path);

} // namespace coverhead
