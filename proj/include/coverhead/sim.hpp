#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "coverhead/image.hpp"
#include "coverhead/registry.hpp"

namespace coverhead {

// Procedural stand-in for a plant: a filled rotated ellipse. Painter's order
// is the position in Scene::leaves (later occludes earlier).
struct LeafInstance {
    int species = 0;          // registry index (Dead_litter after senescence)
    int source_species = 0;   // species before senescence; drives the dead tint
    double cx = 0.0, cy = 0.0;
    double rx = 0.0, ry = 0.0;
    double angle = 0.0;       // radians
    std::uint64_t color_seed = 0;

    // Pixel (x, y) belongs to the leaf iff its center lies inside the ellipse.
    bool contains(int x, int y) const;

    bool operator==(const LeafInstance&) const = default;
};

struct Scene {
    int width = 0;
    int height = 0;
    int week = 0;                       // 1-based
    int wall_thickness = 0;
    std::vector<LeafInstance> leaves;   // z-order = list order
    std::vector<std::uint8_t> wall_mask;  // H x W row-major, 1 = irrelevant

    bool is_wall(int x, int y) const {
        return wall_mask[static_cast<std::size_t>(y) * width + x] != 0;
    }

    // Border frame of the given thickness.
    static std::vector<std::uint8_t> frame_mask(int width, int height, int thickness);

    // Throws ConfigError / DomainError when dimensions, mask, or leaves are
    // inconsistent (mask must be the border frame; leaf centers must lie in
    // the non-wall region; radii must be positive).
    void validate(std::size_t species_count) const;

    bool operator==(const Scene&) const = default;
};

// Exact pixel counts behind the cover identity. plant[p] counts every
// relevant pixel inside any of species p's leaves, occluded or not.
struct GroundTruthAreas {
    std::vector<std::int64_t> plant;
    std::vector<std::int64_t> uncovered;
    std::int64_t relevant = 0;
};

struct SimConfig {
    int units = 24;
    int cameras = 2;
    int weeks = 18;
    int width = 192;
    int height = 96;
    int wall_thickness = 6;
    int leaves_per_scene = 42;

    // Per-registry-entry seeding weights, sum 1. Dead litter is not seeded;
    // it only arises through senescence.
    std::vector<double> mixture;

    double base_radius = 13.0;     // px, full-grown mean
    double radius_log_sd = 0.35;   // lognormal spread of leaf sizes
    double growth_rate = 0.55;     // logistic steepness per week
    double growth_midpoint = 6.5;  // week of half-grown area

    int senescence_onset = 14;         // first week a leaf may turn to litter
    double senescence_fraction = 0.5;  // fraction of leaves that die
    double dead_decay = 0.86;          // weekly radius decay after death

    double occlusion_ramp = 0.0;   // 0..1, weekly radius inflation driving overlap
    double annotation_noise_sd = 0.1;

    SpeciesRegistry registry;      // defaults to the 9 dataset classes

    SimConfig();
    void validate() const;         // throws ConfigError naming the field

    static SimConfig from_file(const std::filesystem::path& path);
    void to_file(const std::filesystem::path& path) const;
};

// One EcoUnit: per camera, one Scene per week.
struct EcoUnitSeries {
    int unit_id = 0;
    std::vector<std::vector<Scene>> cameras;  // [camera][week - 1]

    bool operator==(const EcoUnitSeries&) const = default;
};

// Deterministic for a fixed (config, seed, unit_id); leaf populations are
// drawn per (unit, camera) so units can be generated in any order.
EcoUnitSeries generate_series(const SimConfig& config, std::uint64_t seed, int unit_id = 0);

// All units of the configured dataset; independent units generated under the
// thread budget.
std::vector<EcoUnitSeries> generate_dataset(const SimConfig& config, std::uint64_t seed,
                                            int threads = 0);

// Painter's algorithm over the z-ordered leaves, clipped to the non-wall
// region. Pure function of the Scene.
Image render(const Scene& scene);

// Occlusion-ignored cover: 100 * plant[p] / relevant with walls excluded.
// Throws DomainError when the scene has no relevant pixels.
std::pair<CoverVector, GroundTruthAreas> true_cover(
    const Scene& scene, std::size_t species_count = SpeciesRegistry::kDefaultCount);

// Cover of the top-most (visible) leaf per pixel; sums to at most 100.
CoverVector visible_cover(const Scene& scene,
                          std::size_t species_count = SpeciesRegistry::kDefaultCount);

// Inter-species occlusion: 1 - union(all plant pixels) / sum_p plant[p];
// zero for scenes without plants.
double occluded_fraction(const Scene& scene,
                         std::size_t species_count = SpeciesRegistry::kDefaultCount);

// Noisy human-style annotations: true cover scaled by (1 + N(0, noise_sd))
// per species, clamped to [0,100], then Schmidt quantized. One annotation per
// (camera, week).
std::vector<Annotation> annotate_series(const EcoUnitSeries& series, double noise_sd,
                                        std::uint64_t seed,
                                        std::size_t species_count = SpeciesRegistry::kDefaultCount);

// Series persistence (JSON), bit-exact round trip.
void write_series_json(const EcoUnitSeries& series, const SimConfig& config,
                       const std::filesystem::path& path);

struct SeriesFile {
    EcoUnitSeries series;
    SimConfig config;
};

SeriesFile read_series_json(const std::filesystem::path& path);

} // namespace coverhead
