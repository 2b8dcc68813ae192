#include "coverhead/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "coverhead/numeric.hpp"
#include "coverhead/rng.hpp"
#include "coverhead/threading.hpp"

namespace coverhead {

bool LeafInstance::contains(int x, int y) const {
    const double dx = (x + 0.5) - cx;
    const double dy = (y + 0.5) - cy;
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    const double xr = (dx * c + dy * s) / rx;
    const double yr = (-dx * s + dy * c) / ry;
    return xr * xr + yr * yr <= 1.0;
}

std::vector<std::uint8_t> Scene::frame_mask(int width, int height, int thickness) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const bool wall =
                x < thickness || y < thickness || x >= width - thickness || y >= height - thickness;
            mask[static_cast<std::size_t>(y) * width + x] = wall ? 1 : 0;
        }
    }
    return mask;
}

void Scene::validate(std::size_t species_count) const {
    if (width <= 0 || height <= 0) {
        throw ConfigError("scene: non-positive dimensions");
    }
    if (wall_mask.size() != static_cast<std::size_t>(width) * height) {
        throw ConfigError("scene: wall mask size does not match dimensions");
    }
    if (wall_thickness < 0) {
        throw ConfigError("scene: negative wall thickness");
    }
    if (wall_mask != frame_mask(width, height, wall_thickness)) {
        throw ConfigError("scene: wall mask is not the border frame of the stated thickness");
    }
    for (const auto& leaf : leaves) {
        if (leaf.species < 0 || static_cast<std::size_t>(leaf.species) >= species_count) {
            throw DomainError("scene: leaf species index " + std::to_string(leaf.species) +
                              " outside registry");
        }
        if (!(leaf.rx > 0.0) || !(leaf.ry > 0.0)) {
            throw DomainError("scene: leaf radii must be positive");
        }
        const int px = static_cast<int>(leaf.cx);
        const int py = static_cast<int>(leaf.cy);
        if (px < 0 || px >= width || py < 0 || py >= height || is_wall(px, py)) {
            throw DomainError("scene: leaf center outside the non-wall region");
        }
    }
}

SimConfig::SimConfig()
    : mixture{0.035, 0.065, 0.085, 0.095, 0.11, 0.06, 0.37, 0.18, 0.0} {}

void SimConfig::validate() const {
    if (units < 1) {
        throw ConfigError("sim config: units must be >= 1");
    }
    if (cameras < 1) {
        throw ConfigError("sim config: cameras must be >= 1");
    }
    if (weeks < 1) {
        throw ConfigError("sim config: weeks must be >= 1");
    }
    if (width < 64 || height < 32) {
        throw ConfigError("sim config: image size must be at least 64x32");
    }
    if (wall_thickness < 1 || 2 * wall_thickness >= std::min(width, height) - 8) {
        throw ConfigError("sim config: wall_thickness leaves no usable interior");
    }
    if (leaves_per_scene < 0) {
        throw ConfigError("sim config: leaves_per_scene must be >= 0");
    }
    if (mixture.size() != registry.count()) {
        throw ConfigError("sim config: mixture must have one weight per registry entry");
    }
    double sum = 0.0;
    for (double w : mixture) {
        if (!(w >= 0.0)) {
            throw ConfigError("sim config: mixture weights must be >= 0");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("sim config: mixture weights must sum to 1, got " + std::to_string(sum));
    }
    if (!(base_radius > 0.0)) {
        throw ConfigError("sim config: base_radius must be > 0");
    }
    if (!(radius_log_sd >= 0.0)) {
        throw ConfigError("sim config: radius_log_sd must be >= 0");
    }
    if (!(growth_rate > 0.0)) {
        throw ConfigError("sim config: growth_rate must be > 0");
    }
    if (senescence_onset < 1) {
        throw ConfigError("sim config: senescence_onset must be >= 1");
    }
    if (!(senescence_fraction >= 0.0 && senescence_fraction <= 1.0)) {
        throw ConfigError("sim config: senescence_fraction must lie in [0, 1]");
    }
    if (!(dead_decay > 0.0 && dead_decay <= 1.0)) {
        throw ConfigError("sim config: dead_decay must lie in (0, 1]");
    }
    if (!(occlusion_ramp >= 0.0 && occlusion_ramp < 1.0)) {
        throw ConfigError("sim config: occlusion_ramp must lie in [0, 1)");
    }
    if (!(annotation_noise_sd >= 0.0)) {
        throw ConfigError("sim config: annotation_noise_sd must be >= 0");
    }
}

namespace {

double growth_scale(const SimConfig& config, int week) {
    // Leaf area follows a logistic curve; radii scale with its square root.
    return std::sqrt(logistic(config.growth_rate * (week - config.growth_midpoint)));
}

struct LeafSeed {
    int species = 0;
    double cx = 0.0, cy = 0.0;
    double rx_max = 0.0, ry_max = 0.0;
    double angle = 0.0;
    std::uint64_t color_seed = 0;
    int death_week = 0;             // 0 = never dies
};

int sample_species(Rng& rng, const std::vector<double>& mixture) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < mixture.size(); ++i) {
        acc += mixture[i];
        if (u < acc) {
            return static_cast<int>(i);
        }
    }
    // Guard against the cumulative sum rounding just below 1.
    for (std::size_t i = mixture.size(); i-- > 0;) {
        if (mixture[i] > 0.0) {
            return static_cast<int>(i);
        }
    }
    return 0;
}

} // namespace

EcoUnitSeries generate_series(const SimConfig& config, std::uint64_t seed, int unit_id) {
    config.validate();
    const int dead_index = static_cast<int>(
        config.registry.index_of("Dead_litter").value_or(config.registry.count() - 1));

    EcoUnitSeries series;
    series.unit_id = unit_id;
    series.cameras.resize(config.cameras);

    const double x_lo = config.wall_thickness + 0.5;
    const double x_hi = config.width - config.wall_thickness - 0.5;
    const double y_lo = config.wall_thickness + 0.5;
    const double y_hi = config.height - config.wall_thickness - 0.5;

    for (int camera = 0; camera < config.cameras; ++camera) {
        Rng rng(mix_seed(seed, {0x6c656166, static_cast<std::uint64_t>(unit_id),
                                static_cast<std::uint64_t>(camera)}));

        std::vector<LeafSeed> population(static_cast<std::size_t>(config.leaves_per_scene));
        for (auto& leaf : population) {
            leaf.species = sample_species(rng, config.mixture);
            leaf.cx = rng.uniform(x_lo, x_hi);
            leaf.cy = rng.uniform(y_lo, y_hi);
            const double base = config.base_radius * std::exp(rng.normal(0.0, config.radius_log_sd));
            leaf.rx_max = base * rng.uniform(0.85, 1.2);
            leaf.ry_max = base * rng.uniform(0.5, 1.0);
            leaf.angle = rng.uniform(0.0, std::numbers::pi);
            leaf.color_seed = rng.next_u64();
        }

        // Exactly round(fraction * n) leaves senesce, staggered over the
        // first three onset weeks.
        std::vector<std::size_t> order(population.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        const auto n_senesce = static_cast<std::size_t>(
            std::llround(config.senescence_fraction * static_cast<double>(population.size())));
        for (std::size_t k = 0; k < n_senesce && k < order.size(); ++k) {
            population[order[k]].death_week =
                config.senescence_onset + static_cast<int>(rng.below(3));
        }

        auto& weeks = series.cameras[camera];
        weeks.reserve(config.weeks);
        for (int week = 1; week <= config.weeks; ++week) {
            Scene scene;
            scene.width = config.width;
            scene.height = config.height;
            scene.week = week;
            scene.wall_thickness = config.wall_thickness;
            scene.wall_mask = Scene::frame_mask(config.width, config.height, config.wall_thickness);
            scene.leaves.reserve(population.size());

            // Occlusion ramp: radii inflate week over week beyond the growth
            // curve, so footprints increasingly overlap. Monotone, which
            // keeps the pre-senescence growth invariant intact.
            const auto inflation = [&](int at_week) {
                return config.weeks > 1
                           ? 1.0 + 2.0 * config.occlusion_ramp *
                                 static_cast<double>(at_week - 1) / (config.weeks - 1)
                           : 1.0;
            };
            const double grown = growth_scale(config, week) * inflation(week);

            for (const auto& seed_leaf : population) {
                LeafInstance leaf;
                leaf.source_species = seed_leaf.species;
                leaf.color_seed = seed_leaf.color_seed;
                leaf.angle = seed_leaf.angle;
                leaf.cx = seed_leaf.cx;
                leaf.cy = seed_leaf.cy;

                const bool dead = seed_leaf.death_week > 0 && week >= seed_leaf.death_week;
                if (dead) {
                    leaf.species = dead_index;
                    const double at_death =
                        growth_scale(config, seed_leaf.death_week) * inflation(seed_leaf.death_week);
                    const double decay =
                        std::pow(config.dead_decay, static_cast<double>(week - seed_leaf.death_week));
                    leaf.rx = seed_leaf.rx_max * at_death * decay;
                    leaf.ry = seed_leaf.ry_max * at_death * decay;
                } else {
                    leaf.species = seed_leaf.species;
                    leaf.rx = seed_leaf.rx_max * grown;
                    leaf.ry = seed_leaf.ry_max * grown;
                }
                scene.leaves.push_back(leaf);
            }
            weeks.push_back(std::move(scene));
        }
    }
    return series;
}

std::vector<EcoUnitSeries> generate_dataset(const SimConfig& config, std::uint64_t seed,
                                            int threads) {
    config.validate();
    std::vector<EcoUnitSeries> dataset(static_cast<std::size_t>(config.units));
    const int budget = threads > 0 ? threads : thread_budget();
    parallel_for(dataset.size(), budget, [&](std::size_t unit) {
        dataset[unit] = generate_series(config, seed, static_cast<int>(unit));
    });
    return dataset;
}

namespace {

std::uint64_t pixel_hash(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = a * 0x9e3779b97f4a7c15ULL + b;
    (void)splitmix64(s);
    s ^= c;
    return splitmix64(s);
}

std::uint8_t clamp_byte(int v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

Rgb leaf_base_color(const LeafInstance& leaf) {
    Rgb base = species_color(static_cast<std::size_t>(leaf.species));
    if (leaf.species != leaf.source_species) {
        // Converted litter keeps a quarter of the source species' tint.
        const Rgb src = species_color(static_cast<std::size_t>(leaf.source_species));
        base.r = clamp_byte((3 * base.r + src.r) / 4);
        base.g = clamp_byte((3 * base.g + src.g) / 4);
        base.b = clamp_byte((3 * base.b + src.b) / 4);
    }
    Rng jitter(leaf.color_seed);
    const int dr = static_cast<int>(jitter.below(29)) - 14;
    const int dg = static_cast<int>(jitter.below(29)) - 14;
    const int db = static_cast<int>(jitter.below(29)) - 14;
    return {clamp_byte(base.r + dr), clamp_byte(base.g + dg), clamp_byte(base.b + db)};
}

struct LeafBounds {
    int x0, x1, y0, y1;
    bool empty;
};

LeafBounds leaf_bounds(const LeafInstance& leaf, int width, int height) {
    const double radius = std::max(leaf.rx, leaf.ry);
    LeafBounds b{};
    b.x0 = std::max(0, static_cast<int>(std::floor(leaf.cx - radius)));
    b.x1 = std::min(width - 1, static_cast<int>(std::ceil(leaf.cx + radius)));
    b.y0 = std::max(0, static_cast<int>(std::floor(leaf.cy - radius)));
    b.y1 = std::min(height - 1, static_cast<int>(std::ceil(leaf.cy + radius)));
    b.empty = b.x0 > b.x1 || b.y0 > b.y1;
    return b;
}

} // namespace

Image render(const Scene& scene) {
    scene.validate(256);  // any species index with a palette entry renders
    Image image(scene.width, scene.height);
    for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
            if (scene.is_wall(x, y)) {
                image.set(x, y, kWallColor);
            } else {
                // Static soil texture, a pure function of the coordinates.
                const int jitter =
                    static_cast<int>(pixel_hash(x, y, 0x736f696c) % 25) - 12;
                image.set(x, y, {clamp_byte(kSoilColor.r + jitter), clamp_byte(kSoilColor.g + jitter),
                                 clamp_byte(kSoilColor.b + jitter)});
            }
        }
    }
    for (const auto& leaf : scene.leaves) {
        const Rgb base = leaf_base_color(leaf);
        const LeafBounds b = leaf_bounds(leaf, scene.width, scene.height);
        if (b.empty) {
            continue;
        }
        for (int y = b.y0; y <= b.y1; ++y) {
            for (int x = b.x0; x <= b.x1; ++x) {
                if (scene.is_wall(x, y) || !leaf.contains(x, y)) {
                    continue;
                }
                const int shade =
                    static_cast<int>(pixel_hash(x, y, leaf.color_seed) % 13) - 6;
                image.set(x, y, {clamp_byte(base.r + shade), clamp_byte(base.g + shade),
                                 clamp_byte(base.b + shade)});
            }
        }
    }
    return image;
}

std::pair<CoverVector, GroundTruthAreas> true_cover(const Scene& scene,
                                                    std::size_t species_count) {
    scene.validate(species_count);
    const std::size_t n = static_cast<std::size_t>(scene.width) * scene.height;

    GroundTruthAreas areas;
    areas.plant.assign(species_count, 0);
    areas.uncovered.assign(species_count, 0);
    for (std::size_t i = 0; i < n; ++i) {
        areas.relevant += scene.wall_mask[i] == 0 ? 1 : 0;
    }
    if (areas.relevant == 0) {
        throw DomainError("true_cover: degenerate scene with zero relevant pixels");
    }

    // Union footprint per species, occlusion ignored.
    std::vector<std::uint8_t> membership(species_count * n, 0);
    for (const auto& leaf : scene.leaves) {
        const LeafBounds b = leaf_bounds(leaf, scene.width, scene.height);
        if (b.empty) {
            continue;
        }
        std::uint8_t* plane = membership.data() + static_cast<std::size_t>(leaf.species) * n;
        for (int y = b.y0; y <= b.y1; ++y) {
            for (int x = b.x0; x <= b.x1; ++x) {
                if (!scene.is_wall(x, y) && leaf.contains(x, y)) {
                    plane[static_cast<std::size_t>(y) * scene.width + x] = 1;
                }
            }
        }
    }
    for (std::size_t p = 0; p < species_count; ++p) {
        const std::uint8_t* plane = membership.data() + p * n;
        std::int64_t in = 0;
        std::int64_t out = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (scene.wall_mask[i] != 0) {
                continue;
            }
            if (plane[i] != 0) {
                ++in;
            } else {
                ++out;
            }
        }
        areas.plant[p] = in;
        areas.uncovered[p] = out;
    }

    CoverVector cover(species_count);
    for (std::size_t p = 0; p < species_count; ++p) {
        cover[p] = 100.0 * static_cast<double>(areas.plant[p]) /
                   static_cast<double>(areas.relevant);
    }
    return {cover, areas};
}

CoverVector visible_cover(const Scene& scene, std::size_t species_count) {
    scene.validate(species_count);
    const std::size_t n = static_cast<std::size_t>(scene.width) * scene.height;
    std::vector<int> top(n, -1);
    for (const auto& leaf : scene.leaves) {
        const LeafBounds b = leaf_bounds(leaf, scene.width, scene.height);
        if (b.empty) {
            continue;
        }
        for (int y = b.y0; y <= b.y1; ++y) {
            for (int x = b.x0; x <= b.x1; ++x) {
                if (!scene.is_wall(x, y) && leaf.contains(x, y)) {
                    top[static_cast<std::size_t>(y) * scene.width + x] = leaf.species;
                }
            }
        }
    }
    std::int64_t relevant = 0;
    std::vector<std::int64_t> counts(species_count, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (scene.wall_mask[i] != 0) {
            continue;
        }
        ++relevant;
        if (top[i] >= 0) {
            ++counts[static_cast<std::size_t>(top[i])];
        }
    }
    if (relevant == 0) {
        throw DomainError("visible_cover: degenerate scene with zero relevant pixels");
    }
    CoverVector cover(species_count);
    for (std::size_t p = 0; p < species_count; ++p) {
        cover[p] = 100.0 * static_cast<double>(counts[p]) / static_cast<double>(relevant);
    }
    return cover;
}

double occluded_fraction(const Scene& scene, std::size_t species_count) {
    const auto [cover, areas] = true_cover(scene, species_count);
    const std::size_t n = static_cast<std::size_t>(scene.width) * scene.height;
    std::vector<std::uint8_t> any(n, 0);
    for (const auto& leaf : scene.leaves) {
        const LeafBounds b = leaf_bounds(leaf, scene.width, scene.height);
        if (b.empty) {
            continue;
        }
        for (int y = b.y0; y <= b.y1; ++y) {
            for (int x = b.x0; x <= b.x1; ++x) {
                if (!scene.is_wall(x, y) && leaf.contains(x, y)) {
                    any[static_cast<std::size_t>(y) * scene.width + x] = 1;
                }
            }
        }
    }
    std::int64_t union_pixels = 0;
    for (std::size_t i = 0; i < n; ++i) {
        union_pixels += any[i];
    }
    std::int64_t footprint_sum = 0;
    for (std::int64_t p : areas.plant) {
        footprint_sum += p;
    }
    if (footprint_sum == 0) {
        return 0.0;
    }
    return 1.0 - static_cast<double>(union_pixels) / static_cast<double>(footprint_sum);
}

std::vector<Annotation> annotate_series(const EcoUnitSeries& series, double noise_sd,
                                        std::uint64_t seed, std::size_t species_count) {
    if (!(noise_sd >= 0.0)) {
        throw ConfigError("annotate_series: noise_sd must be >= 0");
    }
    std::vector<Annotation> annotations;
    for (std::size_t camera = 0; camera < series.cameras.size(); ++camera) {
        for (const Scene& scene : series.cameras[camera]) {
            const auto [cover, areas] = true_cover(scene, species_count);
            Rng rng(mix_seed(seed, {0x616e6e6f, static_cast<std::uint64_t>(series.unit_id),
                                    camera, static_cast<std::uint64_t>(scene.week)}));
            Annotation a;
            a.unit = series.unit_id;
            a.camera = static_cast<int>(camera);
            a.week = scene.week;
            a.cover = CoverVector(cover.size());
            for (std::size_t p = 0; p < cover.size(); ++p) {
                const double noisy = cover[p] * (1.0 + rng.normal(0.0, noise_sd));
                a.cover[p] = schmidt::quantize(std::clamp(noisy, 0.0, 100.0));
            }
            annotations.push_back(std::move(a));
        }
    }
    return annotations;
}

namespace {

nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json doc;
    doc["width"] = scene.width;
    doc["height"] = scene.height;
    doc["week"] = scene.week;
    doc["wall_thickness"] = scene.wall_thickness;
    auto rows = nlohmann::json::array();
    for (int y = 0; y < scene.height; ++y) {
        std::string row(static_cast<std::size_t>(scene.width), '0');
        for (int x = 0; x < scene.width; ++x) {
            if (scene.is_wall(x, y)) {
                row[static_cast<std::size_t>(x)] = '1';
            }
        }
        rows.push_back(std::move(row));
    }
    doc["wall_mask"] = std::move(rows);
    auto leaves = nlohmann::json::array();
    for (const auto& leaf : scene.leaves) {
        leaves.push_back({{"species", leaf.species},
                          {"source_species", leaf.source_species},
                          {"cx", leaf.cx},
                          {"cy", leaf.cy},
                          {"rx", leaf.rx},
                          {"ry", leaf.ry},
                          {"angle", leaf.angle},
                          {"color_seed", leaf.color_seed}});
    }
    doc["leaves"] = std::move(leaves);
    return doc;
}

Scene scene_from_json(const nlohmann::json& doc) {
    Scene scene;
    scene.width = doc.at("width").get<int>();
    scene.height = doc.at("height").get<int>();
    scene.week = doc.at("week").get<int>();
    scene.wall_thickness = doc.at("wall_thickness").get<int>();
    const auto& rows = doc.at("wall_mask");
    if (static_cast<int>(rows.size()) != scene.height) {
        throw ParseError("series json: wall_mask row count mismatch");
    }
    scene.wall_mask.assign(static_cast<std::size_t>(scene.width) * scene.height, 0);
    for (int y = 0; y < scene.height; ++y) {
        const auto row = rows[static_cast<std::size_t>(y)].get<std::string>();
        if (static_cast<int>(row.size()) != scene.width) {
            throw ParseError("series json: wall_mask row length mismatch");
        }
        for (int x = 0; x < scene.width; ++x) {
            scene.wall_mask[static_cast<std::size_t>(y) * scene.width + x] =
                row[static_cast<std::size_t>(x)] == '1' ? 1 : 0;
        }
    }
    for (const auto& item : doc.at("leaves")) {
        LeafInstance leaf;
        leaf.species = item.at("species").get<int>();
        leaf.source_species = item.at("source_species").get<int>();
        leaf.cx = item.at("cx").get<double>();
        leaf.cy = item.at("cy").get<double>();
        leaf.rx = item.at("rx").get<double>();
        leaf.ry = item.at("ry").get<double>();
        leaf.angle = item.at("angle").get<double>();
        leaf.color_seed = item.at("color_seed").get<std::uint64_t>();
        scene.leaves.push_back(leaf);
    }
    return scene;
}

nlohmann::json config_to_json(const SimConfig& config) {
    return {{"units", config.units},
            {"cameras", config.cameras},
            {"weeks", config.weeks},
            {"width", config.width},
            {"height", config.height},
            {"wall_thickness", config.wall_thickness},
            {"leaves_per_scene", config.leaves_per_scene},
            {"mixture", config.mixture},
            {"base_radius", config.base_radius},
            {"radius_log_sd", config.radius_log_sd},
            {"growth_rate", config.growth_rate},
            {"growth_midpoint", config.growth_midpoint},
            {"senescence_onset", config.senescence_onset},
            {"senescence_fraction", config.senescence_fraction},
            {"dead_decay", config.dead_decay},
            {"occlusion_ramp", config.occlusion_ramp},
            {"annotation_noise_sd", config.annotation_noise_sd},
            {"registry", config.registry.names()}};
}

SimConfig config_from_json(const nlohmann::json& doc) {
    SimConfig config;
    config.units = doc.at("units").get<int>();
    config.cameras = doc.at("cameras").get<int>();
    config.weeks = doc.at("weeks").get<int>();
    config.width = doc.at("width").get<int>();
    config.height = doc.at("height").get<int>();
    config.wall_thickness = doc.at("wall_thickness").get<int>();
    config.leaves_per_scene = doc.at("leaves_per_scene").get<int>();
    config.mixture = doc.at("mixture").get<std::vector<double>>();
    config.base_radius = doc.at("base_radius").get<double>();
    config.radius_log_sd = doc.at("radius_log_sd").get<double>();
    config.growth_rate = doc.at("growth_rate").get<double>();
    config.growth_midpoint = doc.at("growth_midpoint").get<double>();
    config.senescence_onset = doc.at("senescence_onset").get<int>();
    config.senescence_fraction = doc.at("senescence_fraction").get<double>();
    config.dead_decay = doc.at("dead_decay").get<double>();
    config.occlusion_ramp = doc.at("occlusion_ramp").get<double>();
    config.annotation_noise_sd = doc.at("annotation_noise_sd").get<double>();
    config.registry = SpeciesRegistry(doc.at("registry").get<std::vector<std::string>>());
    return config;
}

} // namespace

void write_series_json(const EcoUnitSeries& series, const SimConfig& config,
                       const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["unit_id"] = series.unit_id;
    doc["config"] = config_to_json(config);
    auto cameras = nlohmann::json::array();
    for (const auto& weeks : series.cameras) {
        auto scenes = nlohmann::json::array();
        for (const auto& scene : weeks) {
            scenes.push_back(scene_to_json(scene));
        }
        cameras.push_back(std::move(scenes));
    }
    doc["cameras"] = std::move(cameras);

    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << doc.dump() << '\n';
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

SeriesFile read_series_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("series json: " + std::string(e.what()) + " in " + path.string());
    }
    try {
        if (doc.at("format_version").get<int>() != 1) {
            throw ParseError("series json: unsupported format_version in " + path.string());
        }
        SeriesFile result;
        result.series.unit_id = doc.at("unit_id").get<int>();
        result.config = config_from_json(doc.at("config"));
        for (const auto& camera : doc.at("cameras")) {
            std::vector<Scene> weeks;
            for (const auto& scene : camera) {
                weeks.push_back(scene_from_json(scene));
            }
            result.series.cameras.push_back(std::move(weeks));
        }
        return result;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("series json: " + std::string(e.what()) + " in " + path.string());
    }
}

namespace {

std::string trim_kv(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

} // namespace

SimConfig SimConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    SimConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim_kv(line);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError("sim config: line " + std::to_string(line_no) +
                             " is not key=value: '" + line + "'");
        }
        const std::string key = trim_kv(line.substr(0, eq));
        const std::string value = trim_kv(line.substr(eq + 1));
        try {
            if (key == "units") {
                config.units = std::stoi(value);
            } else if (key == "cameras") {
                config.cameras = std::stoi(value);
            } else if (key == "weeks") {
                config.weeks = std::stoi(value);
            } else if (key == "width") {
                config.width = std::stoi(value);
            } else if (key == "height") {
                config.height = std::stoi(value);
            } else if (key == "wall_thickness") {
                config.wall_thickness = std::stoi(value);
            } else if (key == "leaves_per_scene") {
                config.leaves_per_scene = std::stoi(value);
            } else if (key == "mixture") {
                std::vector<double> mix;
                std::istringstream items(value);
                std::string item;
                while (std::getline(items, item, ',')) {
                    mix.push_back(std::stod(trim_kv(item)));
                }
                config.mixture = std::move(mix);
            } else if (key == "base_radius") {
                config.base_radius = std::stod(value);
            } else if (key == "radius_log_sd") {
                config.radius_log_sd = std::stod(value);
            } else if (key == "growth_rate") {
                config.growth_rate = std::stod(value);
            } else if (key == "growth_midpoint") {
                config.growth_midpoint = std::stod(value);
            } else if (key == "senescence_onset") {
                config.senescence_onset = std::stoi(value);
            } else if (key == "senescence_fraction") {
                config.senescence_fraction = std::stod(value);
            } else if (key == "dead_decay") {
                config.dead_decay = std::stod(value);
            } else if (key == "occlusion_ramp") {
                config.occlusion_ramp = std::stod(value);
            } else if (key == "annotation_noise_sd") {
                config.annotation_noise_sd = std::stod(value);
            } else {
                throw ParseError("sim config: unknown key '" + key + "' at line " +
                                 std::to_string(line_no));
            }
        } catch (const ParseError&) {
            throw;
        } catch (const std::exception&) {
            throw ParseError("sim config: bad value '" + value + "' for " + key);
        }
    }
    config.validate();
    return config;
}

void SimConfig::to_file(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out.precision(17);
    out << "units=" << units << '\n';
    out << "cameras=" << cameras << '\n';
    out << "weeks=" << weeks << '\n';
    out << "width=" << width << '\n';
    out << "height=" << height << '\n';
    out << "wall_thickness=" << wall_thickness << '\n';
    out << "leaves_per_scene=" << leaves_per_scene << '\n';
    out << "mixture=";
    for (std::size_t i = 0; i < mixture.size(); ++i) {
        out << (i ? "," : "") << mixture[i];
    }
    out << '\n';
    out << "base_radius=" << base_radius << '\n';
    out << "radius_log_sd=" << radius_log_sd << '\n';
    out << "growth_rate=" << growth_rate << '\n';
    out << "growth_midpoint=" << growth_midpoint << '\n';
    out << "senescence_onset=" << senescence_onset << '\n';
    out << "senescence_fraction=" << senescence_fraction << '\n';
    out << "dead_decay=" << dead_decay << '\n';
    out << "occlusion_ramp=" << occlusion_ramp << '\n';
    out << "annotation_noise_sd=" << annotation_noise_sd << '\n';
}

} // namespace coverhead
