#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "coverhead/sim.hpp"
#include "coverhead/rng.hpp"

using namespace coverhead;

namespace {

Scene blank_scene(int w, int h, int wall) {
    Scene scene;
    scene.width = w;
    scene.height = h;
    scene.week = 1;
    scene.wall_thickness = wall;
    scene.wall_mask = Scene::frame_mask(w, h, wall);
    return scene;
}

LeafInstance make_leaf(int species, double cx, double cy, double rx, double ry, double angle,
                       std::uint64_t color_seed = 7) {
    LeafInstance leaf;
    leaf.species = species;
    leaf.source_species = species;
    leaf.cx = cx;
    leaf.cy = cy;
    leaf.rx = rx;
    leaf.ry = ry;
    leaf.angle = angle;
    leaf.color_seed = color_seed;
    return leaf;
}

// Exhaustive reference: every pixel against every leaf, no bounding boxes.
GroundTruthAreas brute_force_areas(const Scene& scene, std::size_t species_count) {
    GroundTruthAreas areas;
    areas.plant.assign(species_count, 0);
    areas.uncovered.assign(species_count, 0);
    for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
            if (scene.is_wall(x, y)) {
                continue;
            }
            ++areas.relevant;
            std::vector<bool> hit(species_count, false);
            for (const auto& leaf : scene.leaves) {
                if (leaf.contains(x, y)) {
                    hit[static_cast<std::size_t>(leaf.species)] = true;
                }
            }
            for (std::size_t p = 0; p < species_count; ++p) {
                if (hit[p]) {
                    ++areas.plant[p];
                } else {
                    ++areas.uncovered[p];
                }
            }
        }
    }
    return areas;
}

Scene random_scene(std::uint64_t seed, int n_leaves = 12) {
    Scene scene = blank_scene(80, 50, 4);
    Rng rng(seed);
    for (int i = 0; i < n_leaves; ++i) {
        scene.leaves.push_back(make_leaf(
            static_cast<int>(rng.below(9)), rng.uniform(5.0, 75.0), rng.uniform(5.0, 45.0),
            rng.uniform(1.0, 14.0), rng.uniform(1.0, 14.0), rng.uniform(0.0, std::numbers::pi),
            rng.next_u64()));
    }
    return scene;
}

} // namespace

TEST_CASE("generate_series is bit-identical for a fixed (config, seed)") {
    SimConfig config;
    config.units = 1;
    config.weeks = 6;
    const EcoUnitSeries a = generate_series(config, 42, 0);
    const EcoUnitSeries b = generate_series(config, 42, 0);
    CHECK(a == b);
    const EcoUnitSeries c = generate_series(config, 43, 0);
    CHECK_FALSE(a == c);
}

TEST_CASE("rasterized ellipse area tracks pi*a*b within 3%") {
    Scene scene = blank_scene(200, 120, 2);
    scene.leaves.push_back(make_leaf(0, 100.0, 60.0, 30.0, 18.0, 0.7));
    const auto [cover, areas] = true_cover(scene);
    const double analytic = std::numbers::pi * 30.0 * 18.0;
    CHECK(std::abs(static_cast<double>(areas.plant[0]) - analytic) / analytic < 0.03);
}

TEST_CASE("two fully overlapping species each keep their full cover") {
    // A huge rx turns the ellipse into a horizontal band: with the center on
    // the row boundary at t+50 and ry = 20, exactly 40 of the 100 interior
    // rows are inside, for every interior column. Footprint = 40% exactly.
    const int wall = 6;
    Scene scene = blank_scene(160, 100 + 2 * wall, wall);
    const double cy = wall + 50.0;
    scene.leaves.push_back(make_leaf(0, 80.0, cy, 1e9, 20.0, 0.0));
    scene.leaves.push_back(make_leaf(1, 80.0, cy, 1e9, 20.0, 0.0));

    const auto [cover, areas] = true_cover(scene);
    CHECK(cover[0] == 40.0);
    CHECK(cover[1] == 40.0);
    CHECK(cover[0] + cover[1] == 80.0);

    // visible cover counts the overlap once
    const CoverVector visible = visible_cover(scene);
    double visible_sum = 0.0;
    for (std::size_t p = 0; p < visible.size(); ++p) {
        visible_sum += visible[p];
    }
    CHECK(visible_sum == 40.0);
}

TEST_CASE("empty scene: zero cover everywhere, soil and wall colors only") {
    Scene scene = blank_scene(70, 40, 3);
    const auto [cover, areas] = true_cover(scene);
    for (std::size_t p = 0; p < cover.size(); ++p) {
        CHECK(cover[p] == 0.0);
    }
    const Image img = render(scene);
    for (int y = 0; y < scene.height; ++y) {
        for (int x = 0; x < scene.width; ++x) {
            const Rgb c = img.at(x, y);
            if (scene.is_wall(x, y)) {
                CHECK(c == kWallColor);
            } else {
                // soil with +-12 brightness jitter
                CHECK(std::abs(int(c.r) - int(kSoilColor.r)) <= 12);
                CHECK(std::abs(int(c.g) - int(kSoilColor.g)) <= 12);
            }
        }
    }
}

TEST_CASE("true_cover matches the exhaustive per-pixel oracle on random scenes") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const Scene scene = random_scene(seed);
        const auto [cover, areas] = true_cover(scene);
        const GroundTruthAreas want = brute_force_areas(scene, 9);
        REQUIRE(areas.relevant == want.relevant);
        for (std::size_t p = 0; p < 9; ++p) {
            REQUIRE(areas.plant[p] == want.plant[p]);
            REQUIRE(areas.uncovered[p] == want.uncovered[p]);
            REQUIRE(cover[p] ==
                    100.0 * static_cast<double>(want.plant[p]) / static_cast<double>(want.relevant));
        }
    }
}

TEST_CASE("area identity holds exactly on random scenes") {
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        const Scene scene = random_scene(seed, 20);
        const auto [cover, areas] = true_cover(scene);
        for (std::size_t p = 0; p < 9; ++p) {
            REQUIRE(areas.plant[p] + areas.uncovered[p] == areas.relevant);
        }
    }
}

TEST_CASE("stacked identical leaves render exactly like one") {
    Scene one = blank_scene(60, 40, 2);
    one.leaves.push_back(make_leaf(3, 30.0, 20.0, 9.0, 6.0, 0.4, 99));
    Scene two = one;
    two.leaves.push_back(two.leaves.front());
    CHECK(render(one) == render(two));
}

TEST_CASE("render is a pure function of the scene") {
    const Scene scene = random_scene(17);
    CHECK(render(scene) == render(scene));
}

TEST_CASE("sum of true covers is at least the visible sum; equal without overlap") {
    const Scene busy = random_scene(55, 25);
    const auto [cover, areas] = true_cover(busy);
    const CoverVector visible = visible_cover(busy);
    double true_sum = 0.0, visible_sum = 0.0;
    for (std::size_t p = 0; p < 9; ++p) {
        true_sum += cover[p];
        visible_sum += visible[p];
    }
    CHECK(true_sum >= visible_sum - 1e-12);

    // disjoint leaves of different species: the two sums agree
    Scene apart = blank_scene(100, 60, 2);
    apart.leaves.push_back(make_leaf(0, 20.0, 30.0, 8.0, 5.0, 0.0));
    apart.leaves.push_back(make_leaf(1, 70.0, 30.0, 8.0, 5.0, 0.0));
    const auto [cover2, areas2] = true_cover(apart);
    const CoverVector visible2 = visible_cover(apart);
    for (std::size_t p = 0; p < 9; ++p) {
        CHECK(cover2[p] == visible2[p]);
    }
    CHECK(occluded_fraction(apart) == 0.0);
    CHECK(occluded_fraction(busy) >= 0.0);
}

TEST_CASE("growth is monotone before senescence and litter appears by week 18") {
    SimConfig config;
    config.units = 1;
    const EcoUnitSeries series = generate_series(config, 11, 0);
    REQUIRE(series.cameras.size() == 2);
    REQUIRE(series.cameras[0].size() == 18);

    const int dead = 8;
    for (const auto& weeks : series.cameras) {
        for (std::size_t li = 0; li < weeks[0].leaves.size(); ++li) {
            for (int w = 1; w < config.senescence_onset - 1; ++w) {
                const auto& prev = weeks[static_cast<std::size_t>(w - 1)].leaves[li];
                const auto& next = weeks[static_cast<std::size_t>(w)].leaves[li];
                REQUIRE(next.rx >= prev.rx);
                REQUIRE(next.ry >= prev.ry);
                REQUIRE(prev.species != dead);
            }
        }
    }
    bool litter_in_final_week = false;
    for (const auto& leaf : series.cameras[0].back().leaves) {
        if (leaf.species == dead) {
            litter_in_final_week = true;
        }
    }
    CHECK(litter_in_final_week);
}

TEST_CASE("cover sum rises with growth and falls after senescence") {
    SimConfig config;
    config.units = 1;
    const EcoUnitSeries series = generate_series(config, 3, 0);
    std::vector<double> sums(18, 0.0);
    for (const auto& weeks : series.cameras) {
        for (const auto& scene : weeks) {
            const auto [cover, areas] = true_cover(scene);
            for (std::size_t p = 0; p < cover.size(); ++p) {
                sums[static_cast<std::size_t>(scene.week - 1)] += cover[p] / 2.0;
            }
        }
    }
    const auto peak = std::max_element(sums.begin(), sums.end());
    CHECK(sums.front() < *peak);
    CHECK(sums.back() < *peak);
    CHECK(sums[0] < sums[6]);   // growing phase
    CHECK(*peak > 100.0);       // occlusion-ignored sums exceed 100%
}

TEST_CASE("annotations: zero noise quantizes the exact covers, zero stays zero") {
    SimConfig config;
    config.units = 1;
    config.weeks = 5;
    const EcoUnitSeries series = generate_series(config, 5, 0);
    const auto exact = annotate_series(series, 0.0, 1);
    REQUIRE(exact.size() == 2 * 5);
    for (const auto& a : exact) {
        const Scene& scene =
            series.cameras[static_cast<std::size_t>(a.camera)][static_cast<std::size_t>(a.week - 1)];
        const auto [cover, areas] = true_cover(scene);
        for (std::size_t p = 0; p < cover.size(); ++p) {
            REQUIRE(a.cover[p] == schmidt::quantize(cover[p]));
            if (cover[p] == 0.0) {
                REQUIRE(a.cover[p] == 0.0);
            }
        }
    }

    // multiplicative noise keeps absent species at zero, and is reproducible
    const auto noisy1 = annotate_series(series, 0.25, 9);
    const auto noisy2 = annotate_series(series, 0.25, 9);
    REQUIRE(noisy1.size() == noisy2.size());
    for (std::size_t i = 0; i < noisy1.size(); ++i) {
        CHECK(noisy1[i].cover == noisy2[i].cover);
        const Scene& scene = series.cameras[static_cast<std::size_t>(noisy1[i].camera)]
                                           [static_cast<std::size_t>(noisy1[i].week - 1)];
        const auto [cover, areas] = true_cover(scene);
        for (std::size_t p = 0; p < cover.size(); ++p) {
            if (cover[p] == 0.0) {
                CHECK(noisy1[i].cover[p] == 0.0);
            }
        }
    }
}

TEST_CASE("default mixture puts Tri_pra near a third of the summed footprints") {
    SimConfig config;
    config.units = 8;
    double tri = 0.0, ach = 0.0, total = 0.0;
    for (int unit = 0; unit < config.units; ++unit) {
        const EcoUnitSeries series = generate_series(config, 42, unit);
        for (const auto& weeks : series.cameras) {
            for (const auto& scene : weeks) {
                const auto [cover, areas] = true_cover(scene);
                for (std::size_t p = 0; p < 9; ++p) {
                    total += static_cast<double>(areas.plant[p]);
                }
                tri += static_cast<double>(areas.plant[6]);
                ach += static_cast<double>(areas.plant[0]);
            }
        }
    }
    const double tri_share = tri / total;
    const double ach_share = ach / total;
    CHECK(tri_share > 1.0 / 3.0 * 0.9);
    CHECK(tri_share < 1.0 / 3.0 * 1.1);
    // least-abundant species sits near 3%
    CHECK(ach_share > 0.01);
    CHECK(ach_share < 0.06);
}

TEST_CASE("occlusion ramp raises the hidden fraction over the weeks") {
    SimConfig config;
    config.units = 2;
    config.occlusion_ramp = 0.85;
    double early = 0.0, late = 0.0;
    for (int unit = 0; unit < config.units; ++unit) {
        const EcoUnitSeries series = generate_series(config, 7, unit);
        for (const auto& weeks : series.cameras) {
            early += occluded_fraction(weeks[4]);   // week 5: grown, not yet pulled much
            late += occluded_fraction(weeks[17]);
        }
    }
    CHECK(late > early);
}

TEST_CASE("degenerate all-wall scene raises the dedicated error") {
    Scene scene = blank_scene(64, 32, 16);  // frame covers everything
    CHECK_NOTHROW(scene.validate(9));
    CHECK_THROWS_WITH_AS(true_cover(scene), doctest::Contains("degenerate"), DomainError);
}

TEST_CASE("scene validation rejects inconsistent members") {
    Scene scene = blank_scene(64, 32, 3);
    scene.leaves.push_back(make_leaf(0, 1.0, 1.0, 3.0, 3.0, 0.0));  // center on the wall
    CHECK_THROWS_AS(scene.validate(9), DomainError);
    scene.leaves[0] = make_leaf(0, 30.0, 16.0, -1.0, 3.0, 0.0);     // bad radius
    CHECK_THROWS_AS(scene.validate(9), DomainError);
    scene.leaves[0] = make_leaf(12, 30.0, 16.0, 3.0, 3.0, 0.0);     // species out of range
    CHECK_THROWS_AS(scene.validate(9), DomainError);
    scene.leaves.clear();
    scene.wall_mask[16 * 64 + 32] = 1;                              // interior pixel marked wall
    CHECK_THROWS_AS(scene.validate(9), ConfigError);
}

TEST_CASE("sim config validation names offending fields") {
    SimConfig config;
    config.width = 10;
    CHECK_THROWS_WITH_AS(config.validate(), doctest::Contains("64x32"), ConfigError);
    config = SimConfig();
    config.mixture[0] += 0.5;
    CHECK_THROWS_WITH_AS(config.validate(), doctest::Contains("mixture"), ConfigError);
    config = SimConfig();
    config.senescence_fraction = 1.5;
    CHECK_THROWS_WITH_AS(config.validate(), doctest::Contains("senescence_fraction"), ConfigError);
}

TEST_CASE("series json round trip is exact") {
    namespace fs = std::filesystem;
    SimConfig config;
    config.units = 1;
    config.weeks = 3;
    config.width = 64;
    config.height = 32;
    config.wall_thickness = 3;
    const EcoUnitSeries series = generate_series(config, 77, 4);
    const auto path = fs::temp_directory_path() / "coverhead_series.json";
    write_series_json(series, config, path);
    const SeriesFile loaded = read_series_json(path);
    CHECK(loaded.series == series);
    CHECK(loaded.config.units == config.units)
    ;
    CHECK(loaded.config.mixture == config.mixture);
    fs::remove(path);
}

TEST_CASE("sim config file round trip") {
    namespace fs = std::filesystem;
    SimConfig config;
    config.units = 4;
    config.occlusion_ramp = 0.5;
    const auto path = fs::temp_directory_path() / "coverhead_sim.cfg";
    config.to_file(path);
    const SimConfig loaded = SimConfig::from_file(path);
    CHECK(loaded.units == 4);
    CHECK(loaded.occlusion_ramp == doctest::Approx(0.5));
    CHECK(loaded.mixture == config.mixture);
    fs::remove(path);
}
