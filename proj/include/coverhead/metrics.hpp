#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "coverhead/registry.hpp"

namespace coverhead {

// MAE in percentage points, and MSAE: per-species MAE divided by that
// species' mean ground-truth cover, which makes rare and abundant species
// comparable.
struct MetricsReport {
    double mae = 0.0;              // species-averaged, percentage points
    double msae = 0.0;             // species-averaged, dimensionless
    double mae_image_first = 0.0;  // same quantity averaged per image first;
                                   // equal to mae on complete prediction sets
    std::vector<double> per_species_mae;
    std::vector<double> per_species_msae;
    std::vector<double> species_means;  // scaling denominators used
    std::vector<bool> mean_floored;     // species whose mean hit the floor
    std::size_t n_images = 0;
};

inline constexpr double kSpeciesMeanFloor = 1e-6;

// Arithmetic mean of each species' cover over the given set; zero means are
// floored so MSAE stays finite, and flagged via the bool vector when asked.
std::vector<double> species_means(std::span<const CoverVector> covers,
                                  std::vector<bool>* floored = nullptr);
std::vector<double> species_means(std::span<const Annotation> annotations,
                                  std::vector<bool>* floored = nullptr);

MetricsReport evaluate(std::span<const CoverVector> predictions,
                       std::span<const CoverVector> targets,
                       const std::vector<double>& scaling_means);

void write_metrics_json(const MetricsReport& report, const SpeciesRegistry& registry,
                        const std::filesystem::path& path);

// Flat row for fold aggregation: "<label>,mae,msae,n_images".
std::string metrics_csv_row(const MetricsReport& report, const std::string& label);

} // namespace coverhead
