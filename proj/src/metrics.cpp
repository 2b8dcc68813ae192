#include "coverhead/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace coverhead {

std::vector<double> species_means(std::span<const CoverVector> covers,
                                  std::vector<bool>* floored) {
    if (covers.empty()) {
        throw ConfigError("species_means: empty annotation set");
    }
    const std::size_t s_count = covers.front().size();
    std::vector<double> means(s_count, 0.0);
    for (const auto& c : covers) {
        if (c.size() != s_count) {
            throw ConfigError("species_means: inconsistent species counts");
        }
        for (std::size_t p = 0; p < s_count; ++p) {
            means[p] += c[p];
        }
    }
    if (floored) {
        floored->assign(s_count, false);
    }
    for (std::size_t p = 0; p < s_count; ++p) {
        means[p] /= static_cast<double>(covers.size());
        if (means[p] < kSpeciesMeanFloor) {
            means[p] = kSpeciesMeanFloor;
            if (floored) {
                (*floored)[p] = true;
            }
        }
    }
    return means;
}

std::vector<double> species_means(std::span<const Annotation> annotations,
                                  std::vector<bool>* floored) {
    std::vector<CoverVector> covers;
    covers.reserve(annotations.size());
    for (const auto& a : annotations) {
        covers.push_back(a.cover);
    }
    return species_means(std::span<const CoverVector>(covers), floored);
}

MetricsReport evaluate(std::span<const CoverVector> predictions,
                       std::span<const CoverVector> targets,
                       const std::vector<double>& scaling_means) {
    if (predictions.size() != targets.size()) {
        throw ConfigError("evaluate: " + std::to_string(predictions.size()) +
                          " predictions vs " + std::to_string(targets.size()) + " targets");
    }
    if (predictions.empty()) {
        throw ConfigError("evaluate: empty prediction set");
    }
    const std::size_t s_count = scaling_means.size();

    MetricsReport report;
    report.n_images = predictions.size();
    report.species_means = scaling_means;
    report.mean_floored.assign(s_count, false);
    for (std::size_t p = 0; p < s_count; ++p) {
        if (scaling_means[p] <= kSpeciesMeanFloor) {
            report.mean_floored[p] = true;
        }
    }

    report.per_species_mae.assign(s_count, 0.0);
    double image_first = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i].size() != s_count || targets[i].size() != s_count) {
            throw ConfigError("evaluate: species count mismatch at image " + std::to_string(i));
        }
        double per_image = 0.0;
        for (std::size_t p = 0; p < s_count; ++p) {
            const double err = std::abs(predictions[i][p] - targets[i][p]);
            report.per_species_mae[p] += err;
            per_image += err;
        }
        image_first += per_image / static_cast<double>(s_count);
    }
    report.mae_image_first = image_first / static_cast<double>(predictions.size());

    report.per_species_msae.assign(s_count, 0.0);
    for (std::size_t p = 0; p < s_count; ++p) {
        report.per_species_mae[p] /= static_cast<double>(predictions.size());
        report.per_species_msae[p] = report.per_species_mae[p] / scaling_means[p];
        report.mae += report.per_species_mae[p];
        report.msae += report.per_species_msae[p];
    }
    report.mae /= static_cast<double>(s_count);
    report.msae /= static_cast<double>(s_count);
    return report;
}

void write_metrics_json(const MetricsReport& report, const SpeciesRegistry& registry,
                        const std::filesystem::path& path) {
    nlohmann::json doc;
    doc["mae"] = report.mae;
    doc["msae"] = report.msae;
    doc["mae_image_first"] = report.mae_image_first;
    doc["n_images"] = report.n_images;
    doc["species"] = nlohmann::json::array();
    for (std::size_t p = 0; p < report.per_species_mae.size(); ++p) {
        doc["species"].push_back({{"name", p < registry.count() ? registry.name(p) : ""},
                                  {"mae", report.per_species_mae[p]},
                                  {"msae", report.per_species_msae[p]},
                                  {"scaling_mean", report.species_means[p]},
                                  {"mean_floored", static_cast<bool>(report.mean_floored[p])}});
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << doc.dump(2) << '\n';
}

std::string metrics_csv_row(const MetricsReport& report, const std::string& label) {
    std::ostringstream out;
    out.precision(17);
    out << label << ',' << report.mae << ',' << report.msae << ',' << report.n_images;
    return out.str();
}

} // namespace coverhead
