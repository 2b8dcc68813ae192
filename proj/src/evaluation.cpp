#include "coverhead/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "coverhead/rng.hpp"
#include "coverhead/threading.hpp"

namespace coverhead {

std::vector<FoldSpec> make_folds(std::vector<int> unit_ids, std::uint64_t seed) {
    if (unit_ids.size() < 2 || unit_ids.size() % 2 != 0) {
        throw ConfigError("make_folds: need an even number of units, got " +
                          std::to_string(unit_ids.size()));
    }
    if (std::set<int>(unit_ids.begin(), unit_ids.end()).size() != unit_ids.size()) {
        throw ConfigError("make_folds: duplicate unit ids");
    }
    Rng rng(mix_seed(seed, {0x666f6c6473}));
    rng.shuffle(unit_ids);

    std::vector<FoldSpec> folds(unit_ids.size() / 2);
    for (std::size_t f = 0; f < folds.size(); ++f) {
        folds[f].fold_index = static_cast<int>(f);
        folds[f].test_units = {unit_ids[2 * f], unit_ids[2 * f + 1]};
        for (std::size_t i = 0; i < unit_ids.size(); ++i) {
            if (i != 2 * f && i != 2 * f + 1) {
                folds[f].train_units.push_back(unit_ids[i]);
            }
        }
        std::sort(folds[f].test_units.begin(), folds[f].test_units.end());
        std::sort(folds[f].train_units.begin(), folds[f].train_units.end());
    }
    return folds;
}

std::vector<WeekRow> weekwise_error(std::span<const CoverVector> predictions,
                                    std::span<const CoverVector> targets,
                                    std::span<const int> weeks,
                                    const std::vector<double>& scaling_means, int max_week) {
    if (predictions.size() != targets.size() || predictions.size() != weeks.size()) {
        throw ConfigError("weekwise_error: input length mismatch");
    }
    std::vector<WeekRow> rows(static_cast<std::size_t>(max_week));
    for (int w = 1; w <= max_week; ++w) {
        rows[static_cast<std::size_t>(w - 1)].week = w;
    }
    const std::size_t s_count = scaling_means.size();
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const int w = weeks[i];
        if (w < 1 || w > max_week) {
            throw DataError("weekwise_error: week " + std::to_string(w) + " outside [1, " +
                            std::to_string(max_week) + "]");
        }
        WeekRow& row = rows[static_cast<std::size_t>(w - 1)];
        double scaled = 0.0;
        double cover_sum = 0.0;
        for (std::size_t p = 0; p < s_count; ++p) {
            scaled += std::abs(predictions[i][p] - targets[i][p]) / scaling_means[p];
            cover_sum += targets[i][p];
        }
        row.msae += scaled / static_cast<double>(s_count);
        row.mean_cover_sum += cover_sum;
        row.n_images += 1;
    }
    for (auto& row : rows) {
        if (row.n_images > 0) {
            row.populated = true;
            row.msae /= row.n_images;
            row.mean_cover_sum /= row.n_images;
        }
    }
    return rows;
}

std::pair<double, double> cover_error_correlation(const std::vector<double>& species_means,
                                                  const std::vector<double>& species_msae) {
    if (species_means.size() != species_msae.size()) {
        throw ConfigError("cover_error_correlation: length mismatch");
    }
    const std::size_t n = species_means.size();
    if (n < 3) {
        throw ConfigError("cover_error_correlation: need at least 3 species, got " +
                          std::to_string(n));
    }
    double mean_x = 0.0, mean_y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_x += species_means[i];
        mean_y += species_msae[i];
    }
    mean_x /= static_cast<double>(n);
    mean_y /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = species_means[i] - mean_x;
        const double dy = species_msae[i] - mean_y;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw NumericError("cover_error_correlation: undefined (zero variance input)");
    }
    const double r = sxy / std::sqrt(sxx * syy);
    return {r, r * r};
}

namespace {

void validate_folds(std::span<const DatasetImage> images, const std::vector<FoldSpec>& folds) {
    std::unordered_set<int> dataset_units;
    for (const auto& img : images) {
        dataset_units.insert(img.unit);
    }
    std::unordered_set<int> seen_test;
    for (const auto& fold : folds) {
        if (fold.test_units.size() != 2) {
            throw ConfigError("run_cv: fold " + std::to_string(fold.fold_index) +
                              " does not hold out exactly 2 units");
        }
        for (int u : fold.test_units) {
            if (!dataset_units.contains(u)) {
                throw ConfigError("run_cv: fold references unknown unit " + std::to_string(u));
            }
            if (!seen_test.insert(u).second) {
                throw ConfigError("run_cv: unit " + std::to_string(u) +
                                  " appears in multiple test sets");
            }
        }
    }
}

MetricsReport average_reports(const std::vector<FoldResult>& folds) {
    MetricsReport avg;
    const auto n = static_cast<double>(folds.size());
    const std::size_t s_count = folds.front().metrics.per_species_mae.size();
    avg.per_species_mae.assign(s_count, 0.0);
    avg.per_species_msae.assign(s_count, 0.0);
    avg.species_means.assign(s_count, 0.0);
    avg.mean_floored.assign(s_count, false);
    for (const auto& fold : folds) {
        avg.mae += fold.metrics.mae / n;
        avg.msae += fold.metrics.msae / n;
        avg.mae_image_first += fold.metrics.mae_image_first / n;
        avg.n_images += fold.metrics.n_images;
        for (std::size_t p = 0; p < s_count; ++p) {
            avg.per_species_mae[p] += fold.metrics.per_species_mae[p] / n;
            avg.per_species_msae[p] += fold.metrics.per_species_msae[p] / n;
            avg.species_means[p] += fold.metrics.species_means[p] / n;
            if (fold.metrics.mean_floored[p]) {
                avg.mean_floored[p] = true;
            }
        }
    }
    return avg;
}

} // namespace

CvReport run_cv(std::span<const DatasetImage> images, const std::vector<FoldSpec>& folds,
                const CvRunConfig& config, const std::vector<FeatureMap>* raw_features) {
    if (images.empty()) {
        throw ConfigError("run_cv: empty dataset");
    }
    if (folds.empty()) {
        throw ConfigError("run_cv: no folds");
    }
    config.train.validate();
    validate_folds(images, folds);
    if (raw_features && raw_features->size() != images.size()) {
        throw ConfigError("run_cv: raw feature count does not match image count");
    }
    for (const auto& img : images) {
        if (img.week < 1 || img.week > config.weeks) {
            throw DataError("run_cv: image (unit " + std::to_string(img.unit) + ", camera " +
                            std::to_string(img.camera) + ") has week " + std::to_string(img.week) +
                            " outside [1, " + std::to_string(config.weeks) + "]");
        }
    }

    CvReport report;
    report.folds.resize(folds.size());
    std::vector<std::vector<TestRecord>> fold_records(folds.size());

    const int budget = config.threads > 0 ? config.threads : thread_budget();
    parallel_for(folds.size(), budget, [&](std::size_t f) {
        const FoldSpec& spec = folds[f];
        const std::unordered_set<int> test_units(spec.test_units.begin(), spec.test_units.end());

        std::vector<std::size_t> train_idx, test_idx;
        for (std::size_t i = 0; i < images.size(); ++i) {
            if (test_units.contains(images[i].unit)) {
                test_idx.push_back(i);
            } else {
                train_idx.push_back(i);
            }
        }
        if (train_idx.empty() || test_idx.empty()) {
            throw ConfigError("run_cv: fold " + std::to_string(spec.fold_index) +
                              " has an empty train or test split");
        }

        FoldResult result;
        result.spec = spec;

        // Raw train features: shared cache when provided, otherwise extracted
        // locally and released as soon as each map is normalized.
        std::vector<FeatureMap> local_raw;
        if (!raw_features) {
            local_raw.reserve(train_idx.size());
            for (std::size_t i : train_idx) {
                local_raw.push_back(extract_features(images[i].image, config.feature_radius));
            }
        }
        auto train_raw_ref = [&](std::size_t k) -> const FeatureMap& {
            return raw_features ? (*raw_features)[train_idx[k]] : local_raw[k];
        };

        // Normalizer and scaling means from the train split only.
        std::vector<const FeatureMap*> train_raw_ptrs;
        train_raw_ptrs.reserve(train_idx.size());
        for (std::size_t k = 0; k < train_idx.size(); ++k) {
            train_raw_ptrs.push_back(&train_raw_ref(k));
        }
        result.norm = fit_normalizer(std::span<const FeatureMap* const>(train_raw_ptrs));

        std::vector<CoverVector> train_targets;
        train_targets.reserve(train_idx.size());
        for (std::size_t i : train_idx) {
            train_targets.push_back(images[i].target);
        }
        result.train_means = species_means(std::span<const CoverVector>(train_targets));

        std::vector<FeatureMap> train_maps;
        train_maps.reserve(train_idx.size());
        for (std::size_t k = 0; k < train_idx.size(); ++k) {
            train_maps.push_back(apply_normalizer(train_raw_ref(k), result.norm));
            if (!raw_features) {
                local_raw[k] = FeatureMap();
            }
        }
        local_raw.clear();

        std::vector<TrainSample> samples(train_idx.size());
        for (std::size_t k = 0; k < train_idx.size(); ++k) {
            samples[k].features = &train_maps[k];
            samples[k].target = images[train_idx[k]].target;
        }

        TrainConfig fold_train = config.train;
        fold_train.seed = mix_seed(config.train.seed,
                                   {0x666f6c64, static_cast<std::uint64_t>(spec.fold_index)});
        TrainResult trained = train(std::span<const TrainSample>(samples), fold_train);
        result.history = std::move(trained.history);
        result.params = std::move(trained.params);

        // Held-out evaluation plus the analytic constant-predictor baseline.
        const std::size_t s_count = images.front().target.size();
        std::vector<double> train_mean_raw(s_count, 0.0);
        for (const auto& t : train_targets) {
            for (std::size_t p = 0; p < s_count; ++p) {
                train_mean_raw[p] += t[p];
            }
        }
        for (auto& v : train_mean_raw) {
            v /= static_cast<double>(train_targets.size());
        }

        std::vector<CoverVector> preds, targets;
        preds.reserve(test_idx.size());
        targets.reserve(test_idx.size());
        double baseline = 0.0;
        for (std::size_t i : test_idx) {
            const FeatureMap raw = raw_features
                                       ? FeatureMap()
                                       : extract_features(images[i].image, config.feature_radius);
            const FeatureMap& raw_ref = raw_features ? (*raw_features)[i] : raw;
            const FeatureMap normalized = apply_normalizer(raw_ref, result.norm);
            ForwardResult fwd = forward(normalized, result.params);
            TestRecord record;
            record.fold_index = spec.fold_index;
            record.unit = images[i].unit;
            record.camera = images[i].camera;
            record.week = images[i].week;
            record.prediction = fwd.cover;
            record.target = images[i].target;
            fold_records[f].push_back(record);

            double base_err = 0.0;
            for (std::size_t p = 0; p < s_count; ++p) {
                base_err += std::abs(train_mean_raw[p] - images[i].target[p]);
            }
            baseline += base_err / static_cast<double>(s_count);

            preds.push_back(std::move(fwd.cover));
            targets.push_back(images[i].target);
        }
        result.baseline_mae = baseline / static_cast<double>(test_idx.size());
        result.metrics = evaluate(std::span<const CoverVector>(preds),
                                  std::span<const CoverVector>(targets), result.train_means);
        report.folds[f] = std::move(result);
    });

    // Deterministic assembly in fold order.
    report.averaged = average_reports(report.folds);
    for (const auto& fold : report.folds) {
        report.averaged_baseline_mae += fold.baseline_mae / static_cast<double>(folds.size());
    }
    for (auto& records : fold_records) {
        for (auto& r : records) {
            report.test_records.push_back(std::move(r));
        }
    }

    // Week table over the pooled test predictions, each scaled by its own
    // fold's training means.
    report.weeks.resize(static_cast<std::size_t>(config.weeks));
    for (int w = 1; w <= config.weeks; ++w) {
        report.weeks[static_cast<std::size_t>(w - 1)].week = w;
    }
    const std::size_t s_count = images.front().target.size();
    for (const auto& record : report.test_records) {
        WeekRow& row = report.weeks[static_cast<std::size_t>(record.week - 1)];
        const auto& means = report.folds[static_cast<std::size_t>(record.fold_index)].train_means;
        double scaled = 0.0;
        double cover_sum = 0.0;
        for (std::size_t p = 0; p < s_count; ++p) {
            scaled += std::abs(record.prediction[p] - record.target[p]) / means[p];
            cover_sum += record.target[p];
        }
        row.msae += scaled / static_cast<double>(s_count);
        row.mean_cover_sum += cover_sum;
        row.n_images += 1;
    }
    for (auto& row : report.weeks) {
        if (row.n_images > 0) {
            row.populated = true;
            row.msae /= row.n_images;
            row.mean_cover_sum /= row.n_images;
        }
    }

    try {
        const auto [r, r2] =
            cover_error_correlation(report.averaged.species_means, report.averaged.per_species_msae);
        report.cover_msae_r = r;
        report.cover_msae_r2 = r2;
        report.correlation_defined = true;
    } catch (const NumericError&) {
        report.correlation_defined = false;
    }
    return report;
}

void write_cv_report(const CvReport& report, const SpeciesRegistry& registry,
                     const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);

    {
        std::ofstream out(directory / "fold_metrics.csv");
        if (!out) {
            throw IoError("cannot open for writing: " + (directory / "fold_metrics.csv").string());
        }
        out.precision(17);
        out << "fold,test_units,mae,msae,baseline_mae,n_images\n";
        for (const auto& fold : report.folds) {
            out << fold.spec.fold_index << ',' << fold.spec.test_units[0] << '+'
                << fold.spec.test_units[1] << ',' << fold.metrics.mae << ',' << fold.metrics.msae
                << ',' << fold.baseline_mae << ',' << fold.metrics.n_images << '\n';
        }
        out << "average,," << report.averaged.mae << ',' << report.averaged.msae << ','
            << report.averaged_baseline_mae << ',' << report.averaged.n_images << '\n';
    }

    {
        std::ofstream out(directory / "week_msae.csv");
        if (!out) {
            throw IoError("cannot open for writing: " + (directory / "week_msae.csv").string());
        }
        out.precision(17);
        out << "week,populated,msae,mean_cover_sum,n_images\n";
        for (const auto& row : report.weeks) {
            out << row.week << ',' << (row.populated ? "true" : "false") << ',';
            if (row.populated) {
                out << row.msae << ',' << row.mean_cover_sum;
            } else {
                out << ',';
            }
            out << ',' << row.n_images << '\n';
        }
    }

    {
        std::ofstream out(directory / "species_msae.csv");
        if (!out) {
            throw IoError("cannot open for writing: " + (directory / "species_msae.csv").string());
        }
        out.precision(17);
        out << "species,mean_cover,mae,msae,mean_floored\n";
        for (std::size_t p = 0; p < report.averaged.per_species_mae.size(); ++p) {
            out << (p < registry.count() ? registry.name(p) : std::to_string(p)) << ','
                << report.averaged.species_means[p] << ',' << report.averaged.per_species_mae[p]
                << ',' << report.averaged.per_species_msae[p] << ','
                << (report.averaged.mean_floored[p] ? "true" : "false") << '\n';
        }
    }

    nlohmann::json doc;
    doc["averaged"] = {{"mae", report.averaged.mae},
                       {"msae", report.averaged.msae},
                       {"mae_image_first", report.averaged.mae_image_first},
                       {"baseline_mae", report.averaged_baseline_mae},
                       {"n_images", report.averaged.n_images}};
    if (report.correlation_defined) {
        doc["cover_msae_correlation"] = {{"pearson_r", report.cover_msae_r},
                                         {"r_squared", report.cover_msae_r2}};
    } else {
        doc["cover_msae_correlation"] = nullptr;
    }
    doc["species"] = nlohmann::json::array();
    for (std::size_t p = 0; p < report.averaged.per_species_mae.size(); ++p) {
        doc["species"].push_back(
            {{"name", p < registry.count() ? registry.name(p) : std::to_string(p)},
             {"mean_cover", report.averaged.species_means[p]},
             {"mae", report.averaged.per_species_mae[p]},
             {"msae", report.averaged.per_species_msae[p]},
             {"mean_floored", static_cast<bool>(report.averaged.mean_floored[p])}});
    }
    doc["folds"] = nlohmann::json::array();
    for (const auto& fold : report.folds) {
        doc["folds"].push_back({{"fold", fold.spec.fold_index},
                                {"test_units", fold.spec.test_units},
                                {"mae", fold.metrics.mae},
                                {"msae", fold.metrics.msae},
                                {"baseline_mae", fold.baseline_mae},
                                {"kappa_final", fold.params.kappa()},
                                {"scaling_means", fold.train_means}});
    }
    doc["weeks"] = nlohmann::json::array();
    for (const auto& row : report.weeks) {
        nlohmann::json week{{"week", row.week},
                            {"populated", row.populated},
                            {"n_images", row.n_images}};
        if (row.populated) {
            week["msae"] = row.msae;
            week["mean_cover_sum"] = row.mean_cover_sum;
        }
        doc["weeks"].push_back(std::move(week));
    }

    std::ofstream out(directory / "cv_report.json");
    if (!out) {
        throw IoError("cannot open for writing: " + (directory / "cv_report.json").string());
    }
    out << doc.dump(2) << '\n';
}

} // namespace coverhead
