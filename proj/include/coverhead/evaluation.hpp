#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coverhead/features.hpp"
#include "coverhead/head.hpp"
#include "coverhead/image.hpp"
#include "coverhead/metrics.hpp"
#include "coverhead/trainer.hpp"

namespace coverhead {

// Leave-two-units-out fold: all images of exactly two units are held out.
struct FoldSpec {
    int fold_index = 0;
    std::vector<int> test_units;   // exactly 2
    std::vector<int> train_units;  // the rest
};

// Deterministic shuffled pairing of the unit ids; 2k units give k folds that
// partition the unit set. Throws ConfigError on odd or duplicate ids.
std::vector<FoldSpec> make_folds(std::vector<int> unit_ids, std::uint64_t seed);

// One dataset image with its provenance tags and cover target.
struct DatasetImage {
    int unit = 0;
    int camera = 0;
    int week = 0;
    Image image;
    CoverVector target;  // percent
};

struct CvRunConfig {
    TrainConfig train;
    int feature_radius = kDefaultFeatureRadius;
    int weeks = 18;   // week-table size
    int threads = 0;  // 0 = thread_budget()
};

struct WeekRow {
    int week = 0;
    bool populated = false;  // empty buckets are reported absent, never zero
    double msae = 0.0;
    double mean_cover_sum = 0.0;  // mean over images of sum_p target cover
    int n_images = 0;
};

// Week-bucketed MSAE plus the target cover-sum trace. Bucket MSAE is the
// mean over the bucket's images of the species-mean scaled absolute error.
std::vector<WeekRow> weekwise_error(std::span<const CoverVector> predictions,
                                    std::span<const CoverVector> targets,
                                    std::span<const int> weeks,
                                    const std::vector<double>& scaling_means,
                                    int max_week = 18);

// Pearson correlation between species mean cover and species MSAE, plus its
// square. Throws ConfigError for fewer than 3 species and NumericError when
// either input has zero variance.
std::pair<double, double> cover_error_correlation(const std::vector<double>& species_means,
                                                  const std::vector<double>& species_msae);

struct FoldResult {
    FoldSpec spec;
    MetricsReport metrics;
    double baseline_mae = 0.0;        // train-mean constant predictor on the test split
    std::vector<double> train_means;  // scaling means, train split only
    NormStats norm;                   // feature stats, train split only
    TrainHistory history;
    HeadParams params;
};

// One pooled test prediction (every image is tested in exactly one fold).
struct TestRecord {
    int fold_index = 0;
    int unit = 0;
    int camera = 0;
    int week = 0;
    CoverVector prediction;
    CoverVector target;
};

struct CvReport {
    std::vector<FoldResult> folds;
    MetricsReport averaged;           // arithmetic mean over folds
    double averaged_baseline_mae = 0.0;
    std::vector<WeekRow> weeks;
    bool correlation_defined = false;
    double cover_msae_r = 0.0;
    double cover_msae_r2 = 0.0;
    std::vector<TestRecord> test_records;
};

// Full cross-validation: per fold, feature normalizer and species means come
// from the train split only, the head is trained with the §-style protocol in
// `config.train`, and the held-out units are evaluated. Folds run under the
// thread budget; the report is identical for any budget.
//
// `raw_features`, when given, must hold the unnormalized feature map of each
// image in order; otherwise features are extracted per fold.
CvReport run_cv(std::span<const DatasetImage> images, const std::vector<FoldSpec>& folds,
                const CvRunConfig& config,
                const std::vector<FeatureMap>* raw_features = nullptr);

// Report emission: cv_report.json plus fold_metrics.csv, week_msae.csv and
// species_msae.csv next to it.
void write_cv_report(const CvReport& report, const SpeciesRegistry& registry,
                     const std::filesystem::path& directory);

} // namespace coverhead
