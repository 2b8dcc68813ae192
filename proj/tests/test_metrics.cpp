#include <doctest.h>

#include "coverhead/metrics.hpp"

using namespace coverhead;

namespace {

std::vector<CoverVector> rows(std::initializer_list<std::vector<double>> values) {
    std::vector<CoverVector> out;
    for (const auto& v : values) {
        out.emplace_back(v);
    }
    return out;
}

} // namespace

TEST_CASE("species means: identical annotations, averaging, and the floor") {
    const auto same = rows({{10.0, 0.0, 3.0}, {10.0, 0.0, 3.0}});
    std::vector<bool> floored;
    const auto means = species_means(std::span<const CoverVector>(same), &floored);
    CHECK(means[0] == 10.0);
    CHECK(means[2] == 3.0);
    // absent species: floored and flagged
    CHECK(means[1] == kSpeciesMeanFloor);
    CHECK(floored == std::vector<bool>{false, true, false});

    const auto pair = rows({{10.0, 0.0}, {20.0, 0.0}});
    CHECK(species_means(std::span<const CoverVector>(pair))[0] == 15.0);

    CHECK_THROWS_AS(species_means(std::span<const CoverVector>{}), ConfigError);
}

TEST_CASE("evaluate: perfect predictions give zero error") {
    const auto targets = rows({{10.0, 5.0}, {20.0, 1.0}});
    const auto means = species_means(std::span<const CoverVector>(targets));
    const MetricsReport report = evaluate(std::span<const CoverVector>(targets),
                                          std::span<const CoverVector>(targets), means);
    CHECK(report.mae == 0.0);
    CHECK(report.msae == 0.0);
    CHECK(report.mae_image_first == 0.0);
}

TEST_CASE("evaluate: per-species MAE 5 with mean 10 gives MSAE 0.5") {
    const auto preds = rows({{15.0}});
    const auto targets = rows({{10.0}});
    const MetricsReport report = evaluate(std::span<const CoverVector>(preds),
                                          std::span<const CoverVector>(targets), {10.0});
    CHECK(report.per_species_mae[0] == 5.0);
    CHECK(report.per_species_msae[0] == 0.5);
    CHECK(report.mae == 5.0);
    CHECK(report.msae == 0.5);
}

TEST_CASE("metric identities: msae = mae / mean, aggregates are species means") {
    const auto preds = rows({{12.0, 30.0, 2.0}, {8.0, 55.0, 0.0}, {30.0, 41.0, 1.0}});
    const auto targets = rows({{10.0, 40.0, 1.0}, {10.0, 40.0, 0.5}, {25.0, 50.0, 0.0}});
    const auto means = species_means(std::span<const CoverVector>(targets));
    const MetricsReport report = evaluate(std::span<const CoverVector>(preds),
                                          std::span<const CoverVector>(targets), means);
    double mae_sum = 0.0, msae_sum = 0.0;
    for (std::size_t p = 0; p < 3; ++p) {
        CHECK(std::abs(report.per_species_msae[p] - report.per_species_mae[p] / means[p]) <= 1e-12);
        mae_sum += report.per_species_mae[p];
        msae_sum += report.per_species_msae[p];
    }
    CHECK(std::abs(report.mae - mae_sum / 3.0) <= 1e-12);
    CHECK(std::abs(report.msae - msae_sum / 3.0) <= 1e-12);
    // with complete matrices both averaging orders agree
    CHECK(report.mae_image_first == doctest::Approx(report.mae).epsilon(1e-12));
}

TEST_CASE("MAE and MSAE are symmetric in predictions and targets") {
    const auto a = rows({{12.0, 30.0}, {8.0, 55.0}});
    const auto b = rows({{10.0, 40.0}, {11.0, 41.0}});
    const std::vector<double> means{10.0, 40.0};
    const MetricsReport ab =
        evaluate(std::span<const CoverVector>(a), std::span<const CoverVector>(b), means);
    const MetricsReport ba =
        evaluate(std::span<const CoverVector>(b), std::span<const CoverVector>(a), means);
    CHECK(ab.mae == ba.mae);
    CHECK(ab.msae == ba.msae);
}

TEST_CASE("scaling a species and its mean by the same factor keeps its MSAE") {
    const auto preds = rows({{12.0, 30.0}, {8.0, 55.0}});
    const auto targets = rows({{10.0, 40.0}, {10.0, 40.0}});
    const std::vector<double> means{10.0, 40.0};
    const MetricsReport base = evaluate(std::span<const CoverVector>(preds),
                                        std::span<const CoverVector>(targets), means);

    const double c = 3.7;
    auto preds2 = preds;
    auto targets2 = targets;
    for (auto& row : preds2) {
        row[0] *= c;
    }
    for (auto& row : targets2) {
        row[0] *= c;
    }
    const std::vector<double> means2{means[0] * c, means[1]};
    const MetricsReport scaled = evaluate(std::span<const CoverVector>(preds2),
                                          std::span<const CoverVector>(targets2), means2);
    CHECK(scaled.per_species_msae[0] == doctest::Approx(base.per_species_msae[0]).epsilon(1e-12));
    CHECK(scaled.per_species_msae[1] == base.per_species_msae[1]);
}

TEST_CASE("duplicating every (pred, target) pair leaves the report unchanged") {
    const auto preds = rows({{12.0, 30.0}, {8.0, 55.0}});
    const auto targets = rows({{10.0, 40.0}, {11.0, 42.0}});
    const std::vector<double> means{10.0, 40.0};
    auto preds2 = preds;
    auto targets2 = targets;
    preds2.insert(preds2.end(), preds.begin(), preds.end());
    targets2.insert(targets2.end(), targets.begin(), targets.end());

    const MetricsReport once =
        evaluate(std::span<const CoverVector>(preds), std::span<const CoverVector>(targets), means);
    const MetricsReport twice = evaluate(std::span<const CoverVector>(preds2),
                                         std::span<const CoverVector>(targets2), means);
    CHECK(once.mae == doctest::Approx(twice.mae).epsilon(1e-12));
    CHECK(once.msae == doctest::Approx(twice.msae).epsilon(1e-12));
}

TEST_CASE("species_means accepts annotations directly") {
    std::vector<Annotation> annotations(2);
    annotations[0].cover = CoverVector(std::vector<double>{10.0, 0.0});
    annotations[1].cover = CoverVector(std::vector<double>{20.0, 0.0});
    std::vector<bool> floored;
    const auto means = species_means(std::span<const Annotation>(annotations), &floored);
    CHECK(means[0] == 15.0);
    CHECK(means[1] == kSpeciesMeanFloor);
    CHECK(floored[1]);
}

TEST_CASE("csv row carries label, mae, msae, and image count") {
    const auto preds = rows({{15.0}});
    const auto targets = rows({{10.0}});
    const MetricsReport report = evaluate(std::span<const CoverVector>(preds),
                                          std::span<const CoverVector>(targets), {10.0});
    CHECK(metrics_csv_row(report, "fold_3") == "fold_3,5,0.5,1");
}

TEST_CASE("evaluate rejects mismatched inputs") {
    const auto preds = rows({{1.0}});
    const auto targets = rows({{1.0}, {2.0}});
    CHECK_THROWS_AS(evaluate(std::span<const CoverVector>(preds),
                             std::span<const CoverVector>(targets), {1.0}),
                    ConfigError);
}
