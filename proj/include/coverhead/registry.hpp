#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coverhead/errors.hpp"

namespace coverhead {

// Ordered list of target classes: 8 plant species plus dead biomass.
// Background and irrelevant content are score channels of the head, not
// registry entries.
class SpeciesRegistry {
public:
    // Default registry, in dataset order.
    SpeciesRegistry();

    // Custom registry; names must be unique and non-empty.
    explicit SpeciesRegistry(std::vector<std::string> names);

    std::size_t count() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    std::optional<std::size_t> index_of(std::string_view name) const;

    bool operator==(const SpeciesRegistry&) const = default;

    static constexpr std::size_t kDefaultCount = 9;

private:
    std::vector<std::string> names_;
};

// One cover percentage per species. Entries live in [0,100]; the sum over
// species is deliberately unbounded because occlusion is ignored when covers
// are estimated.
struct CoverVector {
    std::vector<double> values;

    CoverVector() = default;
    explicit CoverVector(std::size_t species, double fill = 0.0) : values(species, fill) {}
    explicit CoverVector(std::vector<double> v) : values(std::move(v)) {}

    std::size_t size() const { return values.size(); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool operator==(const CoverVector&) const = default;
};

struct CoverViolation {
    std::size_t index;
    double value;
};

struct CoverValidation {
    std::vector<CoverViolation> violations;
    bool ok() const { return violations.empty(); }
};

// Accepts iff every entry is in [0,100]. Sums above 100 are valid.
CoverValidation validate_cover(const CoverVector& cover);

namespace schmidt {

// The 19-value quantization scale used for human cover estimates.
inline constexpr std::array<double, 19> kBins{
    0.0, 0.5, 1.0, 3.0, 5.0, 8.0, 10.0, 15.0, 20.0, 25.0,
    30.0, 40.0, 50.0, 60.0, 70.0, 75.0, 80.0, 90.0, 100.0};

// Nearest bin; exact ties resolve to the lower bin. Input outside [0,100]
// throws DomainError.
double quantize(double percent);

} // namespace schmidt

// Human-style cover estimate for one (unit, camera, week) image.
struct Annotation {
    int unit = 0;
    int camera = 0;
    int week = 0;          // 1-based
    CoverVector cover;
};

// Throws DataError unless week is in [1, max_week] and every cover entry is a
// Schmidt bin in [0,100].
void validate_annotation(const Annotation& a, std::size_t species, int max_week = 18);

// Annotation CSV: header `unit,camera,week,<species...>`, one row per image.
void write_annotations_csv(const std::filesystem::path& path,
                           const SpeciesRegistry& registry,
                           const std::vector<Annotation>& annotations);

struct AnnotationFile {
    SpeciesRegistry registry;
    std::vector<Annotation> annotations;
};

AnnotationFile read_annotations_csv(const std::filesystem::path& path);

} // namespace coverhead
