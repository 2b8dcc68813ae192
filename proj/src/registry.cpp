#include "coverhead/registry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace coverhead {

SpeciesRegistry::SpeciesRegistry()
    : names_{"Ach_mil", "Cen_jac", "Lot_cor", "Med_lup", "Pla_lan",
             "Sco_aut", "Tri_pra", "Grasses", "Dead_litter"} {}

SpeciesRegistry::SpeciesRegistry(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) {
        throw ConfigError("species registry: empty name list");
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& n : names_) {
        if (n.empty()) {
            throw ConfigError("species registry: empty species name");
        }
        if (!seen.insert(n).second) {
            throw ConfigError("species registry: duplicate species name '" + n + "'");
        }
    }
}

std::optional<std::size_t> SpeciesRegistry::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == name) {
            return i;
        }
    }
    return std::nullopt;
}

CoverValidation validate_cover(const CoverVector& cover) {
    CoverValidation result;
    for (std::size_t i = 0; i < cover.size(); ++i) {
        const double v = cover[i];
        if (!(v >= 0.0 && v <= 100.0)) {
            result.violations.push_back({i, v});
        }
    }
    return result;
}

namespace schmidt {

double quantize(double percent) {
    if (!(percent >= 0.0 && percent <= 100.0)) {
        throw DomainError("schmidt quantize: input " + std::to_string(percent) +
                          " outside [0, 100]");
    }
    double best = kBins[0];
    double best_dist = std::abs(percent - kBins[0]);
    for (std::size_t i = 1; i < kBins.size(); ++i) {
        const double d = std::abs(percent - kBins[i]);
        if (d < best_dist) {        // strict: ties keep the lower bin
            best = kBins[i];
            best_dist = d;
        }
    }
    return best;
}

} // namespace schmidt

void validate_annotation(const Annotation& a, std::size_t species, int max_week) {
    if (a.week < 1 || a.week > max_week) {
        throw DataError("annotation (unit " + std::to_string(a.unit) + ", camera " +
                        std::to_string(a.camera) + "): week " + std::to_string(a.week) +
                        " outside [1, " + std::to_string(max_week) + "]");
    }
    if (a.cover.size() != species) {
        throw DataError("annotation: cover has " + std::to_string(a.cover.size()) +
                        " entries, expected " + std::to_string(species));
    }
    for (std::size_t i = 0; i < a.cover.size(); ++i) {
        const double v = a.cover[i];
        if (!(v >= 0.0 && v <= 100.0)) {
            throw DataError("annotation: cover[" + std::to_string(i) + "] = " +
                            std::to_string(v) + " outside [0, 100]");
        }
        const bool is_bin = std::any_of(schmidt::kBins.begin(), schmidt::kBins.end(),
                                        [v](double b) { return b == v; });
        if (!is_bin) {
            throw DataError("annotation: cover[" + std::to_string(i) + "] = " +
                            std::to_string(v) + " is not a Schmidt bin");
        }
    }
}

namespace {

std::string format_number(double v) {
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        fields.emplace_back();
    }
    return fields;
}

double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw ParseError("annotations csv: bad number '" + s + "' in " + context);
    }
}

int parse_int(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw ParseError("annotations csv: bad integer '" + s + "' in " + context);
    }
}

} // namespace

void write_annotations_csv(const std::filesystem::path& path,
                           const SpeciesRegistry& registry,
                           const std::vector<Annotation>& annotations) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << "unit,camera,week";
    for (const auto& name : registry.names()) {
        out << ',' << name;
    }
    out << '\n';
    for (const auto& a : annotations) {
        out << a.unit << ',' << a.camera << ',' << a.week;
        for (std::size_t i = 0; i < a.cover.size(); ++i) {
            out << ',' << format_number(a.cover[i]);
        }
        out << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

AnnotationFile read_annotations_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("annotations csv: empty file " + path.string());
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    auto header = split_csv_line(line);
    if (header.size() < 4 || header[0] != "unit" || header[1] != "camera" || header[2] != "week") {
        throw ParseError("annotations csv: header must start with unit,camera,week");
    }
    AnnotationFile result;
    result.registry =
        SpeciesRegistry(std::vector<std::string>(header.begin() + 3, header.end()));

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        auto fields = split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ParseError("annotations csv: line " + std::to_string(line_no) + " has " +
                             std::to_string(fields.size()) + " fields, expected " +
                             std::to_string(header.size()));
        }
        const std::string ctx = "line " + std::to_string(line_no);
        Annotation a;
        a.unit = parse_int(fields[0], ctx);
        a.camera = parse_int(fields[1], ctx);
        a.week = parse_int(fields[2], ctx);
        a.cover.values.reserve(fields.size() - 3);
        for (std::size_t i = 3; i < fields.size(); ++i) {
            a.cover.values.push_back(parse_double(fields[i], ctx));
        }
        result.annotations.push_back(std::move(a));
    }
    return result;
}

} // namespace coverhead
