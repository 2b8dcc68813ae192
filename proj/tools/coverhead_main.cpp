// coverhead: desk-scale plant-cover experiments on synthetic EcoUnit imagery.
//
// Subcommands:
//   simulate       generate images + annotations + series JSON
//   train          fit the cover head on a dataset directory
//   eval           evaluate params / predictions, or run cross-validation
//   export-segmap  render one image's segmentation map
//
// Every artifact directory receives a manifest.json as its final write; a
// directory without a manifest is incomplete and should be discarded.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#include "coverhead/evaluation.hpp"
#include "coverhead/manifest.hpp"
#include "coverhead/sim.hpp"
#include "coverhead/threading.hpp"

namespace fs = std::filesystem;
using namespace coverhead;

namespace {

std::string image_name(int unit, int camera, int week) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "unit_%02d_cam_%d_week_%02d.ppm", unit, camera, week);
    return buf;
}

std::string series_name(int unit) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "unit_%02d.json", unit);
    return buf;
}

// FNV-1a over the image payload and extractor settings; keys the FMAP cache.
std::uint64_t feature_cache_key(const Image& image, int radius) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    mix(0x464d4150u);  // extractor version tag
    mix(static_cast<std::uint64_t>(image.width));
    mix(static_cast<std::uint64_t>(image.height));
    mix(static_cast<std::uint64_t>(radius));
    for (std::uint8_t b : image.rgb) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

FeatureMap cached_extract(const Image& image, int radius, const fs::path& cache_dir) {
    char name[32];
    std::snprintf(name, sizeof(name), "%016llx.fmap",
                  static_cast<unsigned long long>(feature_cache_key(image, radius)));
    const fs::path path = cache_dir / name;
    if (fs::exists(path)) {
        FeatureMap map = read_fmap(path);
        if (map.width() == image.width && map.height() == image.height &&
            map.channels() == kFeatureChannels) {
            return map;
        }
    }
    FeatureMap map = extract_features(image, radius);
    fs::create_directories(cache_dir);
    write_fmap(map, path);
    return map;
}

struct LoadedDataset {
    SpeciesRegistry registry;
    std::vector<DatasetImage> images;
};

// Loads images through the annotations CSV and cross-checks both directions:
// every annotated (unit, camera, week) needs its image file, and every image
// file in images/ needs an annotation row.
LoadedDataset load_dataset(const fs::path& dir) {
    const fs::path csv = dir / "annotations.csv";
    if (!fs::exists(csv)) {
        throw DataError("dataset: missing " + csv.string());
    }
    AnnotationFile annotations = read_annotations_csv(csv);

    LoadedDataset dataset;
    dataset.registry = annotations.registry;

    std::set<std::string> annotated;
    std::string missing;
    int missing_count = 0;
    for (const auto& a : annotations.annotations) {
        const std::string name = image_name(a.unit, a.camera, a.week);
        annotated.insert(name);
        const fs::path img_path = dir / "images" / name;
        if (!fs::exists(img_path)) {
            ++missing_count;
            missing += "\n  (unit " + std::to_string(a.unit) + ", camera " +
                       std::to_string(a.camera) + ", week " + std::to_string(a.week) + ")";
            continue;
        }
        DatasetImage img;
        img.unit = a.unit;
        img.camera = a.camera;
        img.week = a.week;
        img.image = read_ppm(img_path);
        img.target = a.cover;
        dataset.images.push_back(std::move(img));
    }
    if (missing_count > 0) {
        throw DataError("dataset: " + std::to_string(missing_count) +
                        " annotated images missing under " + (dir / "images").string() + ":" +
                        missing);
    }

    if (fs::exists(dir / "images")) {
        std::string orphaned;
        int orphan_count = 0;
        for (const auto& entry : fs::directory_iterator(dir / "images")) {
            if (entry.path().extension() == ".ppm" &&
                !annotated.contains(entry.path().filename().string())) {
                ++orphan_count;
                orphaned += "\n  " + entry.path().filename().string();
            }
        }
        if (orphan_count > 0) {
            throw DataError("dataset: " + std::to_string(orphan_count) +
                            " images lack annotation rows:" + orphaned);
        }
    }
    if (dataset.images.empty()) {
        throw DataError("dataset: no images in " + dir.string());
    }
    return dataset;
}

std::vector<FeatureMap> load_features(const std::vector<DatasetImage>& images, int radius,
                                      const fs::path& cache_dir) {
    std::vector<FeatureMap> maps(images.size());
    parallel_for(images.size(), thread_budget(),
                 [&](std::size_t i) { maps[i] = cached_extract(images[i].image, radius, cache_dir); });
    return maps;
}

void write_norm_stats(const NormStats& stats, const fs::path& path) {
    nlohmann::json doc;
    doc["mean"] = stats.mean;
    doc["sd"] = stats.sd;
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot open for writing: " + path.string());
    }
    out << doc.dump(2) << '\n';
}

NormStats read_norm_stats(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open for reading: " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
        NormStats stats;
        stats.mean = doc.at("mean").get<std::vector<double>>();
        stats.sd = doc.at("sd").get<std::vector<double>>();
        if (stats.mean.size() != stats.sd.size()) {
            throw ParseError("norm stats: mean/sd length mismatch in " + path.string());
        }
        return stats;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("norm stats: " + std::string(e.what()) + " in " + path.string());
    }
}

void fresh_out_dir(const fs::path& out) {
    fs::create_directories(out);
    // A stale manifest would mark a half-written directory as valid.
    fs::remove(out / "manifest.json");
}

int cmd_simulate(const std::string& config_path, std::uint64_t seed, const fs::path& out,
                 std::optional<int> units, std::optional<int> weeks,
                 std::optional<std::pair<int, int>> image_size) {
    SimConfig config = config_path.empty() ? SimConfig() : SimConfig::from_file(config_path);
    if (units) {
        config.units = *units;
    }
    if (weeks) {
        config.weeks = *weeks;
    }
    if (image_size) {
        config.width = image_size->first;
        config.height = image_size->second;
    }
    config.validate();

    RunManifest manifest;
    manifest.command = "simulate";
    manifest.config_path = config_path;
    manifest.seed = seed;
    manifest.stamp_start();

    fresh_out_dir(out);
    fs::create_directories(out / "images");
    fs::create_directories(out / "series");

    const std::vector<EcoUnitSeries> dataset = generate_dataset(config, seed);

    std::vector<std::vector<Annotation>> unit_annotations(dataset.size());
    parallel_for(dataset.size(), thread_budget(), [&](std::size_t u) {
        const EcoUnitSeries& series = dataset[u];
        for (std::size_t camera = 0; camera < series.cameras.size(); ++camera) {
            for (const Scene& scene : series.cameras[camera]) {
                const Image image = render(scene);
                write_ppm(image, out / "images" /
                                     image_name(series.unit_id, static_cast<int>(camera), scene.week));
            }
        }
        write_series_json(series, config, out / "series" / series_name(series.unit_id));
        unit_annotations[u] =
            annotate_series(series, config.annotation_noise_sd, seed, config.registry.count());
    });

    std::vector<Annotation> annotations;
    for (auto& batch : unit_annotations) {
        annotations.insert(annotations.end(), batch.begin(), batch.end());
    }
    write_annotations_csv(out / "annotations.csv", config.registry, annotations);

    manifest.outputs = {"images/", "series/", "annotations.csv"};
    manifest.stamp_finish();
    write_manifest(manifest, out / "manifest.json");
    std::cout << "simulate: " << annotations.size() << " images -> " << out.string() << '\n';
    return 0;
}

int cmd_train(const fs::path& dataset_dir, const std::string& config_path, const fs::path& out,
              std::optional<std::uint64_t> seed, std::optional<int> epochs) {
    TrainConfig config =
        config_path.empty() ? TrainConfig() : TrainConfig::from_file(config_path);
    if (seed) {
        config.seed = *seed;
    }
    if (epochs) {
        config.epochs = *epochs;
        std::erase_if(config.decay_epochs, [&](int e) { return e > config.epochs; });
    }
    config.validate();

    RunManifest manifest;
    manifest.command = "train";
    manifest.config_path = config_path;
    manifest.seed = config.seed;
    manifest.inputs = {dataset_dir.string()};
    manifest.stamp_start();

    const LoadedDataset dataset = load_dataset(dataset_dir);
    const std::vector<FeatureMap> raw =
        load_features(dataset.images, kDefaultFeatureRadius, dataset_dir / "fmap_cache");

    const NormStats stats = fit_normalizer(std::span<const FeatureMap>(raw));
    std::vector<FeatureMap> normalized(raw.size());
    parallel_for(raw.size(), thread_budget(),
                 [&](std::size_t i) { normalized[i] = apply_normalizer(raw[i], stats); });

    std::vector<TrainSample> samples(normalized.size());
    for (std::size_t i = 0; i < normalized.size(); ++i) {
        samples[i].features = &normalized[i];
        samples[i].target = dataset.images[i].target;
    }

    const TrainResult result = train(std::span<const TrainSample>(samples), config);

    fresh_out_dir(out);
    write_params_json(result.params, dataset.registry, out / "params.json");
    write_norm_stats(stats, out / "norm_stats.json");
    result.history.write_csv(out / "history.csv");

    manifest.outputs = {"params.json", "norm_stats.json", "history.csv"};
    manifest.stamp_finish();
    write_manifest(manifest, out / "manifest.json");
    std::cout << "train: " << samples.size() << " samples, " << config.epochs
              << " epochs, final loss " << result.history.epochs.back().mean_loss_pp << "pp -> "
              << out.string() << '\n';
    return 0;
}

int cmd_eval(const fs::path& dataset_dir, const fs::path& out, bool cv_mode,
             const std::string& params_path, const std::string& norm_path,
             const std::string& predictions_path, const std::string& train_config_path,
             std::uint64_t seed, std::optional<int> epochs, bool export_segmaps) {
    RunManifest manifest;
    manifest.command = "eval";
    manifest.seed = seed;
    manifest.inputs = {dataset_dir.string()};
    manifest.stamp_start();

    const LoadedDataset dataset = load_dataset(dataset_dir);

    fresh_out_dir(out);

    if (cv_mode) {
        CvRunConfig config;
        config.train = train_config_path.empty() ? TrainConfig()
                                                 : TrainConfig::from_file(train_config_path);
        manifest.config_path = train_config_path;
        config.train.seed = seed;
        if (epochs) {
            config.train.epochs = *epochs;
            std::erase_if(config.train.decay_epochs,
                          [&](int e) { return e > config.train.epochs; });
        }
        config.weeks = 0;
        std::set<int> units;
        for (const auto& img : dataset.images) {
            units.insert(img.unit);
            config.weeks = std::max(config.weeks, img.week);
        }
        const auto folds =
            make_folds(std::vector<int>(units.begin(), units.end()), seed);

        const std::vector<FeatureMap> raw =
            load_features(dataset.images, config.feature_radius, dataset_dir / "fmap_cache");
        const CvReport report =
            run_cv(std::span<const DatasetImage>(dataset.images), folds, config, &raw);
        write_cv_report(report, dataset.registry, out);

        manifest.outputs = {"cv_report.json", "fold_metrics.csv", "week_msae.csv",
                            "species_msae.csv"};
        std::cout << "eval cv: " << folds.size() << " folds, averaged MAE " << report.averaged.mae
                  << "pp, MSAE " << report.averaged.msae << " -> " << out.string() << '\n';
    } else if (!predictions_path.empty()) {
        const AnnotationFile preds = read_annotations_csv(predictions_path);
        manifest.inputs.push_back(predictions_path);
        if (!(preds.registry == dataset.registry)) {
            throw DataError("eval: predictions registry does not match dataset registry");
        }
        std::vector<CoverVector> predictions, targets;
        for (const auto& img : dataset.images) {
            const auto it = std::find_if(
                preds.annotations.begin(), preds.annotations.end(), [&](const Annotation& a) {
                    return a.unit == img.unit && a.camera == img.camera && a.week == img.week;
                });
            if (it == preds.annotations.end()) {
                throw DataError("eval: no prediction for (unit " + std::to_string(img.unit) +
                                ", camera " + std::to_string(img.camera) + ", week " +
                                std::to_string(img.week) + ")");
            }
            predictions.push_back(it->cover);
            targets.push_back(img.target);
        }
        const auto means = species_means(std::span<const CoverVector>(targets));
        const MetricsReport report = evaluate(std::span<const CoverVector>(predictions),
                                              std::span<const CoverVector>(targets), means);
        write_metrics_json(report, dataset.registry, out / "metrics.json");
        manifest.outputs = {"metrics.json"};
        std::cout << "eval: MAE " << report.mae << "pp, MSAE " << report.msae << " -> "
                  << out.string() << '\n';
    } else {
        if (params_path.empty()) {
            throw ConfigError("eval: need --cv, --params, or --predictions");
        }
        const ParamsFile params = read_params_json(params_path);
        manifest.inputs.push_back(params_path);
        if (!(params.registry == dataset.registry)) {
            std::string lhs, rhs;
            for (const auto& n : params.registry.names()) {
                lhs += n + " ";
            }
            for (const auto& n : dataset.registry.names()) {
                rhs += n + " ";
            }
            throw DataError("eval: params registry [" + lhs + "] does not match dataset registry [" +
                            rhs + "]");
        }
        const fs::path norm_file =
            norm_path.empty() ? fs::path(params_path).parent_path() / "norm_stats.json"
                              : fs::path(norm_path);
        const NormStats stats = read_norm_stats(norm_file);
        manifest.inputs.push_back(norm_file.string());

        const std::vector<FeatureMap> raw =
            load_features(dataset.images, kDefaultFeatureRadius, dataset_dir / "fmap_cache");

        if (export_segmaps) {
            fs::create_directories(out / "segmaps");
        }
        std::vector<CoverVector> predictions(dataset.images.size());
        std::vector<CoverVector> targets(dataset.images.size());
        parallel_for(dataset.images.size(), thread_budget(), [&](std::size_t i) {
            const FeatureMap normalized = apply_normalizer(raw[i], stats);
            ForwardResult fwd = forward(normalized, params.params);
            if (export_segmaps) {
                const auto labels = segmentation_map(fwd.maps);
                write_segmap_ppm(labels, fwd.maps.width, fwd.maps.height, params.params.species,
                                 out / "segmaps" /
                                     image_name(dataset.images[i].unit, dataset.images[i].camera,
                                                dataset.images[i].week));
            }
            predictions[i] = std::move(fwd.cover);
            targets[i] = dataset.images[i].target;
        });
        const auto means = species_means(std::span<const CoverVector>(targets));
        const MetricsReport report = evaluate(std::span<const CoverVector>(predictions),
                                              std::span<const CoverVector>(targets), means);
        write_metrics_json(report, dataset.registry, out / "metrics.json");
        manifest.outputs = {"metrics.json"};
        if (export_segmaps) {
            manifest.outputs.push_back("segmaps/");
        }
        std::cout << "eval: MAE " << report.mae << "pp, MSAE " << report.msae << " -> "
                  << out.string() << '\n';
    }

    manifest.stamp_finish();
    write_manifest(manifest, out / "manifest.json");
    return 0;
}

int cmd_export_segmap(const fs::path& image_path, const fs::path& params_path,
                      const std::string& norm_path, const fs::path& out_file) {
    const ParamsFile params = read_params_json(params_path);
    const fs::path norm_file = norm_path.empty()
                                   ? params_path.parent_path() / "norm_stats.json"
                                   : fs::path(norm_path);
    const NormStats stats = read_norm_stats(norm_file);
    const Image image = read_ppm(image_path);
    const FeatureMap normalized =
        apply_normalizer(extract_features(image, kDefaultFeatureRadius), stats);
    const ForwardResult fwd = forward(normalized, params.params);
    const auto labels = segmentation_map(fwd.maps);
    write_segmap_ppm(labels, fwd.maps.width, fwd.maps.height, params.params.species, out_file);
    std::cout << "export-segmap: " << out_file.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coverhead: plant-cover estimation experiments on synthetic EcoUnit data"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
    std::string sim_config;
    std::uint64_t sim_seed = 42;
    std::string sim_out;
    std::optional<int> sim_units, sim_weeks;
    std::string sim_size;
    sim->add_option("--config", sim_config, "sim config file (key=value)");
    sim->add_option("--seed", sim_seed, "master seed");
    sim->add_option("--out", sim_out, "output directory")->required();
    int sim_units_val = 0, sim_weeks_val = 0;
    sim->add_option("--units", sim_units_val, "number of EcoUnits");
    sim->add_option("--weeks", sim_weeks_val, "number of weeks");
    sim->add_option("--image-size", sim_size, "image size WxH (e.g. 192x96)");

    // train
    auto* train_cmd = app.add_subcommand("train", "train the cover head on a dataset");
    std::string train_dataset, train_config, train_out;
    std::uint64_t train_seed = 0;
    bool train_seed_set = false;
    int train_epochs_val = 0;
    train_cmd->add_option("--dataset", train_dataset, "dataset directory")->required();
    train_cmd->add_option("--config", train_config, "train config file (key=value)");
    train_cmd->add_option("--out", train_out, "output directory")->required();
    train_cmd->add_option("--seed", train_seed, "seed override")
        ->each([&](const std::string&) { train_seed_set = true; });
    train_cmd->add_option("--epochs", train_epochs_val, "epoch override");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate params, predictions, or run CV");
    std::string eval_dataset, eval_out, eval_params, eval_norm, eval_preds, eval_config;
    std::uint64_t eval_seed = 42;
    bool eval_cv = false, eval_segmaps = false;
    int eval_epochs_val = 0;
    eval_cmd->add_option("--dataset", eval_dataset, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_out, "output directory")->required();
    eval_cmd->add_flag("--cv", eval_cv, "12-fold leave-two-units-out cross-validation");
    eval_cmd->add_option("--params", eval_params, "params.json to evaluate");
    eval_cmd->add_option("--norm", eval_norm, "norm_stats.json (default: next to params)");
    eval_cmd->add_option("--predictions", eval_preds, "predictions CSV (annotation format)");
    eval_cmd->add_option("--config", eval_config, "train config for CV mode");
    eval_cmd->add_option("--seed", eval_seed, "seed (folds + training)");
    eval_cmd->add_option("--epochs", eval_epochs_val, "epoch override for CV mode");
    eval_cmd->add_flag("--export-segmaps", eval_segmaps, "write segmentation maps (params mode)");

    // export-segmap
    auto* seg = app.add_subcommand("export-segmap", "segmentation map for one image");
    std::string seg_image, seg_params, seg_norm, seg_out;
    seg->add_option("--image", seg_image, "input PPM")->required();
    seg->add_option("--params", seg_params, "params.json")->required();
    seg->add_option("--norm", seg_norm, "norm_stats.json (default: next to params)");
    seg->add_option("--out", seg_out, "output PPM")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) {
            std::optional<std::pair<int, int>> size;
            if (!sim_size.empty()) {
                const auto x = sim_size.find('x');
                if (x == std::string::npos) {
                    throw ConfigError("--image-size must look like 192x96");
                }
                size = {std::stoi(sim_size.substr(0, x)), std::stoi(sim_size.substr(x + 1))};
            }
            if (sim->count("--units")) {
                sim_units = sim_units_val;
            }
            if (sim->count("--weeks")) {
                sim_weeks = sim_weeks_val;
            }
            return cmd_simulate(sim_config, sim_seed, sim_out, sim_units, sim_weeks, size);
        }
        if (train_cmd->parsed()) {
            std::optional<std::uint64_t> seed;
            if (train_seed_set) {
                seed = train_seed;
            }
            std::optional<int> epochs;
            if (train_cmd->count("--epochs")) {
                epochs = train_epochs_val;
            }
            return cmd_train(train_dataset, train_config, train_out, seed, epochs);
        }
        if (eval_cmd->parsed()) {
            std::optional<int> epochs;
            if (eval_cmd->count("--epochs")) {
                epochs = eval_epochs_val;
            }
            return cmd_eval(eval_dataset, eval_out, eval_cv, eval_params, eval_norm, eval_preds,
                            eval_config, eval_seed, epochs, eval_segmaps);
        }
        if (seg->parsed()) {
            return cmd_export_segmap(seg_image, seg_params, seg_norm, seg_out);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
