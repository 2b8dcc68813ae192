#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "coverhead/manifest.hpp"
#include "coverhead/registry.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(COVERHEAD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

int count_files(const fs::path& dir, const std::string& ext) {
    int n = 0;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ext) {
            ++n;
        }
    }
    return n;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("cli pipeline: simulate, train, eval, export-segmap") {
    TempDir tmp("coverhead_cli_test");
    const fs::path data = tmp.path / "data";
    const fs::path model = tmp.path / "model";
    const fs::path evaldir = tmp.path / "eval";

    // --- simulate: 2 units x 2 cameras x 3 weeks = 12 images
    REQUIRE(run_cli("simulate --units 2 --weeks 3 --image-size 64x32 --seed 9 --out " +
                    data.string()) == 0);
    CHECK(count_files(data / "images", ".ppm") == 12);
    CHECK(count_files(data / "series", ".json") == 2);
    CHECK(fs::exists(data / "annotations.csv"));
    const auto manifest = coverhead::read_manifest(data / "manifest.json");
    CHECK(manifest.command == "simulate");
    CHECK(manifest.seed == 9);

    // rerun with the same seed into a second directory, and with a different
    // thread budget: byte-identical files either way
    const fs::path data2 = tmp.path / "data2";
    REQUIRE(run_cli("simulate --units 2 --weeks 3 --image-size 64x32 --seed 9 --out " +
                    data2.string()) == 0);
    CHECK(slurp(data / "annotations.csv") == slurp(data2 / "annotations.csv"));
    CHECK(slurp(data / "images" / "unit_00_cam_0_week_01.ppm") ==
          slurp(data2 / "images" / "unit_00_cam_0_week_01.ppm"));
    CHECK(slurp(data / "series" / "unit_01.json") == slurp(data2 / "series" / "unit_01.json"));

    const fs::path data_st = tmp.path / "data_single_thread";
    {
        const std::string cmd = "COVERHEAD_THREADS=1 " + std::string(COVERHEAD_CLI_PATH) +
                                " simulate --units 2 --weeks 3 --image-size 64x32 --seed 9 --out " +
                                data_st.string() + " > /dev/null 2>&1";
        REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    }
    CHECK(slurp(data / "annotations.csv") == slurp(data_st / "annotations.csv"));
    CHECK(slurp(data / "images" / "unit_01_cam_1_week_02.ppm") ==
          slurp(data_st / "images" / "unit_01_cam_1_week_02.ppm"));

    // emitted PPMs parse under the independent reference reader
    const auto ppm = oracle::read_p6_reference((data / "images" / "unit_00_cam_0_week_01.ppm").string());
    CHECK(ppm.width == 64);
    CHECK(ppm.height == 32);
    CHECK(ppm.maxval == 255);

    // --- train: 1 epoch -> history with exactly one row
    REQUIRE(run_cli("train --dataset " + data.string() + " --epochs 1 --seed 4 --out " +
                    model.string()) == 0);
    CHECK(fs::exists(model / "params.json"));
    CHECK(fs::exists(model / "norm_stats.json"));
    CHECK(fs::exists(model / "manifest.json"));
    {
        std::ifstream in(model / "history.csv");
        std::string line;
        int rows = 0;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (!line.empty()) {
                ++rows;
            }
        }
        CHECK(rows == 1);
    }

    // feature cache was populated and a cache-hit rerun gives identical params
    CHECK(count_files(data / "fmap_cache", ".fmap") == 12);
    const fs::path model2 = tmp.path / "model2";
    REQUIRE(run_cli("train --dataset " + data.string() + " --epochs 1 --seed 4 --out " +
                    model2.string()) == 0);
    CHECK(slurp(model / "params.json") == slurp(model2 / "params.json"));

    // --- eval with params
    REQUIRE(run_cli("eval --dataset " + data.string() + " --params " +
                    (model / "params.json").string() + " --export-segmaps --out " +
                    evaldir.string()) == 0);
    CHECK(fs::exists(evaldir / "metrics.json"));
    CHECK(count_files(evaldir / "segmaps", ".ppm") == 12);

    // --- eval with a perfect predictions file: MAE exactly 0
    const fs::path evalp = tmp.path / "eval_preds";
    REQUIRE(run_cli("eval --dataset " + data.string() + " --predictions " +
                    (data / "annotations.csv").string() + " --out " + evalp.string()) == 0);
    {
        std::ifstream in(evalp / "metrics.json");
        std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        CHECK(body.find("\"mae\": 0.0") != std::string::npos);
    }

    // --- eval --cv needs enough units to leave two out: use a 4-unit dataset
    const fs::path data4 = tmp.path / "data4";
    REQUIRE(run_cli("simulate --units 4 --weeks 3 --image-size 64x32 --seed 9 --out " +
                    data4.string()) == 0);
    const fs::path evalcv = tmp.path / "eval_cv";
    REQUIRE(run_cli("eval --dataset " + data4.string() + " --cv --epochs 1 --seed 3 --out " +
                    evalcv.string()) == 0);
    CHECK(fs::exists(evalcv / "cv_report.json"));
    {
        std::ifstream in(evalcv / "fold_metrics.csv");
        std::string line;
        int rows = 0;
        while (std::getline(in, line)) {
            if (!line.empty()) {
                ++rows;
            }
        }
        CHECK(rows == 1 + 2 + 1);  // header + 2 folds (4 units) + average row
    }

    // --- export-segmap for a single image
    const fs::path seg = tmp.path / "seg.ppm";
    REQUIRE(run_cli("export-segmap --image " + (data / "images" / "unit_00_cam_0_week_03.ppm").string() +
                    " --params " + (model / "params.json").string() + " --out " + seg.string()) == 0);
    const auto seg_ppm = oracle::read_p6_reference(seg.string());
    CHECK(seg_ppm.width == 64);
}

TEST_CASE("cli surfaces validation failures with nonzero status") {
    TempDir tmp("coverhead_cli_err");
    // missing required --out
    CHECK(run_cli("simulate --units 2") != 0);
    // nonexistent dataset directory
    CHECK(run_cli("train --dataset /nonexistent --out " + (tmp.path / "m").string()) != 0);
    // eval without a mode
    const fs::path data = tmp.path / "d";
    REQUIRE(run_cli("simulate --units 2 --weeks 2 --image-size 64x32 --out " + data.string()) == 0);
    CHECK(run_cli("eval --dataset " + data.string() + " --out " + (tmp.path / "e").string()) != 0);

    // missing image file: error message lists the absent triple
    fs::remove(data / "images" / "unit_01_cam_1_week_02.ppm");
    const std::string cmd = std::string(COVERHEAD_CLI_PATH) + " train --dataset " + data.string() +
                            " --out " + (tmp.path / "m2").string() + " 2>" +
                            (tmp.path / "err.txt").string();
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) != 0);
    const std::string err = slurp(tmp.path / "err.txt");
    CHECK(err.find("unit 1") != std::string::npos);
    CHECK(err.find("week 2") != std::string::npos);
    // and no manifest marks the failed run's directory as valid
    CHECK_FALSE(fs::exists(tmp.path / "m2" / "manifest.json"));
}
