#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "tabcsdi/config.hpp"

using namespace tabcsdi;
namespace fs = std::filesystem;

#ifndef TABCSDI_CLI_PATH
#error "TABCSDI_CLI_PATH must be defined by the build"
#endif

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    std::string cmd = std::string(TABCSDI_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    RunResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) res.output.append(buf.data(), n);
    int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

fs::path scratch_dir() {
    fs::path dir = fs::temp_directory_path() / "tabcsdi_cli_test";
    fs::create_directories(dir);
    return dir;
}

std::string write_file(const fs::path& path, const std::string& content) {
    std::ofstream(path) << content;
    return path.string();
}

// 24 rows, deterministic digits, a few missing cells
std::string toy_csv() {
    std::string csv = "x1,x2,flag\n";
    Rng rng(101);
    for (int r = 0; r < 24; ++r) {
        double a = rng.uniform(), b = 0.5 * a + 0.1 * rng.uniform();
        std::string flag = rng.uniform() < 0.5 ? "no" : "yes";
        char row[128];
        if (r == 3)
            std::snprintf(row, sizeof(row), ",%0.4f,%s\n", b, flag.c_str());
        else if (r == 7)
            std::snprintf(row, sizeof(row), "%0.4f,%0.4f,\n", a, b);
        else
            std::snprintf(row, sizeof(row), "%0.4f,%0.4f,%s\n", a, b, flag.c_str());
        csv += row;
    }
    return csv;
}

std::string toy_schema_json() {
    return R"({
  "missing_sentinel": "",
  "columns": [
    {"name": "x1", "kind": "numerical"},
    {"name": "x2", "kind": "numerical"},
    {"name": "flag", "kind": "categorical", "categories": ["no", "yes"]}
  ]
})";
}

std::string toy_config_json() {
    return std::string(R"({
  "dataset": {"name": "toy", "csv": "toy.csv", "schema": "toy.schema.json"},
  "split_fraction": 0.75,
  "mcar_rate": 0.2,
  "seeds": [1, 2],
  "imputer": "mean_mode",
  "encoding": "onehot",
  "denoiser": {"layers": 1, "channels": 8, "heads": 2, "diffusion_emb_dim": 8, "feature_emb_dim": 4},
  "diffusion": {"steps": 6, "beta_min": 1e-4, "beta_max": 0.5, "n_samples": 2},
  "training": {"epochs": 3, "batch_size": 8, "base_lr": 0.001},
  "output_dir": "out"
})");
}

} // namespace

TEST_CASE("config loads with resolved paths and strict keys") {
    fs::path dir = scratch_dir();
    write_file(dir / "toy.csv", toy_csv());
    write_file(dir / "toy.schema.json", toy_schema_json());
    std::string cfg_path = write_file(dir / "toy.json", toy_config_json());

    RunConfig cfg = RunConfig::load(cfg_path);
    CHECK(cfg.dataset_name == "toy");
    CHECK(fs::path(cfg.csv_path).is_absolute() == fs::path(cfg_path).is_absolute());
    CHECK(cfg.seeds == std::vector<uint64_t>{1, 2});
    CHECK(cfg.model.diffusion.steps == 6);
    CHECK(cfg.model.training.epochs == 3);

    CHECK_THROWS_WITH_AS(RunConfig::from_json_text(R"({"dataset": {"csv": "a", "schema": "b"}, "typo_key": 1})", ""),
                         doctest::Contains("typo_key"), TabError);
    CHECK_THROWS_WITH_AS(
        RunConfig::from_json_text(
            R"({"dataset": {"csv": "a", "schema": "b"}, "training": {"epoches": 5}})", ""),
        doctest::Contains("epoches"), TabError);
    CHECK_THROWS_AS(
        RunConfig::from_json_text(R"({"dataset": {"csv": "a", "schema": "b"}, "mcar_rate": 1.5})", ""), TabError);
}

TEST_CASE("config defaults mirror the shipped training profile") {
    RunConfig cfg = RunConfig::from_json_text(R"({"dataset": {"csv": "a", "schema": "b"}})", "");
    CHECK(cfg.model.training.base_lr == 0.0005);
    CHECK(cfg.model.denoiser.layers == 4);
    CHECK(cfg.model.denoiser.channels == 64);
    CHECK(cfg.model.denoiser.heads == 4);
    CHECK(cfg.model.denoiser.diffusion_emb_dim == 128);
    CHECK(cfg.model.denoiser.feature_emb_dim == 64);
    CHECK(cfg.model.diffusion.steps == 150);
    CHECK(cfg.model.diffusion.n_samples == 50);
    CHECK(cfg.split_fraction == 0.8);
    CHECK(cfg.mcar_rate == 0.2);
}

TEST_CASE("cli reports missing dataset files with exit code 1") {
    fs::path dir = scratch_dir();
    fs::remove(dir / "absent.csv");
    std::string cfg = write_file(dir / "absent.json", R"({
  "dataset": {"csv": "absent.csv", "schema": "toy.schema.json"}
})");
    RunResult r = run_cli("evaluate --config " + cfg);
    CHECK(r.exit_code == 1);
    CHECK(r.output.find("error:") != std::string::npos);
    CHECK(r.output.find("absent.csv") != std::string::npos);
}

TEST_CASE("cli evaluate (mean_mode) writes a report") {
    fs::path dir = scratch_dir();
    write_file(dir / "toy.csv", toy_csv());
    write_file(dir / "toy.schema.json", toy_schema_json());
    std::string cfg = write_file(dir / "toy.json", toy_config_json());
    RunResult r = run_cli("evaluate --config " + cfg);
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir / "out" / "toy_mean_mode_report.json"));
    CHECK(r.output.find("mean_mode") != std::string::npos);
}

TEST_CASE("cli train/impute round trip: completed csv, observed bytes intact") {
    fs::path dir = scratch_dir();
    write_file(dir / "toy.csv", toy_csv());
    write_file(dir / "toy.schema.json", toy_schema_json());
    std::string cfg = write_file(dir / "toy.json", toy_config_json());

    RunResult tr = run_cli("train --config " + cfg + " --seed 9");
    CHECK(tr.exit_code == 0);
    std::string ckpt = (dir / "out" / "toy.ckpt").string();
    REQUIRE(fs::exists(ckpt));
    CHECK(fs::exists(dir / "out" / "training_log.csv"));

    std::string out_csv = (dir / "out" / "toy_filled.csv").string();
    RunResult im = run_cli("impute --checkpoint " + ckpt + " --in " + (dir / "toy.csv").string() + " --out " +
                           out_csv + " --seed 5");
    CHECK(im.exit_code == 0);
    REQUIRE(fs::exists(out_csv));

    std::ifstream orig(dir / "toy.csv");
    std::ifstream filled(out_csv);
    std::string lo, lf;
    std::getline(orig, lo);
    std::getline(filled, lf);
    CHECK(lo == lf); // header preserved
    int line_no = 1;
    while (std::getline(orig, lo) && std::getline(filled, lf)) {
        ++line_no;
        // observed cells byte-identical; sentinel cells replaced
        std::vector<std::string> fo, ff;
        auto split = [](const std::string& s, std::vector<std::string>& out) {
            std::string cur;
            for (char c : s) {
                if (c == ',') {
                    out.push_back(cur);
                    cur.clear();
                } else
                    cur += c;
            }
            out.push_back(cur);
        };
        split(lo, fo);
        split(lf, ff);
        REQUIRE(fo.size() == ff.size());
        for (size_t c = 0; c < fo.size(); ++c) {
            if (fo[c].empty()) {
                CHECK_FALSE(ff[c].empty()); // filled in
                if (c == 2) CHECK((ff[c] == "no" || ff[c] == "yes"));
            } else {
                CHECK(fo[c] == ff[c]);
            }
        }
    }
    CHECK_FALSE(std::getline(filled, lf)); // same row count
    CHECK(fs::exists(out_csv + ".meta.json")); // provenance sidecar

    // mismatched input schema is rejected with the offending column named
    std::string bad = write_file(dir / "bad.csv", "x1,wrong,flag\n0.1,0.2,no\n");
    RunResult mis = run_cli("impute --checkpoint " + ckpt + " --in " + bad + " --out /dev/null");
    CHECK(mis.exit_code == 1);
    CHECK(mis.output.find("wrong") != std::string::npos);
}

TEST_CASE("cli benchmark produces a combined comparison table") {
    fs::path dir = scratch_dir();
    write_file(dir / "toy.csv", toy_csv());
    write_file(dir / "toy.schema.json", toy_schema_json());
    std::string cfg = write_file(dir / "toy.json", toy_config_json());
    RunResult r = run_cli("benchmark --config " + cfg);
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("mean_mode") != std::string::npos);
    CHECK(r.output.find("tabcsdi") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "toy_comparison.txt"));
    CHECK(fs::exists(dir / "out" / "toy_mean_mode_report.json"));
    CHECK(fs::exists(dir / "out" / "toy_tabcsdi_report.json"));

    // shared masks: both reports carry the same fingerprint (seeds, rate, split)
    std::ifstream a(dir / "out" / "toy_mean_mode_report.json");
    std::ifstream b(dir / "out" / "toy_tabcsdi_report.json");
    nlohmann::json ja = nlohmann::json::parse(a);
    nlohmann::json jb = nlohmann::json::parse(b);
    CHECK(ja["fingerprint"] == jb["fingerprint"]);
    CHECK(ja["fingerprint"]["seeds"] == nlohmann::json::array({1, 2}));
}

TEST_CASE("cli infer-schema detects kinds and sorts labels") {
    fs::path dir = scratch_dir();
    std::string csv = write_file(dir / "infer.csv", "num,cat\n1.5,zebra\n2,apple\n,apple\n3.25,zebra\n");
    std::string out = (dir / "infer.schema.json").string();
    RunResult r = run_cli("infer-schema --in " + csv + " --out " + out);
    CHECK(r.exit_code == 0);
    TableSchema s = TableSchema::load(out);
    REQUIRE(s.ncols() == 2);
    CHECK(s.columns[0].kind == ColumnKind::numerical);
    CHECK(s.columns[1].kind == ColumnKind::categorical);
    REQUIRE(s.columns[1].cardinality() == 2);
    CHECK(s.columns[1].categories[0] == "apple"); // sorted
    CHECK(s.columns[1].categories[1] == "zebra");
}

TEST_CASE("denormalization arithmetic for written values") {
    NormalizationParams p;
    p.per_column.push_back(NormalizationParams::Range{10.0, 30.0});
    CHECK(p.invert(0, 0.5) == doctest::Approx(20.0));
}
