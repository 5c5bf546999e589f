#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "gradshift/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = GRADSHIFT_CLI_PATH;

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("gradshift_cli_" + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
    const int status = std::system((kCli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int count_lines(const fs::path& path) {
    std::ifstream in(path);
    int lines = 0;
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) ++lines;
    return lines;
}

std::string write_config(const TempDir& tmp, int stages, const std::string& out_dir) {
    nlohmann::json cfg;
    cfg["run"] = {{"M", stages},
                  {"seed", 7},
                  {"hidden_dims", {16, 8}},
                  {"adapt_iterations", 200},
                  {"train",
                   {{"iterations", 400},
                    {"batch_labeled", 16},
                    {"unlabeled_ratio", 2},
                    {"augment_sigma", 0.05}}}};
    cfg["data"] = {
        {"source", {{"recipe", "moons"}, {"n", 100}, {"noise", 0.08}, {"rotate", "0:30"}, {"seed", 3}}},
        {"target", {{"recipe", "moons"}, {"n", 100}, {"noise", 0.08}, {"rotate", "50:80"}, {"seed", 4}}}};
    cfg["output_dir"] = out_dir;
    const std::string path = (tmp.path / "cfg.json").string();
    std::ofstream out(path);
    out << cfg.dump(2);
    return path;
}

}  // namespace

TEST_CASE("generate: row count, unknown recipe, overwrite refusal") {
    TempDir tmp("gen");
    const std::string csv = (tmp.path / "moons.csv").string();
    CHECK(run("generate --recipe moons --n 50 --rotate 30:60 --seed 1 --out " + csv) == 0);
    CHECK(count_lines(csv) == 51);  // header + 50 rows

    CHECK(run("generate --recipe nope --n 10 --out " + (tmp.path / "x.csv").string()) == 2);
    CHECK_FALSE(fs::exists(tmp.path / "x.csv"));  // validation before side effects

    CHECK(run("generate --recipe moons --n 10 --out " + csv) == 3);
    CHECK(count_lines(csv) == 51);  // untouched
    CHECK(run("generate --recipe moons --n 10 --seed 2 --out " + csv + " --force") == 0);
    CHECK(count_lines(csv) == 11);
}

TEST_CASE("generate honors GRADSHIFT_DATA_DIR for relative paths") {
    TempDir tmp("datadir");
    setenv("GRADSHIFT_DATA_DIR", tmp.path.c_str(), 1);
    CHECK(run("generate --recipe moons --n 20 --out rel.csv") == 0);
    unsetenv("GRADSHIFT_DATA_DIR");
    CHECK(fs::exists(tmp.path / "rel.csv"));
    CHECK(count_lines(tmp.path / "rel.csv") == 21);
}

TEST_CASE("adapt: stage layout, schema-valid report, validation and resume") {
    TempDir tmp("adapt");
    const std::string out_dir = (tmp.path / "run").string();
    const std::string cfg = write_config(tmp, 3, out_dir);

    CHECK(run("adapt --config " + cfg) == 0);
    CHECK(fs::exists(fs::path(out_dir) / "run_meta.json"));
    CHECK(fs::exists(fs::path(out_dir) / "report.json"));
    for (int m = 0; m <= 3; ++m)
        CHECK(fs::exists(fs::path(out_dir) / ("stage_" + std::to_string(m)) / "model.json"));

    // the emitted report validates against the published schema
    nlohmann::json report, schema;
    {
        std::ifstream rin(fs::path(out_dir) / "report.json");
        rin >> report;
        std::ifstream sin(std::string(GRADSHIFT_SCHEMA_DIR) + "/report.schema.json");
        REQUIRE(sin.good());
        sin >> schema;
    }
    std::string err;
    INFO(err);
    CHECK(gradshift::validate_against_schema(report, schema, &err));
    CHECK(report.at("stages").size() == 3);

    // rerunning without --force refuses; resuming a finished prefix succeeds
    CHECK(run("adapt --config " + cfg) == 3);
    CHECK(run("adapt --config " + cfg + " --resume 2") == 0);

    // config validation happens before any work
    const std::string out2 = (tmp.path / "run2").string();
    CHECK(run("adapt --config " + cfg + " --stages 0 --out " + out2) == 2);
    CHECK_FALSE(fs::exists(out2));

    CHECK(run("adapt --config " + (tmp.path / "missing.json").string()) == 2);
}

TEST_CASE("train-source writes a model and reports accuracy") {
    TempDir tmp("tsrc");
    const std::string out_dir = (tmp.path / "run").string();
    const std::string cfg = write_config(tmp, 2, out_dir);
    CHECK(run("train-source --config " + cfg) == 0);
    CHECK(fs::exists(fs::path(out_dir) / "source_model.json"));
    CHECK(run("train-source --config " + cfg) == 3);
    CHECK(run("train-source --config " + cfg + " --force") == 0);
}

TEST_CASE("diagnose shift emits one row per bucket") {
    TempDir tmp("shift");
    const std::string csv = (tmp.path / "shift_curve.csv").string();
    CHECK(run("diagnose shift --buckets 12 --bucket-width 5 --n 200 --seed 2 --out " + csv) == 0);
    CHECK(count_lines(csv) == 13);  // header + 12 buckets
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "r,accuracy,mean_maxprob,a_dis");
}

TEST_CASE("diagnose consecutive: stage rows from a finished run, missing dir refused") {
    TempDir tmp("consec");
    const std::string out_dir = (tmp.path / "run").string();
    const std::string cfg = write_config(tmp, 3, out_dir);
    REQUIRE(run("adapt --config " + cfg) == 0);

    const std::string csv = (tmp.path / "consecutive.csv").string();
    CHECK(run("diagnose consecutive --config " + cfg + " --run " + out_dir + " --out " + csv) ==
          0);
    CHECK(count_lines(csv) == 4);  // header + M rows
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "m,a_dis");

    CHECK(run("diagnose consecutive --config " + cfg + " --run " +
              (tmp.path / "nope").string() + " --out " + (tmp.path / "c2.csv").string()) == 2);
}

TEST_CASE("ablate: arm filter, seed grid, csv shape") {
    TempDir tmp("abl");
    const std::string out_dir = (tmp.path / "grid").string();
    const std::string cfg = write_config(tmp, 2, out_dir);

    CHECK(run("ablate --config " + cfg + " --arms full --seeds 1,2 --jobs 2") == 0);
    const fs::path csv = fs::path(out_dir) / "ablation.csv";
    CHECK(count_lines(csv) == 3);  // header + 1 arm x 2 seeds
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "sel_t,sel_s,sel_enh,lab_enh,seed,accuracy");
    // per-arm outputs land in isolated directories
    CHECK(fs::exists(fs::path(out_dir) / "full_seed1" / "report.json"));
    CHECK(fs::exists(fs::path(out_dir) / "full_seed2" / "report.json"));

    CHECK(run("ablate --config " + cfg + " --arms bogus --seeds 1") == 2);
    CHECK(run("ablate --config " + cfg + " --arms full --seeds 1") == 3);  // csv exists
}

TEST_CASE("bare invocation and unknown flags are usage errors") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("adapt") == 2);  // --config is required
}
