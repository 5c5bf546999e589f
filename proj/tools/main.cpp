// gradshift: gradual domain adaptation experiments from the command line.
//
// Exit codes: 0 success, 2 usage or validation error, 3 refused to overwrite
// an existing output, 4 training diverged.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gradshift/data.hpp"
#include "gradshift/diagnostics.hpp"
#include "gradshift/ensemble.hpp"
#include "gradshift/model.hpp"
#include "gradshift/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gradshift;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kRefuseOverwrite = 3;
constexpr int kDiverged = 4;

struct RefuseOverwrite : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Relative dataset paths resolve against GRADSHIFT_DATA_DIR when it is set.
std::string resolve_data_path(const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    const char* root = std::getenv("GRADSHIFT_DATA_DIR");
    if (!root || !*root) return path;
    return (fs::path(root) / path).string();
}

void require_fresh(const std::string& path, bool force) {
    if (!force && fs::exists(path))
        throw RefuseOverwrite(path + " exists; pass --force to overwrite");
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw UsageError("config " + path + " is not valid JSON: " + e.what());
    }
    return doc;
}

// One dataset role: either a generator recipe or a CSV file.
//   {"recipe": "moons", "n": 400, "noise": 0.08, "rotate": "0:30", "seed": 1}
//   {"path": "target.csv"}
struct DataSpec {
    std::string recipe;  // empty when loading from a file
    std::string path;
    int n = 400;
    double noise = 0.08;
    double rotate_lo = 0.0;
    double rotate_hi = 0.0;
    std::uint64_t seed = 0;
};

std::pair<double, double> parse_rotate(const std::string& text) {
    const auto colon = text.find(':');
    try {
        if (colon == std::string::npos) {
            const double a = std::stod(text);
            return {a, a};
        }
        return {std::stod(text.substr(0, colon)), std::stod(text.substr(colon + 1))};
    } catch (const std::exception&) {
        throw UsageError("bad --rotate value '" + text + "', expected LO:HI degrees");
    }
}

DataSpec data_spec_from_json(const json& doc, const std::string& role) {
    DataSpec spec;
    if (doc.contains("path")) {
        spec.path = doc.at("path").get<std::string>();
        return spec;
    }
    if (!doc.contains("recipe"))
        throw UsageError("data." + role + " needs either a recipe or a path");
    spec.recipe = doc.at("recipe").get<std::string>();
    if (doc.contains("n")) spec.n = doc.at("n").get<int>();
    if (doc.contains("noise")) spec.noise = doc.at("noise").get<double>();
    if (doc.contains("rotate")) {
        const auto [lo, hi] = parse_rotate(doc.at("rotate").get<std::string>());
        spec.rotate_lo = lo;
        spec.rotate_hi = hi;
    }
    if (doc.contains("seed")) spec.seed = doc.at("seed").get<std::uint64_t>();
    return spec;
}

LabeledSet materialize_labeled(const DataSpec& spec, const std::string& role) {
    if (!spec.path.empty()) {
        const std::string path = resolve_data_path(spec.path);
        if (!fs::exists(path)) throw UsageError("data." + role + ": missing file " + path);
        return to_labeled(read_csv(path));
    }
    if (spec.recipe != "moons")
        throw UsageError("data." + role + ": unknown recipe '" + spec.recipe + "'");
    LabeledSet set = make_two_moons(spec.n, spec.noise, spec.seed);
    if (spec.rotate_lo != 0.0 || spec.rotate_hi != 0.0)
        set = rotate(set, RotationSpec{spec.rotate_lo, spec.rotate_hi,
                                       derive_seed(spec.seed, 0x517)});
    return set;
}

// The experiment config: a RunConfig under "run", data recipes per role, and
// an output directory. Flags override keys after parsing.
struct Experiment {
    RunConfig run;
    DataSpec source;
    DataSpec target;
    int labels_per_class = 0;  // SSDA only
    std::uint64_t split_seed = 0;
    std::string output_dir;
};

Experiment experiment_from_json(const json& doc) {
    Experiment exp;
    if (doc.contains("run")) exp.run = run_config_from_json(doc.at("run"));
    if (!doc.contains("data") || !doc.at("data").contains("source") ||
        !doc.at("data").contains("target"))
        throw UsageError("config needs data.source and data.target");
    exp.source = data_spec_from_json(doc.at("data").at("source"), "source");
    exp.target = data_spec_from_json(doc.at("data").at("target"), "target");
    if (doc.at("data").contains("labels_per_class"))
        exp.labels_per_class = doc.at("data").at("labels_per_class").get<int>();
    if (doc.at("data").contains("split_seed"))
        exp.split_seed = doc.at("data").at("split_seed").get<std::uint64_t>();
    if (doc.contains("output_dir")) exp.output_dir = doc.at("output_dir").get<std::string>();
    return exp;
}

struct AdaptOverrides {
    std::optional<int> stages;
    std::optional<std::uint64_t> seed;
    std::optional<int> resume;
    std::string output_dir;
};

void apply_overrides(Experiment& exp, const AdaptOverrides& ov) {
    if (ov.stages) exp.run.num_stages = *ov.stages;
    if (ov.seed) {
        exp.run.seed = *ov.seed;
        exp.run.train.seed = *ov.seed;
    }
    if (ov.resume) exp.run.resume_from_stage = *ov.resume;
    if (!ov.output_dir.empty()) exp.output_dir = ov.output_dir;
}

int cmd_generate(const std::string& recipe, int n, double noise, const std::string& rotate,
                 std::uint64_t seed, const std::string& out, bool force) {
    DataSpec spec;
    spec.recipe = recipe;
    spec.n = n;
    spec.noise = noise;
    spec.seed = seed;
    if (!rotate.empty()) {
        const auto [lo, hi] = parse_rotate(rotate);
        spec.rotate_lo = lo;
        spec.rotate_hi = hi;
    }
    const std::string path = resolve_data_path(out);
    const LabeledSet set = materialize_labeled(spec, "out");  // validates the recipe
    require_fresh(path, force);
    if (const fs::path parent = fs::path(path).parent_path(); !parent.empty())
        fs::create_directories(parent);
    write_csv(set, path);
    std::cout << "wrote " << set.n() << " rows to " << path << "\n";
    return kOk;
}

int cmd_train_source(const std::string& config_path, const AdaptOverrides& ov, bool force) {
    Experiment exp = experiment_from_json(load_json_file(config_path));
    apply_overrides(exp, ov);
    exp.run.validate();
    if (exp.output_dir.empty()) throw UsageError("config needs output_dir");
    const LabeledSet source = materialize_labeled(exp.source, "source");
    const std::string model_path = exp.output_dir + "/source_model.json";
    require_fresh(model_path, force);
    fs::create_directories(exp.output_dir);

    std::vector<int> dims;
    dims.push_back(source.dim());
    for (int h : exp.run.hidden_dims) dims.push_back(h);
    dims.push_back(source.num_classes);
    Classifier f = Classifier::init(dims, derive_seed(exp.run.seed, 1));
    TrainConfig cfg = exp.run.train;
    cfg.seed = derive_seed(exp.run.seed, 2);
    f = train_source(std::move(f), source, cfg);
    save(f, model_path);
    std::cout << "source_accuracy=" << accuracy(f, source.features, source.labels) << " model="
              << model_path << "\n";
    return kOk;
}

int cmd_adapt(const std::string& config_path, const AdaptOverrides& ov, bool force) {
    Experiment exp = experiment_from_json(load_json_file(config_path));
    apply_overrides(exp, ov);
    exp.run.validate();
    if (exp.output_dir.empty()) throw UsageError("config needs output_dir");
    exp.run.checkpoint_dir = exp.output_dir;

    const std::string report_path = exp.output_dir + "/report.json";
    if (exp.run.resume_from_stage == 0) require_fresh(report_path, force);

    const LabeledSet source = materialize_labeled(exp.source, "source");
    const LabeledSet target_labeled = materialize_labeled(exp.target, "target");

    RunResult res;
    if (exp.run.mode == RunMode::SSDA) {
        const SsdaSplit split =
            make_ssda_split(target_labeled, exp.labels_per_class, exp.split_seed);
        res = run_ssda(source, split, exp.run);
    } else {
        const UnlabeledSet target = strip_labels(target_labeled);
        res = run_da(source, target, exp.run, &target_labeled.labels);
    }
    std::cout << "final_accuracy=" << res.final_accuracy << " stages="
              << res.stage_reports.size() << " report=" << report_path << "\n";
    return kOk;
}

int cmd_diagnose_shift(const std::string& config_path, int buckets, double bucket_width, int n,
                       double noise, std::uint64_t seed, const std::string& out, bool force) {
    ShiftStudyConfig cfg;
    LabeledSet base;
    if (!config_path.empty()) {
        const Experiment exp = experiment_from_json(load_json_file(config_path));
        cfg.train = exp.run.train;
        cfg.hidden_dims = exp.run.hidden_dims;
        cfg.seed = exp.run.seed;
        base = materialize_labeled(exp.source, "source");
    } else {
        base = make_two_moons(n, noise, seed);
        cfg.seed = seed;
    }
    cfg.num_buckets = buckets;
    cfg.bucket_width = bucket_width;
    const std::string path = resolve_data_path(out);
    require_fresh(path, force);
    const ShiftCurve curve = shift_study(base, cfg);
    write_shift_curve_csv(curve, path);
    std::cout << "wrote " << curve.r.size() << " buckets to " << path << "\n";
    return kOk;
}

// Rebuilds the per-stage state of a finished run from its checkpoint
// directory, then measures consecutive discrepancies.
int cmd_diagnose_consecutive(const std::string& config_path, const std::string& run_dir,
                             const std::string& out, bool force) {
    if (!fs::exists(run_dir)) throw UsageError("missing run directory " + run_dir);
    Experiment exp = experiment_from_json(load_json_file(config_path));
    const LabeledSet source = materialize_labeled(exp.source, "source");
    const LabeledSet target_labeled = materialize_labeled(exp.target, "target");

    RunResult run;
    for (int m = 1;; ++m) {
        const fs::path dir = fs::path(run_dir) / ("stage_" + std::to_string(m));
        if (!fs::exists(dir / "model.json")) break;
        run.stage_models.push_back(load((dir / "model.json").string()));
        std::ifstream in(dir / "domain.csv");
        if (!in) throw UsageError("missing domain.csv for stage " + std::to_string(m));
        IntermediateDomain dom;
        dom.stage = m;
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string role, idx, act, pse;
            std::getline(ss, role, ',');
            std::getline(ss, idx, ',');
            std::getline(ss, act, ',');
            std::getline(ss, pse, ',');
            if (role == "source") {
                dom.source_active.push_back(static_cast<std::uint8_t>(std::stoi(act)));
            } else {
                dom.target_active.push_back(static_cast<std::uint8_t>(std::stoi(act)));
                dom.target_pseudo_labels.push_back(std::stoi(act) ? std::stoi(pse) : -1);
            }
        }
        run.domains.push_back(std::move(dom));
    }
    if (run.domains.empty()) throw UsageError("no stage checkpoints under " + run_dir);

    const std::string path = resolve_data_path(out);
    require_fresh(path, force);
    const auto curve = consecutive_discrepancy(run, source.features, target_labeled.features,
                                               exp.run.seed);
    write_consecutive_csv(curve, path);
    std::cout << "wrote " << curve.stage.size() << " stages to " << path
              << " source_target_a_dis=" << curve.source_target_distance << "\n";
    return kOk;
}

int cmd_ablate(const std::string& config_path, const std::string& arms_csv,
               const std::string& seeds_csv, int jobs, const AdaptOverrides& ov, bool force) {
    Experiment exp = experiment_from_json(load_json_file(config_path));
    apply_overrides(exp, ov);
    exp.run.validate();
    if (exp.output_dir.empty()) throw UsageError("config needs output_dir");

    std::vector<AblationArm> arms = default_ablation_arms();
    if (!arms_csv.empty()) {
        std::vector<AblationArm> chosen;
        std::stringstream ss(arms_csv);
        for (std::string name; std::getline(ss, name, ',');) {
            bool found = false;
            for (const auto& arm : arms)
                if (arm.name == name) {
                    chosen.push_back(arm);
                    found = true;
                }
            if (!found) throw UsageError("unknown ablation arm '" + name + "'");
        }
        arms = std::move(chosen);
    }
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(seeds_csv);
    for (std::string tok; std::getline(ss, tok, ',');) {
        try {
            seeds.push_back(std::stoull(tok));
        } catch (const std::exception&) {
            throw UsageError("bad --seeds entry '" + tok + "'");
        }
    }
    if (seeds.empty()) throw UsageError("--seeds must name at least one seed");

    const std::string csv_path = exp.output_dir + "/ablation.csv";
    require_fresh(csv_path, force);
    fs::create_directories(exp.output_dir);

    const LabeledSet source = materialize_labeled(exp.source, "source");
    const LabeledSet target_labeled = materialize_labeled(exp.target, "target");
    const UnlabeledSet target = strip_labels(target_labeled);
    exp.run.checkpoint_dir = exp.output_dir;  // per-arm subdirectories

    const auto rows = run_ablation_grid(source, target, target_labeled.labels, exp.run, arms,
                                        seeds, jobs);
    write_ablation_csv(rows, csv_path);
    std::cout << "wrote " << rows.size() << " rows to " << csv_path << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "gradshift: gradual domain adaptation via self-trained auxiliary models.\n"
        "Exit codes: 0 ok, 2 usage/validation error, 3 refused overwrite, 4 training diverged."};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Generate a dataset CSV from a recipe");
    std::string gen_recipe = "moons", gen_rotate, gen_out;
    int gen_n = 400;
    double gen_noise = 0.08;
    std::uint64_t gen_seed = 0;
    bool gen_force = false;
    gen->add_option("--recipe", gen_recipe, "Generator name (moons)");
    gen->add_option("--n", gen_n, "Sample count");
    gen->add_option("--noise", gen_noise, "Gaussian noise sigma");
    gen->add_option("--rotate", gen_rotate, "Rotation range LO:HI in degrees");
    gen->add_option("--seed", gen_seed, "RNG seed");
    gen->add_option("--out", gen_out, "Output CSV path")->required();
    gen->add_flag("--force", gen_force, "Overwrite an existing file");

    AdaptOverrides ov;
    int ov_stages = -1, ov_resume = -1;
    std::int64_t ov_seed = -1;

    auto add_overrides = [&](CLI::App* cmd) {
        cmd->add_option("--stages", ov_stages, "Override the stage count M");
        cmd->add_option("--seed", ov_seed, "Override the run seed");
        cmd->add_option("--out", ov.output_dir, "Override the output directory");
    };

    // train-source
    auto* tsrc = app.add_subcommand("train-source", "Train and save the source-only model");
    std::string tsrc_config;
    bool tsrc_force = false;
    tsrc->add_option("--config", tsrc_config, "Experiment config JSON")->required();
    tsrc->add_flag("--force", tsrc_force, "Overwrite existing outputs");

    // adapt
    auto* adapt = app.add_subcommand("adapt", "Run the gradual adaptation pipeline");
    std::string adapt_config;
    bool adapt_force = false;
    adapt->add_option("--config", adapt_config, "Experiment config JSON")->required();
    adapt->add_option("--resume", ov_resume, "Resume after this completed stage");
    add_overrides(adapt);
    adapt->add_flag("--force", adapt_force, "Overwrite existing outputs");

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "Distribution-shift diagnostics");
    diag->require_subcommand(1);
    auto* shift = diag->add_subcommand("shift", "Accuracy/confidence/A-distance vs rotation");
    std::string shift_config, shift_out = "shift_curve.csv";
    int shift_buckets = 12, shift_n = 2000;
    double shift_width = 5.0, shift_noise = 0.08;
    std::uint64_t shift_seed = 0;
    bool shift_force = false;
    shift->add_option("--config", shift_config, "Optional experiment config JSON");
    shift->add_option("--buckets", shift_buckets, "Number of rotation buckets");
    shift->add_option("--bucket-width", shift_width, "Bucket width in degrees");
    shift->add_option("--n", shift_n, "Moons sample count (without --config)");
    shift->add_option("--noise", shift_noise, "Moons noise sigma (without --config)");
    shift->add_option("--seed", shift_seed, "RNG seed (without --config)");
    shift->add_option("--out", shift_out, "Output CSV path");
    shift->add_flag("--force", shift_force, "Overwrite an existing file");

    auto* consec = diag->add_subcommand("consecutive",
                                        "Consecutive-domain A-distances of a finished run");
    std::string consec_config, consec_run, consec_out = "consecutive.csv";
    bool consec_force = false;
    consec->add_option("--config", consec_config, "Experiment config JSON")->required();
    consec->add_option("--run", consec_run, "Checkpoint directory of the run")->required();
    consec->add_option("--out", consec_out, "Output CSV path");
    consec->add_flag("--force", consec_force, "Overwrite an existing file");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run the selection/enhancement ablation grid");
    std::string abl_config, abl_arms, abl_seeds = "0,1,2,3,4";
    int abl_jobs = 1;
    bool abl_force = false;
    ablate->add_option("--config", abl_config, "Experiment config JSON")->required();
    ablate->add_option("--arms", abl_arms, "Comma-separated arm names (default: all 7)");
    ablate->add_option("--seeds", abl_seeds, "Comma-separated seeds");
    ablate->add_option("--jobs", abl_jobs, "Parallel workers");
    add_overrides(ablate);
    ablate->add_flag("--force", abl_force, "Overwrite existing outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    if (ov_stages >= 0) ov.stages = ov_stages;
    if (ov_seed >= 0) ov.seed = static_cast<std::uint64_t>(ov_seed);
    if (ov_resume >= 0) ov.resume = ov_resume;

    try {
        if (gen->parsed())
            return cmd_generate(gen_recipe, gen_n, gen_noise, gen_rotate, gen_seed, gen_out,
                                gen_force);
        if (tsrc->parsed()) return cmd_train_source(tsrc_config, ov, tsrc_force);
        if (adapt->parsed()) return cmd_adapt(adapt_config, ov, adapt_force);
        if (shift->parsed())
            return cmd_diagnose_shift(shift_config, shift_buckets, shift_width, shift_n,
                                      shift_noise, shift_seed, shift_out, shift_force);
        if (consec->parsed())
            return cmd_diagnose_consecutive(consec_config, consec_run, consec_out, consec_force);
        if (ablate->parsed())
            return cmd_ablate(abl_config, abl_arms, abl_seeds, abl_jobs, ov, abl_force);
    } catch (const RefuseOverwrite& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRefuseOverwrite;
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDiverged;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    }
    return kUsage;
}
