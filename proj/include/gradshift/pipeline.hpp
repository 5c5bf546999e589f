#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "gradshift/common.hpp"
#include "gradshift/data.hpp"
#include "gradshift/ensemble.hpp"
#include "gradshift/model.hpp"
#include "gradshift/selection.hpp"

#include "json.hpp"

namespace gradshift {

enum class RunMode { DA, SSDA };
enum class SelectionPolicy { Ours, Random, All };

std::string to_string(SelectionPolicy p);
SelectionPolicy selection_policy_from_string(const std::string& s);

struct RunConfig {
    int num_stages = 20;  // M
    RunMode mode = RunMode::DA;
    TrainConfig train;         // source training; batch/schedule settings shared
    int adapt_iterations = 0;  // total across stages; 0 means train.iterations
    bool ensemble_for_selection = true;
    bool ensemble_for_labeling = true;
    SelectionPolicy target_selection = SelectionPolicy::Ours;
    SelectionPolicy source_selection = SelectionPolicy::Ours;
    double lambda = 1.0;
    DistanceKernel kernel = DistanceKernel::SoftmaxNegSq;
    std::uint64_t seed = 0;
    std::vector<int> hidden_dims = {32, 16};  // phi architecture between d and K
    std::string checkpoint_dir;  // empty disables checkpointing
    int resume_from_stage = 0;   // skip stages up to here, loading the checkpoint

    void validate() const;
    int per_stage_iterations() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& doc);

struct StageReport {
    int stage = 0;
    int active_source = 0;
    int active_target = 0;
    double target_accuracy = std::numeric_limits<double>::quiet_NaN();
    double pseudo_agreement = 1.0;
    double consecutive_a_distance = std::numeric_limits<double>::quiet_NaN();
    double wall_time_s = 0.0;
};

struct RunResult {
    Classifier final_model;
    std::vector<StageReport> stage_reports;
    nlohmann::json config_echo;
    double final_accuracy = std::numeric_limits<double>::quiet_NaN();
    // Materialized per-stage state kept for diagnostics.
    std::vector<IntermediateDomain> domains;
    std::vector<Classifier> stage_models;
};

nlohmann::json report_json(const RunResult& result);
void write_report(const RunResult& result, const std::string& path);

// Minimal JSON Schema checker (type / required / properties / items / enum)
// used to hold report.json to the published schema.
bool validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                             std::string* error = nullptr);

// The gradual loop: train the source model, then self-train a chain of
// auxiliary models over proportionally evolving intermediate domains.
// eval_labels, when given, are used for reporting only.
RunResult run_da(const LabeledSet& source, const UnlabeledSet& target, const RunConfig& cfg,
                 const std::vector<int>* eval_labels = nullptr);

// SSDA variant: the labeled-target set joins the labeled pool of every stage
// with its true labels and is excluded from selection scheduling.
RunResult run_ssda(const LabeledSet& source, const SsdaSplit& split, const RunConfig& cfg);

struct AblationArm {
    std::string name;
    SelectionPolicy target_selection = SelectionPolicy::Ours;
    SelectionPolicy source_selection = SelectionPolicy::Ours;
    bool ensemble_for_selection = true;
    bool ensemble_for_labeling = true;
};

// The seven-arm grid: full, Selection-T in {x, R}, Selection-S in {x, R},
// both enhancements off, labeling enhancement off.
std::vector<AblationArm> default_ablation_arms();

struct AblationRow {
    std::string arm;
    SelectionPolicy target_selection;
    SelectionPolicy source_selection;
    bool ensemble_for_selection;
    bool ensemble_for_labeling;
    std::uint64_t seed;
    double accuracy;
};

std::vector<AblationRow> run_ablation_grid(const LabeledSet& source, const UnlabeledSet& target,
                                           const std::vector<int>& eval_labels,
                                           const RunConfig& base_cfg,
                                           const std::vector<AblationArm>& arms,
                                           const std::vector<std::uint64_t>& seeds,
                                           int jobs = 1);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace gradshift
