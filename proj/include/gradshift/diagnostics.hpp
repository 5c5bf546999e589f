#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gradshift/common.hpp"
#include "gradshift/data.hpp"
#include "gradshift/model.hpp"
#include "gradshift/pipeline.hpp"

namespace gradshift {

// Shift-parameter sweep: per rotation bucket r, target accuracy, mean
// max-probability of the source model, and proxy A-distance to the source.
struct ShiftCurve {
    std::vector<int> r;
    std::vector<double> accuracy;
    std::vector<double> mean_max_prob;
    std::vector<double> a_distance;
};

// 2(1 - 2*eps) for the holdout error eps of a small fixed-architecture binary
// domain classifier ([d, 16, 2], 300 iterations), clamped to [0, 2]. The
// larger set is subsampled to balance; the split is 50/50 per set.
double proxy_a_distance(const Eigen::MatrixXd& set_a, const Eigen::MatrixXd& set_b,
                        std::uint64_t seed);

struct ShiftStudyConfig {
    RotationSpec source_spec{0.0, 5.0, 0};
    double bucket_width = 5.0;
    int num_buckets = 12;
    TrainConfig train;
    std::vector<int> hidden_dims = {32, 16};
    std::uint64_t seed = 0;
};

// Splits the base set into source and target halves, trains a source model on
// the rotated source, then measures each rotated target bucket.
ShiftCurve shift_study(const LabeledSet& base, const ShiftStudyConfig& cfg);

void write_shift_curve_csv(const ShiftCurve& curve, const std::string& path);

struct ConsecutiveCurve {
    std::vector<int> stage;
    std::vector<double> a_distance;        // between M_{m-1} and M_m under phi_m
    double source_target_distance = 0.0;   // direct S <-> T, final model features
};

// Materializes each stage's sample set from the run's intermediate domains
// and measures consecutive proxy A-distances in the stage model's feature
// space. Read-only over the run artifacts.
ConsecutiveCurve consecutive_discrepancy(const RunResult& run,
                                         const Eigen::MatrixXd& source_features,
                                         const Eigen::MatrixXd& target_features,
                                         std::uint64_t seed);

void write_consecutive_csv(const ConsecutiveCurve& curve, const std::string& path);

// Spearman rank correlation; ties get average ranks.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace gradshift
