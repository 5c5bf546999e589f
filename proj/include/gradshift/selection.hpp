#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gradshift/common.hpp"
#include "gradshift/model.hpp"

namespace gradshift {

// Reading of the exp(1 + d^2)^{-1} distance kernel. SoftmaxNegSq treats it as
// [exp(1 + d^2)]^{-1}, which normalizes to a softmax over negative squared
// distances; StudentExp is the alternative exp((1 + d^2)^{-1}) reading.
enum class DistanceKernel { SoftmaxNegSq, StudentExp };

struct ScoreTable {
    Eigen::VectorXd scores;  // in [0, 1]
    std::string provenance;

    int n() const { return static_cast<int>(scores.size()); }
};

struct Prototypes {
    Eigen::MatrixXd centers;  // K x feature_dim, rows of empty classes unspecified
    std::vector<int> counts;  // pseudo-label counts per class

    int num_classes() const { return static_cast<int>(counts.size()); }
    bool empty(int k) const { return counts[k] == 0; }
};

struct IntermediateDomain {
    int stage = 0;
    std::vector<std::uint8_t> source_active;
    std::vector<std::uint8_t> target_active;
    std::vector<int> target_pseudo_labels;  // -1 where inactive

    int active_source_count() const;
    int active_target_count() const;
};

// Max prediction probability per row.
ScoreTable score_targets(const Eigen::MatrixXd& probs);

// Exactly k ones on the samples ranked highest by (score desc, index asc).
std::vector<std::uint8_t> select_top(const ScoreTable& scores, int k);

// Per-class means of target features under the model's pseudo labels.
Prototypes compute_prototypes(const Classifier& model, const Eigen::MatrixXd& target_features_raw);
Prototypes prototypes_from(const Eigen::MatrixXd& phi, const std::vector<int>& pseudo, int k);

// Prototype-classifier probability of each source sample's own class. Empty
// classes are excluded from the denominator; own-class-empty samples score 0.
ScoreTable score_sources(const Eigen::MatrixXd& source_phi, const std::vector<int>& source_labels,
                         const Prototypes& protos,
                         DistanceKernel kernel = DistanceKernel::SoftmaxNegSq);

// Proportional top-k construction of the stage-m intermediate domain:
// round(m*n_t/M) targets, round((M-m)*n_s/M) sources, half rounded up.
IntermediateDomain build_intermediate(int stage, int num_stages, const ScoreTable& target_scores,
                                      const ScoreTable& source_scores,
                                      const std::vector<int>& pseudo_labels);

int proportional_count(int stage_share, int num_stages, int n);

std::vector<std::uint8_t> random_indicator(int n, int k, std::uint64_t seed);

void write_scores_csv(const ScoreTable& scores, const std::string& path);
void write_indicator_csv(const std::vector<std::uint8_t>& indicator, const std::string& path);

}  // namespace gradshift
