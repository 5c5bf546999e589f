#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gradshift/common.hpp"
#include "gradshift/data.hpp"
#include "gradshift/model.hpp"
#include "gradshift/selection.hpp"

namespace gradshift {

struct ClusterModel {
    Eigen::MatrixXd target_centers;  // K x feature_dim
    Eigen::MatrixXd source_centers;
    int iterations_run = 0;
};

struct PropagationGraph {
    Eigen::MatrixXd affinity;  // symmetric, nonnegative, zero diagonal
    Eigen::VectorXd degree;    // row sums, clamped below at 1e-12
    Eigen::MatrixXd label_matrix;  // one-hot source rows, zero target rows
    double lambda = 1.0;

    int n() const { return static_cast<int>(affinity.rows()); }
    int num_classes() const { return static_cast<int>(label_matrix.cols()); }
};

struct PropagationResult {
    Eigen::MatrixXd scores;  // n x K
    bool converged = true;
    int iterations = 0;
};

// Lloyd's k-means over target features, initialized at per-class source
// means. Stops when assignments are unchanged or after 100 iterations; a
// cluster that loses all members keeps its previous center.
ClusterModel fit_clusters(const Eigen::MatrixXd& source_phi, const std::vector<int>& source_labels,
                          int num_classes, const Eigen::MatrixXd& target_phi);

Eigen::VectorXd cluster_predict(const ClusterModel& cm, const Eigen::VectorXd& phi,
                                DistanceKernel kernel = DistanceKernel::SoftmaxNegSq);
Eigen::MatrixXd cluster_predict_batch(const ClusterModel& cm, const Eigen::MatrixXd& phi,
                                      DistanceKernel kernel = DistanceKernel::SoftmaxNegSq);

double kmeans_inertia(const Eigen::MatrixXd& centers, const Eigen::MatrixXd& points);

// Cosine-affinity graph over stacked source (first) and target features, with
// negatives clamped to zero and a zero diagonal.
PropagationGraph build_graph(const Eigen::MatrixXd& source_phi,
                             const std::vector<int>& source_labels, int num_classes,
                             const Eigen::MatrixXd& target_phi, double lambda);

// Stationarity of the fidelity-plus-smoothness objective gives
// F = (I + lambda (I - S))^{-1} Y with S = D^{-1/2} A D^{-1/2}.
Eigen::MatrixXd propagate_closed_form(const PropagationGraph& g);

// Fixed-point iteration F <- alpha S F + (1-alpha) Y, alpha = lambda/(1+lambda).
PropagationResult propagate_iterative(const PropagationGraph& g, double tol = 1e-10,
                                      int max_iter = 1000);
PropagationResult propagate_iterative(const PropagationGraph& g, Eigen::MatrixXd initial,
                                      double tol, int max_iter);

// Row of F normalized to a distribution; all-zero rows yield a flagged
// uniform vector.
struct PropagationPrediction {
    Eigen::VectorXd probs;
    bool zero_row = false;
};
PropagationPrediction propagation_predict(const Eigen::MatrixXd& scores, int row);

// Arithmetic mean of the three heads' probability vectors.
Eigen::VectorXd enhanced_indicator(const Eigen::VectorXd& net_probs,
                                   const Eigen::VectorXd& cluster_probs,
                                   const Eigen::VectorXd& propagation_probs);

void write_affinity_csv(const PropagationGraph& g, const std::string& path);
void write_scores_matrix_csv(const Eigen::MatrixXd& scores, const std::string& path);

}  // namespace gradshift
