#include "gradshift/ensemble.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace gradshift {

namespace {

constexpr double kDegreeFloor = 1e-12;
constexpr double kNormFloor = 1e-12;

std::vector<int> assign_nearest(const Eigen::MatrixXd& centers, const Eigen::MatrixXd& points) {
    std::vector<int> out(points.rows());
    for (int i = 0; i < points.rows(); ++i) {
        int best = 0;
        double best_d = (points.row(i) - centers.row(0)).squaredNorm();
        for (int k = 1; k < centers.rows(); ++k) {
            const double d = (points.row(i) - centers.row(k)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = k;
            }
        }
        out[i] = best;
    }
    return out;
}

Eigen::VectorXd kernel_over_centers(const Eigen::MatrixXd& centers, const Eigen::VectorXd& phi,
                                    DistanceKernel kernel) {
    const int k = static_cast<int>(centers.rows());
    Eigen::VectorXd d2(k);
    for (int c = 0; c < k; ++c) d2(c) = (phi.transpose() - centers.row(c)).squaredNorm();
    Eigen::VectorXd out(k);
    if (kernel == DistanceKernel::SoftmaxNegSq) {
        const double shift = -d2.minCoeff();
        out = (-d2.array() - shift).exp();
    } else {
        out = (1.0 / (1.0 + d2.array())).exp();
    }
    return out / out.sum();
}

}  // namespace

double kmeans_inertia(const Eigen::MatrixXd& centers, const Eigen::MatrixXd& points) {
    double total = 0.0;
    const auto assign = assign_nearest(centers, points);
    for (int i = 0; i < points.rows(); ++i)
        total += (points.row(i) - centers.row(assign[i])).squaredNorm();
    return total;
}

ClusterModel fit_clusters(const Eigen::MatrixXd& source_phi, const std::vector<int>& source_labels,
                          int num_classes, const Eigen::MatrixXd& target_phi) {
    ClusterModel cm;
    cm.source_centers = Eigen::MatrixXd::Zero(num_classes, source_phi.cols());
    std::vector<int> counts(num_classes, 0);
    for (int i = 0; i < source_phi.rows(); ++i) {
        cm.source_centers.row(source_labels[i]) += source_phi.row(i);
        ++counts[source_labels[i]];
    }
    for (int k = 0; k < num_classes; ++k) {
        if (counts[k] == 0)
            throw std::invalid_argument("fit_clusters: class " + std::to_string(k) +
                                        " has no source samples");
        cm.source_centers.row(k) /= counts[k];
    }

    cm.target_centers = cm.source_centers;
    std::vector<int> assign = assign_nearest(cm.target_centers, target_phi);
    for (int it = 0; it < 100; ++it) {
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(num_classes, target_phi.cols());
        std::vector<int> members(num_classes, 0);
        for (int i = 0; i < target_phi.rows(); ++i) {
            next.row(assign[i]) += target_phi.row(i);
            ++members[assign[i]];
        }
        for (int k = 0; k < num_classes; ++k) {
            if (members[k] > 0) next.row(k) /= members[k];
            else next.row(k) = cm.target_centers.row(k);  // empty cluster: keep center
        }
        cm.target_centers = next;
        cm.iterations_run = it + 1;
        auto next_assign = assign_nearest(cm.target_centers, target_phi);
        if (next_assign == assign) break;
        assign = std::move(next_assign);
    }
    return cm;
}

Eigen::VectorXd cluster_predict(const ClusterModel& cm, const Eigen::VectorXd& phi,
                                DistanceKernel kernel) {
    return kernel_over_centers(cm.target_centers, phi, kernel);
}

Eigen::MatrixXd cluster_predict_batch(const ClusterModel& cm, const Eigen::MatrixXd& phi,
                                      DistanceKernel kernel) {
    Eigen::MatrixXd out(phi.rows(), cm.target_centers.rows());
    for (int i = 0; i < phi.rows(); ++i)
        out.row(i) = cluster_predict(cm, phi.row(i).transpose(), kernel).transpose();
    return out;
}

PropagationGraph build_graph(const Eigen::MatrixXd& source_phi,
                             const std::vector<int>& source_labels, int num_classes,
                             const Eigen::MatrixXd& target_phi, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("build_graph: lambda must be >= 0");
    const int ns = static_cast<int>(source_phi.rows());
    const int nt = static_cast<int>(target_phi.rows());
    const int n = ns + nt;
    Eigen::MatrixXd phi(n, source_phi.cols());
    phi.topRows(ns) = source_phi;
    phi.bottomRows(nt) = target_phi;
    Eigen::VectorXd norms = phi.rowwise().norm().array() + kNormFloor;
    Eigen::MatrixXd unit = phi.array().colwise() / norms.array();

    PropagationGraph g;
    g.lambda = lambda;
    g.affinity = (unit * unit.transpose()).cwiseMax(0.0);
    g.affinity.diagonal().setZero();
    g.degree = g.affinity.rowwise().sum().cwiseMax(kDegreeFloor);
    g.label_matrix = Eigen::MatrixXd::Zero(n, num_classes);
    for (int i = 0; i < ns; ++i) g.label_matrix(i, source_labels[i]) = 1.0;
    return g;
}

namespace {

Eigen::MatrixXd normalized_affinity(const PropagationGraph& g) {
    Eigen::VectorXd inv_sqrt = g.degree.array().sqrt().inverse();
    return inv_sqrt.asDiagonal() * g.affinity * inv_sqrt.asDiagonal();
}

}  // namespace

Eigen::MatrixXd propagate_closed_form(const PropagationGraph& g) {
    if (g.n() > 4000)
        throw std::invalid_argument("propagate_closed_form: graph too large for dense solve");
    if (g.lambda == 0.0) return g.label_matrix;
    const Eigen::MatrixXd s = normalized_affinity(g);
    Eigen::MatrixXd system =
        (1.0 + g.lambda) * Eigen::MatrixXd::Identity(g.n(), g.n()) - g.lambda * s;
    Eigen::LLT<Eigen::MatrixXd> llt(system);
    if (llt.info() != Eigen::Success)
        throw NumericError("propagate_closed_form: dense solve failed");
    Eigen::MatrixXd f = llt.solve(g.label_matrix);
    if (!f.allFinite()) throw NumericError("propagate_closed_form: non-finite solution");
    return f;
}

PropagationResult propagate_iterative(const PropagationGraph& g, double tol, int max_iter) {
    return propagate_iterative(g, g.label_matrix, tol, max_iter);
}

PropagationResult propagate_iterative(const PropagationGraph& g, Eigen::MatrixXd initial,
                                      double tol, int max_iter) {
    const double alpha = g.lambda / (1.0 + g.lambda);
    PropagationResult res;
    res.scores = std::move(initial);
    if (alpha == 0.0) {
        res.scores = g.label_matrix;
        res.iterations = 1;
        return res;
    }
    const Eigen::MatrixXd s = normalized_affinity(g);
    for (int it = 0; it < max_iter; ++it) {
        Eigen::MatrixXd next = alpha * (s * res.scores) + (1.0 - alpha) * g.label_matrix;
        const double change = (next - res.scores).cwiseAbs().maxCoeff();
        res.scores = std::move(next);
        res.iterations = it + 1;
        if (change < tol) return res;
    }
    res.converged = false;
    return res;
}

PropagationPrediction propagation_predict(const Eigen::MatrixXd& scores, int row) {
    PropagationPrediction pred;
    const int k = static_cast<int>(scores.cols());
    const double total = scores.row(row).sum();
    if (total <= 0.0) {
        pred.probs = Eigen::VectorXd::Constant(k, 1.0 / k);
        pred.zero_row = true;
    } else {
        pred.probs = scores.row(row).transpose() / total;
    }
    return pred;
}

Eigen::VectorXd enhanced_indicator(const Eigen::VectorXd& net_probs,
                                   const Eigen::VectorXd& cluster_probs,
                                   const Eigen::VectorXd& propagation_probs) {
    if (net_probs.size() != cluster_probs.size() || net_probs.size() != propagation_probs.size())
        throw std::invalid_argument("enhanced_indicator: head dimension mismatch");
    return (net_probs + cluster_probs + propagation_probs) / 3.0;
}

void write_affinity_csv(const PropagationGraph& g, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "i,j,affinity\n";
    char buf[64];
    for (int i = 0; i < g.n(); ++i)
        for (int j = 0; j < g.n(); ++j) {
            if (g.affinity(i, j) == 0.0) continue;
            std::snprintf(buf, sizeof(buf), "%.17g", g.affinity(i, j));
            out << i << ',' << j << ',' << buf << '\n';
        }
}

void write_scores_matrix_csv(const Eigen::MatrixXd& scores, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    char buf[64];
    for (int i = 0; i < scores.rows(); ++i) {
        for (int j = 0; j < scores.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", scores(i, j));
            out << buf << (j + 1 < scores.cols() ? ',' : '\n');
        }
    }
}

}  // namespace gradshift
