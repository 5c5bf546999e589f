#include "gradshift/selection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace gradshift {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Kernel weights over squared distances to non-empty prototypes, normalized.
Eigen::VectorXd kernel_probs(const Eigen::VectorXd& sq_dists, const std::vector<bool>& valid,
                             DistanceKernel kernel) {
    const int k = static_cast<int>(sq_dists.size());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(k);
    if (kernel == DistanceKernel::SoftmaxNegSq) {
        // softmax over -d^2 with the usual max shift
        double best = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < k; ++i)
            if (valid[i]) best = std::max(best, -sq_dists(i));
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            if (!valid[i]) continue;
            out(i) = std::exp(-sq_dists(i) - best);
            total += out(i);
        }
        out /= total;
    } else {
        double total = 0.0;
        for (int i = 0; i < k; ++i) {
            if (!valid[i]) continue;
            out(i) = std::exp(1.0 / (1.0 + sq_dists(i)));
            total += out(i);
        }
        out /= total;
    }
    return out;
}

}  // namespace

int IntermediateDomain::active_source_count() const {
    return static_cast<int>(std::count(source_active.begin(), source_active.end(), 1));
}

int IntermediateDomain::active_target_count() const {
    return static_cast<int>(std::count(target_active.begin(), target_active.end(), 1));
}

ScoreTable score_targets(const Eigen::MatrixXd& probs) {
    ScoreTable table;
    table.provenance = "max-probability";
    table.scores.resize(probs.rows());
    for (int i = 0; i < probs.rows(); ++i) {
        const double s = probs.row(i).maxCoeff();
        if (!std::isfinite(s))
            throw NumericError("score_targets: non-finite probability at sample " +
                               std::to_string(i));
        table.scores(i) = s;
    }
    return table;
}

std::vector<std::uint8_t> select_top(const ScoreTable& scores, int k) {
    const int n = scores.n();
    require(k >= 0 && k <= n, "select_top: k out of range");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores.scores(a) != scores.scores(b)) return scores.scores(a) > scores.scores(b);
        return a < b;
    });
    std::vector<std::uint8_t> out(n, 0);
    for (int i = 0; i < k; ++i) out[order[i]] = 1;
    return out;
}

Prototypes prototypes_from(const Eigen::MatrixXd& phi, const std::vector<int>& pseudo, int k) {
    Prototypes p;
    p.centers = Eigen::MatrixXd::Zero(k, phi.cols());
    p.counts.assign(k, 0);
    for (int i = 0; i < phi.rows(); ++i) {
        p.centers.row(pseudo[i]) += phi.row(i);
        ++p.counts[pseudo[i]];
    }
    for (int c = 0; c < k; ++c)
        if (p.counts[c] > 0) p.centers.row(c) /= p.counts[c];
    return p;
}

Prototypes compute_prototypes(const Classifier& model, const Eigen::MatrixXd& target_features_raw) {
    const Eigen::MatrixXd probs = model.forward(target_features_raw);
    const Eigen::MatrixXd phi = model.features(target_features_raw);
    return prototypes_from(phi, pseudo_labels(probs), model.num_classes());
}

ScoreTable score_sources(const Eigen::MatrixXd& source_phi, const std::vector<int>& source_labels,
                         const Prototypes& protos, DistanceKernel kernel) {
    const int k = protos.num_classes();
    std::vector<bool> valid(k);
    bool any_valid = false;
    for (int c = 0; c < k; ++c) {
        valid[c] = !protos.empty(c);
        any_valid |= valid[c];
    }
    if (!any_valid) throw StateError("score_sources: all prototypes are empty");

    ScoreTable table;
    table.provenance = "target-prototype";
    table.scores.resize(source_phi.rows());
    for (int i = 0; i < source_phi.rows(); ++i) {
        const int y = source_labels[i];
        if (!valid[y]) {
            table.scores(i) = 0.0;
            continue;
        }
        Eigen::VectorXd d2(k);
        for (int c = 0; c < k; ++c)
            d2(c) = valid[c]
                        ? (source_phi.row(i) - protos.centers.row(c)).squaredNorm()
                        : 0.0;
        table.scores(i) = kernel_probs(d2, valid, kernel)(y);
    }
    return table;
}

int proportional_count(int stage_share, int num_stages, int n) {
    return static_cast<int>(
        std::llround(static_cast<double>(stage_share) * n / num_stages));
}

IntermediateDomain build_intermediate(int stage, int num_stages, const ScoreTable& target_scores,
                                      const ScoreTable& source_scores,
                                      const std::vector<int>& pseudo_labels) {
    require(num_stages >= 1 && stage >= 1 && stage <= num_stages,
            "build_intermediate: stage out of [1, M]");
    require(static_cast<int>(pseudo_labels.size()) == target_scores.n(),
            "build_intermediate: pseudo label count mismatch");
    IntermediateDomain dom;
    dom.stage = stage;
    const int k_t = proportional_count(stage, num_stages, target_scores.n());
    const int k_s = proportional_count(num_stages - stage, num_stages, source_scores.n());
    dom.target_active = select_top(target_scores, k_t);
    dom.source_active = select_top(source_scores, k_s);
    dom.target_pseudo_labels.assign(pseudo_labels.size(), -1);
    for (std::size_t i = 0; i < pseudo_labels.size(); ++i)
        if (dom.target_active[i]) dom.target_pseudo_labels[i] = pseudo_labels[i];
    return dom;
}

std::vector<std::uint8_t> random_indicator(int n, int k, std::uint64_t seed) {
    require(k >= 0 && k <= n, "random_indicator: k out of range");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::uint8_t> out(n, 0);
    for (int i = 0; i < k; ++i) out[idx[i]] = 1;
    return out;
}

void write_scores_csv(const ScoreTable& scores, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "index,score\n";
    char buf[64];
    for (int i = 0; i < scores.n(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", scores.scores(i));
        out << i << ',' << buf << '\n';
    }
}

void write_indicator_csv(const std::vector<std::uint8_t>& indicator, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "index,active\n";
    for (std::size_t i = 0; i < indicator.size(); ++i)
        out << i << ',' << int(indicator[i]) << '\n';
}

}  // namespace gradshift
