#include <cmath>

#include "doctest.h"
#include "gradshift/ensemble.hpp"

using namespace gradshift;

namespace {

Eigen::MatrixXd col(std::initializer_list<double> values) {
    Eigen::MatrixXd m(static_cast<int>(values.size()), 1);
    int i = 0;
    for (double v : values) m(i++, 0) = v;
    return m;
}

}  // namespace

TEST_CASE("fit_clusters: fixed point stays put") {
    // targets already partitioned exactly at the source class means
    const auto src = col({0.0, 10.0});
    const auto tgt = col({-1.0, 1.0, 9.0, 11.0});
    const auto cm = fit_clusters(src, {0, 1}, 2, tgt);
    CHECK(cm.target_centers(0, 0) == doctest::Approx(0.0));
    CHECK(cm.target_centers(1, 0) == doctest::Approx(10.0));
    CHECK(cm.source_centers(0, 0) == doctest::Approx(0.0));
    CHECK(cm.source_centers(1, 0) == doctest::Approx(10.0));
}

TEST_CASE("fit_clusters: one Lloyd sweep on a hand-solved instance") {
    // init centers 0.4 and 9.6; assignment splits {0,1} vs {9,10}; the next
    // (and final) centers are the cluster means 0.5 and 9.5
    Eigen::MatrixXd src(4, 1);
    src << 0.1, 0.7, 9.3, 9.9;
    const auto tgt = col({0.0, 1.0, 9.0, 10.0});
    const auto cm = fit_clusters(src, {0, 0, 1, 1}, 2, tgt);
    CHECK(cm.target_centers(0, 0) == doctest::Approx(0.5));
    CHECK(cm.target_centers(1, 0) == doctest::Approx(9.5));
    CHECK(cm.iterations_run >= 1);
}

TEST_CASE("fit_clusters: empty cluster keeps its center, missing class rejected") {
    const auto src = col({0.0, 100.0});
    const auto tgt = col({-1.0, 0.5, 1.5});  // nothing near 100
    const auto cm = fit_clusters(src, {0, 1}, 2, tgt);
    CHECK(cm.target_centers(1, 0) == doctest::Approx(100.0));

    CHECK_THROWS_AS(fit_clusters(src, {0, 0}, 2, tgt), std::invalid_argument);
}

TEST_CASE("fit_clusters: inertia never worse than the initialization") {
    Rng rng(42);
    std::normal_distribution<double> noise(0.0, 1.0);
    Eigen::MatrixXd src(20, 2), tgt(60, 2);
    std::vector<int> labels(20);
    for (int i = 0; i < 20; ++i) {
        const int c = i % 2;
        labels[i] = c;
        src(i, 0) = 5.0 * c + noise(rng);
        src(i, 1) = noise(rng);
    }
    for (int i = 0; i < 60; ++i) {
        tgt(i, 0) = 5.0 * (i % 2) + noise(rng);
        tgt(i, 1) = noise(rng);
    }
    const auto cm = fit_clusters(src, labels, 2, tgt);
    CHECK(kmeans_inertia(cm.target_centers, tgt) <= kmeans_inertia(cm.source_centers, tgt) + 1e-9);
}

TEST_CASE("cluster_predict: distribution shape and argmax") {
    ClusterModel cm;
    cm.target_centers = col({0.0, 10.0});
    cm.source_centers = cm.target_centers;

    Eigen::VectorXd mid(1);
    mid << 5.0;
    const auto p_mid = cluster_predict(cm, mid);
    CHECK(p_mid(0) == doctest::Approx(0.5));
    CHECK(p_mid.sum() == doctest::Approx(1.0));

    Eigen::VectorXd near(1);
    near << 1.0;
    const auto p = cluster_predict(cm, near);
    CHECK(p(0) > p(1));
    CHECK(p.minCoeff() >= 0.0);

    Eigen::MatrixXd batch(2, 1);
    batch << 5.0, 1.0;
    const auto pb = cluster_predict_batch(cm, batch);
    CHECK(pb.row(0).transpose().isApprox(p_mid, 1e-12));
    CHECK(pb.row(1).transpose().isApprox(p, 1e-12));

    const auto ps = cluster_predict(cm, near, DistanceKernel::StudentExp);
    const double w0 = std::exp(1.0 / 2.0), w1 = std::exp(1.0 / 82.0);
    CHECK(ps(0) == doctest::Approx(w0 / (w0 + w1)).epsilon(1e-12));
}

TEST_CASE("build_graph: cosine affinities, clamping, structure") {
    Eigen::MatrixXd src(2, 2), tgt(1, 2);
    src << 1, 0, -1, 0;  // antiparallel pair -> clamped to 0
    tgt << 2, 0;         // parallel to row 0 -> affinity 1 despite scale
    const auto g = build_graph(src, {0, 1}, 2, tgt, 1.0);
    CHECK(g.n() == 3);
    CHECK(g.num_classes() == 2);
    CHECK(g.affinity(0, 1) == doctest::Approx(0.0));
    CHECK(g.affinity(0, 2) == doctest::Approx(1.0));
    CHECK(g.affinity(1, 2) == doctest::Approx(0.0));
    for (int i = 0; i < 3; ++i) CHECK(g.affinity(i, i) == 0.0);
    CHECK(g.affinity.isApprox(g.affinity.transpose(), 1e-12));
    // one-hot source rows, zero target rows
    CHECK(g.label_matrix(0, 0) == 1.0);
    CHECK(g.label_matrix(1, 1) == 1.0);
    CHECK(g.label_matrix.row(2).sum() == 0.0);
    // degree floor keeps the isolated-ish node usable
    CHECK(g.degree.minCoeff() >= 1e-12);
}

TEST_CASE("propagation: lambda=0 returns the labels") {
    Eigen::MatrixXd src(2, 2), tgt(1, 2);
    src << 1, 0, 0, 1;
    tgt << 1, 1;
    const auto g = build_graph(src, {0, 1}, 2, tgt, 0.0);
    const auto f = propagate_closed_form(g);
    CHECK(f.isApprox(g.label_matrix, 1e-12));
}

TEST_CASE("propagation: disconnected graph scales labels by 1/(1+lambda)") {
    PropagationGraph g;
    g.affinity = Eigen::MatrixXd::Zero(2, 2);
    g.degree = Eigen::VectorXd::Constant(2, 1e-12);
    g.label_matrix = Eigen::MatrixXd::Identity(2, 2);
    g.lambda = 3.0;
    const auto f = propagate_closed_form(g);
    CHECK(f.isApprox(g.label_matrix / 4.0, 1e-9));
}

TEST_CASE("propagation: three-node path against a direct dense solve") {
    PropagationGraph g;
    g.affinity = Eigen::MatrixXd::Zero(3, 3);
    g.affinity(0, 1) = g.affinity(1, 0) = 1.0;
    g.affinity(1, 2) = g.affinity(2, 1) = 1.0;
    g.degree = g.affinity.rowwise().sum();
    g.label_matrix = Eigen::MatrixXd::Zero(3, 2);
    g.label_matrix(0, 0) = 1.0;
    g.label_matrix(2, 1) = 1.0;
    g.lambda = 1.0;

    // test-side solve written out independently
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            s(i, j) = g.affinity(i, j) / std::sqrt(g.degree(i) * g.degree(j));
    const Eigen::MatrixXd lhs =
        Eigen::MatrixXd::Identity(3, 3) + g.lambda * (Eigen::MatrixXd::Identity(3, 3) - s);
    const Eigen::MatrixXd expected = lhs.fullPivLu().solve(g.label_matrix);

    const auto f = propagate_closed_form(g);
    CHECK(f.isApprox(expected, 1e-10));
    // the unlabeled middle node sees both ends symmetrically
    CHECK(f(1, 0) == doctest::Approx(f(1, 1)).epsilon(1e-12));
    CHECK(f.minCoeff() >= 0.0);
}

TEST_CASE("propagation: iterative and closed-form solutions agree") {
    Rng rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double lambda : {0.1, 1.0, 10.0}) {
        const int n = 50;
        Eigen::MatrixXd phi(n, 4);
        std::vector<int> labels;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 4; ++j) phi(i, j) = u(rng);
        Eigen::MatrixXd src = phi.topRows(20), tgt = phi.bottomRows(30);
        for (int i = 0; i < 20; ++i) labels.push_back(i % 3);
        const auto g = build_graph(src, labels, 3, tgt, lambda);
        const auto closed = propagate_closed_form(g);
        const auto iter = propagate_iterative(g, 1e-13, 20000);
        CHECK(iter.converged);
        CHECK((iter.scores - closed).cwiseAbs().maxCoeff() < 1e-6);

        // starting at the fixed point converges immediately
        const auto at_fix = propagate_iterative(g, closed, 1e-10, 10);
        CHECK(at_fix.iterations <= 1);
        CHECK(at_fix.scores.isApprox(closed, 1e-8));
    }
}

TEST_CASE("propagation: alpha=0 limit reproduces one trivial step") {
    // lambda -> 0 makes alpha = 0, so a single update lands on (1-alpha) Y = Y
    Eigen::MatrixXd src(2, 2), tgt(2, 2);
    src << 1, 0, 0, 1;
    tgt << 1, 1, -1, 1;
    const auto g = build_graph(src, {0, 1}, 2, tgt, 0.0);
    const auto r = propagate_iterative(g, 1e-12, 100);
    CHECK(r.scores.isApprox(g.label_matrix, 1e-12));
}

TEST_CASE("propagation_predict: normalization and zero-row fallback") {
    Eigen::MatrixXd f(2, 3);
    f << 1, 2, 1, 0, 0, 0;
    const auto p = propagation_predict(f, 0);
    CHECK_FALSE(p.zero_row);
    CHECK(p.probs(1) == doctest::Approx(0.5));
    CHECK(p.probs.sum() == doctest::Approx(1.0));

    const auto z = propagation_predict(f, 1);
    CHECK(z.zero_row);
    for (int k = 0; k < 3; ++k) CHECK(z.probs(k) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("enhanced_indicator: mean of the three heads") {
    Eigen::VectorXd a(2), b(2), c(2);
    a << 1.0, 0.0;
    b << 0.5, 0.5;
    c << 0.0, 1.0;
    const auto m = enhanced_indicator(a, b, c);
    CHECK(m(0) == doctest::Approx(0.5));
    CHECK(m(1) == doctest::Approx(0.5));
    CHECK(m.sum() == doctest::Approx(1.0));

    // identical heads are a fixed point of the averaging
    const auto same = enhanced_indicator(b, b, b);
    CHECK(same.isApprox(b, 1e-12));

    Eigen::VectorXd bad(3);
    bad << 0.2, 0.3, 0.5;
    CHECK_THROWS_AS(enhanced_indicator(a, b, bad), std::invalid_argument);
}

TEST_CASE("build_graph is invariant to feature scale") {
    Rng rng(5);
    std::normal_distribution<double> n01(0.0, 1.0);
    Eigen::MatrixXd src(6, 3), tgt(8, 3);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 3; ++j) src(i, j) = n01(rng);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 3; ++j) tgt(i, j) = n01(rng);
    std::vector<int> labels = {0, 1, 0, 1, 0, 1};
    const auto g1 = build_graph(src, labels, 2, tgt, 1.0);
    const auto g2 = build_graph(3.7 * src, labels, 2, 3.7 * tgt, 1.0);
    CHECK(g1.affinity.isApprox(g2.affinity, 1e-10));
}
