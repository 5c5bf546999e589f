#include "gradshift/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "gradshift/selection.hpp"

namespace gradshift {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

Eigen::MatrixXd subsample(const Eigen::MatrixXd& m, int count, Rng& rng) {
    std::vector<int> idx(m.rows());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Eigen::MatrixXd out(count, m.cols());
    for (int i = 0; i < count; ++i) out.row(i) = m.row(idx[i]);
    return out;
}

bool lex_less(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != b.rows()) return a.rows() < b.rows();
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            if (a(i, j) != b(i, j)) return a(i, j) < b(i, j);
    return false;
}

}  // namespace

double proxy_a_distance(const Eigen::MatrixXd& set_a, const Eigen::MatrixXd& set_b,
                        std::uint64_t seed) {
    require(set_a.rows() >= 4 && set_b.rows() >= 4, "proxy_a_distance: need >= 4 samples per set");
    require(set_a.cols() == set_b.cols(), "proxy_a_distance: dimension mismatch");

    // Canonical argument order so the measure is exactly symmetric for
    // equal-sized inputs.
    const bool swap = lex_less(set_b, set_a);
    const Eigen::MatrixXd& first = swap ? set_b : set_a;
    const Eigen::MatrixXd& second = swap ? set_a : set_b;

    const int n = static_cast<int>(std::min(first.rows(), second.rows()));
    Rng rng_a(derive_seed(seed, 0xa));
    Rng rng_b(derive_seed(seed, 0xb));
    const Eigen::MatrixXd bal_a = subsample(first, n, rng_a);
    const Eigen::MatrixXd bal_b = subsample(second, n, rng_b);

    const int n_train = n - n / 2;
    const int n_hold = n / 2;
    LabeledSet train;
    train.num_classes = 2;
    train.features.resize(2 * n_train, first.cols());
    train.features.topRows(n_train) = bal_a.topRows(n_train);
    train.features.bottomRows(n_train) = bal_b.topRows(n_train);
    train.labels.assign(2 * n_train, 0);
    std::fill(train.labels.begin() + n_train, train.labels.end(), 1);

    Eigen::MatrixXd hold(2 * n_hold, first.cols());
    hold.topRows(n_hold) = bal_a.bottomRows(n_hold);
    hold.bottomRows(n_hold) = bal_b.bottomRows(n_hold);
    std::vector<int> hold_labels(2 * n_hold, 0);
    std::fill(hold_labels.begin() + n_hold, hold_labels.end(), 1);

    // Fixed probe: [d, 16, 2], 300 iterations; keeps values comparable.
    TrainConfig cfg;
    cfg.iterations = 300;
    cfg.batch_labeled = std::min(64, 2 * n_train);
    cfg.seed = derive_seed(seed, 0xc);
    Classifier probe = Classifier::init({static_cast<int>(first.cols()), 16, 2},
                                        derive_seed(seed, 0xd));
    probe = train_source(std::move(probe), train, cfg);

    const double err = 1.0 - accuracy(probe, hold, hold_labels);
    return std::clamp(2.0 * (1.0 - 2.0 * err), 0.0, 2.0);
}

ShiftCurve shift_study(const LabeledSet& base, const ShiftStudyConfig& cfg) {
    require(cfg.num_buckets >= 1, "shift_study: need at least one bucket");
    require(cfg.bucket_width > 0.0, "shift_study: bucket width must be positive");
    auto [src_half, tgt_half] = split(base, 0.5, derive_seed(cfg.seed, 10));
    RotationSpec src_spec = cfg.source_spec;
    src_spec.seed = derive_seed(cfg.seed, 11);
    const LabeledSet source = rotate(src_half, src_spec);

    std::vector<int> dims;
    dims.push_back(source.dim());
    for (int h : cfg.hidden_dims) dims.push_back(h);
    dims.push_back(source.num_classes);
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = derive_seed(cfg.seed, 12);
    Classifier f = Classifier::init(dims, derive_seed(cfg.seed, 13));
    f = train_source(std::move(f), source, train_cfg);

    ShiftCurve curve;
    for (int r = 0; r < cfg.num_buckets; ++r) {
        RotationSpec spec{r * cfg.bucket_width, (r + 1) * cfg.bucket_width,
                          derive_seed(cfg.seed, 20 + static_cast<std::uint64_t>(r))};
        const LabeledSet bucket = rotate(tgt_half, spec);
        curve.r.push_back(r);
        curve.accuracy.push_back(accuracy(f, bucket.features, bucket.labels));
        curve.mean_max_prob.push_back(score_targets(f.forward(bucket.features)).scores.mean());
        curve.a_distance.push_back(proxy_a_distance(
            source.features, bucket.features, derive_seed(cfg.seed, 40 + static_cast<std::uint64_t>(r))));
    }
    return curve;
}

void write_shift_curve_csv(const ShiftCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "r,accuracy,mean_maxprob,a_dis\n";
    char buf[192];
    for (std::size_t i = 0; i < curve.r.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g", curve.r[i], curve.accuracy[i],
                      curve.mean_max_prob[i], curve.a_distance[i]);
        out << buf << '\n';
    }
}

namespace {

Eigen::MatrixXd domain_members(const IntermediateDomain& dom,
                               const Eigen::MatrixXd& source_features,
                               const Eigen::MatrixXd& target_features) {
    const int n = dom.active_source_count() + dom.active_target_count();
    Eigen::MatrixXd out(n, source_features.cols());
    int row = 0;
    for (std::size_t i = 0; i < dom.source_active.size(); ++i)
        if (dom.source_active[i]) out.row(row++) = source_features.row(static_cast<int>(i));
    for (std::size_t i = 0; i < dom.target_active.size(); ++i)
        if (dom.target_active[i]) out.row(row++) = target_features.row(static_cast<int>(i));
    return out;
}

}  // namespace

ConsecutiveCurve consecutive_discrepancy(const RunResult& run,
                                         const Eigen::MatrixXd& source_features,
                                         const Eigen::MatrixXd& target_features,
                                         std::uint64_t seed) {
    require(!run.domains.empty() && run.domains.size() == run.stage_models.size(),
            "consecutive_discrepancy: run carries no stage state");
    ConsecutiveCurve curve;
    for (std::size_t m = 0; m < run.domains.size(); ++m) {
        const Classifier& fm = run.stage_models[m];
        Eigen::MatrixXd prev;
        if (m == 0) {
            prev = source_features;  // M_0 = S
        } else {
            prev = domain_members(run.domains[m - 1], source_features, target_features);
        }
        const Eigen::MatrixXd cur =
            domain_members(run.domains[m], source_features, target_features);
        const Eigen::MatrixXd prev_phi = fm.features(prev);
        const Eigen::MatrixXd cur_phi = fm.features(cur);
        curve.stage.push_back(static_cast<int>(m + 1));
        curve.a_distance.push_back(
            proxy_a_distance(prev_phi, cur_phi, derive_seed(seed, 60 + m)));
    }
    const Classifier& last = run.stage_models.back();
    curve.source_target_distance =
        proxy_a_distance(last.features(source_features), last.features(target_features),
                         derive_seed(seed, 59));
    return curve;
}

void write_consecutive_csv(const ConsecutiveCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "m,a_dis\n";
    char buf[96];
    for (std::size_t i = 0; i < curve.stage.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g", curve.stage[i], curve.a_distance[i]);
        out << buf << '\n';
    }
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = (i + j) / 2.0 + 1.0;
        for (int k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "spearman: need matched series of length >= 2");
    const auto rx = ranks(x), ry = ranks(y);
    const int n = static_cast<int>(x.size());
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace gradshift
