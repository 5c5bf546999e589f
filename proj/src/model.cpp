#include "gradshift/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace gradshift {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

std::vector<int> active_of(const std::vector<int>& indices, const std::vector<std::uint8_t>& w) {
    std::vector<int> out;
    for (std::size_t i = 0; i < indices.size(); ++i)
        if (w[i]) out.push_back(static_cast<int>(i));
    return out;
}

// Without replacement when the pool is large enough, otherwise uniform with
// replacement.
std::vector<int> sample_batch(const std::vector<int>& pool, int count, Rng& rng) {
    std::vector<int> out;
    out.reserve(count);
    const int n = static_cast<int>(pool.size());
    if (n >= count) {
        std::vector<int> idx(pool);
        for (int i = 0; i < count; ++i) {
            std::uniform_int_distribution<int> pick(i, n - 1);
            std::swap(idx[i], idx[pick(rng)]);
            out.push_back(idx[i]);
        }
    } else {
        std::uniform_int_distribution<int> pick(0, n - 1);
        for (int i = 0; i < count; ++i) out.push_back(pool[pick(rng)]);
    }
    return out;
}

Eigen::MatrixXd softmax_rows(Eigen::MatrixXd logits) {
    for (int i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        logits.row(i) = (logits.row(i).array() - m).exp();
        logits.row(i) /= logits.row(i).sum();
    }
    return logits;
}

}  // namespace

std::vector<int> WeightedBatchSpec::active_labeled() const {
    return active_of(labeled_indices, labeled_weights);
}

std::vector<int> WeightedBatchSpec::active_pseudo() const {
    return active_of(pseudo_indices, pseudo_weights);
}

Classifier Classifier::init(const std::vector<int>& layer_dims, std::uint64_t seed) {
    require(layer_dims.size() >= 2, "Classifier::init: need at least [d, K]");
    require(layer_dims.back() >= 2, "Classifier::init: K must be >= 2");
    for (int d : layer_dims) require(d >= 1, "Classifier::init: zero layer width");
    Classifier c;
    c.dims_ = layer_dims;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const int in = layer_dims[l], out = layer_dims[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        Eigen::MatrixXd w(in, out);
        for (int i = 0; i < in; ++i)
            for (int j = 0; j < out; ++j) w(i, j) = u(rng);
        c.weights_.push_back(std::move(w));
        c.biases_.push_back(Eigen::RowVectorXd::Zero(out));
        c.w_momentum_.push_back(Eigen::MatrixXd::Zero(in, out));
        c.b_momentum_.push_back(Eigen::RowVectorXd::Zero(out));
    }
    return c;
}

Eigen::MatrixXd Classifier::forward(const Eigen::MatrixXd& x) const {
    require(x.cols() == input_dim(), "forward: feature dimension mismatch");
    Eigen::MatrixXd a = x;
    for (int l = 0; l < num_layers(); ++l) {
        Eigen::MatrixXd z = (a * weights_[l]).rowwise() + biases_[l];
        if (l + 1 < num_layers()) a = z.cwiseMax(0.0);
        else return softmax_rows(std::move(z));
    }
    return a;  // unreachable
}

Eigen::VectorXd Classifier::forward_one(const Eigen::VectorXd& x) const {
    return forward(x.transpose()).row(0).transpose();
}

Eigen::MatrixXd Classifier::features(const Eigen::MatrixXd& x) const {
    require(x.cols() == input_dim(), "features: feature dimension mismatch");
    Eigen::MatrixXd a = x;
    for (int l = 0; l + 1 < num_layers(); ++l)
        a = ((a * weights_[l]).rowwise() + biases_[l]).cwiseMax(0.0);
    return a;
}

Classifier::Gradients Classifier::loss_and_grad(const Eigen::MatrixXd& x_labeled,
                                                const std::vector<int>& y_labeled,
                                                double coef_labeled,
                                                const Eigen::MatrixXd& x_pseudo,
                                                const std::vector<int>& y_pseudo,
                                                double coef_pseudo) const {
    Gradients g;
    for (int l = 0; l < num_layers(); ++l) {
        g.dw.emplace_back(Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
        g.db.emplace_back(Eigen::RowVectorXd::Zero(biases_[l].size()));
    }
    auto accumulate = [&](const Eigen::MatrixXd& x, const std::vector<int>& y, double coef) {
        if (x.rows() == 0 || coef == 0.0) return;
        std::vector<Eigen::MatrixXd> act;  // activations per layer, act[0] = x
        act.push_back(x);
        for (int l = 0; l < num_layers(); ++l) {
            Eigen::MatrixXd z = (act.back() * weights_[l]).rowwise() + biases_[l];
            act.push_back(l + 1 < num_layers() ? z.cwiseMax(0.0).eval()
                                               : softmax_rows(std::move(z)));
        }
        const Eigen::MatrixXd& probs = act.back();
        for (int i = 0; i < x.rows(); ++i)
            g.loss -= coef * std::log(std::max(probs(i, y[i]), 1e-300));
        // delta at the softmax layer: coef * (p - onehot)
        Eigen::MatrixXd delta = probs * coef;
        for (int i = 0; i < x.rows(); ++i) delta(i, y[i]) -= coef;
        for (int l = num_layers() - 1; l >= 0; --l) {
            g.dw[l] += act[l].transpose() * delta;
            g.db[l] += delta.colwise().sum();
            if (l > 0) {
                delta = delta * weights_[l].transpose();
                delta = delta.cwiseProduct((act[l].array() > 0.0).cast<double>().matrix());
            }
        }
    };
    accumulate(x_labeled, y_labeled, coef_labeled);
    accumulate(x_pseudo, y_pseudo, coef_pseudo);
    return g;
}

void Classifier::reset_momentum() {
    for (auto& m : w_momentum_) m.setZero();
    for (auto& m : b_momentum_) m.setZero();
}

void Classifier::sgd_step(const Gradients& g, double lr, double momentum, double weight_decay) {
    for (int l = 0; l < num_layers(); ++l) {
        Eigen::MatrixXd dw = g.dw[l];
        if (weight_decay != 0.0) dw += weight_decay * weights_[l];
        w_momentum_[l] = momentum * w_momentum_[l] - lr * dw;
        b_momentum_[l] = momentum * b_momentum_[l] - lr * g.db[l];
        weights_[l] += w_momentum_[l];
        biases_[l] += b_momentum_[l];
    }
}

int pseudo_label(const Eigen::VectorXd& probs) {
    require(probs.size() > 0, "pseudo_label: empty probability vector");
    int best = 0;
    for (int k = 1; k < probs.size(); ++k)
        if (probs(k) > probs(best)) best = k;
    return best;
}

std::vector<int> pseudo_labels(const Eigen::MatrixXd& probs) {
    std::vector<int> out(probs.rows());
    for (int i = 0; i < probs.rows(); ++i)
        out[i] = pseudo_label(probs.row(i).transpose());
    return out;
}

double learning_rate(const TrainConfig& cfg, double p) {
    return cfg.eta0 / std::pow(1.0 + cfg.alpha * p, cfg.beta);
}

Eigen::VectorXd augment(const Eigen::VectorXd& x, double sigma, bool raster, Rng& rng) {
    require(sigma >= 0.0, "augment: sigma must be >= 0");
    if (raster) {
        std::uniform_real_distribution<double> angle(-10.0, 10.0);
        std::uniform_int_distribution<int> shift(-1, 1);
        const double a = angle(rng);
        const int dx = shift(rng), dy = shift(rng);
        if (a == 0.0 && dx == 0 && dy == 0) return x;
        return rotate_raster(x, a, dx, dy);
    }
    if (sigma == 0.0) return x;
    std::normal_distribution<double> noise(0.0, sigma);
    Eigen::VectorXd out = x;
    for (int i = 0; i < out.size(); ++i) out(i) += noise(rng);
    return out;
}

namespace {

// Shared SGD loop for source training and stage training.
Classifier train_loop(Classifier c, const Eigen::MatrixXd& labeled_pool,
                      const std::vector<int>& labeled_labels, const std::vector<int>& labeled_active,
                      const Eigen::MatrixXd& target_pool, const std::vector<int>& target_labels,
                      const std::vector<int>& target_active, bool target_raster,
                      const TrainConfig& cfg, ScheduleWindow window, double labeled_term_weight,
                      double pseudo_term_weight) {
    require(cfg.iterations >= 1, "train: iterations must be >= 1");
    require(cfg.batch_labeled >= 1, "train: batch size must be >= 1");
    require(cfg.unlabeled_ratio >= 1, "train: unlabeled_ratio must be >= 1");
    require(cfg.eta0 > 0.0, "train: eta0 must be positive");
    require(!labeled_active.empty() || !target_active.empty(),
            "train: no active samples");
    Rng batch_rng(derive_seed(cfg.seed, 0xb61c));
    Rng aug_rng(derive_seed(cfg.seed, 0xa06a));
    c.reset_momentum();

    const int b_lab = cfg.batch_labeled;
    const int b_pse = cfg.batch_labeled * cfg.unlabeled_ratio;
    for (int it = 0; it < cfg.iterations; ++it) {
        const double p = window.p0 + (window.p1 - window.p0) *
                                         (static_cast<double>(it) / cfg.iterations);
        const double lr = learning_rate(cfg, p);

        Eigen::MatrixXd xl(0, c.input_dim()), xp(0, c.input_dim());
        std::vector<int> yl, yp;
        double coef_l = 0.0, coef_p = 0.0;
        if (!labeled_active.empty()) {
            const auto batch = sample_batch(labeled_active, b_lab, batch_rng);
            xl.resize(b_lab, c.input_dim());
            for (int i = 0; i < b_lab; ++i) {
                xl.row(i) = labeled_pool.row(batch[i]);
                yl.push_back(labeled_labels[batch[i]]);
            }
            coef_l = labeled_term_weight / b_lab;
        }
        if (!target_active.empty()) {
            const auto batch = sample_batch(target_active, b_pse, batch_rng);
            xp.resize(b_pse, c.input_dim());
            for (int i = 0; i < b_pse; ++i) {
                Eigen::VectorXd xi = target_pool.row(batch[i]).transpose();
                xp.row(i) = augment(xi, cfg.augment_sigma, target_raster, aug_rng).transpose();
                yp.push_back(target_labels[batch[i]]);
            }
            coef_p = pseudo_term_weight / b_pse;
        }
        const auto g = c.loss_and_grad(xl, yl, coef_l, xp, yp, coef_p);
        if (!std::isfinite(g.loss)) throw TrainingDiverged(static_cast<std::size_t>(it));
        c.sgd_step(g, lr, cfg.momentum, cfg.weight_decay);
    }
    return c;
}

}  // namespace

Classifier train_source(Classifier c, const LabeledSet& source, const TrainConfig& cfg) {
    source.validate();
    std::vector<int> active(source.n());
    for (int i = 0; i < source.n(); ++i) active[i] = i;
    return train_loop(std::move(c), source.features, source.labels, active, Eigen::MatrixXd(0, 0),
                      {}, {}, false, cfg, ScheduleWindow{0.0, 1.0}, 1.0, 1.0);
}

Classifier train_stage(Classifier c, const Eigen::MatrixXd& labeled_pool,
                       const Eigen::MatrixXd& target_pool, bool target_raster,
                       const WeightedBatchSpec& spec, const TrainConfig& cfg,
                       ScheduleWindow window) {
    // Resolve active entries to pool rows and per-entry labels.
    const auto al = spec.active_labeled();
    const auto ap = spec.active_pseudo();
    std::vector<int> labeled_active, pseudo_active;
    Eigen::MatrixXd lab_feat(static_cast<int>(al.size()), labeled_pool.cols());
    std::vector<int> lab_labels;
    for (std::size_t i = 0; i < al.size(); ++i) {
        lab_feat.row(static_cast<int>(i)) = labeled_pool.row(spec.labeled_indices[al[i]]);
        lab_labels.push_back(spec.labeled_labels[al[i]]);
        labeled_active.push_back(static_cast<int>(i));
    }
    Eigen::MatrixXd pse_feat(static_cast<int>(ap.size()), target_pool.cols());
    std::vector<int> pse_labels;
    for (std::size_t i = 0; i < ap.size(); ++i) {
        pse_feat.row(static_cast<int>(i)) = target_pool.row(spec.pseudo_indices[ap[i]]);
        pse_labels.push_back(spec.pseudo_labels[ap[i]]);
        pseudo_active.push_back(static_cast<int>(i));
    }
    // The stage objective normalizes each sum by its full pool size, so a
    // term's total weight equals the fraction of its pool that is active:
    // (M-m)/M for sources and m/M for targets under proportional selection.
    const double w_lab = spec.labeled_indices.empty()
                             ? 0.0
                             : static_cast<double>(al.size()) / spec.labeled_indices.size();
    const double w_pse = spec.pseudo_indices.empty()
                             ? 0.0
                             : static_cast<double>(ap.size()) / spec.pseudo_indices.size();
    return train_loop(std::move(c), lab_feat, lab_labels, labeled_active, pse_feat, pse_labels,
                      pseudo_active, target_raster, cfg, window, w_lab, w_pse);
}

double accuracy(const Classifier& c, const Eigen::MatrixXd& x, const std::vector<int>& y) {
    require(x.rows() == static_cast<int>(y.size()), "accuracy: size mismatch");
    const auto preds = pseudo_labels(c.forward(x));
    int correct = 0;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (preds[i] == y[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(y.size());
}

void save(const Classifier& c, const std::string& path) {
    nlohmann::json doc;
    doc["format_version"] = 1;
    doc["layer_dims"] = c.layer_dims();
    nlohmann::json ws = nlohmann::json::array(), bs = nlohmann::json::array();
    for (int l = 0; l < c.num_layers(); ++l) {
        nlohmann::json w = nlohmann::json::array();
        for (int i = 0; i < c.weights()[l].rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (int j = 0; j < c.weights()[l].cols(); ++j) row.push_back(c.weights()[l](i, j));
            w.push_back(std::move(row));
        }
        ws.push_back(std::move(w));
        nlohmann::json b = nlohmann::json::array();
        for (int j = 0; j < c.biases()[l].size(); ++j) b.push_back(c.biases()[l](j));
        bs.push_back(std::move(b));
    }
    doc["weights"] = std::move(ws);
    doc["biases"] = std::move(bs);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << doc.dump(2) << '\n';
}

Classifier load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    try {
        if (doc.at("format_version").get<int>() != 1)
            throw FormatError(path + ": unsupported checkpoint format version");
        const auto dims = doc.at("layer_dims").get<std::vector<int>>();
        Classifier c = Classifier::init(dims, 0);
        const auto& ws = doc.at("weights");
        const auto& bs = doc.at("biases");
        if (static_cast<int>(ws.size()) != c.num_layers() ||
            static_cast<int>(bs.size()) != c.num_layers())
            throw FormatError(path + ": layer count mismatch");
        for (int l = 0; l < c.num_layers(); ++l) {
            auto& w = c.weights()[l];
            if (static_cast<int>(ws[l].size()) != w.rows())
                throw FormatError(path + ": weight shape mismatch");
            for (int i = 0; i < w.rows(); ++i) {
                if (static_cast<int>(ws[l][i].size()) != w.cols())
                    throw FormatError(path + ": weight shape mismatch");
                for (int j = 0; j < w.cols(); ++j) w(i, j) = ws[l][i][j].get<double>();
            }
            auto& b = c.biases()[l];
            if (static_cast<int>(bs[l].size()) != b.size())
                throw FormatError(path + ": bias shape mismatch");
            for (int j = 0; j < b.size(); ++j) b(j) = bs[l][j].get<double>();
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(path + ": " + e.what());
    }
}

}  // namespace gradshift
