#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gradshift/common.hpp"
#include "gradshift/data.hpp"

namespace gradshift {

// SGD hyperparameters. Learning rate follows eta_p = eta0 / (1 + alpha*p)^beta
// with p running linearly over the training window.
struct TrainConfig {
    double eta0 = 0.01;
    double alpha = 10.0;
    double beta = 0.75;
    double momentum = 0.9;
    int batch_labeled = 64;   // B
    int unlabeled_ratio = 7;  // u, pseudo-label batch is u*B
    int iterations = 1000;
    std::uint64_t seed = 0;
    double augment_sigma = 0.1;  // Gaussian jitter strength for target inputs
    double weight_decay = 0.0;
};

// Fraction of the global schedule covered by one training call; train_source
// uses [0,1], stage m of M uses [(m-1)/M, m/M].
struct ScheduleWindow {
    double p0 = 0.0;
    double p1 = 1.0;
};

// 0/1 activity masks realizing the self-training objective's indicators.
// Indices address rows of the labeled / target feature pools.
struct WeightedBatchSpec {
    std::vector<int> labeled_indices;
    std::vector<int> labeled_labels;
    std::vector<std::uint8_t> labeled_weights;
    std::vector<int> pseudo_indices;
    std::vector<int> pseudo_labels;
    std::vector<std::uint8_t> pseudo_weights;

    std::vector<int> active_labeled() const;
    std::vector<int> active_pseudo() const;
};

// MLP with rectifier hidden layers and a softmax head. The feature map phi is
// the penultimate activation (the input itself for a single-layer net).
class Classifier {
  public:
    Classifier() = default;

    static Classifier init(const std::vector<int>& layer_dims, std::uint64_t seed);

    const std::vector<int>& layer_dims() const { return dims_; }
    int input_dim() const { return dims_.front(); }
    int num_classes() const { return dims_.back(); }
    int feature_dim() const { return dims_[dims_.size() - 2]; }
    int num_layers() const { return static_cast<int>(weights_.size()); }

    // Row-wise softmax probabilities, n x K.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    Eigen::VectorXd forward_one(const Eigen::VectorXd& x) const;
    // phi(x): penultimate activations, n x feature_dim.
    Eigen::MatrixXd features(const Eigen::MatrixXd& x) const;

    struct Gradients {
        double loss = 0.0;
        std::vector<Eigen::MatrixXd> dw;
        std::vector<Eigen::RowVectorXd> db;
    };

    // Loss and analytic gradients of
    //   coef_l * sum_i CE(f(xl_i), yl_i) + coef_p * sum_j CE(f(xp_j), yp_j).
    // Either part may be empty (0 rows).
    Gradients loss_and_grad(const Eigen::MatrixXd& x_labeled, const std::vector<int>& y_labeled,
                            double coef_labeled, const Eigen::MatrixXd& x_pseudo,
                            const std::vector<int>& y_pseudo, double coef_pseudo) const;

    void sgd_step(const Gradients& g, double lr, double momentum, double weight_decay);

    // Each training phase is its own optimization run; clearing the velocity
    // here keeps checkpoint-resumed runs identical to uninterrupted ones.
    void reset_momentum();

    std::vector<Eigen::MatrixXd>& weights() { return weights_; }
    const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
    std::vector<Eigen::RowVectorXd>& biases() { return biases_; }
    const std::vector<Eigen::RowVectorXd>& biases() const { return biases_; }

  private:
    std::vector<int> dims_;
    std::vector<Eigen::MatrixXd> weights_;  // layer l: dims_[l] x dims_[l+1]
    std::vector<Eigen::RowVectorXd> biases_;
    std::vector<Eigen::MatrixXd> w_momentum_;
    std::vector<Eigen::RowVectorXd> b_momentum_;
};

// Argmax with ties broken towards the lowest index.
int pseudo_label(const Eigen::VectorXd& probs);
std::vector<int> pseudo_labels(const Eigen::MatrixXd& probs);

double learning_rate(const TrainConfig& cfg, double p);

// Gaussian jitter in vector mode; small random rotation (+-10 deg) plus a
// one-pixel shift in raster mode.
Eigen::VectorXd augment(const Eigen::VectorXd& x, double sigma, bool raster, Rng& rng);

Classifier train_source(Classifier c, const LabeledSet& source, const TrainConfig& cfg);

// One self-training stage on fixed pseudo labels. labeled_pool rows are
// addressed by spec.labeled_indices, target_pool rows by spec.pseudo_indices.
Classifier train_stage(Classifier c, const Eigen::MatrixXd& labeled_pool,
                       const Eigen::MatrixXd& target_pool, bool target_raster,
                       const WeightedBatchSpec& spec, const TrainConfig& cfg,
                       ScheduleWindow window = {});

double accuracy(const Classifier& c, const Eigen::MatrixXd& x, const std::vector<int>& y);

void save(const Classifier& c, const std::string& path);
Classifier load(const std::string& path);

}  // namespace gradshift
