#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gradshift/common.hpp"

namespace gradshift {

// Dense labeled dataset. K is declared, not inferred; classes may be absent.
struct LabeledSet {
    Eigen::MatrixXd features;  // n x d
    std::vector<int> labels;   // values in [0, num_classes)
    int num_classes = 0;
    bool raster = false;  // true when rows are square images

    int n() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }
    void validate() const;
};

struct UnlabeledSet {
    Eigen::MatrixXd features;  // n x d
    bool raster = false;

    int n() const { return static_cast<int>(features.rows()); }
    int dim() const { return static_cast<int>(features.cols()); }
};

struct RotationSpec {
    double angle_lo = 0.0;  // degrees
    double angle_hi = 0.0;
    std::uint64_t seed = 0;
};

struct SsdaSplit {
    LabeledSet labeled_target;
    UnlabeledSet unlabeled_target;
    std::vector<int> unlabeled_labels;  // held out, evaluation only
    int labels_per_class = 0;
};

UnlabeledSet strip_labels(const LabeledSet& set);

// Two interleaved crescents, 2 classes, 2-d. Zero noise puts every point
// exactly on the parametric curves.
LabeledSet make_two_moons(int n, double noise, std::uint64_t seed);

// Per-sample rotation by an angle drawn uniformly from [angle_lo, angle_hi].
// 2-d point mode rotates about the origin; raster mode rotates square images
// about their center with bilinear interpolation and zero padding.
LabeledSet rotate(const LabeledSet& set, const RotationSpec& spec);
UnlabeledSet rotate(const UnlabeledSet& set, const RotationSpec& spec);

// Single raster image rotated by angle_deg about its center, then shifted by
// (dx, dy) whole pixels with zero fill.
Eigen::VectorXd rotate_raster(const Eigen::VectorXd& image, double angle_deg,
                              int dx = 0, int dy = 0);

// IDX binary reader (big-endian, magic 0x803 / 0x801). Pixels scaled to
// [0,1], raster flag set, K fixed at 10.
LabeledSet load_idx_images(const std::string& images_path, const std::string& labels_path);

// Disjoint shuffled split; the first part gets round(n * fraction) samples,
// half rounded up.
std::pair<LabeledSet, LabeledSet> split(const LabeledSet& set, double fraction,
                                        std::uint64_t seed);

SsdaSplit make_ssda_split(const LabeledSet& target, int labels_per_class,
                          std::uint64_t seed);

// CSV layout: header f0,...,f{d-1},label with label -1 meaning unlabeled.
struct CsvData {
    Eigen::MatrixXd features;
    std::vector<int> labels;  // empty when unlabeled
    bool labeled = false;
};

void write_csv(const Eigen::MatrixXd& features, const std::vector<int>* labels,
               const std::string& path);
void write_csv(const LabeledSet& set, const std::string& path);
void write_csv(const UnlabeledSet& set, const std::string& path);
CsvData read_csv(const std::string& path);
LabeledSet to_labeled(const CsvData& data);  // K inferred as max label + 1
UnlabeledSet to_unlabeled(const CsvData& data);

}  // namespace gradshift
