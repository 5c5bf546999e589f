#include "gradshift/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace gradshift {

namespace {

constexpr double kPi = 3.14159265358979323846;

int round_half_up(double x) { return static_cast<int>(std::llround(x)); }

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

void LabeledSet::validate() const {
    require(n() >= 1, "LabeledSet: at least one sample required");
    require(static_cast<int>(labels.size()) == n(), "LabeledSet: label count != row count");
    require(num_classes >= 1, "LabeledSet: num_classes must be positive");
    for (int y : labels)
        require(y >= 0 && y < num_classes, "LabeledSet: label out of [0, K)");
}

UnlabeledSet strip_labels(const LabeledSet& set) {
    return UnlabeledSet{set.features, set.raster};
}

LabeledSet make_two_moons(int n, double noise, std::uint64_t seed) {
    require(n >= 2, "make_two_moons: n must be >= 2");
    require(noise >= 0.0, "make_two_moons: noise must be >= 0");
    const int n0 = n - n / 2;
    const int n1 = n / 2;
    LabeledSet set;
    set.features.resize(n, 2);
    set.labels.resize(n);
    set.num_classes = 2;
    Rng rng(seed);
    std::normal_distribution<double> jitter(0.0, 1.0);
    auto fill = [&](int offset, int count, int label) {
        for (int i = 0; i < count; ++i) {
            const double t = count > 1 ? kPi * i / (count - 1) : 0.0;
            double x, y;
            if (label == 0) {
                x = std::cos(t);
                y = std::sin(t);
            } else {
                x = 1.0 - std::cos(t);
                y = 0.5 - std::sin(t);
            }
            if (noise > 0.0) {
                x += noise * jitter(rng);
                y += noise * jitter(rng);
            }
            set.features(offset + i, 0) = x;
            set.features(offset + i, 1) = y;
            set.labels[offset + i] = label;
        }
    };
    fill(0, n0, 0);
    fill(n0, n1, 1);
    return set;
}

namespace {

Eigen::VectorXd rotate_point_row(const Eigen::VectorXd& p, double angle_rad) {
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    Eigen::VectorXd out(2);
    out(0) = c * p(0) - s * p(1);
    out(1) = s * p(0) + c * p(1);
    return out;
}

int raster_side(int d) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
    if (side * side != d)
        throw std::invalid_argument("raster rotation: feature dimension is not a perfect square");
    return side;
}

Eigen::MatrixXd rotate_matrix(const Eigen::MatrixXd& features, bool raster,
                              const RotationSpec& spec) {
    require(spec.angle_lo <= spec.angle_hi, "RotationSpec: angle_lo > angle_hi");
    if (raster) raster_side(static_cast<int>(features.cols()));
    else
        require(features.cols() == 2, "point rotation requires 2-d features");
    Rng rng(spec.seed);
    std::uniform_real_distribution<double> angle(spec.angle_lo, spec.angle_hi);
    Eigen::MatrixXd out(features.rows(), features.cols());
    for (int i = 0; i < features.rows(); ++i) {
        const double deg = spec.angle_lo == spec.angle_hi ? spec.angle_lo : angle(rng);
        if (raster) {
            out.row(i) = rotate_raster(features.row(i).transpose(), deg).transpose();
        } else {
            out.row(i) = rotate_point_row(features.row(i).transpose(), deg * kPi / 180.0)
                             .transpose();
        }
    }
    return out;
}

}  // namespace

Eigen::VectorXd rotate_raster(const Eigen::VectorXd& image, double angle_deg, int dx, int dy) {
    const int side = raster_side(static_cast<int>(image.size()));
    const double rad = angle_deg * kPi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    const double cx = (side - 1) / 2.0;
    Eigen::VectorXd out = Eigen::VectorXd::Zero(image.size());
    for (int r = 0; r < side; ++r) {
        for (int col = 0; col < side; ++col) {
            // inverse map: output pixel pulled from rotated-then-shifted source
            const double yr = r - dy - cx;
            const double xr = col - dx - cx;
            const double sx = c * xr + s * yr + cx;
            const double sy = -s * xr + c * yr + cx;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double fx = sx - x0, fy = sy - y0;
            auto at = [&](int yy, int xx) -> double {
                if (yy < 0 || yy >= side || xx < 0 || xx >= side) return 0.0;
                return image(yy * side + xx);
            };
            const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) +
                             fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
            out(r * side + col) = v;
        }
    }
    return out;
}

LabeledSet rotate(const LabeledSet& set, const RotationSpec& spec) {
    LabeledSet out = set;
    out.features = rotate_matrix(set.features, set.raster, spec);
    return out;
}

UnlabeledSet rotate(const UnlabeledSet& set, const RotationSpec& spec) {
    UnlabeledSet out = set;
    out.features = rotate_matrix(set.features, set.raster, spec);
    return out;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated IDX header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

LabeledSet load_idx_images(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels_path);

    if (read_be32(img, images_path) != 0x00000803u)
        throw FormatError("bad image magic in " + images_path);
    const int n = static_cast<int>(read_be32(img, images_path));
    const int rows = static_cast<int>(read_be32(img, images_path));
    const int cols = static_cast<int>(read_be32(img, images_path));

    if (read_be32(lab, labels_path) != 0x00000801u)
        throw FormatError("bad label magic in " + labels_path);
    const int n_lab = static_cast<int>(read_be32(lab, labels_path));
    if (n != n_lab) throw FormatError("image/label count mismatch");

    LabeledSet set;
    set.num_classes = 10;
    set.raster = true;
    set.features.resize(n, rows * cols);
    set.labels.resize(n);
    std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols);
    for (int i = 0; i < n; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        if (!img) throw FormatError("truncated image data in " + images_path);
        for (int j = 0; j < rows * cols; ++j) set.features(i, j) = buf[j] / 255.0;
        int y = lab.get();
        if (y == EOF) throw FormatError("truncated label data in " + labels_path);
        if (y < 0 || y > 9) throw FormatError("label out of range for K=10");
        set.labels[i] = y;
    }
    return set;
}

std::pair<LabeledSet, LabeledSet> split(const LabeledSet& set, double fraction,
                                        std::uint64_t seed) {
    require(fraction > 0.0 && fraction < 1.0, "split: fraction must be in (0, 1)");
    const int n = set.n();
    const int n1 = round_half_up(n * fraction);
    require(n1 >= 1 && n1 < n, "split: either side would be empty");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<int> a(idx.begin(), idx.begin() + n1);
    std::vector<int> b(idx.begin() + n1, idx.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    auto take = [&](const std::vector<int>& which) {
        LabeledSet out;
        out.num_classes = set.num_classes;
        out.raster = set.raster;
        out.features.resize(static_cast<int>(which.size()), set.dim());
        out.labels.resize(which.size());
        for (std::size_t i = 0; i < which.size(); ++i) {
            out.features.row(static_cast<int>(i)) = set.features.row(which[i]);
            out.labels[i] = set.labels[which[i]];
        }
        return out;
    };
    return {take(a), take(b)};
}

SsdaSplit make_ssda_split(const LabeledSet& target, int labels_per_class, std::uint64_t seed) {
    require(labels_per_class >= 1, "make_ssda_split: labels_per_class must be >= 1");
    std::vector<std::vector<int>> per_class(target.num_classes);
    for (int i = 0; i < target.n(); ++i) per_class[target.labels[i]].push_back(i);
    for (int k = 0; k < target.num_classes; ++k) {
        if (static_cast<int>(per_class[k].size()) < labels_per_class)
            throw std::invalid_argument("make_ssda_split: class " + std::to_string(k) +
                                        " has fewer than " + std::to_string(labels_per_class) +
                                        " samples");
    }
    Rng rng(seed);
    std::vector<int> labeled_idx, unlabeled_idx;
    for (int k = 0; k < target.num_classes; ++k) {
        auto& pool = per_class[k];
        std::shuffle(pool.begin(), pool.end(), rng);
        labeled_idx.insert(labeled_idx.end(), pool.begin(), pool.begin() + labels_per_class);
        unlabeled_idx.insert(unlabeled_idx.end(), pool.begin() + labels_per_class, pool.end());
    }
    std::sort(labeled_idx.begin(), labeled_idx.end());
    std::sort(unlabeled_idx.begin(), unlabeled_idx.end());

    SsdaSplit out;
    out.labels_per_class = labels_per_class;
    out.labeled_target.num_classes = target.num_classes;
    out.labeled_target.raster = target.raster;
    out.labeled_target.features.resize(static_cast<int>(labeled_idx.size()), target.dim());
    out.labeled_target.labels.resize(labeled_idx.size());
    for (std::size_t i = 0; i < labeled_idx.size(); ++i) {
        out.labeled_target.features.row(static_cast<int>(i)) = target.features.row(labeled_idx[i]);
        out.labeled_target.labels[i] = target.labels[labeled_idx[i]];
    }
    out.unlabeled_target.raster = target.raster;
    out.unlabeled_target.features.resize(static_cast<int>(unlabeled_idx.size()), target.dim());
    out.unlabeled_labels.resize(unlabeled_idx.size());
    for (std::size_t i = 0; i < unlabeled_idx.size(); ++i) {
        out.unlabeled_target.features.row(static_cast<int>(i)) =
            target.features.row(unlabeled_idx[i]);
        out.unlabeled_labels[i] = target.labels[unlabeled_idx[i]];
    }
    return out;
}

void write_csv(const Eigen::MatrixXd& features, const std::vector<int>* labels,
               const std::string& path) {
    if (labels)
        require(static_cast<int>(labels->size()) == features.rows(),
                "write_csv: label count mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    const int d = static_cast<int>(features.cols());
    for (int j = 0; j < d; ++j) out << 'f' << j << ',';
    out << "label\n";
    char buf[64];
    for (int i = 0; i < features.rows(); ++i) {
        for (int j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", features(i, j));
            out << buf << ',';
        }
        out << (labels ? (*labels)[i] : -1) << '\n';
    }
    if (!out) throw IoError("write failed for " + path);
}

void write_csv(const LabeledSet& set, const std::string& path) {
    write_csv(set.features, &set.labels, path);
}

void write_csv(const UnlabeledSet& set, const std::string& path) {
    write_csv(set.features, nullptr, path);
}

CsvData read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header.back() != "label")
        throw FormatError(path + ": missing f*,label header");
    const int d = static_cast<int>(header.size()) - 1;
    for (int j = 0; j < d; ++j)
        if (header[j] != "f" + std::to_string(j))
            throw FormatError(path + ": missing f*,label header");

    std::vector<double> values;
    std::vector<int> labels;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int col = 0;
        while (std::getline(ss, cell, ',')) {
            std::size_t pos = 0;
            double v;
            try {
                v = std::stod(cell, &pos);
            } catch (const std::exception&) {
                throw FormatError(path + ": non-numeric cell at line " + std::to_string(line_no));
            }
            if (pos != cell.size())
                throw FormatError(path + ": non-numeric cell at line " + std::to_string(line_no));
            if (col < d) values.push_back(v);
            else labels.push_back(static_cast<int>(v));
            ++col;
        }
        if (col != d + 1)
            throw FormatError(path + ": ragged row at line " + std::to_string(line_no));
    }
    const int n = static_cast<int>(labels.size());
    if (n == 0) throw FormatError(path + ": no data rows");
    CsvData data;
    data.features.resize(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) data.features(i, j) = values[static_cast<std::size_t>(i) * d + j];
    const bool any_labeled = std::any_of(labels.begin(), labels.end(), [](int y) { return y >= 0; });
    const bool all_labeled = std::all_of(labels.begin(), labels.end(), [](int y) { return y >= 0; });
    if (any_labeled && !all_labeled)
        throw FormatError(path + ": mixed labeled and unlabeled rows");
    data.labeled = any_labeled;
    if (any_labeled) data.labels = labels;
    return data;
}

LabeledSet to_labeled(const CsvData& data) {
    if (!data.labeled) throw StateError("to_labeled: dataset is unlabeled");
    LabeledSet set;
    set.features = data.features;
    set.labels = data.labels;
    set.num_classes = *std::max_element(data.labels.begin(), data.labels.end()) + 1;
    set.validate();
    return set;
}

UnlabeledSet to_unlabeled(const CsvData& data) {
    return UnlabeledSet{data.features, false};
}

}  // namespace gradshift
