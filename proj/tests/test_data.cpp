#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gradshift/data.hpp"
#include "gradshift/diagnostics.hpp"
#include "gradshift/model.hpp"

using namespace gradshift;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "gradshift_test_data";
    fs::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_CASE("two moons: zero noise lies on the canonical crescents") {
    const auto set = make_two_moons(4, 0.0, 7);
    REQUIRE(set.n() == 4);
    REQUIRE(set.num_classes == 2);
    int per_class[2] = {0, 0};
    for (int i = 0; i < 4; ++i) {
        const double x = set.features(i, 0), y = set.features(i, 1);
        ++per_class[set.labels[i]];
        if (set.labels[i] == 0) {
            CHECK(x * x + y * y == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(y >= -1e-12);
        } else {
            CHECK((x - 1) * (x - 1) + (y - 0.5) * (y - 0.5) ==
                  doctest::Approx(1.0).epsilon(1e-12));
            CHECK(y <= 0.5 + 1e-12);
        }
    }
    CHECK(per_class[0] == 2);
    CHECK(per_class[1] == 2);
}

TEST_CASE("two moons: deterministic, and rejects n < 2") {
    const auto a = make_two_moons(50, 0.1, 3);
    const auto b = make_two_moons(50, 0.1, 3);
    CHECK(a.features == b.features);
    CHECK(a.labels == b.labels);
    CHECK_THROWS_AS(make_two_moons(1, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_two_moons(10, -0.1, 0), std::invalid_argument);
}

TEST_CASE("two moons: a small classifier separates a fresh draw") {
    const auto train = make_two_moons(200, 0.05, 1);
    const auto test = make_two_moons(200, 0.05, 2);
    TrainConfig cfg;
    cfg.iterations = 500;
    cfg.batch_labeled = 32;
    cfg.seed = 9;
    auto c = Classifier::init({2, 8, 2}, 4);
    c = train_source(std::move(c), train, cfg);
    CHECK(accuracy(c, test.features, test.labels) >= 0.8);
}

TEST_CASE("rotation: identity, quarter turn, invariants") {
    auto set = make_two_moons(40, 0.1, 5);
    const auto same = rotate(set, RotationSpec{0.0, 0.0, 99});
    CHECK(same.features == set.features);

    LabeledSet point;
    point.features.resize(1, 2);
    point.features << 1.0, 0.0;
    point.labels = {0};
    point.num_classes = 2;
    const auto turned = rotate(point, RotationSpec{90.0, 90.0, 1});
    CHECK(turned.features(0, 0) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(turned.features(0, 1) == doctest::Approx(1.0).epsilon(1e-9));

    const auto rotated = rotate(set, RotationSpec{10.0, 80.0, 17});
    REQUIRE(rotated.n() == set.n());
    CHECK(rotated.labels == set.labels);
    for (int i = 0; i < set.n(); ++i)
        CHECK(rotated.features.row(i).norm() ==
              doctest::Approx(set.features.row(i).norm()).epsilon(1e-9));
}

TEST_CASE("rotation: larger angles mean larger proxy A-distance") {
    const auto base = make_two_moons(240, 0.08, 11);
    const auto near = rotate(base, RotationSpec{0.0, 5.0, 21});
    const auto far = rotate(base, RotationSpec{30.0, 60.0, 22});
    const double d_near = proxy_a_distance(base.features, near.features, 5);
    const double d_far = proxy_a_distance(base.features, far.features, 5);
    CHECK(d_far > d_near);
}

TEST_CASE("rotation: raster mode requires a square dimension") {
    UnlabeledSet set;
    set.features = Eigen::MatrixXd::Zero(2, 10);
    set.raster = true;
    CHECK_THROWS_AS(rotate(set, RotationSpec{5.0, 10.0, 0}), std::invalid_argument);
}

namespace {

void write_be32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

void write_idx_pair(const std::string& img_path, const std::string& lab_path, int n, int side,
                    const std::vector<int>& labels, bool truncate_images = false) {
    std::ofstream img(img_path, std::ios::binary);
    write_be32(img, 0x00000803u);
    write_be32(img, static_cast<std::uint32_t>(n));
    write_be32(img, static_cast<std::uint32_t>(side));
    write_be32(img, static_cast<std::uint32_t>(side));
    const int rows = truncate_images ? n - 1 : n;
    for (int i = 0; i < rows * side * side; ++i) img.put(static_cast<char>(i % 256));
    img.close();
    std::ofstream lab(lab_path, std::ios::binary);
    write_be32(lab, 0x00000801u);
    write_be32(lab, static_cast<std::uint32_t>(n));
    for (int y : labels) lab.put(static_cast<char>(y));
}

}  // namespace

TEST_CASE("IDX loader: layout, scaling, failure modes") {
    const auto img = temp_path("a.idx3"), lab = temp_path("a.idx1");
    write_idx_pair(img, lab, 5, 4, {0, 3, 9, 1, 2});
    const auto set = load_idx_images(img, lab);
    CHECK(set.n() == 5);
    CHECK(set.dim() == 16);
    CHECK(set.num_classes == 10);
    CHECK(set.raster);
    CHECK(set.features.maxCoeff() <= 1.0);
    CHECK(set.features.minCoeff() >= 0.0);
    CHECK(set.labels == std::vector<int>{0, 3, 9, 1, 2});

    CHECK_THROWS_AS(load_idx_images(temp_path("missing"), lab), IoError);

    write_idx_pair(temp_path("t.idx3"), temp_path("t.idx1"), 5, 4, {0, 1, 2, 3, 4}, true);
    CHECK_THROWS_AS(load_idx_images(temp_path("t.idx3"), temp_path("t.idx1")), FormatError);

    write_idx_pair(temp_path("b.idx3"), temp_path("b.idx1"), 3, 4, {0, 10, 2});
    CHECK_THROWS_AS(load_idx_images(temp_path("b.idx3"), temp_path("b.idx1")), FormatError);

    // label count mismatch
    {
        std::ofstream l2(temp_path("c.idx1"), std::ios::binary);
        write_be32(l2, 0x00000801u);
        write_be32(l2, 4);
        for (int i = 0; i < 4; ++i) l2.put(0);
    }
    CHECK_THROWS_AS(load_idx_images(img, temp_path("c.idx1")), FormatError);
}

TEST_CASE("split: sizes, determinism, partition") {
    const auto set = make_two_moons(10, 0.1, 1);
    const auto [a, b] = split(set, 0.5, 42);
    CHECK(a.n() == 5);
    CHECK(b.n() == 5);

    const auto odd = make_two_moons(7, 0.1, 1);
    const auto [c, d] = split(odd, 0.5, 42);
    CHECK(c.n() == 4);
    CHECK(d.n() == 3);

    const auto [a2, b2] = split(set, 0.5, 42);
    CHECK(a.features == a2.features);
    CHECK(b.features == b2.features);

    // partition: every original row appears exactly once across the halves
    std::vector<int> seen(set.n(), 0);
    auto mark = [&](const LabeledSet& part) {
        for (int i = 0; i < part.n(); ++i)
            for (int j = 0; j < set.n(); ++j)
                if (part.features.row(i) == set.features.row(j) &&
                    part.labels[i] == set.labels[j]) {
                    ++seen[j];
                    break;
                }
    };
    mark(a);
    mark(b);
    for (int s : seen) CHECK(s == 1);

    CHECK_THROWS_AS(split(set, 0.0, 1), std::invalid_argument);
    LabeledSet tiny = make_two_moons(2, 0.0, 1);
    CHECK_THROWS_AS(split(tiny, 0.1, 1), std::invalid_argument);
}

TEST_CASE("SSDA split: per-class counts and failure on short classes") {
    // 10 balanced classes, 8 samples each
    LabeledSet set;
    set.num_classes = 10;
    set.features = Eigen::MatrixXd::Random(80, 3);
    set.labels.resize(80);
    for (int i = 0; i < 80; ++i) set.labels[i] = i % 10;
    const auto s3 = make_ssda_split(set, 3, 7);
    CHECK(s3.labeled_target.n() == 30);
    CHECK(s3.unlabeled_target.n() == 50);
    CHECK(s3.unlabeled_labels.size() == 50);

    const auto tiny = make_two_moons(4, 0.0, 1);
    const auto s1 = make_ssda_split(tiny, 1, 3);
    CHECK(s1.labeled_target.n() == 2);
    CHECK(s1.unlabeled_target.n() == 2);

    LabeledSet missing;
    missing.num_classes = 3;  // class 2 absent
    missing.features = Eigen::MatrixXd::Random(4, 2);
    missing.labels = {0, 0, 1, 1};
    CHECK_THROWS_WITH_AS(make_ssda_split(missing, 1, 0), doctest::Contains("class 2"),
                         std::invalid_argument);
}

TEST_CASE("CSV round trip is lossless") {
    auto set = make_two_moons(30, 0.3, 9);
    const auto path = temp_path("round.csv");
    write_csv(set, path);
    const auto back = read_csv(path);
    REQUIRE(back.labeled);
    CHECK(back.features == set.features);
    CHECK(back.labels == set.labels);

    UnlabeledSet u = strip_labels(set);
    write_csv(u, path);
    const auto back_u = read_csv(path);
    CHECK_FALSE(back_u.labeled);
    CHECK(back_u.features == set.features);
    CHECK_THROWS_AS(to_labeled(back_u), StateError);
}

TEST_CASE("CSV rejects malformed files with line numbers") {
    const auto path = temp_path("bad.csv");
    {
        std::ofstream out(path);
        out << "x,y,z\n1,2,0\n";
    }
    CHECK_THROWS_AS(read_csv(path), FormatError);
    {
        std::ofstream out(path);
        out << "f0,f1,label\n1,2,0\n1,2\n";
    }
    CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains("line 3"), FormatError);
    {
        std::ofstream out(path);
        out << "f0,f1,label\n1,abc,0\n";
    }
    CHECK_THROWS_WITH_AS(read_csv(path), doctest::Contains("line 2"), FormatError);
}
