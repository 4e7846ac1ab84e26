#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mas/volume.hpp"
#include "mas/volume_io.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace mas;

namespace {

Volume make_volume(Dims d, std::vector<double> data, Vec3 spacing = {1, 1, 1}) {
    Volume v(d);
    if (!data.empty()) v.data = std::move(data);
    v.spacing = spacing;
    return v;
}

LabelMap make_labels(Dims d, std::vector<std::int16_t> labels, Vec3 spacing = {1, 1, 1}) {
    LabelMap m(d);
    m.labels = std::move(labels);
    m.spacing = spacing;
    m.recompute_label_set();
    return m;
}

std::vector<char> file_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// independent linear-interpolation oracle on a 1D row
double lerp_row(const std::vector<double>& row, double pos) {
    if (pos <= 0) return row.front();
    if (pos >= static_cast<double>(row.size() - 1)) return row.back();
    const int i = static_cast<int>(pos);
    const double f = pos - i;
    return row[i] * (1 - f) + row[i + 1] * f;
}

} // namespace

TEST_CASE("resample at identical spacing is the identity") {
    Volume v = make_volume({3, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}, {1, 1, 1});
    const Volume out = resample_isotropic(v, 1.0);
    CHECK(out.dims == v.dims);
    CHECK(out.data == v.data);
}

TEST_CASE("resample 1D ramp 2mm -> 1mm matches the linear oracle") {
    Volume v = make_volume({3, 1, 1}, {0, 2, 4}, {2, 2, 2});
    const Volume out = resample_isotropic(v, 1.0);
    REQUIRE(out.dims == Dims{5, 1, 1});
    const std::vector<double> row = {0, 2, 4};
    for (int i = 0; i < 5; ++i)
        CHECK(out.data[i] == doctest::Approx(lerp_row(row, i * 0.5)).epsilon(1e-12));
    CHECK(out.data == std::vector<double>{0, 1, 2, 3, 4});
}

TEST_CASE("label resample takes nearest source; half-way ties to lower index") {
    LabelMap m = make_labels({3, 1, 1}, {1, 1, 2}, {2, 2, 2});
    const LabelMap out = resample_isotropic(m, 1.0);
    REQUIRE(out.dims == Dims{5, 1, 1});
    // source positions 0, .5, 1, 1.5, 2 -> indices 0,0,1,1,2
    CHECK(out.labels == std::vector<std::int16_t>{1, 1, 1, 1, 2});
}

TEST_CASE("resample rejects non-positive spacing") {
    Volume v = make_volume({2, 1, 1}, {0, 1});
    CHECK_THROWS_AS(resample_isotropic(v, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(resample_isotropic(v, -1.0), std::invalid_argument);
}

TEST_CASE("zscore of {2,4,6,8}") {
    Volume v = make_volume({4, 1, 1}, {2, 4, 6, 8});
    const Volume out = zscore_normalize(v);
    const double s = std::sqrt(5.0);
    CHECK(out.data[0] == doctest::Approx(-3.0 / s).epsilon(1e-12));
    CHECK(out.data[1] == doctest::Approx(-1.0 / s).epsilon(1e-12));
    CHECK(out.data[2] == doctest::Approx(1.0 / s).epsilon(1e-12));
    CHECK(out.data[3] == doctest::Approx(3.0 / s).epsilon(1e-12));
}

TEST_CASE("zscore output has zero mean and unit population std") {
    Volume v(Dims{4, 3, 2});
    for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = std::sin(0.7 * static_cast<double>(i)) * 3.0 + 1.5;
    const Volume out = zscore_normalize(v);
    double mean = 0, var = 0;
    for (double x : out.data) mean += x;
    mean /= static_cast<double>(out.data.size());
    for (double x : out.data) var += (x - mean) * (x - mean);
    var /= static_cast<double>(out.data.size());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-9);
}

TEST_CASE("zscore of a constant volume is all zeros") {
    Volume v = make_volume({3, 3, 1}, std::vector<double>(9, 4.2));
    const Volume out = zscore_normalize(v);
    for (double x : out.data) CHECK(x == 0.0);
}

TEST_CASE("zscore is idempotent") {
    Volume v(Dims{4, 2, 2});
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = static_cast<double>(i % 5) - 1.0;
    const Volume once = zscore_normalize(v);
    const Volume twice = zscore_normalize(once);
    for (std::size_t i = 0; i < once.data.size(); ++i)
        CHECK(std::abs(once.data[i] - twice.data[i]) < 1e-9);
}

TEST_CASE("center alignment vector from centroids") {
    LabelMap atlas(Dims{20, 20, 20});
    LabelMap target(Dims{20, 20, 20});
    atlas.at(10, 10, 10) = 1;
    target.at(13, 12, 10) = 1;
    atlas.recompute_label_set();
    target.recompute_label_set();
    const Vec3 t = center_align_translation(atlas, target);
    CHECK(t == Vec3{3, 2, 0});
}

TEST_CASE("center alignment of identical maps is zero") {
    LabelMap m(Dims{8, 8, 8});
    m.at(2, 3, 4) = 1;
    m.at(3, 3, 4) = 2;
    m.recompute_label_set();
    CHECK(center_align_translation(m, m) == Vec3{0, 0, 0});
}

TEST_CASE("center alignment respects physical spacing") {
    LabelMap atlas = make_labels({8, 1, 1}, {1, 0, 0, 0, 0, 0, 0, 0}, {2, 2, 2});
    LabelMap target = make_labels({8, 1, 1}, {0, 0, 0, 0, 0, 1, 0, 0}, {2, 2, 2});
    CHECK(center_align_translation(atlas, target) == Vec3{10, 0, 0});
}

TEST_CASE("center alignment requires nonempty foreground") {
    LabelMap empty(Dims{4, 4, 4});
    LabelMap ok(Dims{4, 4, 4});
    ok.at(1, 1, 1) = 1;
    ok.recompute_label_set();
    CHECK_THROWS_AS(center_align_translation(empty, ok), empty_region_error);
    CHECK_THROWS_AS(center_align_translation(ok, empty), empty_region_error);
}

TEST_CASE("one_hot of a binary map yields exact complements") {
    LabelMap m = make_labels({2, 2, 2}, {0, 1, 0, 1, 1, 0, 0, 1});
    const ProbVolume p = one_hot(m);
    REQUIRE(p.channels == 2);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(p.at(0, i) + p.at(1, i) == 1.0);
        CHECK(p.at(1, i) == (m.labels[i] == 1 ? 1.0 : 0.0));
    }
}

TEST_CASE("one_hot of all-background map") {
    LabelMap m(Dims{2, 2, 1});
    const ProbVolume p = one_hot(m);
    REQUIRE(p.channels == 1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(p.at(0, i) == 1.0);
}

TEST_CASE("one_hot channel sums match label counts") {
    LabelMap m = make_labels({2, 2, 2}, {0, 0, 0, 0, 0, 1, 1, 2});
    const ProbVolume p = one_hot(m);
    REQUIRE(p.channels == 3);
    double sums[3] = {0, 0, 0};
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 8; ++i) sums[c] += p.at(c, i);
    CHECK(sums[0] == 5.0);
    CHECK(sums[1] == 2.0);
    CHECK(sums[2] == 1.0);
}

TEST_CASE("one_hot then argmax reconstructs the map exactly") {
    Dims d{5, 4, 3};
    LabelMap m(d);
    for (std::size_t i = 0; i < d.voxels(); ++i)
        m.labels[i] = static_cast<std::int16_t>(hash_counter(42, 0, i) % 4);
    m.recompute_label_set();
    const LabelMap back = argmax_labels(one_hot(m), m.label_set, m.origin);
    CHECK(back.labels == m.labels);
}

TEST_CASE("mvol round trip is byte identical") {
    const auto dir = std::filesystem::temp_directory_path() / "mas_test_io";
    std::filesystem::create_directories(dir);

    Volume v = make_volume({3, 2, 2}, {}, {1.5, 1.0, 2.0});
    for (std::size_t i = 0; i < 12; ++i)
        v.data[i] = uniform_sym(hash_counter(7, 1, i)) * 100.0;
    v.origin = {1.0, -2.0, 0.5};

    write_volume(dir / "a.mvol", v);
    const Volume v2 = read_scalar_volume(dir / "a.mvol");
    write_volume(dir / "b.mvol", v2);
    CHECK(file_bytes(dir / "a.raw") == file_bytes(dir / "b.raw"));
    CHECK(v2.dims == v.dims);
    CHECK(v2.spacing == v.spacing);
    CHECK(v2.origin == v.origin);

    LabelMap m = make_labels({2, 2, 2}, {0, 3, 1, 0, 2, 2, 0, 1});
    write_volume(dir / "l.mvol", m);
    const LabelMap m2 = read_label_volume(dir / "l.mvol");
    CHECK(m2.labels == m.labels);
    CHECK(m2.label_set == m.label_set);
    write_volume(dir / "l2.mvol", m2);
    CHECK(file_bytes(dir / "l.raw") == file_bytes(dir / "l2.raw"));
}

TEST_CASE("mvol header and data validation errors") {
    const auto dir = std::filesystem::temp_directory_path() / "mas_test_io_err";
    std::filesystem::create_directories(dir);

    // dims/data length mismatch
    std::ofstream(dir / "bad.mvol")
        << R"({"dims":[2,2,2],"spacing":[1,1,1],"origin":[0,0,0],"dtype":"f32","data":"bad.raw"})";
    std::ofstream(dir / "bad.raw", std::ios::binary) << std::string(7 * 4, 'x');
    CHECK_THROWS_AS(read_volume(dir / "bad.mvol"), io_error);

    // non-positive spacing
    std::ofstream(dir / "sp.mvol")
        << R"({"dims":[1,1,1],"spacing":[0,1,1],"origin":[0,0,0],"dtype":"f32","data":"sp.raw"})";
    std::ofstream(dir / "sp.raw", std::ios::binary) << std::string(4, 'x');
    CHECK_THROWS_AS(read_volume(dir / "sp.mvol"), io_error);

    // unsupported dtype
    std::ofstream(dir / "dt.mvol")
        << R"({"dims":[1,1,1],"spacing":[1,1,1],"origin":[0,0,0],"dtype":"f64","data":"dt.raw"})";
    CHECK_THROWS_AS(read_volume(dir / "dt.mvol"), io_error);

    // malformed json
    std::ofstream(dir / "mj.mvol") << "{not json";
    CHECK_THROWS_AS(read_volume(dir / "mj.mvol"), io_error);
}

TEST_CASE("displacement field round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "mas_test_field";
    std::filesystem::create_directories(dir);
    DisplacementField f({3, 2, 2});
    for (std::size_t i = 0; i < f.ux.size(); ++i) {
        f.ux[i] = static_cast<double>(static_cast<float>(0.5 * static_cast<double>(i)));
        f.uy[i] = -1.0;
        f.uz[i] = 0.25;
    }
    write_field(dir / "f.dfield", f);
    const DisplacementField g = read_field(dir / "f.dfield");
    CHECK(g.dims == f.dims);
    CHECK(g.ux == f.ux);
    CHECK(g.uy == f.uy);
    CHECK(g.uz == f.uz);
}
