#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <fstream>

#include "contrastad/data.hpp"
#include "contrastad/synthetic.hpp"
#include "doctest.h"

using namespace contrastad::data;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path = "test_dataio_tmp_" + std::to_string(counter++) + ".csv";
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("load_csv: plain table") {
    TempFile f("a,b\n1,2\n3,4\n5,6\n");
    CsvTable t = load_csv(f.path);
    CHECK(t.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(t.values.rows == 3);
    CHECK(t.values.cols == 2);
    CHECK(t.values.at(2, 1) == 6.0);
    CHECK(!t.labels);
}

TEST_CASE("load_csv: label column split out") {
    TempFile f("a,y,b\n1,0,2\n3,1,4\n5,0,6\n");
    CsvTable t = load_csv(f.path, std::string("y"));
    CHECK(t.feature_names == std::vector<std::string>{"a", "b"});
    CHECK(t.values.cols == 2);
    CHECK(*t.labels == std::vector<int>{0, 1, 0});
}

TEST_CASE("load_csv: error paths") {
    SUBCASE("non-numeric cell names the row") {
        TempFile f("a,b\n1,2\n1,abc\n");
        try {
            load_csv(f.path);
            FAIL("expected parse error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("row 2") != std::string::npos);
        }
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_csv("does_not_exist.csv"), DataError); }
    SUBCASE("ragged row") {
        TempFile f("a,b\n1,2\n3\n");
        CHECK_THROWS_AS(load_csv(f.path), DataError);
    }
    SUBCASE("unknown label column") {
        TempFile f("a,b\n1,2\n");
        CHECK_THROWS_AS(load_csv(f.path, std::string("missing")), DataError);
    }
    SUBCASE("non-binary label") {
        TempFile f("a,y\n1,2\n");
        CHECK_THROWS_AS(load_csv(f.path, std::string("y")), DataError);
    }
    SUBCASE("crlf line endings parse fine") {
        TempFile f("a,b\r\n1,2\r\n3,4\r\n");
        CHECK(load_csv(f.path).values.rows == 2);
    }
}

TEST_CASE("normalizer: midpoint, constant feature, extrapolation") {
    Matrix train(2, 2);
    train.at(0, 0) = 2.0;
    train.at(1, 0) = 6.0;
    train.at(0, 1) = 5.0;
    train.at(1, 1) = 5.0;  // constant
    NormStats stats = fit_normalizer(train);

    Matrix probe(1, 2);
    probe.at(0, 0) = 4.0;
    probe.at(0, 1) = 5.0;
    Matrix out = apply_normalizer(probe, stats);
    CHECK(out.at(0, 0) == doctest::Approx(0.5));
    CHECK(out.at(0, 1) == 0.0);

    probe.at(0, 0) = 8.0;  // beyond the train max
    CHECK(apply_normalizer(probe, stats).at(0, 0) == doctest::Approx(1.5));

    // affine endpoints
    probe.at(0, 0) = 2.0;
    CHECK(apply_normalizer(probe, stats).at(0, 0) == 0.0);
    probe.at(0, 0) = 6.0;
    CHECK(apply_normalizer(probe, stats).at(0, 0) == 1.0);
}

TEST_CASE("make_windows: counting, boundary, too short") {
    Matrix m(12, 2);
    for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 0; c < 2; ++c) m.at(r, c) = static_cast<double>(10 * r + c);

    auto ws = make_windows(m, 10, 1);
    REQUIRE(ws.size() == 2);
    CHECK(ws[0].start == 0);
    CHECK(ws[1].start == 1);
    CHECK(ws[0].forecast_target[0] == 100.0);  // row 10
    CHECK(ws[1].forecast_target[0] == 110.0);  // row 11
    CHECK(ws[0].values[0 * 10 + 3] == 30.0);   // feature 0, t=3

    Matrix m11(11, 2);
    CHECK(make_windows(m11, 10, 1).size() == 1);
    Matrix m10(10, 2);
    CHECK_THROWS_AS(make_windows(m10, 10, 1), DataError);
}

TEST_CASE("windowing then flattening reconstructs the series for stride 1") {
    Matrix m(30, 3);
    for (std::size_t r = 0; r < 30; ++r)
        for (std::size_t c = 0; c < 3; ++c) m.at(r, c) = static_cast<double>(r * 3 + c);
    std::size_t w = 8;
    auto ws = make_windows(m, w, 1);
    // every row r < 30-1 appears in some window at a recoverable offset
    for (std::size_t r = 0; r + 1 < m.rows; ++r) {
        std::size_t wi = r < w ? 0 : r - w + 1;
        std::size_t offset = r - ws[wi].start;
        for (std::size_t c = 0; c < 3; ++c) CHECK(ws[wi].values[c * w + offset] == m.at(r, c));
    }
}

TEST_CASE("split_train_val: chronology and failure modes") {
    Matrix m(10, 1);
    for (std::size_t r = 0; r < 10; ++r) m.at(r, 0) = static_cast<double>(r);
    auto [head, tail] = split_train_val(m, 0.5, 2);
    CHECK(head.rows == 5);
    CHECK(tail.rows == 5);
    CHECK(head.at(4, 0) == 4.0);
    CHECK(tail.at(0, 0) == 5.0);  // order preserved, no shuffling

    Matrix m100(100, 1);
    auto [t80, v20] = split_train_val(m100, 0.8, 10);
    CHECK(t80.rows == 80);
    CHECK(v20.rows == 20);

    Matrix m5(5, 1);
    CHECK_THROWS_AS(split_train_val(m5, 0.8, 10), DataError);
}

TEST_CASE("synthetic: determinism, labels, validation") {
    std::vector<AnomalySegment> segs{{2600, 50}};
    Dataset a = generate_synthetic(8, 4000, segs, 42);
    Dataset b = generate_synthetic(8, 4000, segs, 42);
    CHECK(a.train.v == b.train.v);  // bit identical
    CHECK(a.test.v == b.test.v);
    CHECK(*a.test_labels == *b.test_labels);

    int ones = 0;
    for (int l : *a.test_labels) ones += l;
    CHECK(ones == 50);

    Dataset clean = generate_synthetic(8, 4000, {}, 7);
    for (int l : *clean.test_labels) CHECK(l == 0);

    CHECK_THROWS_AS(generate_synthetic(8, 4000, {{100, 50}}, 1), DataError);      // train half
    CHECK_THROWS_AS(generate_synthetic(8, 4000, {{2600, 50}, {2620, 50}}, 1), DataError);  // overlap
    CHECK_THROWS_AS(generate_synthetic(3, 4000, {}, 1), DataError);               // too few features
}

TEST_CASE("synthetic: anomaly is relational, marginals stay put") {
    // averaged over 10 seeds, inside/outside moments of the inverted features
    // should agree: the anomaly flips coupling, not amplitude
    std::vector<AnomalySegment> segs{{2400, 200}, {2900, 200}, {3400, 200}};
    double in_var = 0.0, out_var = 0.0, in_mean = 0.0, out_mean = 0.0;
    std::size_t seeds = 10;
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        Dataset ds = generate_synthetic(8, 4000, segs, seed);
        const Matrix& test = ds.test;
        const std::vector<int>& labels = *ds.test_labels;
        for (std::size_t f = 0; f < 8; ++f) {
            double si = 0, so = 0, qi = 0, qo = 0;
            std::size_t ni = 0, no = 0;
            for (std::size_t t = 0; t < test.rows; ++t) {
                double v = test.at(t, f);
                if (labels[t]) {
                    si += v;
                    qi += v * v;
                    ++ni;
                } else {
                    so += v;
                    qo += v * v;
                    ++no;
                }
            }
            double mi = si / ni, mo = so / no;
            in_mean += mi;
            out_mean += mo;
            in_var += qi / ni - mi * mi;
            out_var += qo / no - mo * mo;
        }
    }
    double scale = static_cast<double>(seeds * 8);
    in_mean /= scale;
    out_mean /= scale;
    in_var /= scale;
    out_var /= scale;
    CHECK(std::abs(in_var / out_var - 1.0) < 0.2);
    CHECK(std::abs(in_mean - out_mean) < 0.2 * std::sqrt(out_var));
}

TEST_CASE("write_csv then load_csv round-trips") {
    Matrix m(3, 2);
    m.at(0, 0) = 1.25;
    m.at(1, 1) = -3.5;
    m.at(2, 0) = 1e-9;
    std::vector<int> labels{0, 1, 0};
    write_csv("test_dataio_roundtrip.csv", {"x", "y"}, m, &labels, "label");
    CsvTable t = load_csv("test_dataio_roundtrip.csv", std::string("label"));
    CHECK(t.values.v == m.v);
    CHECK(*t.labels == labels);
    std::remove("test_dataio_roundtrip.csv");
}
