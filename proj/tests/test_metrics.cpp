#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cabcnn/metrics.hpp"
#include "cabcnn/rng.hpp"

using cabcnn::ConfusionMatrix;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
    ConfusionMatrix cm(static_cast<std::int64_t>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows.size(); ++j) {
            cm.at(static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)) = rows[i][j];
        }
    }
    return cm;
}

// Frozen reference confusion matrices used as numeric ground truth;
// the scores they imply are known to four decimals.
const std::vector<std::vector<std::int64_t>> kMatrixA = {{213, 7, 10}, {9, 176, 9}, {24, 12, 64}};
const std::vector<std::vector<std::int64_t>> kMatrixB = {{226, 4, 0}, {2, 191, 1}, {8, 6, 86}};

}  // namespace

TEST_CASE("scores reproduce reference matrix A to 1e-4") {
    const ConfusionMatrix cm = from_rows(kMatrixA);
    CHECK(std::abs(cabcnn::accuracy(cm) - 0.8645) <= 1e-4);
    CHECK(std::abs(cabcnn::recall_unweighted(cm) - 0.8244) <= 1e-4);
    CHECK(std::abs(cabcnn::f1_macro(cm) - 0.8331) <= 1e-4);

    // Spot checks straight from the counts.
    CHECK(cabcnn::recall_per_class(cm, 2) == doctest::Approx(64.0 / 100.0));
    CHECK(cabcnn::precision_per_class(cm, 0) == doctest::Approx(213.0 / 246.0));
}

TEST_CASE("scores reproduce reference matrix B to 1e-4") {
    const ConfusionMatrix cm = from_rows(kMatrixB);
    CHECK(std::abs(cabcnn::accuracy(cm) - 0.9599) <= 1e-4);
    CHECK(std::abs(cabcnn::recall_unweighted(cm) - 0.9424) <= 1e-4);
    CHECK(std::abs(cabcnn::f1_macro(cm) - 0.9523) <= 1e-4);

    CHECK(cabcnn::recall_per_class(cm, 0) == doctest::Approx(226.0 / 230.0));
    CHECK(cabcnn::recall_per_class(cm, 2) == doctest::Approx(86.0 / 100.0));
    CHECK(cabcnn::precision_per_class(cm, 1) == doctest::Approx(191.0 / 201.0));
}

TEST_CASE("perfect and uniform matrices give the obvious scores") {
    const ConfusionMatrix perfect = from_rows({{5, 0}, {0, 7}});
    CHECK(cabcnn::accuracy(perfect) == doctest::Approx(1.0));
    CHECK(cabcnn::recall_unweighted(perfect) == doctest::Approx(1.0));
    CHECK(cabcnn::f1_macro(perfect) == doctest::Approx(1.0));

    const ConfusionMatrix half = from_rows({{1, 1}, {1, 1}});
    CHECK(cabcnn::accuracy(half) == doctest::Approx(0.5));
    CHECK(cabcnn::recall_unweighted(half) == doctest::Approx(0.5));
    CHECK(cabcnn::f1_macro(half) == doctest::Approx(0.5));
}

TEST_CASE("f1 is the harmonic mean of precision and recall") {
    const ConfusionMatrix cm = from_rows(kMatrixA);
    for (std::int64_t l = 0; l < 3; ++l) {
        const double p = cabcnn::precision_per_class(cm, l);
        const double r = cabcnn::recall_per_class(cm, l);
        CHECK(cabcnn::f1_per_class(cm, l) == doctest::Approx(2 * p * r / (p + r)).epsilon(1e-12));
    }
    double macro = 0.0;
    for (std::int64_t l = 0; l < 3; ++l) {
        macro += cabcnn::f1_per_class(cm, l) / 3.0;
    }
    CHECK(cabcnn::f1_macro(cm) == doctest::Approx(macro).epsilon(1e-12));
}

TEST_CASE("accuracy equals frequency-weighted recall") {
    cabcnn::Rng rng(81);
    for (int trial = 0; trial < 20; ++trial) {
        ConfusionMatrix cm(3);
        for (std::int64_t i = 0; i < 3; ++i) {
            for (std::int64_t j = 0; j < 3; ++j) {
                cm.at(i, j) = 1 + static_cast<std::int64_t>(rng.uniform_index(30));
            }
        }
        double weighted = 0.0;
        for (std::int64_t l = 0; l < 3; ++l) {
            weighted += static_cast<double>(cm.row_sum(l)) / static_cast<double>(cm.total()) *
                        cabcnn::recall_per_class(cm, l);
        }
        CHECK(cabcnn::accuracy(cm) == doctest::Approx(weighted).epsilon(1e-12));
    }
}

TEST_CASE("undefined metrics raise errors naming the class") {
    // Class 1 never occurs: recall undefined.
    const ConfusionMatrix no_actual = from_rows({{5, 0, 1}, {0, 0, 0}, {2, 0, 9}});
    CHECK_THROWS_WITH_AS(cabcnn::recall_per_class(no_actual, 1), doctest::Contains("class 1"),
                         cabcnn::DataError);
    CHECK_THROWS_AS(cabcnn::recall_unweighted(no_actual), cabcnn::DataError);

    // Class 2 never predicted: precision undefined.
    const ConfusionMatrix no_pred = from_rows({{5, 1, 0}, {1, 6, 0}, {2, 1, 0}});
    CHECK_THROWS_WITH_AS(cabcnn::precision_per_class(no_pred, 2), doctest::Contains("class 2"),
                         cabcnn::DataError);

    // Precision and recall both zero (but defined): F1 undefined.
    const ConfusionMatrix both_zero = from_rows({{0, 5}, {5, 0}});
    CHECK(cabcnn::precision_per_class(both_zero, 0) == 0.0);
    CHECK(cabcnn::recall_per_class(both_zero, 0) == 0.0);
    CHECK_THROWS_WITH_AS(cabcnn::f1_per_class(both_zero, 0), doctest::Contains("F1"),
                         cabcnn::DataError);

    const ConfusionMatrix empty(2);
    CHECK_THROWS_AS(cabcnn::accuracy(empty), cabcnn::DataError);
    CHECK_THROWS_AS(ConfusionMatrix(0), cabcnn::ConfigError);
}

TEST_CASE("build_confusion: counts, order independence, range checks") {
    std::vector<std::pair<int, int>> pairs = {{0, 0}, {0, 1}, {1, 1}, {1, 1}, {2, 0}, {2, 2}};
    const ConfusionMatrix cm = cabcnn::build_confusion(pairs, 3);
    CHECK(cm.at(0, 0) == 1);
    CHECK(cm.at(0, 1) == 1);
    CHECK(cm.at(1, 1) == 2);
    CHECK(cm.at(2, 0) == 1);
    CHECK(cm.at(2, 2) == 1);
    CHECK(cm.total() == 6);
    CHECK(cm.row_sum(1) == 2);
    CHECK(cm.col_sum(0) == 2);

    std::reverse(pairs.begin(), pairs.end());
    const ConfusionMatrix reversed = cabcnn::build_confusion(pairs, 3);
    CHECK(reversed.counts == cm.counts);

    CHECK_THROWS_AS(cabcnn::build_confusion({{0, 3}}, 3), cabcnn::DataError);
    CHECK_THROWS_AS(cabcnn::build_confusion({{-1, 0}}, 3), cabcnn::DataError);
}

TEST_CASE("pairs route and direct matrix construction agree on the paper data") {
    // Expand the reference matrix into (actual, predicted) pairs and rebuild.
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            for (std::int64_t k = 0; k < kMatrixB[static_cast<std::size_t>(i)]
                                             [static_cast<std::size_t>(j)]; ++k) {
                pairs.emplace_back(i, j);
            }
        }
    }
    const ConfusionMatrix rebuilt = cabcnn::build_confusion(pairs, 3);
    CHECK(rebuilt.counts == from_rows(kMatrixB).counts);
    CHECK(std::abs(cabcnn::f1_macro(rebuilt) - 0.9523) <= 1e-4);
}

TEST_CASE("score report JSON carries every score and the counts") {
    const std::string report = cabcnn::score_report_json(from_rows(kMatrixB), {"au", "us", "uk"});
    CHECK(report.find("\"accuracy\"") != std::string::npos);
    CHECK(report.find("\"recall_unweighted\"") != std::string::npos);
    CHECK(report.find("\"f1_macro\"") != std::string::npos);
    CHECK(report.find("\"per_class\"") != std::string::npos);
    CHECK(report.find("\"confusion\"") != std::string::npos);
    CHECK(report.find("226") != std::string::npos);
    CHECK(report.find("\"au\"") != std::string::npos);
    CHECK(report.back() == '\n');

    CHECK_THROWS_AS(cabcnn::score_report_json(from_rows(kMatrixB), {"a", "b"}),
                    cabcnn::ConfigError);
}
