#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cabcnn/errors.hpp"

namespace cabcnn {

// Confusion counts: rows are actual classes, columns predicted.
struct ConfusionMatrix {
    std::int64_t m = 0;
    std::vector<std::int64_t> counts;  // m*m row-major

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::int64_t classes);

    std::int64_t& at(std::int64_t actual, std::int64_t predicted);
    std::int64_t at(std::int64_t actual, std::int64_t predicted) const;
    std::int64_t total() const;
    std::int64_t row_sum(std::int64_t l) const;
    std::int64_t col_sum(std::int64_t l) const;
};

ConfusionMatrix build_confusion(const std::vector<std::pair<int, int>>& pairs, std::int64_t m);

double accuracy(const ConfusionMatrix& cm);
double recall_per_class(const ConfusionMatrix& cm, std::int64_t l);
double recall_unweighted(const ConfusionMatrix& cm);
double precision_per_class(const ConfusionMatrix& cm, std::int64_t l);
double f1_per_class(const ConfusionMatrix& cm, std::int64_t l);
double f1_macro(const ConfusionMatrix& cm);

// {accuracy, recall_unweighted, f1_macro, per_class: {precision, recall,
// f1}, classes, confusion}; class_names must have cm.m entries.
std::string score_report_json(const ConfusionMatrix& cm,
                              const std::vector<std::string>& class_names);

}  // namespace cabcnn
