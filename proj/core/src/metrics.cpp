#include "cabcnn/metrics.hpp"

#include <nlohmann/json.hpp>

namespace cabcnn {

ConfusionMatrix::ConfusionMatrix(std::int64_t classes) : m(classes) {
    if (classes < 1) {
        throw ConfigError("confusion matrix needs at least 1 class");
    }
    counts.assign(static_cast<std::size_t>(classes * classes), 0);
}

std::int64_t& ConfusionMatrix::at(std::int64_t actual, std::int64_t predicted) {
    return counts[static_cast<std::size_t>(actual * m + predicted)];
}

std::int64_t ConfusionMatrix::at(std::int64_t actual, std::int64_t predicted) const {
    return counts[static_cast<std::size_t>(actual * m + predicted)];
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (std::int64_t c : counts) {
        t += c;
    }
    return t;
}

std::int64_t ConfusionMatrix::row_sum(std::int64_t l) const {
    std::int64_t t = 0;
    for (std::int64_t j = 0; j < m; ++j) {
        t += at(l, j);
    }
    return t;
}

std::int64_t ConfusionMatrix::col_sum(std::int64_t l) const {
    std::int64_t t = 0;
    for (std::int64_t i = 0; i < m; ++i) {
        t += at(i, l);
    }
    return t;
}

ConfusionMatrix build_confusion(const std::vector<std::pair<int, int>>& pairs, std::int64_t m) {
    ConfusionMatrix cm(m);
    for (const auto& [actual, predicted] : pairs) {
        if (actual < 0 || actual >= m || predicted < 0 || predicted >= m) {
            throw DataError("class pair (" + std::to_string(actual) + "," +
                            std::to_string(predicted) + ") out of range for " +
                            std::to_string(m) + " classes");
        }
        ++cm.at(actual, predicted);
    }
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    const std::int64_t total = cm.total();
    if (total < 1) {
        throw DataError("accuracy undefined on an empty confusion matrix");
    }
    std::int64_t diag = 0;
    for (std::int64_t l = 0; l < cm.m; ++l) {
        diag += cm.at(l, l);
    }
    return static_cast<double>(diag) / static_cast<double>(total);
}

double recall_per_class(const ConfusionMatrix& cm, std::int64_t l) {
    const std::int64_t row = cm.row_sum(l);
    if (row < 1) {
        throw DataError("recall undefined for class " + std::to_string(l) +
                        " (no actual samples)");
    }
    return static_cast<double>(cm.at(l, l)) / static_cast<double>(row);
}

double recall_unweighted(const ConfusionMatrix& cm) {
    double sum = 0.0;
    for (std::int64_t l = 0; l < cm.m; ++l) {
        sum += recall_per_class(cm, l);
    }
    return sum / static_cast<double>(cm.m);
}

double precision_per_class(const ConfusionMatrix& cm, std::int64_t l) {
    const std::int64_t col = cm.col_sum(l);
    if (col < 1) {
        throw DataError("precision undefined for class " + std::to_string(l) +
                        " (never predicted)");
    }
    return static_cast<double>(cm.at(l, l)) / static_cast<double>(col);
}

double f1_per_class(const ConfusionMatrix& cm, std::int64_t l) {
    const double p = precision_per_class(cm, l);
    const double r = recall_per_class(cm, l);
    if (p + r == 0.0) {
        throw DataError("F1 undefined for class " + std::to_string(l) +
                        " (precision and recall both zero)");
    }
    return 2.0 * p * r / (p + r);
}

double f1_macro(const ConfusionMatrix& cm) {
    double sum = 0.0;
    for (std::int64_t l = 0; l < cm.m; ++l) {
        sum += f1_per_class(cm, l);
    }
    return sum / static_cast<double>(cm.m);
}

std::string score_report_json(const ConfusionMatrix& cm,
                              const std::vector<std::string>& class_names) {
    if (static_cast<std::int64_t>(class_names.size()) != cm.m) {
        throw ConfigError("score report needs " + std::to_string(cm.m) + " class names, got " +
                          std::to_string(class_names.size()));
    }
    using nlohmann::json;
    json per_class = {{"precision", json::array()},
                      {"recall", json::array()},
                      {"f1", json::array()}};
    for (std::int64_t l = 0; l < cm.m; ++l) {
        per_class["precision"].push_back(precision_per_class(cm, l));
        per_class["recall"].push_back(recall_per_class(cm, l));
        per_class["f1"].push_back(f1_per_class(cm, l));
    }
    json confusion = json::array();
    for (std::int64_t i = 0; i < cm.m; ++i) {
        json row = json::array();
        for (std::int64_t j = 0; j < cm.m; ++j) {
            row.push_back(cm.at(i, j));
        }
        confusion.push_back(row);
    }
    const json report = {{"accuracy", accuracy(cm)},
                         {"recall_unweighted", recall_unweighted(cm)},
                         {"f1_macro", f1_macro(cm)},
                         {"per_class", per_class},
                         {"classes", class_names},
                         {"confusion", confusion}};
    return report.dump(2) + "\n";
}

}  // namespace cabcnn
