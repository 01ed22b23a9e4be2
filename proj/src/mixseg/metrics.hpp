#pragma once

#include <cstdint>
#include <string>

#include "mixseg/tensor.hpp"

namespace mixseg {

// Pixel tallies against ground truth. Accumulation is a commutative monoid:
// counts may be summed across images/patches in any order.
struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + tn + fp + fn; }

    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp;
        tn += o.tn;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }

    friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
};

// AC, SE, SP, PC, F1 (Dice) and JS (Jaccard), all in [0,1].
struct MetricsReport {
    double ac = 0, se = 0, sp = 0, pc = 0, f1 = 0, js = 0;
};

// value >= threshold -> 1 else 0. Threshold must lie in [0,1].
Tensor<float> binarize(const Tensor<float>& probs, double threshold = 0.5);

// Exact tallies; inputs must be strictly binary (0/1).
ConfusionCounts confusion_counts(const Tensor<float>& pred, const Tensor<float>& gt);

// Evaluates the six ratio formulas. 0/0 cases resolve to 1 (vacuous truth):
// SE with no positives, SP with no negatives, PC with no predicted positives,
// F1/JS with an empty union.
MetricsReport compute_metrics(const ConfusionCounts& counts);

// Set formulation |GT n SR| / |GT u SR|; equals the confusion-count form.
double jaccard_set(const Tensor<float>& sr, const Tensor<float>& gt);

// Table-style text rendering, 4 decimal places per column.
std::string metrics_table_header();
std::string metrics_table_row(const std::string& dataset, const std::string& method,
                              const MetricsReport& r);
std::string metrics_table_footer();

// CSV serialization (header row + data row helpers).
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& dataset, const std::string& method,
                            const MetricsReport& r);

}  // namespace mixseg
