#include "mixseg/metrics.hpp"

#include <cstdio>

namespace mixseg {

Tensor<float> binarize(const Tensor<float>& probs, double threshold) {
    if (threshold < 0.0 || threshold > 1.0) {
        throw ConfigError("binarize: threshold must lie in [0,1], got " + std::to_string(threshold));
    }
    Tensor<float> mask = Tensor<float>::zeros(probs.shape);
    for (std::size_t i = 0; i < probs.data.size(); ++i) {
        mask.data[i] = probs.data[i] >= static_cast<float>(threshold) ? 1.0f : 0.0f;
    }
    return mask;
}

ConfusionCounts confusion_counts(const Tensor<float>& pred, const Tensor<float>& gt) {
    if (pred.shape != gt.shape) {
        throw ShapeError("confusion_counts: shape mismatch " + shape_str(pred.shape) + " vs " +
                         shape_str(gt.shape));
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const float p = pred.data[i];
        const float g = gt.data[i];
        if ((p != 0.0f && p != 1.0f) || (g != 0.0f && g != 1.0f)) {
            throw DataError("confusion_counts: inputs must be binary masks");
        }
        if (p == 1.0f) {
            (g == 1.0f ? c.tp : c.fp) += 1;
        } else {
            (g == 1.0f ? c.fn : c.tn) += 1;
        }
    }
    return c;
}

namespace {
double ratio_or(double num, double den, double empty_value) {
    return den > 0.0 ? num / den : empty_value;
}
}  // namespace

MetricsReport compute_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) {
        throw DataError("compute_metrics: no evaluated pixels");
    }
    const double tp = static_cast<double>(c.tp);
    const double tn = static_cast<double>(c.tn);
    const double fp = static_cast<double>(c.fp);
    const double fn = static_cast<double>(c.fn);
    MetricsReport r;
    r.ac = (tp + tn) / (tp + tn + fp + fn);
    r.se = ratio_or(tp, tp + fn, 1.0);
    r.sp = ratio_or(tn, tn + fp, 1.0);
    r.pc = ratio_or(tp, tp + fp, 1.0);
    r.f1 = ratio_or(2.0 * tp, 2.0 * tp + fp + fn, 1.0);
    r.js = ratio_or(tp, tp + fp + fn, 1.0);
    return r;
}

double jaccard_set(const Tensor<float>& sr, const Tensor<float>& gt) {
    if (sr.shape != gt.shape) {
        throw ShapeError("jaccard_set: shape mismatch " + shape_str(sr.shape) + " vs " +
                         shape_str(gt.shape));
    }
    std::uint64_t inter = 0;
    std::uint64_t uni = 0;
    for (std::size_t i = 0; i < sr.data.size(); ++i) {
        const bool a = sr.data[i] == 1.0f;
        const bool b = gt.data[i] == 1.0f;
        if ((!a && sr.data[i] != 0.0f) || (!b && gt.data[i] != 0.0f)) {
            throw DataError("jaccard_set: inputs must be binary masks");
        }
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 1.0;
}

namespace {
std::string fmt4(double v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}
}  // namespace

std::string metrics_table_header() {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-10s %-14s %7s %7s %7s %7s %7s %7s", "Dataset", "Method", "AC",
                  "SE", "SP", "PC", "F1", "JS");
    return buf;
}

std::string metrics_table_row(const std::string& dataset, const std::string& method,
                              const MetricsReport& r) {
    char buf[192];
    std::snprintf(buf, sizeof(buf), "%-10s %-14s %7s %7s %7s %7s %7s %7s", dataset.c_str(),
                  method.c_str(), fmt4(r.ac).c_str(), fmt4(r.se).c_str(), fmt4(r.sp).c_str(),
                  fmt4(r.pc).c_str(), fmt4(r.f1).c_str(), fmt4(r.js).c_str());
    return buf;
}

std::string metrics_table_footer() {
    return "0/0 conventions: SE, SP, PC report 1 when their denominator is empty; "
           "F1 and JS report 1 on an empty union.";
}

std::string metrics_csv_header() {
    return "dataset,method,AC,SE,SP,PC,F1,JS";
}

std::string metrics_csv_row(const std::string& dataset, const std::string& method,
                            const MetricsReport& r) {
    return dataset + "," + method + "," + fmt4(r.ac) + "," + fmt4(r.se) + "," + fmt4(r.sp) + "," +
           fmt4(r.pc) + "," + fmt4(r.f1) + "," + fmt4(r.js);
}

}  // namespace mixseg
