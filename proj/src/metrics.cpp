#include "mgfi/metrics.hpp"

#include <cstdio>
#include <stdexcept>

namespace mgfi {

ConfusionCounts confusion(const LabelMask& pred, const LabelMask& gt, int cls) {
    if (pred.values.shape() != gt.values.shape()) {
        throw std::invalid_argument("confusion: mask shapes differ: " +
                                    to_string(pred.values.shape()) + " vs " +
                                    to_string(gt.values.shape()));
    }
    const float c = static_cast<float>(cls);
    const float* pv = pred.values.data();
    const float* gv = gt.values.data();
    ConfusionCounts out;
    const std::int64_t n = pred.values.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const bool p = pv[i] == c;
        const bool g = gv[i] == c;
        if (p && g) {
            ++out.tp;
        } else if (p && !g) {
            ++out.fp;
        } else if (!p && g) {
            ++out.fn;
        } else {
            ++out.tn;
        }
    }
    return out;
}

MetricReport report(const ConfusionCounts& c) {
    MetricReport r;
    const bool absent = c.tp + c.fp == 0 && c.tp + c.fn == 0;
    auto ratio = [absent](double num, double den) {
        if (den == 0.0) return absent ? 1.0 : 0.0;
        return num / den;
    };
    const double tp = static_cast<double>(c.tp);
    r.accuracy = ratio(tp + static_cast<double>(c.tn), static_cast<double>(c.total()));
    r.precision = ratio(tp, tp + static_cast<double>(c.fp));
    r.recall = ratio(tp, tp + static_cast<double>(c.fn));
    r.dice = ratio(2.0 * tp, 2.0 * tp + static_cast<double>(c.fp) + static_cast<double>(c.fn));
    r.iou = ratio(tp, tp + static_cast<double>(c.fp) + static_cast<double>(c.fn));
    return r;
}

MetricReport report_for_masks(const LabelMask& pred, const LabelMask& gt,
                              int class_count) {
    if (class_count < 2) {
        throw std::invalid_argument("report_for_masks: class_count must be >= 2");
    }
    MetricReport acc;
    const int n_fg = class_count - 1;
    for (int cls = 1; cls < class_count; ++cls) {
        const MetricReport r = report(confusion(pred, gt, cls));
        acc.accuracy += r.accuracy;
        acc.dice += r.dice;
        acc.iou += r.iou;
        acc.recall += r.recall;
        acc.precision += r.precision;
    }
    acc.accuracy /= n_fg;
    acc.dice /= n_fg;
    acc.iou /= n_fg;
    acc.recall /= n_fg;
    acc.precision /= n_fg;
    return acc;
}

std::string metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::string out = "method,accuracy,dice,iou,recall,precision\n";
    char buf[160];
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.4f,%.4f\n", name.c_str(),
                      r.accuracy, r.dice, r.iou, r.recall, r.precision);
        out += buf;
    }
    return out;
}

}  // namespace mgfi
