#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mgfi/loss.hpp"

namespace mgfi {

struct ConfusionCounts {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
};

struct MetricReport {
    double accuracy = 0.0;
    double dice = 0.0;
    double iou = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    // loss components when known (filled by evaluation passes)
    double loss_total = 0.0;
    double loss_ce = 0.0;
    double loss_dice = 0.0;
    double loss_boundary = 0.0;
};

// Exact per-pixel tally of `cls` between prediction and ground truth.
ConfusionCounts confusion(const LabelMask& pred, const LabelMask& gt, int cls);

// Scores from counts. 0/0 ratios resolve to 1 when the class is absent from
// both masks, otherwise 0.
MetricReport report(const ConfusionCounts& counts);

// Macro average over foreground classes 1..C-1 (plain binary scores when C=2).
MetricReport report_for_masks(const LabelMask& pred, const LabelMask& gt,
                              int class_count);

// One CSV row per entry: header `method,accuracy,dice,iou,recall,precision`,
// four decimal places.
std::string metrics_csv(const std::vector<std::pair<std::string, MetricReport>>& rows);

}  // namespace mgfi
