#pragma once

#include <span>
#include <vector>

#include "lgi/toy/scene.hpp"

namespace lgi::toy {

struct Detection {
    int cls = 0;
    double score = 0.0; // in [0, 1]
    Box box;
};
using DetectionSet = std::vector<Detection>;

struct Truth {
    int cls = 0;
    Box box;
};

std::vector<Truth> truths_of(const ToyScene& scene);

// 0.50, 0.55, ..., 0.95
std::vector<double> coco_iou_thresholds();

// Average precision of one class at one IoU threshold, pooled over images.
// Per image, detections are visited in descending score order and each takes
// the unmatched truth of highest IoU >= threshold. Precision is made monotone
// and sampled at the 101 recall points 0, 0.01, ..., 1. Returns a negative
// value when the class has no truths.
double class_average_precision(std::span<const DetectionSet> preds, std::span<const std::vector<Truth>> truths,
                               int cls, double iou_threshold);

struct ApResult {
    double ap = 0.0;   // mean over classes with truths and over `thresholds`
    double ap50 = 0.0; // same, at IoU 0.50 only
    std::vector<double> per_threshold;
};

ApResult eval_ap(std::span<const DetectionSet> preds, std::span<const std::vector<Truth>> truths,
                 std::span<const double> thresholds = {});

} // namespace lgi::toy
