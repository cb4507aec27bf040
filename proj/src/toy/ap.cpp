#include "lgi/toy/ap.hpp"

#include <algorithm>
#include <numeric>

namespace lgi::toy {

std::vector<Truth> truths_of(const ToyScene& scene)
{
    std::vector<Truth> out;
    for (const ToyObject& o : scene.objects) {
        out.push_back({static_cast<int>(o.cls), o.box()});
    }
    return out;
}

std::vector<double> coco_iou_thresholds()
{
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) {
        t.push_back(0.5 + 0.05 * i);
    }
    return t;
}

double class_average_precision(std::span<const DetectionSet> preds, std::span<const std::vector<Truth>> truths,
                               int cls, double iou_threshold)
{
    if (preds.size() != truths.size()) {
        throw ShapeError("eval_ap: " + std::to_string(preds.size()) + " prediction sets for " +
                         std::to_string(truths.size()) + " images");
    }
    struct Scored {
        double score;
        bool tp;
    };
    std::vector<Scored> pooled;
    std::int64_t n_truth = 0;
    for (std::size_t img = 0; img < preds.size(); ++img) {
        std::vector<const Box*> gts;
        for (const Truth& t : truths[img]) {
            if (t.cls == cls) gts.push_back(&t.box);
        }
        n_truth += static_cast<std::int64_t>(gts.size());
        std::vector<const Detection*> dets;
        for (const Detection& d : preds[img]) {
            if (d.cls == cls) dets.push_back(&d);
        }
        std::stable_sort(dets.begin(), dets.end(),
                         [](const Detection* a, const Detection* b) { return a->score > b->score; });
        std::vector<bool> used(gts.size(), false);
        for (const Detection* d : dets) {
            double best = iou_threshold;
            std::ptrdiff_t match = -1;
            for (std::size_t g = 0; g < gts.size(); ++g) {
                if (used[g]) continue;
                const double v = iou(d->box, *gts[g]);
                if (v >= best) {
                    best = v;
                    match = static_cast<std::ptrdiff_t>(g);
                }
            }
            if (match >= 0) {
                used[static_cast<std::size_t>(match)] = true;
            }
            pooled.push_back({d->score, match >= 0});
        }
    }
    if (n_truth == 0) {
        return -1.0;
    }
    std::stable_sort(pooled.begin(), pooled.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
    const std::size_t n = pooled.size();
    std::vector<double> recall(n), precision(n);
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        (pooled[i].tp ? tp : fp) += 1.0;
        recall[i] = tp / static_cast<double>(n_truth);
        precision[i] = tp / (tp + fp);
    }
    for (std::size_t i = n; i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
    }
    double acc = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) {
            acc += precision[static_cast<std::size_t>(it - recall.begin())];
        }
    }
    return acc / 101.0;
}

ApResult eval_ap(std::span<const DetectionSet> preds, std::span<const std::vector<Truth>> truths,
                 std::span<const double> thresholds)
{
    const std::vector<double> defaults = coco_iou_thresholds();
    if (thresholds.empty()) {
        thresholds = defaults;
    }
    auto mean_over_classes = [&](double thr) {
        double acc = 0.0;
        int n = 0;
        for (int c = 0; c < kNumClasses; ++c) {
            const double ap = class_average_precision(preds, truths, c, thr);
            if (ap >= 0.0) {
                acc += ap;
                ++n;
            }
        }
        return n > 0 ? acc / n : 0.0;
    };
    ApResult r;
    for (double t : thresholds) {
        r.per_threshold.push_back(mean_over_classes(t));
    }
    r.ap = std::accumulate(r.per_threshold.begin(), r.per_threshold.end(), 0.0) /
           static_cast<double>(r.per_threshold.size());
    r.ap50 = mean_over_classes(0.5);
    return r;
}

} // namespace lgi::toy
