#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace lilmap {

struct ClassMetrics {
    int class_id = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double recall = 0.0;
    double precision = 0.0;
    double iou = 0.0;
    double f1 = 0.0;
    bool present = false;  // occurs in ground truth or prediction
};

// F1 buckets: [0.9, 1], [0.8, 0.9), [0.7, 0.8), [0.5, 0.7), [0, 0.5)
inline constexpr std::array<double, 4> kF1BucketFloors{0.9, 0.8, 0.7, 0.5};

inline std::size_t f1_bucket(double f1) {
    for (std::size_t b = 0; b < kF1BucketFloors.size(); ++b) {
        if (f1 >= kF1BucketFloors[b]) return b;
    }
    return kF1BucketFloors.size();
}

struct SegmentationMetrics {
    std::size_t points = 0;
    std::size_t correct = 0;
    std::size_t unmapped = 0;
    double accuracy = 0.0;
    double mean_recall = 0.0;
    double mean_precision = 0.0;
    double mean_iou = 0.0;
    std::vector<ClassMetrics> per_class;
    std::array<int, 5> f1_histogram{};
};

// Point-wise segmentation metrics. Predictions < 0 mean "unmapped": they are
// wrong for accuracy, false negatives for the true class, and nobody's false
// positive. Ratios with a zero denominator are 0. Class means run over the
// classes that occur in either labeling.
inline SegmentationMetrics evaluate_segmentation(std::span<const int> truth, std::span<const int> pred, int classes) {
    if (truth.size() != pred.size()) throw std::invalid_argument("evaluate: label count mismatch");
    if (classes < 1) throw std::invalid_argument("evaluate: classes must be positive");
    SegmentationMetrics m;
    m.points = truth.size();
    m.per_class.resize(static_cast<std::size_t>(classes));
    for (int c = 0; c < classes; ++c) m.per_class[c].class_id = c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const int t = truth[i];
        const int p = pred[i];
        if (t < 0 || t >= classes) throw std::invalid_argument("evaluate: ground-truth label out of range");
        if (p >= classes) throw std::invalid_argument("evaluate: predicted label out of range");
        if (p < 0) ++m.unmapped;
        if (p == t) {
            ++m.correct;
            ++m.per_class[t].tp;
        } else {
            ++m.per_class[t].fn;
            if (p >= 0) ++m.per_class[p].fp;
        }
    }
    m.accuracy = m.points ? static_cast<double>(m.correct) / static_cast<double>(m.points) : 0.0;
    auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    int present = 0;
    for (auto& c : m.per_class) {
        c.present = c.tp + c.fp + c.fn > 0;
        c.recall = ratio(c.tp, c.tp + c.fn);
        c.precision = ratio(c.tp, c.tp + c.fp);
        c.iou = ratio(c.tp, c.tp + c.fp + c.fn);
        c.f1 = c.recall + c.precision > 0.0 ? 2.0 * c.recall * c.precision / (c.recall + c.precision) : 0.0;
        if (!c.present) continue;
        ++present;
        m.mean_recall += c.recall;
        m.mean_precision += c.precision;
        m.mean_iou += c.iou;
        ++m.f1_histogram[f1_bucket(c.f1)];
    }
    if (present > 0) {
        m.mean_recall /= present;
        m.mean_precision /= present;
        m.mean_iou /= present;
    }
    return m;
}

}  // namespace lilmap
