#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "lilmap/metrics.hpp"

using namespace lilmap;

TEST(Segmentation, WorkedExample) {
    const std::vector<int> gt{0, 0, 1, 1};
    const std::vector<int> pred{0, 1, 1, 1};
    const auto m = evaluate_segmentation(gt, pred, 2);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
    EXPECT_DOUBLE_EQ(m.per_class[0].recall, 0.5);
    EXPECT_DOUBLE_EQ(m.per_class[1].recall, 1.0);
    EXPECT_DOUBLE_EQ(m.per_class[0].precision, 1.0);
    EXPECT_DOUBLE_EQ(m.per_class[1].precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(m.per_class[0].iou, 0.5);
    EXPECT_DOUBLE_EQ(m.per_class[1].iou, 2.0 / 3.0);
    EXPECT_NEAR(m.mean_iou, 0.5833, 5e-5);
    EXPECT_DOUBLE_EQ(m.mean_recall, 0.75);
}

TEST(Segmentation, PerfectPrediction) {
    const std::vector<int> gt{0, 1, 2, 2, 1};
    const auto m = evaluate_segmentation(gt, gt, 3);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.mean_iou, 1.0);
    EXPECT_EQ(m.mean_precision, 1.0);
    EXPECT_EQ(m.f1_histogram[0], 3);
}

TEST(Segmentation, AbsentClassExcluded) {
    const std::vector<int> gt{0, 0, 2};
    const auto m = evaluate_segmentation(gt, gt, 4);
    EXPECT_FALSE(m.per_class[1].present);
    EXPECT_FALSE(m.per_class[3].present);
    EXPECT_EQ(m.mean_iou, 1.0);
    // predicted-only class still counts
    const std::vector<int> pred{0, 1, 2};
    const auto n = evaluate_segmentation(gt, pred, 4);
    EXPECT_TRUE(n.per_class[1].present);
    EXPECT_DOUBLE_EQ(n.mean_iou, (0.5 + 0.0 + 1.0) / 3.0);
}

TEST(Segmentation, UnmappedIsWrongButNotFalsePositive) {
    const std::vector<int> gt{0, 0, 1, 1};
    const std::vector<int> pred{0, -1, 1, -1};
    const auto m = evaluate_segmentation(gt, pred, 2);
    EXPECT_EQ(m.unmapped, 2u);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
    EXPECT_EQ(m.per_class[0].fp, 0u);
    EXPECT_EQ(m.per_class[1].fp, 0u);
    EXPECT_DOUBLE_EQ(m.per_class[0].precision, 1.0);
    EXPECT_DOUBLE_EQ(m.per_class[0].recall, 0.5);
}

TEST(Segmentation, RejectsBadInput) {
    const std::vector<int> a{0, 1};
    const std::vector<int> b{0};
    EXPECT_THROW(evaluate_segmentation(a, b, 2), std::invalid_argument);
    EXPECT_THROW(evaluate_segmentation(a, std::vector<int>{0, 2}, 2), std::invalid_argument);
    EXPECT_THROW(evaluate_segmentation(std::vector<int>{3, 0}, a, 2), std::invalid_argument);
    EXPECT_THROW(evaluate_segmentation(a, a, 0), std::invalid_argument);
}

TEST(Segmentation, MatchesConfusionMatrixOracle) {
    std::mt19937 gen(4);
    std::uniform_int_distribution<int> cls(0, 4), unm(0, 9);
    std::vector<int> gt(3000), pred(3000);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        gt[i] = cls(gen);
        pred[i] = unm(gen) == 0 ? -1 : (unm(gen) < 6 ? gt[i] : cls(gen));
    }
    // confusion matrix with an extra column for unmapped
    long cm[5][6] = {};
    for (std::size_t i = 0; i < gt.size(); ++i) ++cm[gt[i]][pred[i] < 0 ? 5 : pred[i]];
    const auto m = evaluate_segmentation(gt, pred, 5);
    double miou = 0, diag = 0;
    for (int c = 0; c < 5; ++c) {
        long row = 0, col = 0;
        for (int j = 0; j < 6; ++j) row += cm[c][j];
        for (int i = 0; i < 5; ++i) col += cm[i][c];
        const double iou = static_cast<double>(cm[c][c]) / static_cast<double>(row + col - cm[c][c]);
        EXPECT_NEAR(m.per_class[c].iou, iou, 1e-15);
        miou += iou / 5;
        diag += cm[c][c];
    }
    EXPECT_NEAR(m.mean_iou, miou, 1e-15);
    EXPECT_NEAR(m.accuracy, diag / 3000.0, 1e-15);
}

TEST(F1Buckets, Boundaries) {
    EXPECT_EQ(f1_bucket(1.0), 0u);
    EXPECT_EQ(f1_bucket(0.9), 0u);
    EXPECT_EQ(f1_bucket(0.8999), 1u);
    EXPECT_EQ(f1_bucket(0.8), 1u);
    EXPECT_EQ(f1_bucket(0.75), 2u);
    EXPECT_EQ(f1_bucket(0.5), 3u);
    EXPECT_EQ(f1_bucket(0.49), 4u);
    EXPECT_EQ(f1_bucket(0.0), 4u);
}
