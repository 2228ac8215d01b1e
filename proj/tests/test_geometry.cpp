#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "lilmap/geometry.hpp"
#include "lilmap/rng.hpp"

using namespace lilmap;

namespace {

OctreeConfig small_config(int m = 4, int l = 6) {
    OctreeConfig c;
    c.corner_feature_dim = m;
    c.f_vector_dim = l;
    return c;
}

double weight_sum(const PointTaps& t, std::size_t level) {
    double s = 0.0;
    for (std::size_t c = 0; c < 8; ++c) s += t.taps[level * 8 + c].weight;
    return s;
}

}  // namespace

TEST(VoxelKey, FloorDivisionAtFineLevel) {
    const OctreeConfig c;
    EXPECT_EQ(voxel_key({0.07, 0.00, 0.12}, 10, c), (VoxelKey{1, 0, 2}));
    EXPECT_EQ(voxel_key({-0.01, 0.0, 0.0}, 10, c), (VoxelKey{-1, 0, 0}));
}

TEST(VoxelKey, CoarseLevelUsesScaledEdge) {
    const OctreeConfig c;
    EXPECT_DOUBLE_EQ(c.edge_length(8), 0.20);
    EXPECT_DOUBLE_EQ(c.edge_length(9), 0.10);
    EXPECT_DOUBLE_EQ(c.edge_length(10), 0.05);
    EXPECT_EQ(voxel_key({0.07, 0.00, 0.12}, 8, c), (VoxelKey{0, 0, 0}));
    EXPECT_EQ(voxel_key({-0.01, 0.0, 0.0}, 8, c), (VoxelKey{-1, 0, 0}));
    EXPECT_EQ(voxel_key({0.39, -0.41, 0.2}, 8, c), (VoxelKey{1, -3, 1}));
}

TEST(VoxelKey, RejectsBadInput) {
    const OctreeConfig c;
    EXPECT_THROW(voxel_key({std::nan(""), 0, 0}, 10, c), std::invalid_argument);
    EXPECT_THROW(voxel_key({std::numeric_limits<double>::infinity(), 0, 0}, 10, c), std::invalid_argument);
    EXPECT_THROW(voxel_key({1e12, 0, 0}, 10, c), std::invalid_argument);
    EXPECT_THROW(voxel_key({0, 0, 0}, 7, c), std::invalid_argument);
}

TEST(OctreeConfig, Validation) {
    OctreeConfig c;
    EXPECT_NO_THROW(c.validate());
    c.levels = {9, 8};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.levels = {};
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = OctreeConfig{};
    c.fine_resolution = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = OctreeConfig{};
    c.corner_feature_dim = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(TrilinearWeights, Examples) {
    const auto mid = trilinear_weights({0.5, 0.5, 0.5});
    for (double w : mid) EXPECT_DOUBLE_EQ(w, 0.125);
    const auto q = trilinear_weights({0.25, 0.25, 0.25});
    EXPECT_DOUBLE_EQ(q[0], 0.421875);
    EXPECT_DOUBLE_EQ(q[7], 0.25 * 0.25 * 0.25);
    const auto corner = trilinear_weights({1.0, 0.0, 1.0});
    for (int c = 0; c < 8; ++c) EXPECT_EQ(corner[c], c == 5 ? 1.0 : 0.0);
}

TEST(Octree, SinglePointCreatesOneVoxelPerLevel) {
    SparseFeatureOctree<double> oct(small_config());
    const std::vector<Vec3> pts{{0.07, 0.01, 0.12}};
    const auto r = oct.insert_points(pts);
    EXPECT_EQ(r.new_voxels, 3u);
    EXPECT_LE(r.new_corners, 24u);
    EXPECT_EQ(r.new_corners, 24u);  // corner tables are per level
    EXPECT_EQ(r.new_f_vectors, 1u);
    EXPECT_EQ(oct.f_count(), 1u);
    EXPECT_EQ(oct.corner_count(), 24u);
}

TEST(Octree, InsertIsIdempotent) {
    SparseFeatureOctree<double> oct(small_config());
    const std::vector<Vec3> pts{{0.07, 0.01, 0.12}, {1.3, -0.4, 0.9}};
    oct.insert_points(pts);
    const auto corners = std::vector<double>(oct.corner_data().begin(), oct.corner_data().end());
    const auto r = oct.insert_points(pts);
    EXPECT_EQ(r.total_new(), 0u);
    EXPECT_EQ(std::vector<double>(oct.corner_data().begin(), oct.corner_data().end()), corners);
}

TEST(Octree, AdjacentFineVoxelsShareFourCorners) {
    SparseFeatureOctree<double> oct(small_config());
    const std::vector<Vec3> pts{{0.01, 0.01, 0.01}, {0.06, 0.01, 0.01}};
    oct.insert_points(pts);
    const std::size_t fine = 2;
    EXPECT_EQ(oct.voxel_count(fine), 2u);
    EXPECT_EQ(oct.corner_count(fine), 12u);
    const auto& lv = oct.level(fine);
    const auto& a = lv.voxels.at({0, 0, 0});
    const auto& b = lv.voxels.at({1, 0, 0});
    std::set<std::uint32_t> sa(a.corners.begin(), a.corners.end());
    int shared = 0;
    for (auto c : b.corners) shared += sa.count(c) ? 1 : 0;
    EXPECT_EQ(shared, 4);
    // x+ face of a is the x- face of b
    for (int c = 0; c < 8; c += 2) EXPECT_EQ(a.corners[c + 1], b.corners[c]);
}

TEST(Octree, NonFinitePointsAreSkippedAndCounted) {
    SparseFeatureOctree<float> oct(small_config());
    const std::vector<Vec3> pts{{std::nan(""), 0, 0}, {0.1, 0.1, 0.1}, {0, std::numeric_limits<double>::infinity(), 0}};
    const auto r = oct.insert_points(pts);
    EXPECT_EQ(r.skipped_points, 2u);
    EXPECT_EQ(r.new_voxels, 3u);
}

TEST(Octree, InitializationRanges) {
    SparseFeatureOctree<double> oct(small_config(8, 16), 5);
    Rng rng(1);
    std::vector<Vec3> pts;
    for (int i = 0; i < 500; ++i) pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    oct.insert_points(pts);
    for (double v : oct.corner_data()) EXPECT_LE(std::abs(v), SparseFeatureOctree<double>::kCornerInitRange);
    for (double v : oct.f_data()) EXPECT_LE(std::abs(v), SparseFeatureOctree<double>::kFInitRange);
}

TEST(Octree, DefaultFVectorIsCopied) {
    SparseFeatureOctree<double> oct(small_config(4, 3));
    const std::vector<double> init{0.5, -1.0, 2.0};
    InsertOptions<double> opts;
    opts.default_f = init;
    const std::vector<Vec3> pts{{0.1, 0.1, 0.1}, {5.0, 5.0, 5.0}};
    oct.insert_points(pts, opts);
    ASSERT_EQ(oct.f_count(), 2u);
    for (std::uint32_t f = 0; f < 2; ++f) {
        for (int i = 0; i < 3; ++i) EXPECT_EQ(oct.f_vector(f)(i), init[i]);
    }
}

TEST(Octree, EncodeAtCornerCenterAndOffset) {
    OctreeConfig c = small_config();
    c.levels = {10};
    SparseFeatureOctree<double> oct(c);
    const std::vector<Vec3> pts{{0.025, 0.025, 0.025}};
    oct.insert_points(pts);
    const auto& rec = oct.level(0).voxels.at({0, 0, 0});

    const auto center = oct.lookup({0.025, 0.025, 0.025});
    ASSERT_TRUE(center);
    for (const auto& t : center->taps) EXPECT_DOUBLE_EQ(t.weight, 0.125);

    const auto off = oct.lookup({0.0125, 0.0125, 0.0125});
    ASSERT_TRUE(off);
    EXPECT_DOUBLE_EQ(off->taps[0].weight, 0.421875);

    const auto corner = oct.encode_point({0.0, 0.0, 0.0});
    ASSERT_TRUE(corner);
    EXPECT_EQ(corner->taps.taps[0].weight, 1.0);
    for (int k = 1; k < 8; ++k) EXPECT_EQ(corner->taps.taps[k].weight, 0.0);
    const Eigen::VectorXd expect = oct.corner(rec.corners[0]);
    EXPECT_TRUE(corner->value == expect);
}

TEST(Octree, UnmappedPointSignalled) {
    SparseFeatureOctree<double> oct(small_config());
    const std::vector<Vec3> pts{{0.1, 0.1, 0.1}};
    oct.insert_points(pts);
    EXPECT_FALSE(oct.lookup({3.0, 3.0, 3.0}));
    EXPECT_FALSE(oct.encode_point({3.0, 3.0, 3.0}));
    EXPECT_FALSE(oct.coarse_f_index({3.0, 3.0, 3.0}));
    EXPECT_FALSE(oct.lookup({std::nan(""), 0, 0}));
    // same coarse voxel but a fine voxel that was never observed
    EXPECT_TRUE(oct.coarse_f_index({0.16, 0.16, 0.16}));
    EXPECT_FALSE(oct.lookup({0.16, 0.16, 0.16}));
}

TEST(Octree, CoarseFHandles) {
    SparseFeatureOctree<double> oct(small_config());
    const std::vector<Vec3> pts{{0.05, 0.05, 0.05}, {0.06, 0.05, 0.05}, {0.25, 0.05, 0.05}, {0.2, 0.05, 0.05}};
    oct.insert_points(pts);
    EXPECT_EQ(*oct.coarse_f_index(pts[0]), *oct.coarse_f_index(pts[1]));
    EXPECT_NE(*oct.coarse_f_index(pts[0]), *oct.coarse_f_index(pts[2]));
    // x = 0.2 lies on the boundary face: the floor rule puts it in the upper voxel
    EXPECT_EQ(*oct.coarse_f_index(pts[3]), *oct.coarse_f_index(pts[2]));
    EXPECT_EQ(oct.lookup(pts[1])->f_index, *oct.coarse_f_index(pts[1]));
}

TEST(OctreeProperty, WeightsNonNegativeAndSumToOne) {
    SparseFeatureOctree<double> oct(small_config());
    Rng rng(42);
    std::vector<Vec3> pts;
    for (int i = 0; i < 20000; ++i) pts.emplace_back(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    oct.insert_points(pts);
    for (const auto& p : pts) {
        const auto t = oct.lookup(p);
        ASSERT_TRUE(t);
        ASSERT_EQ(t->taps.size(), 24u);
        for (std::size_t l = 0; l < 3; ++l) ASSERT_NEAR(weight_sum(*t, l), 1.0, 1e-12);
        for (const auto& tap : t->taps) ASSERT_GE(tap.weight, 0.0);
    }
}

TEST(OctreeProperty, LevelsNestAndCornerCountBounded) {
    SparseFeatureOctree<float> oct(small_config());
    Rng rng(3);
    std::vector<Vec3> pts;
    for (int i = 0; i < 5000; ++i) pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(0, 0.3));
    oct.insert_points(pts);
    const auto& cfg = oct.config();
    for (const auto& [k, rec] : oct.level(2).voxels) {
        for (std::size_t li = 0; li < 2; ++li) {
            const VoxelKey parent = detail::coarsen(k, cfg.shift(cfg.levels[li]));
            EXPECT_TRUE(oct.level(li).voxels.contains(parent));
        }
    }
    for (std::size_t li = 0; li < 3; ++li) EXPECT_LE(oct.corner_count(li), 8 * oct.voxel_count(li));
    EXPECT_EQ(oct.f_count(), oct.voxel_count(0));
}

TEST(OctreeProperty, EncodingContinuousAcrossSharedFace) {
    SparseFeatureOctree<double> oct(small_config(5, 4), 9);
    std::vector<Vec3> pts{{0.049, 0.02, 0.03}, {0.051, 0.02, 0.03}};
    oct.insert_points(pts);
    // make corner features O(1) so a jump would be visible
    Rng rng(7);
    for (auto& v : oct.corner_data()) v = rng.uniform(-1, 1);
    for (double eps : {1e-3, 1e-5, 1e-8}) {
        const auto a = oct.encode_point({0.05 - eps, 0.02, 0.03});
        const auto b = oct.encode_point({0.05 + eps, 0.02, 0.03});
        ASSERT_TRUE(a && b);
        EXPECT_LT((a->value - b->value).norm(), 1000 * eps);
    }
    const auto at = oct.encode_point({0.05, 0.02, 0.03});
    const auto left = oct.encode_point({0.05 - 1e-12, 0.02, 0.03});
    EXPECT_LT((at->value - left->value).norm(), 1e-9);
}

TEST(OctreeProperty, GatherScatterAdjointness) {
    // d<u, encode(p)>/d corner_c = weight_c * u, checked by central differences
    SparseFeatureOctree<double> oct(small_config(3, 2), 11);
    Rng rng(12);
    for (int trial = 0; trial < 20; ++trial) {
        const Vec3 p(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
        const std::vector<Vec3> pts{p};
        oct.insert_points(pts);
        for (auto& v : oct.corner_data()) v = rng.uniform(-1, 1);
        const Eigen::Vector3d u(rng.normal(), rng.normal(), rng.normal());
        const auto taps = oct.lookup(p);
        ASSERT_TRUE(taps);
        Eigen::MatrixXd analytic = Eigen::MatrixXd::Zero(3, static_cast<Eigen::Index>(oct.corner_count()));
        for (const auto& t : taps->taps) analytic.col(t.corner) += t.weight * u;
        const double h = 1e-6;
        for (const auto& t : taps->taps) {
            for (int d = 0; d < 3; ++d) {
                auto& x = oct.corner(t.corner)(d);
                const double x0 = x;
                x = x0 + h;
                const double fp = u.dot(oct.encode_point(p)->value);
                x = x0 - h;
                const double fm = u.dot(oct.encode_point(p)->value);
                x = x0;
                const double fd = (fp - fm) / (2 * h);
                const double a = analytic(d, t.corner);
                EXPECT_LT(std::abs(fd - a) / std::max({std::abs(fd), std::abs(a), 1e-3}), 1e-6);
            }
        }
    }
}

TEST(Octree, FineKeysSortedAndCentersInside) {
    SparseFeatureOctree<float> oct(small_config());
    Rng rng(2);
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    oct.insert_points(pts);
    const auto keys = oct.fine_keys();
    EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
    EXPECT_EQ(keys.size(), oct.voxel_count(2));
    for (const auto& k : keys) {
        EXPECT_EQ(*detail::fine_key(oct.fine_center(k), oct.config()), k);
        EXPECT_TRUE(oct.contains_fine(oct.fine_center(k)));
    }
}

TEST(Octree, StatsDumpIsLineOriented) {
    SparseFeatureOctree<float> oct(small_config());
    const std::vector<Vec3> pts{{0.1, 0.1, 0.1}};
    oct.insert_points(pts);
    const std::string s = oct.stats();
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 4);
    EXPECT_NE(s.find("level 8 edge=0.2 voxels=1 corners=8 f_vectors=1"), std::string::npos);
    EXPECT_NE(s.find("level 10 edge=0.05 voxels=1 corners=8 f_vectors=0"), std::string::npos);
}

TEST(Octree, RestoreRejectsDanglingIndexes) {
    SparseFeatureOctree<float> oct(small_config());
    const std::vector<Vec3> pts{{0.1, 0.1, 0.1}};
    oct.insert_points(pts);
    std::vector<SparseFeatureOctree<float>::Level> levels{oct.level(0), oct.level(1), oct.level(2)};
    std::vector<float> corners(oct.corner_data().begin(), oct.corner_data().end());
    std::vector<float> fvecs(oct.f_data().begin(), oct.f_data().end());
    SparseFeatureOctree<float> copy(small_config());
    EXPECT_NO_THROW(copy.restore(levels, corners, fvecs, oct.rng()));
    EXPECT_EQ(copy.corner_count(), oct.corner_count());
    corners.resize(corners.size() - 4);
    EXPECT_THROW(copy.restore(levels, corners, fvecs, oct.rng()), InputError);
}
