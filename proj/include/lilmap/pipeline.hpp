#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <numeric>
#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lilmap/adaptive.hpp"
#include "lilmap/common.hpp"
#include "lilmap/fusion.hpp"
#include "lilmap/geometry.hpp"
#include "lilmap/neural.hpp"
#include "lilmap/rng.hpp"

namespace lilmap {

struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0)) throw InputError("intrinsics: focal lengths must be positive");
        if (width <= 0 || height <= 0) throw InputError("intrinsics: image size must be positive");
        if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
            throw InputError("intrinsics: principal point outside the image");
        }
    }
    bool operator==(const CameraIntrinsics&) const = default;
};

// Camera-to-world rigid transform. Camera frame: +x right, +y down, +z forward
// through the image plane (right-handed).
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Vec3 translation = Vec3::Zero();

    void validate() const {
        if (!rotation.allFinite() || !translation.allFinite()) throw InputError("pose: non-finite values");
        if ((rotation * rotation.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
            throw InputError("pose: rotation is not orthonormal");
        }
    }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    Vec3 inverse_apply(const Vec3& p) const { return rotation.transpose() * (p - translation); }

    static Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
        const Vec3 z = (target - eye).normalized();
        Vec3 x = z.cross(up);
        if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
        x.normalize();
        const Vec3 y = z.cross(x);
        Pose pose;
        pose.rotation.col(0) = x;
        pose.rotation.col(1) = y;
        pose.rotation.col(2) = z;
        pose.translation = eye;
        return pose;
    }
};

struct Frame {
    int width = 0;
    int height = 0;
    std::vector<float> depth;   // meters, row-major H x W, 0 = invalid
    Eigen::MatrixXf features;   // D x (H*W), column v*W+u
    Pose pose;

    void validate() const {
        if (width <= 0 || height <= 0) throw InputError("frame: empty image");
        const auto n = static_cast<std::size_t>(width) * height;
        if (depth.size() != n || static_cast<std::size_t>(features.cols()) != n) {
            throw InputError("frame: depth/feature sizes disagree with image size");
        }
        for (float d : depth) {
            if (d < 0.0f) throw InputError("frame: negative depth");
        }
        pose.validate();
    }
};

struct LanguagePointCloud {
    std::vector<Vec3> points;   // world frame
    Eigen::MatrixXf features;   // D x N, unit norm

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

// Back-project every valid pixel; invalid depth or zero features are skipped.
inline LanguagePointCloud project_frame(const Frame& frame, const CameraIntrinsics& k) {
    frame.validate();
    if (frame.width != k.width || frame.height != k.height) throw InputError("frame size differs from intrinsics");
    LanguagePointCloud cloud;
    std::vector<Eigen::Index> cols;
    for (int v = 0; v < frame.height; ++v) {
        for (int u = 0; u < frame.width; ++u) {
            const std::size_t idx = static_cast<std::size_t>(v) * frame.width + u;
            const double d = frame.depth[idx];
            if (!(d > 0.0) || !std::isfinite(d)) continue;
            const auto col = static_cast<Eigen::Index>(idx);
            if (static_cast<double>(frame.features.col(col).norm()) < kNormFloor) continue;
            if (!frame.features.col(col).allFinite()) continue;
            const Vec3 pc((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d);
            cloud.points.push_back(frame.pose.apply(pc));
            cols.push_back(col);
        }
    }
    cloud.features.resize(frame.features.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) {
        cloud.features.col(static_cast<Eigen::Index>(i)) = frame.features.col(cols[i]).normalized();
    }
    return cloud;
}

struct MappingConfig {
    int map_iters = 100;
    int batch_size = 4096;
    FusionMode fusion = FusionMode::exp_smooth;
    bool invert_alpha = false;
    // Initialize new corners/F vectors from the closest bank entry of the point
    // that created them instead of the default near-zero / mean-F init.
    bool warm_start = false;
    std::uint64_t seed = 0;
};

struct MapConfig {
    OctreeConfig octree{};
    DecoderConfig decoder{};
    AdaptiveConfig adaptive{};
    MappingConfig mapping{};

    // Defaults with the given embedding dimension.
    static MapConfig with_dim(int d) {
        MapConfig c;
        c.decoder.output_dim = d;
        return c;
    }

    void validate() const {
        octree.validate();
        decoder.validate();
        if (decoder.input_dim != octree.corner_feature_dim) {
            throw std::invalid_argument("config: decoder input dim must equal corner feature dim");
        }
        if (decoder.f_dim != octree.f_vector_dim) {
            throw std::invalid_argument("config: decoder F dim must equal octree F vector dim");
        }
        if (!(adaptive.tau >= 0.0 && adaptive.tau <= 2.0)) throw std::invalid_argument("config: tau out of range");
        if (adaptive.n_opt < 0) throw std::invalid_argument("config: n_opt must be non-negative");
        if (mapping.map_iters < 1) throw std::invalid_argument("config: map_iters must be >= 1");
        if (mapping.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
        if (!(adaptive.adam.lr > 0.0)) {
            throw std::invalid_argument("config: learning rates must be positive");
        }
    }
};

struct FrameReport {
    std::size_t points = 0;
    AdaptiveReport adaptive;
    InsertResult inserted;
    std::vector<double> loss_curve;
    std::size_t dropped_targets = 0;
    double seconds_adaptive = 0.0;
    double seconds_fusion = 0.0;
    double seconds_mapping = 0.0;
};

template <typename Scalar>
struct QueryResult {
    MatrixX<Scalar> features;         // D x M; zero columns where unmapped
    std::vector<std::uint8_t> mapped;  // 1 where the point lies in observed space
};

struct ClassifyResult {
    static constexpr int kUnmapped = -1;
    std::vector<int> labels;
    std::vector<float> confidence;
};

// Argmax cosine against label columns (D x C). Ties go to the lowest index;
// unmapped points get kUnmapped and confidence 0.
template <typename Scalar>
ClassifyResult classify_features(const MatrixX<Scalar>& features, std::span<const std::uint8_t> mapped,
                                 const Eigen::MatrixXf& labels) {
    if (labels.cols() < 1) throw std::invalid_argument("classify: at least one label required");
    if (labels.rows() != features.rows()) throw std::invalid_argument("classify: label dimension mismatch");
    const MatrixX<Scalar> lab = detail::normalized_columns<Scalar>(labels.template cast<Scalar>());
    ClassifyResult r;
    r.labels.assign(static_cast<std::size_t>(features.cols()), ClassifyResult::kUnmapped);
    r.confidence.assign(static_cast<std::size_t>(features.cols()), 0.0f);
    for (Eigen::Index i = 0; i < features.cols(); ++i) {
        if (!mapped[static_cast<std::size_t>(i)]) continue;
        const double n = static_cast<double>(features.col(i).norm());
        int best = 0;
        double best_cos = -2.0;
        for (Eigen::Index c = 0; c < lab.cols(); ++c) {
            const double cos = n < kNormFloor ? 0.0 : static_cast<double>(lab.col(c).dot(features.col(i))) / n;
            if (cos > best_cos) {
                best_cos = cos;
                best = static_cast<int>(c);
            }
        }
        r.labels[static_cast<std::size_t>(i)] = best;
        r.confidence[static_cast<std::size_t>(i)] = static_cast<float>(best_cos);
    }
    return r;
}

// Working copy of the octree entries a point set touches, with per-point taps
// re-indexed into the copy. Mapping optimizes this and writes it back.
template <typename Scalar>
struct LocalParams {
    struct Tap {
        std::int32_t corner;
        Scalar weight;
    };

    MatrixX<Scalar> corners;  // m x (touched corners)
    MatrixX<Scalar> fvecs;    // L x (touched coarse voxels)
    std::vector<std::uint32_t> corner_global;
    std::vector<std::uint32_t> f_global;
    std::vector<Tap> taps;            // taps_per_point per point
    std::vector<std::int32_t> point_f;
    std::size_t taps_per_point = 0;

    std::size_t points() const { return point_f.size(); }

    static LocalParams gather(const SparseFeatureOctree<Scalar>& octree, std::span<const Vec3> pts) {
        LocalParams lp;
        lp.taps_per_point = 8 * octree.config().levels.size();
        std::vector<std::int32_t> corner_local(octree.corner_count(), -1);
        std::vector<std::int32_t> f_local(octree.f_count(), -1);
        lp.taps.resize(pts.size() * lp.taps_per_point);
        lp.point_f.resize(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto t = octree.lookup(pts[i]);
            if (!t) throw std::invalid_argument("LocalParams::gather: unmapped point");
            for (std::size_t j = 0; j < lp.taps_per_point; ++j) {
                const auto& tap = t->taps[j];
                if (corner_local[tap.corner] < 0) {
                    corner_local[tap.corner] = static_cast<std::int32_t>(lp.corner_global.size());
                    lp.corner_global.push_back(tap.corner);
                }
                lp.taps[i * lp.taps_per_point + j] = {corner_local[tap.corner], static_cast<Scalar>(tap.weight)};
            }
            if (f_local[t->f_index] < 0) {
                f_local[t->f_index] = static_cast<std::int32_t>(lp.f_global.size());
                lp.f_global.push_back(t->f_index);
            }
            lp.point_f[i] = f_local[t->f_index];
        }
        lp.corners.resize(octree.m(), static_cast<Eigen::Index>(lp.corner_global.size()));
        for (std::size_t c = 0; c < lp.corner_global.size(); ++c) {
            lp.corners.col(static_cast<Eigen::Index>(c)) = octree.corner(lp.corner_global[c]);
        }
        lp.fvecs.resize(octree.f_dim(), static_cast<Eigen::Index>(lp.f_global.size()));
        for (std::size_t c = 0; c < lp.f_global.size(); ++c) {
            lp.fvecs.col(static_cast<Eigen::Index>(c)) = octree.f_vector(lp.f_global[c]);
        }
        return lp;
    }

    void scatter(SparseFeatureOctree<Scalar>& octree) const {
        for (std::size_t c = 0; c < corner_global.size(); ++c) {
            octree.corner(corner_global[c]) = corners.col(static_cast<Eigen::Index>(c));
        }
        for (std::size_t c = 0; c < f_global.size(); ++c) {
            octree.f_vector(f_global[c]) = fvecs.col(static_cast<Eigen::Index>(c));
        }
    }

    // Encodings (m x B) and F inputs (L x B) for the picked points.
    void assemble(std::span<const std::uint32_t> picked, MatrixX<Scalar>& e, MatrixX<Scalar>& f) const {
        const auto b_count = static_cast<Eigen::Index>(picked.size());
        e.resize(corners.rows(), b_count);
        e.setZero();
        f.resize(fvecs.rows(), b_count);
        for (Eigen::Index b = 0; b < b_count; ++b) {
            const std::size_t p = picked[static_cast<std::size_t>(b)];
            const Tap* tp = &taps[p * taps_per_point];
            for (std::size_t j = 0; j < taps_per_point; ++j) {
                if (tp[j].weight != Scalar(0)) e.col(b) += tp[j].weight * corners.col(tp[j].corner);
            }
            f.col(b) = fvecs.col(point_f[p]);
        }
    }
};

// Buffers reused across mapping iterations.
template <typename Scalar>
struct MappingWorkspace {
    DecoderCache<Scalar> cache;
    DecoderScratch<Scalar> scratch;
    DecoderInputGrads<Scalar> grads;
    MatrixX<Scalar> targets;
    MatrixX<Scalar> d_out;
};

// Mapping loss over the picked points (targets aligned with the gathered
// points) with gradients scattered onto the local corner / F tables and,
// if requested, the decoder parameters.
template <typename Scalar>
double mapping_loss(const LocalParams<Scalar>& lp, const LanguageDecoder<Scalar>& decoder,
                    std::span<const std::uint32_t> picked, const MatrixX<Scalar>& targets,
                    MatrixX<Scalar>* g_corners, MatrixX<Scalar>* g_f, DecoderParams<Scalar>* g_decoder,
                    MappingWorkspace<Scalar>* workspace = nullptr) {
    MappingWorkspace<Scalar> local_ws;
    MappingWorkspace<Scalar>& ws = workspace ? *workspace : local_ws;
    lp.assemble(picked, ws.cache.e, ws.cache.f);
    ws.targets.resize(targets.rows(), static_cast<Eigen::Index>(picked.size()));
    for (std::size_t b = 0; b < picked.size(); ++b) ws.targets.col(static_cast<Eigen::Index>(b)) = targets.col(picked[b]);
    decoder.forward_inplace(ws.cache);
    const double loss = vl_loss<Scalar>(ws.targets, ws.cache.out, &ws.d_out);
    if (!g_corners && !g_f && !g_decoder) return loss;
    if (g_decoder) *g_decoder = DecoderParams<Scalar>::zeros(decoder.config());
    decoder.backward_into(ws.cache, ws.d_out, ws.grads, g_decoder, ws.scratch);
    const auto& g = ws.grads;
    if (g_corners) g_corners->setZero(lp.corners.rows(), lp.corners.cols());
    if (g_f) g_f->setZero(lp.fvecs.rows(), lp.fvecs.cols());
    for (std::size_t b = 0; b < picked.size(); ++b) {
        const auto col = static_cast<Eigen::Index>(b);
        const std::size_t p = picked[b];
        if (g_corners) {
            const auto* tp = &lp.taps[p * lp.taps_per_point];
            for (std::size_t j = 0; j < lp.taps_per_point; ++j) {
                if (tp[j].weight != Scalar(0)) g_corners->col(tp[j].corner) += tp[j].weight * g.d_e.col(col);
            }
        }
        if (g_f) g_f->col(lp.point_f[p]) += g.d_f.col(col);
    }
    return loss;
}

// The whole incremental map: octree, decoder, feature bank and fusion state.
// Copies are independent snapshots; const methods never mutate.
template <typename Scalar>
class LanguageMap {
public:
    using Matrix = MatrixX<Scalar>;
    using Vector = VectorX<Scalar>;

    static constexpr std::size_t kQueryChunk = 4096;

    explicit LanguageMap(MapConfig config)
        : config_((config.validate(), std::move(config))),
          octree_(config_.octree, mix_seed(config_.mapping.seed, 1)),
          decoder_(config_.decoder, mix_seed(config_.mapping.seed, 2)),
          bank_(config_.decoder.output_dim, config_.decoder.input_dim, config_.decoder.f_dim),
          fusion_(config_.mapping.fusion, config_.mapping.invert_alpha),
          rng_(mix_seed(config_.mapping.seed, 3)) {}

    const MapConfig& config() const { return config_; }
    const SparseFeatureOctree<Scalar>& octree() const { return octree_; }
    SparseFeatureOctree<Scalar>& octree() { return octree_; }
    const LanguageDecoder<Scalar>& decoder() const { return decoder_; }
    LanguageDecoder<Scalar>& decoder() { return decoder_; }
    const FeatureBank<Scalar>& bank() const { return bank_; }
    FeatureBank<Scalar>& bank() { return bank_; }
    const FusionGrid<Scalar>& fusion() const { return fusion_; }
    FusionGrid<Scalar>& fusion() { return fusion_; }
    const Rng& rng() const { return rng_; }
    void set_rng(const Rng& r) { rng_ = r; }
    std::size_t frames_mapped() const { return frames_; }
    void set_frames_mapped(std::size_t n) { frames_ = n; }

    std::shared_ptr<const LanguageMap> snapshot() const { return std::make_shared<const LanguageMap>(*this); }

    // Switch the measurement-update mode, e.g. to compare modes on one map.
    void set_fusion_mode(FusionMode m, bool invert_alpha = false) {
        config_.mapping.fusion = m;
        config_.mapping.invert_alpha = invert_alpha;
        FusionGrid<Scalar> g(m, invert_alpha);
        g.restore(fusion_.records(), fusion_.dropped());
        fusion_ = std::move(g);
    }

    FrameReport map_frame(const LanguagePointCloud& cloud) {
        using clock = std::chrono::steady_clock;
        FrameReport report;
        report.points = cloud.size();
        if (cloud.empty()) return report;
        if (cloud.features.rows() != config_.decoder.output_dim ||
            static_cast<std::size_t>(cloud.features.cols()) != cloud.size()) {
            throw std::invalid_argument("map_frame: cloud feature shape mismatch");
        }
        const Matrix feats = cloud.features.template cast<Scalar>();

        // Decoder extension first; the mapping below sees the resulting decoder frozen.
        auto t0 = clock::now();
        report.adaptive = optimize(bank_, decoder_, feats, config_.adaptive, rng_);
        report.seconds_adaptive = std::chrono::duration<double>(clock::now() - t0).count();

        report.inserted = insert(cloud, feats);

        t0 = clock::now();
        const auto prev = query(cloud.points);
        std::vector<VoxelKey> keys(cloud.size());
        std::vector<std::uint8_t> valid_key(cloud.size(), 0);
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            const auto k = detail::fine_key(cloud.points[i], config_.octree);
            if (k) {
                keys[i] = *k;
                valid_key[i] = 1;
            }
        }
        const auto fused = fusion_.batch_fuse(keys, feats, prev.features, prev.mapped);
        report.seconds_fusion = std::chrono::duration<double>(clock::now() - t0).count();
        report.dropped_targets = static_cast<std::size_t>(
            std::count(fused.valid.begin(), fused.valid.end(), std::uint8_t{0}));

        t0 = clock::now();
        std::vector<std::size_t> usable;
        usable.reserve(cloud.size());
        for (std::size_t i = 0; i < cloud.size(); ++i) {
            if (fused.valid[i] && valid_key[i]) usable.push_back(i);
        }
        report.loss_curve = fit_octree(cloud, fused.targets, usable);
        report.seconds_mapping = std::chrono::duration<double>(clock::now() - t0).count();
        ++frames_;
        return report;
    }

    QueryResult<Scalar> query(std::span<const Vec3> points) const {
        const int m = config_.decoder.input_dim;
        const int l = config_.decoder.f_dim;
        QueryResult<Scalar> r;
        r.features = Matrix::Zero(config_.decoder.output_dim, static_cast<Eigen::Index>(points.size()));
        r.mapped.assign(points.size(), 0);
        std::vector<std::size_t> idx;
        std::vector<PointTaps> taps;
        auto flush = [&]() {
            if (idx.empty()) return;
            Matrix e = Matrix::Zero(m, static_cast<Eigen::Index>(idx.size()));
            Matrix f(l, static_cast<Eigen::Index>(idx.size()));
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const auto c = static_cast<Eigen::Index>(j);
                octree_.accumulate(taps[j], e.col(c).data());
                f.col(c) = octree_.f_vector(taps[j].f_index);
            }
            const Matrix out = decoder_.predict(e, f);
            for (std::size_t j = 0; j < idx.size(); ++j) {
                r.features.col(static_cast<Eigen::Index>(idx[j])) = out.col(static_cast<Eigen::Index>(j));
            }
            idx.clear();
            taps.clear();
        };
        for (std::size_t i = 0; i < points.size(); ++i) {
            auto t = octree_.lookup(points[i]);
            if (!t) continue;
            r.mapped[i] = 1;
            idx.push_back(i);
            taps.push_back(std::move(*t));
            if (idx.size() == kQueryChunk) flush();
        }
        flush();
        return r;
    }

    ClassifyResult classify(std::span<const Vec3> points, const Eigen::MatrixXf& labels) const {
        const auto q = query(points);
        return classify_features<Scalar>(q.features, q.mapped, labels);
    }

private:
    InsertResult insert(const LanguagePointCloud& cloud, const Matrix& feats) {
        InsertOptions<Scalar> opts;
        Vector mean_f;
        if (!bank_.empty()) {
            mean_f = bank_.mean_f();
            opts.default_f = std::span<const Scalar>(mean_f.data(), static_cast<std::size_t>(mean_f.size()));
        }
        Matrix corner_seeds;
        if (config_.mapping.warm_start && !bank_.empty()) {
            // the point encoding sums one interpolated corner value per level
            corner_seeds = bank_.encodings / static_cast<Scalar>(config_.octree.levels.size());
            opts.seed_for_point = [&](std::size_t i) -> std::optional<InsertSeed<Scalar>> {
                const auto j = nearest_entry(bank_, feats.col(static_cast<Eigen::Index>(i)), config_.adaptive.tau);
                if (!j) return std::nullopt;
                const auto c = static_cast<Eigen::Index>(*j);
                return InsertSeed<Scalar>{
                    std::span<const Scalar>(corner_seeds.col(c).data(), static_cast<std::size_t>(corner_seeds.rows())),
                    std::span<const Scalar>(bank_.f_vectors.col(c).data(),
                                            static_cast<std::size_t>(bank_.f_vectors.rows()))};
            };
        }
        return octree_.insert_points(cloud.points, opts);
    }

    // Mapping-loss optimization of the corner features and F vectors touched by
    // this frame. The decoder is read-only here.
    std::vector<double> fit_octree(const LanguagePointCloud& cloud, const Matrix& targets,
                                   const std::vector<std::size_t>& usable) {
        std::vector<double> curve;
        if (usable.empty()) return curve;
        std::vector<Vec3> pts(usable.size());
        Matrix tgt(targets.rows(), static_cast<Eigen::Index>(usable.size()));
        for (std::size_t i = 0; i < usable.size(); ++i) {
            pts[i] = cloud.points[usable[i]];
            tgt.col(static_cast<Eigen::Index>(i)) = targets.col(static_cast<Eigen::Index>(usable[i]));
        }
        LocalParams<Scalar> local = LocalParams<Scalar>::gather(octree_, pts);

        // Same optimizer settings as the decoder extension; fresh moments per frame.
        Adam<Scalar> adam(config_.adaptive.adam);

        const std::size_t n_use = pts.size();
        const std::size_t batch = std::min<std::size_t>(n_use, static_cast<std::size_t>(config_.mapping.batch_size));
        std::vector<std::uint32_t> order(n_use);
        std::iota(order.begin(), order.end(), 0u);
        std::size_t cursor = n_use;  // forces a shuffle before the first minibatch
        std::vector<std::uint32_t> picked(batch);
        Matrix g_corners, g_f;
        MappingWorkspace<Scalar> ws;
        for (int it = 0; it < config_.mapping.map_iters; ++it) {
            if (batch == n_use) {
                std::iota(picked.begin(), picked.end(), 0u);
            } else {
                for (std::size_t b = 0; b < batch; ++b) {
                    if (cursor == n_use) {
                        rng_.shuffle(std::span<std::uint32_t>(order));
                        cursor = 0;
                    }
                    picked[b] = order[cursor++];
                }
            }
            const double loss = mapping_loss<Scalar>(local, decoder_, picked, tgt, &g_corners, &g_f, nullptr, &ws);
            if (!std::isfinite(loss)) throw NumericalError("mapping loss became non-finite");
            curve.push_back(loss);
            adam.step({ParamBlock<Scalar>{std::span<Scalar>(local.corners.data(), static_cast<std::size_t>(local.corners.size())),
                                          std::span<const Scalar>(g_corners.data(), static_cast<std::size_t>(g_corners.size()))},
                       ParamBlock<Scalar>{std::span<Scalar>(local.fvecs.data(), static_cast<std::size_t>(local.fvecs.size())),
                                          std::span<const Scalar>(g_f.data(), static_cast<std::size_t>(g_f.size()))}});
            if (!local.corners.allFinite() || !local.fvecs.allFinite()) {
                throw NumericalError("mapping parameters diverged");
            }
        }
        local.scatter(octree_);
        return curve;
    }

    MapConfig config_;
    SparseFeatureOctree<Scalar> octree_;
    LanguageDecoder<Scalar> decoder_;
    FeatureBank<Scalar> bank_;
    FusionGrid<Scalar> fusion_;
    Rng rng_;
    std::size_t frames_ = 0;
};

}  // namespace lilmap
