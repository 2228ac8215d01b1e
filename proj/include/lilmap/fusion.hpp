#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lilmap/common.hpp"
#include "lilmap/geometry.hpp"
#include "lilmap/neural.hpp"

namespace lilmap {

enum class FusionMode { none, recursive_mean, exp_smooth };

inline std::string_view to_string(FusionMode m) {
    switch (m) {
        case FusionMode::none: return "none";
        case FusionMode::recursive_mean: return "mean";
        case FusionMode::exp_smooth: return "exp";
    }
    return "?";
}

inline FusionMode parse_fusion_mode(std::string_view s) {
    if (s == "none") return FusionMode::none;
    if (s == "mean" || s == "recursive_mean") return FusionMode::recursive_mean;
    if (s == "exp" || s == "exp_smooth") return FusionMode::exp_smooth;
    throw InputError("unknown fusion mode '" + std::string(s) + "' (expected none|mean|exp)");
}

// Dynamic smoothing weight alpha = c / (0.5 + c), clamped to 0 for c <= 0.
// `invert` returns 1 - alpha instead.
inline double alpha(double c, bool invert = false) {
    double a = c > 0.0 ? c / (0.5 + c) : 0.0;
    a = std::clamp(a, 0.0, 1.0);
    return invert ? 1.0 - a : a;
}

// A_n = (n-1)/n A_{n-1} + x_n / n
template <typename Scalar>
VectorX<Scalar> recursive_mean_update(const VectorX<Scalar>& prev, const VectorX<Scalar>& x, std::uint32_t n) {
    if (n == 0) throw std::invalid_argument("recursive_mean_update: n must be >= 1");
    const Scalar w_prev = static_cast<Scalar>(static_cast<double>(n - 1) / n);
    const Scalar w_new = static_cast<Scalar>(1.0 / n);
    return w_prev * prev + w_new * x;
}

// Unnormalized target for one measurement. `n` is the observation index of this
// measurement (1 for the first), `prev` the map's current reconstruction.
template <typename Scalar>
VectorX<Scalar> blend_target(FusionMode mode, std::uint32_t n, const VectorX<Scalar>& measurement,
                            const VectorX<Scalar>& prev, bool invert_alpha = false) {
    switch (mode) {
        case FusionMode::none: return measurement;
        case FusionMode::recursive_mean: return recursive_mean_update(prev, measurement, n);
        case FusionMode::exp_smooth: {
            if (n <= 1 || static_cast<double>(prev.norm()) < kNormFloor) return measurement;
            const double a = alpha(cosine_similarity(measurement, prev), invert_alpha);
            return static_cast<Scalar>(a) * prev + static_cast<Scalar>(1.0 - a) * measurement;
        }
    }
    return measurement;
}

template <typename Scalar>
struct FusionRecord {
    std::uint32_t n = 0;  // observations absorbed so far
    VectorX<Scalar> last_target;
};

template <typename Scalar>
struct FusedTargets {
    MatrixX<Scalar> targets;     // D x N
    std::vector<std::uint8_t> valid;  // 0 where the measurement was dropped
};

// Per-fine-voxel measurement-update state.
template <typename Scalar>
class FusionGrid {
public:
    using Vector = VectorX<Scalar>;
    using Matrix = MatrixX<Scalar>;

    explicit FusionGrid(FusionMode mode = FusionMode::exp_smooth, bool invert_alpha = false)
        : mode_(mode), invert_alpha_(invert_alpha) {}

    FusionMode mode() const { return mode_; }
    bool invert_alpha() const { return invert_alpha_; }
    std::size_t dropped() const { return dropped_; }
    std::size_t size() const { return records_.size(); }
    const std::unordered_map<VoxelKey, FusionRecord<Scalar>, VoxelKeyHash>& records() const { return records_; }

    const FusionRecord<Scalar>* find(const VoxelKey& k) const {
        const auto it = records_.find(k);
        return it == records_.end() ? nullptr : &it->second;
    }

    // Single-measurement update. `prev` may be empty or zero when the map has no
    // reconstruction at this point. Returns nullopt (and counts a drop) on
    // non-finite input; the record is left untouched in that case.
    std::optional<Vector> fuse_target(const VoxelKey& key, const Vector& measurement, const Vector& prev) {
        if (!measurement.allFinite() || (prev.size() > 0 && !prev.allFinite())) {
            ++dropped_;
            return std::nullopt;
        }
        auto it = records_.find(key);
        const std::uint32_t n = it == records_.end() ? 1 : it->second.n + 1;
        Vector target = compute(n, measurement, prev);
        if (it == records_.end()) it = records_.emplace(key, FusionRecord<Scalar>{}).first;
        it->second.n = n;
        it->second.last_target = target;
        return target;
    }

    // Frame-level update. Every point in a voxel uses the voxel's count at the
    // start of the frame; counts advance once per voxel per frame. Points with
    // mapped[i] == 0 get their measurement as target.
    FusedTargets<Scalar> batch_fuse(std::span<const VoxelKey> keys, const Matrix& measurements,
                                    const Matrix& prev, std::span<const std::uint8_t> mapped) {
        const auto n_pts = static_cast<std::size_t>(measurements.cols());
        if (keys.size() != n_pts || mapped.size() != n_pts || prev.cols() != measurements.cols()) {
            throw std::invalid_argument("batch_fuse: size mismatch");
        }
        FusedTargets<Scalar> out{Matrix(measurements.rows(), measurements.cols()), std::vector<std::uint8_t>(n_pts, 0)};
        std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> frame_counts;
        std::vector<VoxelKey> touched;
        const Vector empty;
        for (std::size_t i = 0; i < n_pts; ++i) {
            const auto col = static_cast<Eigen::Index>(i);
            const Vector meas = measurements.col(col);
            const bool has_prev = mapped[i] != 0;
            const Vector p = has_prev ? Vector(prev.col(col)) : empty;
            if (!meas.allFinite() || (has_prev && !p.allFinite())) {
                ++dropped_;
                continue;
            }
            auto fc = frame_counts.find(keys[i]);
            if (fc == frame_counts.end()) {
                const auto rec = records_.find(keys[i]);
                const std::uint32_t n = rec == records_.end() ? 1 : rec->second.n + 1;
                fc = frame_counts.emplace(keys[i], n).first;
                touched.push_back(keys[i]);
            }
            const Vector target = has_prev ? compute(fc->second, meas, p) : normalized(meas);
            out.targets.col(col) = target;
            out.valid[i] = 1;
            auto& rec = records_[keys[i]];
            rec.last_target = target;
        }
        for (const auto& k : touched) records_[k].n = frame_counts.at(k);
        return out;
    }

    void restore(std::unordered_map<VoxelKey, FusionRecord<Scalar>, VoxelKeyHash> records, std::size_t dropped) {
        records_ = std::move(records);
        dropped_ = dropped;
    }

private:
    static Vector normalized(const Vector& v) {
        const Scalar n = v.norm();
        return static_cast<double>(n) < kNormFloor ? v : Vector(v / n);
    }

    Vector compute(std::uint32_t n, const Vector& measurement, const Vector& prev) const {
        const Vector p = prev.size() == measurement.size() ? prev : Vector::Zero(measurement.size());
        return normalized(blend_target<Scalar>(mode_, n, measurement, p, invert_alpha_));
    }

    FusionMode mode_;
    bool invert_alpha_;
    std::unordered_map<VoxelKey, FusionRecord<Scalar>, VoxelKeyHash> records_;
    std::size_t dropped_ = 0;
};

}  // namespace lilmap
