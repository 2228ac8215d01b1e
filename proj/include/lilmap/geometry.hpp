#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lilmap/common.hpp"
#include "lilmap/rng.hpp"

namespace lilmap {

struct VoxelKey {
    std::int32_t x = 0;
    std::int32_t y = 0;
    std::int32_t z = 0;

    auto operator<=>(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
    std::size_t operator()(const VoxelKey& k) const noexcept {
        // large primes, as in the usual spatial-hash formulation
        const auto ux = static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.x));
        const auto uy = static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.y));
        const auto uz = static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.z));
        return static_cast<std::size_t>((ux * 73856093ull) ^ (uy * 19349669ull) ^ (uz * 83492791ull));
    }
};

struct OctreeConfig {
    double fine_resolution = 0.05;
    // Coarsest first. The first level carries the F vectors.
    std::vector<int> levels{8, 9, 10};
    int corner_feature_dim = 16;
    int f_vector_dim = 512;

    void validate() const {
        if (!(fine_resolution > 0.0) || !std::isfinite(fine_resolution)) {
            throw std::invalid_argument("OctreeConfig: fine_resolution must be positive");
        }
        if (levels.empty()) throw std::invalid_argument("OctreeConfig: at least one level required");
        for (std::size_t i = 1; i < levels.size(); ++i) {
            if (levels[i] <= levels[i - 1]) {
                throw std::invalid_argument("OctreeConfig: levels must be strictly increasing");
            }
        }
        if (levels.back() - levels.front() > 20) {
            throw std::invalid_argument("OctreeConfig: level span too large");
        }
        if (corner_feature_dim <= 0 || f_vector_dim <= 0) {
            throw std::invalid_argument("OctreeConfig: feature dimensions must be positive");
        }
    }

    int coarse_level() const { return levels.front(); }
    int fine_level() const { return levels.back(); }

    std::size_t level_index(int level) const {
        const auto it = std::find(levels.begin(), levels.end(), level);
        if (it == levels.end()) throw std::invalid_argument("level not in OctreeConfig");
        return static_cast<std::size_t>(it - levels.begin());
    }

    // Number of halvings between `level` and the finest level.
    int shift(int level) const { return fine_level() - level; }

    double edge_length(int level) const {
        return fine_resolution * std::ldexp(1.0, shift(level));
    }

    bool operator==(const OctreeConfig&) const = default;
};

namespace detail {

inline std::optional<std::int32_t> floor_to_int32(double v) {
    if (!std::isfinite(v)) return std::nullopt;
    const double f = std::floor(v);
    if (f < static_cast<double>(std::numeric_limits<std::int32_t>::min()) ||
        f > static_cast<double>(std::numeric_limits<std::int32_t>::max())) {
        return std::nullopt;
    }
    return static_cast<std::int32_t>(f);
}

// floor(a / 2^s) for signed a
inline std::int32_t floor_shift(std::int32_t a, int s) { return a >> s; }

// Position in fine-voxel units. Values within 1e-9 of an integer are snapped to
// it, so points placed on a corner by computing k * fine_resolution land on
// that corner exactly rather than one rounding step short of it.
inline std::optional<Vec3> fine_coords(const Vec3& p, const OctreeConfig& config) {
    Vec3 q = p / config.fine_resolution;
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(q(a))) return std::nullopt;
        const double r = std::round(q(a));
        if (std::abs(q(a) - r) <= 1e-9 * std::max(1.0, std::abs(r))) q(a) = r;
    }
    return q;
}

inline std::optional<VoxelKey> fine_key_of_coords(const Vec3& q) {
    const auto x = floor_to_int32(q.x());
    const auto y = floor_to_int32(q.y());
    const auto z = floor_to_int32(q.z());
    if (!x || !y || !z) return std::nullopt;
    return VoxelKey{*x, *y, *z};
}

inline std::optional<VoxelKey> fine_key(const Vec3& p, const OctreeConfig& config) {
    const auto q = fine_coords(p, config);
    if (!q) return std::nullopt;
    return fine_key_of_coords(*q);
}

inline VoxelKey coarsen(const VoxelKey& fine, int shift) {
    return {floor_shift(fine.x, shift), floor_shift(fine.y, shift), floor_shift(fine.z, shift)};
}

}  // namespace detail

// floor(p / edge_length(level)) per axis. Coarser keys are derived from the fine
// key by integer shifts, which is the same value in exact arithmetic but keeps
// the level nesting exact under floating-point rounding.
inline VoxelKey voxel_key(const Vec3& p, int level, const OctreeConfig& config) {
    config.level_index(level);
    const int s = config.shift(level);
    const auto fine = detail::fine_key(p, config);
    if (!fine) throw std::invalid_argument("voxel_key: non-finite or out-of-range coordinates");
    return detail::coarsen(*fine, s);
}

struct CornerTap {
    std::uint32_t corner = 0;
    double weight = 0.0;
};

// Which corner entries (and with what weights) produced a point's encoding,
// plus the coarse voxel's F vector. Gradients are scattered back through this.
struct PointTaps {
    std::vector<CornerTap> taps;  // 8 per level, level-major
    std::uint32_t f_index = 0;
};

// Weights of the 8 corners for fractional offset t in [0,1]^3. Corner c has
// offsets (c & 1, (c >> 1) & 1, (c >> 2) & 1).
inline std::array<double, 8> trilinear_weights(const Vec3& t) {
    std::array<double, 8> w{};
    for (int c = 0; c < 8; ++c) {
        const double wx = (c & 1) ? t.x() : 1.0 - t.x();
        const double wy = (c & 2) ? t.y() : 1.0 - t.y();
        const double wz = (c & 4) ? t.z() : 1.0 - t.z();
        w[c] = wx * wy * wz;
    }
    return w;
}

struct InsertResult {
    std::size_t new_voxels = 0;
    std::size_t new_corners = 0;
    std::size_t new_f_vectors = 0;
    std::size_t skipped_points = 0;

    std::size_t total_new() const { return new_voxels + new_corners + new_f_vectors; }
};

template <typename Scalar>
struct InsertSeed {
    std::span<const Scalar> corner;  // m values, or empty for the default init
    std::span<const Scalar> f;       // L values, or empty for the default init
};

template <typename Scalar>
struct InsertOptions {
    // Initial value for new F vectors; empty means uniform in [-1e-2, 1e-2].
    std::span<const Scalar> default_f;
    // Optional per-point warm start for entries created by that point.
    std::function<std::optional<InsertSeed<Scalar>>(std::size_t)> seed_for_point;
};

template <typename Scalar>
struct PointEncoding {
    VectorX<Scalar> value;
    PointTaps taps;
};

template <typename Scalar>
class SparseFeatureOctree {
public:
    using Vector = VectorX<Scalar>;
    using Map = Eigen::Map<Vector>;
    using ConstMap = Eigen::Map<const Vector>;

    static constexpr double kCornerInitRange = 1e-4;
    static constexpr double kFInitRange = 1e-2;
    static constexpr std::uint32_t kNoF = std::numeric_limits<std::uint32_t>::max();

    struct VoxelRecord {
        std::array<std::uint32_t, 8> corners{};
        std::uint32_t f_index = kNoF;
    };

    struct Level {
        std::unordered_map<VoxelKey, VoxelRecord, VoxelKeyHash> voxels;
        std::unordered_map<VoxelKey, std::uint32_t, VoxelKeyHash> corners;
    };

    explicit SparseFeatureOctree(OctreeConfig config = {}, std::uint64_t seed = 0)
        : config_(std::move(config)), rng_(seed) {
        config_.validate();
        levels_.resize(config_.levels.size());
    }

    const OctreeConfig& config() const { return config_; }
    int m() const { return config_.corner_feature_dim; }
    int f_dim() const { return config_.f_vector_dim; }

    InsertResult insert_points(std::span<const Vec3> points, const InsertOptions<Scalar>& options = {}) {
        InsertResult result;
        const std::size_t nlev = levels_.size();
        for (std::size_t pi = 0; pi < points.size(); ++pi) {
            const auto fine = detail::fine_key(points[pi], config_);
            if (!fine) {
                ++result.skipped_points;
                continue;
            }
            std::optional<InsertSeed<Scalar>> seed;
            bool seed_queried = false;
            auto get_seed = [&]() -> const std::optional<InsertSeed<Scalar>>& {
                if (!seed_queried && options.seed_for_point) seed = options.seed_for_point(pi);
                seed_queried = true;
                return seed;
            };
            for (std::size_t li = 0; li < nlev; ++li) {
                const int s = config_.shift(config_.levels[li]);
                const VoxelKey key = detail::coarsen(*fine, s);
                Level& level = levels_[li];
                if (level.voxels.contains(key)) continue;
                VoxelRecord record;
                for (int c = 0; c < 8; ++c) {
                    const VoxelKey ck{key.x + (c & 1), key.y + ((c >> 1) & 1), key.z + ((c >> 2) & 1)};
                    auto it = level.corners.find(ck);
                    if (it == level.corners.end()) {
                        const auto& sd = get_seed();
                        const std::uint32_t id = new_corner(sd ? sd->corner : std::span<const Scalar>{});
                        it = level.corners.emplace(ck, id).first;
                        ++result.new_corners;
                    }
                    record.corners[c] = it->second;
                }
                if (li == 0) {
                    const auto& sd = get_seed();
                    record.f_index = new_f(sd && !sd->f.empty() ? sd->f : options.default_f);
                    ++result.new_f_vectors;
                }
                level.voxels.emplace(key, record);
                ++result.new_voxels;
            }
        }
        return result;
    }

    // Taps for a point, or nullopt if its fine voxel was never observed.
    std::optional<PointTaps> lookup(const Vec3& p) const {
        const auto q = detail::fine_coords(p, config_);
        if (!q) return std::nullopt;
        const auto fine = detail::fine_key_of_coords(*q);
        if (!fine) return std::nullopt;
        PointTaps out;
        out.taps.reserve(8 * levels_.size());
        std::array<const VoxelRecord*, 32> recs{};
        for (std::size_t li = levels_.size(); li-- > 0;) {
            // finest first so an unmapped point exits on the first probe
            const VoxelKey key = detail::coarsen(*fine, config_.shift(config_.levels[li]));
            const auto it = levels_[li].voxels.find(key);
            if (it == levels_[li].voxels.end()) return std::nullopt;
            recs[li] = &it->second;
        }
        out.f_index = recs[0]->f_index;
        for (std::size_t li = 0; li < levels_.size(); ++li) {
            const int s = config_.shift(config_.levels[li]);
            const VoxelKey key = detail::coarsen(*fine, s);
            // scaling by 2^-s is exact, so corner points get exact 0/1 offsets
            Vec3 t(std::ldexp(q->x(), -s) - key.x, std::ldexp(q->y(), -s) - key.y, std::ldexp(q->z(), -s) - key.z);
            t = t.cwiseMax(0.0).cwiseMin(1.0);
            const auto w = trilinear_weights(t);
            for (int c = 0; c < 8; ++c) out.taps.push_back({recs[li]->corners[c], w[c]});
        }
        return out;
    }

    std::optional<PointEncoding<Scalar>> encode_point(const Vec3& p) const {
        auto taps = lookup(p);
        if (!taps) return std::nullopt;
        PointEncoding<Scalar> enc{Vector::Zero(m()), std::move(*taps)};
        accumulate(enc.taps, enc.value.data());
        return enc;
    }

    // out[0..m) = sum of weighted corner features.
    void accumulate(const PointTaps& taps, Scalar* out) const {
        Eigen::Map<Vector> dst(out, m());
        for (const CornerTap& tap : taps.taps) {
            if (tap.weight == 0.0) continue;
            dst += static_cast<Scalar>(tap.weight) * corner(tap.corner);
        }
    }

    std::optional<std::uint32_t> coarse_f_index(const Vec3& p) const {
        const auto fine = detail::fine_key(p, config_);
        if (!fine) return std::nullopt;
        const VoxelKey key = detail::coarsen(*fine, config_.shift(config_.coarse_level()));
        const auto it = levels_[0].voxels.find(key);
        if (it == levels_[0].voxels.end()) return std::nullopt;
        return it->second.f_index;
    }

    bool contains_fine(const Vec3& p) const {
        const auto fine = detail::fine_key(p, config_);
        return fine && levels_.back().voxels.contains(*fine);
    }

    Map corner(std::uint32_t id) { return Map(corners_.data() + std::size_t(id) * m(), m()); }
    ConstMap corner(std::uint32_t id) const {
        return ConstMap(corners_.data() + std::size_t(id) * m(), m());
    }
    Map f_vector(std::uint32_t id) { return Map(fvecs_.data() + std::size_t(id) * f_dim(), f_dim()); }
    ConstMap f_vector(std::uint32_t id) const {
        return ConstMap(fvecs_.data() + std::size_t(id) * f_dim(), f_dim());
    }

    std::size_t corner_count() const { return corners_.size() / m(); }
    std::size_t f_count() const { return fvecs_.size() / f_dim(); }
    std::size_t voxel_count(std::size_t level_index) const { return levels_.at(level_index).voxels.size(); }
    std::size_t corner_count(std::size_t level_index) const { return levels_.at(level_index).corners.size(); }

    std::span<Scalar> corner_data() { return corners_; }
    std::span<const Scalar> corner_data() const { return corners_; }
    std::span<Scalar> f_data() { return fvecs_; }
    std::span<const Scalar> f_data() const { return fvecs_; }

    const Level& level(std::size_t level_index) const { return levels_.at(level_index); }

    // Fine voxel keys in sorted order, for reproducible iteration.
    std::vector<VoxelKey> fine_keys() const {
        std::vector<VoxelKey> keys;
        keys.reserve(levels_.back().voxels.size());
        for (const auto& [k, _] : levels_.back().voxels) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        return keys;
    }

    Vec3 fine_center(const VoxelKey& k) const {
        const double e = config_.fine_resolution;
        return {(k.x + 0.5) * e, (k.y + 0.5) * e, (k.z + 0.5) * e};
    }

    // Line-oriented statistics dump.
    std::string stats() const {
        std::ostringstream os;
        for (std::size_t li = 0; li < levels_.size(); ++li) {
            os << "level " << config_.levels[li] << " edge=" << config_.edge_length(config_.levels[li])
               << " voxels=" << levels_[li].voxels.size() << " corners=" << levels_[li].corners.size()
               << " f_vectors=" << (li == 0 ? f_count() : 0) << '\n';
        }
        os << "total corners=" << corner_count() << " f_vectors=" << f_count() << " m=" << m()
           << " L=" << f_dim() << '\n';
        return os.str();
    }

    const Rng& rng() const { return rng_; }

    // Checkpoint restore. Sizes are validated against the config.
    void restore(std::vector<Level> levels, std::vector<Scalar> corners, std::vector<Scalar> fvecs, const Rng& rng) {
        if (levels.size() != config_.levels.size() || corners.size() % m() != 0 || fvecs.size() % f_dim() != 0) {
            throw InputError("octree restore: inconsistent sizes");
        }
        const std::size_t nc = corners.size() / m();
        const std::size_t nf = fvecs.size() / f_dim();
        for (std::size_t li = 0; li < levels.size(); ++li) {
            for (const auto& [k, rec] : levels[li].voxels) {
                for (auto c : rec.corners) {
                    if (c >= nc) throw InputError("octree restore: corner index out of range");
                }
                if (li == 0 && rec.f_index >= nf) throw InputError("octree restore: F index out of range");
            }
        }
        levels_ = std::move(levels);
        corners_ = std::move(corners);
        fvecs_ = std::move(fvecs);
        rng_ = rng;
    }

    void set_rng(const Rng& rng) { rng_ = rng; }

private:
    std::uint32_t new_corner(std::span<const Scalar> seed) {
        const auto id = static_cast<std::uint32_t>(corner_count());
        if (!seed.empty() && seed.size() != static_cast<std::size_t>(m())) {
            throw std::invalid_argument("corner seed has wrong dimension");
        }
        for (int i = 0; i < m(); ++i) {
            corners_.push_back(seed.empty()
                                   ? static_cast<Scalar>(rng_.uniform(-kCornerInitRange, kCornerInitRange))
                                   : seed[i]);
        }
        return id;
    }

    std::uint32_t new_f(std::span<const Scalar> init) {
        const auto id = static_cast<std::uint32_t>(f_count());
        if (!init.empty() && init.size() != static_cast<std::size_t>(f_dim())) {
            throw std::invalid_argument("F initializer has wrong dimension");
        }
        for (int i = 0; i < f_dim(); ++i) {
            fvecs_.push_back(init.empty() ? static_cast<Scalar>(rng_.uniform(-kFInitRange, kFInitRange))
                                          : init[i]);
        }
        return id;
    }

    OctreeConfig config_;
    Rng rng_;
    std::vector<Level> levels_;
    std::vector<Scalar> corners_;
    std::vector<Scalar> fvecs_;
};

}  // namespace lilmap
