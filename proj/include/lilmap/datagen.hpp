#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lilmap/common.hpp"
#include "lilmap/pipeline.hpp"
#include "lilmap/rng.hpp"

namespace lilmap {

// Scene-spec parse failure; carries the 1-based line number.
class SpecError : public InputError {
public:
    SpecError(std::size_t line, const std::string& what)
        : InputError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

enum class EmbeddingScheme { orthogonal, random };
enum class NoiseKind { none, swap, angular, bleed };

struct NoiseModel {
    NoiseKind kind = NoiseKind::none;
    double swap_prob = 0.0;       // per object per frame
    double angular_sigma = 0.0;   // std-dev of the per-component perturbation
    int bleed_radius = 2;         // pixels
    double bleed_jump = 0.1;      // depth discontinuity threshold, meters
};

// A parallelogram origin + s*u + t*v, s,t in [0,1].
struct Face {
    Vec3 origin = Vec3::Zero();
    Vec3 u = Vec3::UnitX();
    Vec3 v = Vec3::UnitY();

    double area() const { return u.cross(v).norm(); }
};

struct Primitive {
    int class_id = 0;
    std::vector<Face> faces;

    static Primitive plane(int cls, const Vec3& origin, const Vec3& u, const Vec3& v) {
        return {cls, {Face{origin, u, v}}};
    }

    // Axis-aligned box surface; `open_bottom` drops the z-min face.
    static Primitive box(int cls, const Vec3& lo, const Vec3& hi, bool open_bottom = false) {
        const Vec3 d = hi - lo;
        const Vec3 ex(d.x(), 0, 0), ey(0, d.y(), 0), ez(0, 0, d.z());
        Primitive p{cls, {}};
        if (!open_bottom) p.faces.push_back({lo, ex, ey});
        p.faces.push_back({lo + ez, ex, ey});
        p.faces.push_back({lo, ex, ez});
        p.faces.push_back({lo + ey, ex, ez});
        p.faces.push_back({lo, ey, ez});
        p.faces.push_back({lo + ex, ey, ez});
        return p;
    }
};

struct SceneSpec {
    Vec3 extent_min = Vec3::Constant(-std::numeric_limits<double>::infinity());
    Vec3 extent_max = Vec3::Constant(std::numeric_limits<double>::infinity());
    int classes = 2;
    int dim = 64;
    EmbeddingScheme embedding = EmbeddingScheme::orthogonal;
    double min_distance = 0.04;  // for the random scheme, cosine distance
    double density = 1600.0;     // surface samples per square meter
    std::vector<Primitive> primitives;
    std::vector<std::string> names;
    NoiseModel noise;
    CameraIntrinsics camera{50, 50, 39.5, 29.5, 80, 60};
    std::vector<Pose> trajectory;
    std::uint64_t seed = 0;

    void validate() const {
        if (classes < 2) throw InputError("scene: at least 2 classes required");
        if (dim < 1) throw InputError("scene: dim must be positive");
        if (embedding == EmbeddingScheme::orthogonal && classes > dim) {
            throw InputError("scene: orthogonal embeddings need classes <= dim");
        }
        if (!(density > 0.0)) throw InputError("scene: density must be positive");
        for (const auto& p : primitives) {
            if (p.class_id < 0 || p.class_id >= classes) throw InputError("scene: primitive class out of range");
            for (const auto& f : p.faces) {
                if (!(f.area() > 1e-12)) throw InputError("scene: degenerate primitive (zero area)");
                for (const Vec3& c : {f.origin, Vec3(f.origin + f.u), Vec3(f.origin + f.v), Vec3(f.origin + f.u + f.v)}) {
                    if ((c.array() < extent_min.array() - 1e-9).any() || (c.array() > extent_max.array() + 1e-9).any()) {
                        throw InputError("scene: primitive outside the room extents");
                    }
                }
            }
        }
    }
};

struct GroundTruth {
    std::vector<Vec3> points;
    std::vector<int> class_ids;
    std::vector<int> object_ids;  // primitive index
    Eigen::MatrixXf embeddings;   // D x C, unit norm
    std::vector<std::string> names;

    std::size_t size() const { return points.size(); }
    int classes() const { return static_cast<int>(embeddings.cols()); }

    GroundTruth subset(const std::function<bool(std::size_t)>& keep) const {
        GroundTruth g;
        g.embeddings = embeddings;
        g.names = names;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!keep(i)) continue;
            g.points.push_back(points[i]);
            g.class_ids.push_back(class_ids[i]);
            g.object_ids.push_back(object_ids.empty() ? 0 : object_ids[i]);
        }
        return g;
    }
};

inline Eigen::MatrixXf make_embeddings(EmbeddingScheme scheme, int classes, int dim, double min_distance, Rng& rng) {
    Eigen::MatrixXf e = Eigen::MatrixXf::Zero(dim, classes);
    if (scheme == EmbeddingScheme::orthogonal) {
        if (classes > dim) throw InputError("orthogonal embeddings need classes <= dim");
        const auto perm = rng.permutation(static_cast<std::size_t>(dim));
        for (int c = 0; c < classes; ++c) e(static_cast<Eigen::Index>(perm[c]), c) = 1.0f;
        return e;
    }
    for (int c = 0; c < classes; ++c) {
        bool ok = false;
        for (int attempt = 0; attempt < 100000 && !ok; ++attempt) {
            Eigen::VectorXf v(dim);
            for (int i = 0; i < dim; ++i) v(i) = static_cast<float>(rng.normal());
            v.normalize();
            ok = true;
            for (int j = 0; j < c && ok; ++j) {
                if (1.0 - static_cast<double>(e.col(j).dot(v)) < min_distance) ok = false;
            }
            if (ok) e.col(c) = v;
        }
        if (!ok) throw InputError("could not place embeddings with the requested minimum distance");
    }
    return e;
}

inline GroundTruth generate_scene(const SceneSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(mix_seed(seed, 11));
    GroundTruth gt;
    gt.embeddings = make_embeddings(spec.embedding, spec.classes, spec.dim, spec.min_distance, rng);
    gt.names = spec.names;
    gt.names.resize(static_cast<std::size_t>(spec.classes));
    for (int c = 0; c < spec.classes; ++c) {
        if (gt.names[c].empty()) gt.names[c] = "class" + std::to_string(c);
    }
    for (std::size_t pi = 0; pi < spec.primitives.size(); ++pi) {
        const Primitive& prim = spec.primitives[pi];
        for (const Face& f : prim.faces) {
            const auto n = static_cast<std::size_t>(std::llround(spec.density * f.area()));
            for (std::size_t i = 0; i < n; ++i) {
                const double s = rng.uniform();
                const double t = rng.uniform();
                gt.points.push_back(f.origin + s * f.u + t * f.v);
                gt.class_ids.push_back(prim.class_id);
                gt.object_ids.push_back(static_cast<int>(pi));
            }
        }
    }
    return gt;
}

// Per-pixel point index (-1 where nothing was hit).
struct RenderTrace {
    std::vector<std::int32_t> hit;
};

// Point-splat z-buffer render of one view with the configured corruption.
inline Frame render_frame(const GroundTruth& gt, const Pose& pose, const CameraIntrinsics& k, const NoiseModel& noise,
                          std::uint64_t seed, std::size_t frame_index, RenderTrace* trace = nullptr) {
    k.validate();
    pose.validate();
    constexpr double kNear = 0.05;
    const int w = k.width;
    const int h = k.height;
    const auto npx = static_cast<std::size_t>(w) * h;
    std::vector<double> zbuf(npx, std::numeric_limits<double>::infinity());
    std::vector<std::int32_t> hit(npx, -1);
    for (std::size_t i = 0; i < gt.points.size(); ++i) {
        const Vec3 pc = pose.inverse_apply(gt.points[i]);
        if (pc.z() <= kNear) continue;
        const long u = std::lround(k.fx * pc.x() / pc.z() + k.cx);
        const long v = std::lround(k.fy * pc.y() / pc.z() + k.cy);
        if (u < 0 || v < 0 || u >= w || v >= h) continue;
        const std::size_t idx = static_cast<std::size_t>(v) * w + static_cast<std::size_t>(u);
        if (pc.z() < zbuf[idx]) {
            zbuf[idx] = pc.z();
            hit[idx] = static_cast<std::int32_t>(i);
        }
    }

    const int dim = static_cast<int>(gt.embeddings.rows());
    const int classes = gt.classes();
    Rng rng(mix_seed(seed, 1000 + frame_index));
    // Per-object corruption for this frame, drawn for every object so the
    // stream does not depend on visibility.
    int n_objects = 0;
    for (int o : gt.object_ids) n_objects = std::max(n_objects, o + 1);
    std::vector<int> swapped_class(static_cast<std::size_t>(n_objects), -1);
    std::vector<Eigen::VectorXf> perturbed(static_cast<std::size_t>(n_objects));
    std::vector<int> object_class(static_cast<std::size_t>(n_objects), 0);
    for (std::size_t i = 0; i < gt.points.size(); ++i) object_class[gt.object_ids[i]] = gt.class_ids[i];
    for (int o = 0; o < n_objects; ++o) {
        if (noise.kind == NoiseKind::swap) {
            if (rng.uniform() < noise.swap_prob && classes > 1) {
                int other = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes - 1)));
                if (other >= object_class[o]) ++other;
                swapped_class[o] = other;
            }
        } else if (noise.kind == NoiseKind::angular) {
            Eigen::VectorXf v = gt.embeddings.col(object_class[o]);
            for (int d = 0; d < dim; ++d) v(d) += static_cast<float>(noise.angular_sigma * rng.normal());
            perturbed[o] = v.normalized();
        }
    }

    Frame frame;
    frame.width = w;
    frame.height = h;
    frame.pose = pose;
    frame.depth.assign(npx, 0.0f);
    frame.features = Eigen::MatrixXf::Zero(dim, static_cast<Eigen::Index>(npx));
    for (std::size_t idx = 0; idx < npx; ++idx) {
        if (hit[idx] < 0) continue;
        const auto pi = static_cast<std::size_t>(hit[idx]);
        frame.depth[idx] = static_cast<float>(zbuf[idx]);
        const int obj = gt.object_ids[pi];
        Eigen::VectorXf f = gt.embeddings.col(gt.class_ids[pi]);
        if (noise.kind == NoiseKind::swap && swapped_class[obj] >= 0) f = gt.embeddings.col(swapped_class[obj]);
        if (noise.kind == NoiseKind::angular) f = perturbed[obj];
        frame.features.col(static_cast<Eigen::Index>(idx)) = f;
    }

    if (noise.kind == NoiseKind::bleed) {
        // foreground features leak onto background pixels near depth edges
        const Eigen::MatrixXf clean = frame.features;
        const int r = noise.bleed_radius;
        for (int v = 0; v < h; ++v) {
            for (int u = 0; u < w; ++u) {
                const std::size_t idx = static_cast<std::size_t>(v) * w + u;
                if (hit[idx] < 0) continue;
                double best = zbuf[idx];
                std::size_t src = idx;
                for (int dv = -r; dv <= r; ++dv) {
                    for (int du = -r; du <= r; ++du) {
                        const int uu = u + du, vv = v + dv;
                        if (uu < 0 || vv < 0 || uu >= w || vv >= h) continue;
                        const std::size_t j = static_cast<std::size_t>(vv) * w + uu;
                        if (hit[j] < 0) continue;
                        if (zbuf[j] < best - noise.bleed_jump) {
                            best = zbuf[j];
                            src = j;
                        }
                    }
                }
                if (src != idx) frame.features.col(static_cast<Eigen::Index>(idx)) = clean.col(static_cast<Eigen::Index>(src));
            }
        }
    }
    if (trace) trace->hit = std::move(hit);
    return frame;
}

inline std::vector<Frame> render_frames(const GroundTruth& gt, std::span<const Pose> trajectory,
                                        const CameraIntrinsics& k, const NoiseModel& noise, std::uint64_t seed) {
    std::vector<Frame> frames;
    frames.reserve(trajectory.size());
    for (std::size_t i = 0; i < trajectory.size(); ++i) frames.push_back(render_frame(gt, trajectory[i], k, noise, seed, i));
    return frames;
}

// Camera at `eye` sweeping yaw over [yaw0, yaw1) in `count` steps at fixed pitch
// (degrees, negative looks down).
inline std::vector<Pose> spin_trajectory(const Vec3& eye, int count, double pitch_deg, double yaw0_deg = 0.0,
                                         double yaw1_deg = 360.0) {
    std::vector<Pose> poses;
    const double deg = std::numbers::pi / 180.0;
    for (int i = 0; i < count; ++i) {
        const double yaw = (yaw0_deg + (yaw1_deg - yaw0_deg) * i / count) * deg;
        const double pitch = pitch_deg * deg;
        const Vec3 fwd(std::cos(pitch) * std::cos(yaw), std::cos(pitch) * std::sin(yaw), std::sin(pitch));
        poses.push_back(Pose::look_at(eye, eye + fwd));
    }
    return poses;
}

// Camera on a circle around `center` looking at it.
inline std::vector<Pose> orbit_trajectory(const Vec3& center, double radius, double height, int count) {
    std::vector<Pose> poses;
    for (int i = 0; i < count; ++i) {
        const double a = 2.0 * std::numbers::pi * i / count;
        const Vec3 eye = center + Vec3(radius * std::cos(a), radius * std::sin(a), height);
        poses.push_back(Pose::look_at(eye, center));
    }
    return poses;
}

namespace detail {

inline std::vector<std::string> tokenize(std::string_view line) {
    std::vector<std::string> out;
    std::istringstream is{std::string(line)};
    std::string tok;
    while (is >> tok) {
        if (tok[0] == '#') break;
        out.push_back(tok);
    }
    return out;
}

inline double to_double(const std::string& s, std::size_t line) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SpecError(line, "expected a number, got '" + s + "'");
    }
}

inline long to_int(const std::string& s, std::size_t line) {
    const double v = to_double(s, line);
    if (v != std::floor(v)) throw SpecError(line, "expected an integer, got '" + s + "'");
    return static_cast<long>(v);
}

}  // namespace detail

// Plain-text scene description, one directive per line:
//   dim <D> | classes <C> | seed <n> | density <pts per m^2>
//   embedding orthogonal | embedding random <min cosine distance>
//   extent <x0 y0 z0> <x1 y1 z1>
//   plane <class> <origin xyz> <edge u xyz> <edge v xyz>
//   box <class> <min xyz> <max xyz> [open_bottom]
//   name <class> <label text>
//   camera <width> <height> <fx> <fy> <cx> <cy>
//   spin <frames> <eye xyz> <pitch deg> [<yaw0 deg> <yaw1 deg>]
//   orbit <frames> <center xyz> <radius> <height>
//   pose <r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2>
//   noise none | swap <p> | angular <sigma> | bleed <radius px> <jump m>
// '#' starts a comment.
inline SceneSpec parse_scene_spec(std::string_view text) {
    SceneSpec spec;
    spec.primitives.clear();
    std::istringstream is{std::string(text)};
    std::string raw;
    std::size_t ln = 0;
    struct PendingTrajectory {
        std::size_t line;
        std::vector<std::string> tok;
    };
    std::vector<PendingTrajectory> pending;
    auto need = [](const std::vector<std::string>& t, std::size_t n, std::size_t line) {
        if (t.size() != n) {
            throw SpecError(line, "'" + t[0] + "' expects " + std::to_string(n - 1) + " values, got " +
                                      std::to_string(t.size() - 1));
        }
    };
    auto vec_at = [](const std::vector<std::string>& t, std::size_t i, std::size_t line) {
        return Vec3(detail::to_double(t[i], line), detail::to_double(t[i + 1], line), detail::to_double(t[i + 2], line));
    };
    while (std::getline(is, raw)) {
        ++ln;
        const auto t = detail::tokenize(raw);
        if (t.empty()) continue;
        const std::string& key = t[0];
        if (key == "dim") {
            need(t, 2, ln);
            spec.dim = static_cast<int>(detail::to_int(t[1], ln));
        } else if (key == "classes") {
            need(t, 2, ln);
            spec.classes = static_cast<int>(detail::to_int(t[1], ln));
        } else if (key == "seed") {
            need(t, 2, ln);
            spec.seed = static_cast<std::uint64_t>(detail::to_int(t[1], ln));
        } else if (key == "density") {
            need(t, 2, ln);
            spec.density = detail::to_double(t[1], ln);
        } else if (key == "embedding") {
            if (t.size() == 2 && t[1] == "orthogonal") {
                spec.embedding = EmbeddingScheme::orthogonal;
            } else if (t.size() == 3 && t[1] == "random") {
                spec.embedding = EmbeddingScheme::random;
                spec.min_distance = detail::to_double(t[2], ln);
            } else {
                throw SpecError(ln, "embedding must be 'orthogonal' or 'random <min_distance>'");
            }
        } else if (key == "extent") {
            need(t, 7, ln);
            spec.extent_min = vec_at(t, 1, ln);
            spec.extent_max = vec_at(t, 4, ln);
        } else if (key == "plane") {
            need(t, 11, ln);
            auto p = Primitive::plane(static_cast<int>(detail::to_int(t[1], ln)), vec_at(t, 2, ln), vec_at(t, 5, ln),
                                      vec_at(t, 8, ln));
            if (!(p.faces[0].area() > 1e-12)) throw SpecError(ln, "degenerate plane (zero area)");
            spec.primitives.push_back(std::move(p));
        } else if (key == "box") {
            if (t.size() != 8 && !(t.size() == 9 && t[8] == "open_bottom")) {
                throw SpecError(ln, "'box' expects <class> <min xyz> <max xyz> [open_bottom]");
            }
            const Vec3 lo = vec_at(t, 2, ln), hi = vec_at(t, 5, ln);
            const Vec3 d = hi - lo;
            const int flat = (d.array() <= 0.0).count();
            if (flat > 0) throw SpecError(ln, "degenerate box (max must exceed min on every axis)");
            spec.primitives.push_back(Primitive::box(static_cast<int>(detail::to_int(t[1], ln)), lo, hi, t.size() == 9));
        } else if (key == "name") {
            if (t.size() < 3) throw SpecError(ln, "'name' expects <class> <text>");
            const auto c = detail::to_int(t[1], ln);
            if (c < 0) throw SpecError(ln, "negative class id");
            std::string name = t[2];
            for (std::size_t i = 3; i < t.size(); ++i) name += " " + t[i];
            if (spec.names.size() <= static_cast<std::size_t>(c)) spec.names.resize(static_cast<std::size_t>(c) + 1);
            spec.names[static_cast<std::size_t>(c)] = name;
        } else if (key == "camera") {
            need(t, 7, ln);
            spec.camera = {detail::to_double(t[3], ln), detail::to_double(t[4], ln), detail::to_double(t[5], ln),
                           detail::to_double(t[6], ln), static_cast<int>(detail::to_int(t[1], ln)),
                           static_cast<int>(detail::to_int(t[2], ln))};
            try {
                spec.camera.validate();
            } catch (const InputError& e) {
                throw SpecError(ln, e.what());
            }
        } else if (key == "spin" || key == "orbit" || key == "pose") {
            pending.push_back({ln, t});
        } else if (key == "noise") {
            if (t.size() == 2 && t[1] == "none") {
                spec.noise = {};
            } else if (t.size() == 3 && t[1] == "swap") {
                spec.noise = {};
                spec.noise.kind = NoiseKind::swap;
                spec.noise.swap_prob = detail::to_double(t[2], ln);
                if (spec.noise.swap_prob < 0.0 || spec.noise.swap_prob > 1.0) {
                    throw SpecError(ln, "swap probability must lie in [0, 1]");
                }
            } else if (t.size() == 3 && t[1] == "angular") {
                spec.noise = {};
                spec.noise.kind = NoiseKind::angular;
                spec.noise.angular_sigma = detail::to_double(t[2], ln);
            } else if (t.size() == 4 && t[1] == "bleed") {
                spec.noise = {};
                spec.noise.kind = NoiseKind::bleed;
                spec.noise.bleed_radius = static_cast<int>(detail::to_int(t[2], ln));
                spec.noise.bleed_jump = detail::to_double(t[3], ln);
            } else {
                throw SpecError(ln, "noise must be none | swap <p> | angular <sigma> | bleed <radius> <jump>");
            }
        } else {
            throw SpecError(ln, "unknown directive '" + key + "'");
        }
    }
    for (const auto& pt : pending) {
        const auto& t = pt.tok;
        if (t[0] == "spin") {
            if (t.size() != 6 && t.size() != 8) throw SpecError(pt.line, "'spin' expects <frames> <eye xyz> <pitch> [yaw0 yaw1]");
            const auto n = detail::to_int(t[1], pt.line);
            if (n < 1) throw SpecError(pt.line, "frame count must be positive");
            const double y0 = t.size() == 8 ? detail::to_double(t[6], pt.line) : 0.0;
            const double y1 = t.size() == 8 ? detail::to_double(t[7], pt.line) : 360.0;
            for (auto& p : spin_trajectory(vec_at(t, 2, pt.line), static_cast<int>(n), detail::to_double(t[5], pt.line), y0, y1)) {
                spec.trajectory.push_back(p);
            }
        } else if (t[0] == "orbit") {
            need(t, 7, pt.line);
            const auto n = detail::to_int(t[1], pt.line);
            if (n < 1) throw SpecError(pt.line, "frame count must be positive");
            for (auto& p : orbit_trajectory(vec_at(t, 2, pt.line), detail::to_double(t[5], pt.line),
                                            detail::to_double(t[6], pt.line), static_cast<int>(n))) {
                spec.trajectory.push_back(p);
            }
        } else {
            need(t, 13, pt.line);
            Pose p;
            for (int r = 0; r < 3; ++r) {
                for (int c = 0; c < 3; ++c) p.rotation(r, c) = detail::to_double(t[1 + 3 * r + c], pt.line);
            }
            p.translation = vec_at(t, 10, pt.line);
            try {
                p.validate();
            } catch (const InputError& e) {
                throw SpecError(pt.line, e.what());
            }
            spec.trajectory.push_back(p);
        }
    }
    for (std::size_t i = 0; i < spec.primitives.size(); ++i) {
        if (spec.primitives[i].class_id < 0 || spec.primitives[i].class_id >= spec.classes) {
            throw InputError("scene: primitive " + std::to_string(i) + " has class outside [0, classes)");
        }
    }
    spec.validate();
    return spec;
}

}  // namespace lilmap
