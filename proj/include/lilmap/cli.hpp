#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#ifdef _OPENMP
#include <omp.h>
#endif

#include "lilmap/config.hpp"
#include "lilmap/datagen.hpp"
#include "lilmap/io.hpp"
#include "lilmap/metrics.hpp"
#include "lilmap/pipeline.hpp"

namespace lilmap::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kEmptyData = 3, kNumericalFailure = 4 };

class EmptyDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Map = LanguageMap<float>;

// Caps Eigen (and OpenMP, when built with it) at LILMAP_THREADS workers.
inline void apply_thread_limit() {
    const char* env = std::getenv("LILMAP_THREADS");
    if (!env || !*env) return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 1) throw InputError("LILMAP_THREADS must be a positive integer");
    Eigen::setNbThreads(static_cast<int>(n));
#ifdef _OPENMP
    omp_set_num_threads(static_cast<int>(n));
#endif
}

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> fusion;
    std::optional<double> tau;
    std::optional<int> iters;
    std::optional<int> n_opt;
    std::optional<std::string> levels;
    std::optional<double> fine_res;
    std::optional<int> dim;

    void add_to(CLI::App& app) {
        app.add_option("--config", config_path, "key = value run configuration");
        app.add_option("--seed", seed, "master seed");
        app.add_option("--fusion", fusion, "measurement update")->check(CLI::IsMember({"none", "mean", "exp"}));
        app.add_option("--tau", tau, "feature-distance threshold");
        app.add_option("--iters", iters, "mapping iterations per frame");
        app.add_option("--n-opt", n_opt, "decoder-extension iterations");
        app.add_option("--levels", levels, "octree levels, coarsest first, e.g. 8,9,10");
        app.add_option("--fine-res", fine_res, "finest voxel edge in meters");
        app.add_option("--dim", dim, "embedding dimension");
    }

    RunConfig resolve(int archive_dim) const {
        RunConfig c = RunConfig::with_dim(archive_dim);
        if (!config_path.empty()) c = parse_config(io::read_text(config_path), c);
        if (seed) c.mapping.seed = *seed;
        if (fusion) c.mapping.fusion = parse_fusion_mode(*fusion);
        if (tau) c.adaptive.tau = *tau;
        if (iters) c.mapping.map_iters = *iters;
        if (n_opt) c.adaptive.n_opt = *n_opt;
        if (levels) apply_setting(c, "levels", *levels);
        if (fine_res) c.octree.fine_resolution = *fine_res;
        if (dim) c.decoder.output_dim = *dim;
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw InputError(e.what());
        }
        if (c.decoder.output_dim != archive_dim) {
            throw InputError("embedding dimension " + std::to_string(c.decoder.output_dim) +
                             " differs from the archive's " + std::to_string(archive_dim));
        }
        return c;
    }
};

// key=value lines, fixed formatting so equal runs print equal bytes.
class Report {
public:
    template <typename T>
    void add(const std::string& key, const T& v) {
        std::ostringstream os;
        os << v;
        lines_ += key + "=" + os.str() + "\n";
    }
    void num(const std::string& key, double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        lines_ += key + "=" + buf + "\n";
    }
    void hex(const std::string& key, std::uint64_t v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        lines_ += key + "=" + buf + "\n";
    }
    const std::string& str() const { return lines_; }

    void emit(std::ostream& out, const std::string& path) const {
        if (path.empty()) {
            out << lines_;
        } else {
            io::write_text(path, lines_);
        }
    }

private:
    std::string lines_;
};

inline std::string class_name(const LabelSet& labels, int c) {
    if (c < 0) return "unmapped";
    return c < static_cast<int>(labels.names.size()) && !labels.names[c].empty() ? labels.names[c]
                                                                                 : "class_" + std::to_string(c);
}

inline int cmd_synth(const std::string& spec_path, const std::string& out_dir, std::optional<std::uint64_t> seed,
                     std::ostream& out) {
    const SceneSpec spec = parse_scene_spec(io::read_text(spec_path));
    spec.validate();
    const std::uint64_t s = seed.value_or(spec.seed);
    const GroundTruth gt = generate_scene(spec, s);
    std::filesystem::create_directories(out_dir);
    // Stale frames from an earlier, longer run would otherwise be picked up.
    for (std::size_t i = spec.trajectory.size(); std::filesystem::exists(detail::frame_path(out_dir, i, "feat")); ++i) {
        for (const char* ext : {"feat", "depth", "pose"}) std::filesystem::remove(detail::frame_path(out_dir, i, ext));
    }
    write_intrinsics(out_dir, spec.camera);
    for (std::size_t i = 0; i < spec.trajectory.size(); ++i) {
        write_frame(out_dir, i, render_frame(gt, spec.trajectory[i], spec.camera, spec.noise, s, i));
    }
    save_ground_truth(std::filesystem::path(out_dir) / "gt.bin", gt);
    save_labels(std::filesystem::path(out_dir) / "labels.bin", gt.embeddings, gt.names);
    Report r;
    r.add("seed", s);
    r.add("frames", spec.trajectory.size());
    r.add("points", gt.size());
    r.add("classes", gt.classes());
    r.add("dim", spec.dim);
    r.emit(out, "");
    return kOk;
}

inline int cmd_map(const std::string& archive, const Overrides& ov, const std::string& out_path, std::ostream& out,
                   std::ostream& err) {
    const CameraIntrinsics k = read_intrinsics(archive);
    const std::size_t n = count_frames(archive);
    if (n == 0) throw EmptyDataError("no frames in " + archive);
    Frame first = read_frame(archive, 0, k);
    const RunConfig cfg = ov.resolve(static_cast<int>(first.features.rows()));
    Map map(cfg);
    double seconds = 0.0;
    double last_loss = 0.0;
    std::size_t points = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Frame f = i == 0 ? std::move(first) : read_frame(archive, i, k);
        if (f.features.rows() != cfg.decoder.output_dim) throw InputError("frame feature dimension changes mid-archive");
        const auto cloud = project_frame(f, k);
        const FrameReport rep = map.map_frame(cloud);
        points += rep.points;
        seconds += rep.seconds_adaptive + rep.seconds_fusion + rep.seconds_mapping;
        if (!rep.loss_curve.empty()) last_loss = rep.loss_curve.back();
        err << "frame " << i + 1 << "/" << n << " points=" << rep.points << " new_features=" << rep.adaptive.new_features
            << " bank=" << map.bank().size() << " loss=" << last_loss << " t_adapt=" << rep.seconds_adaptive
            << " t_fuse=" << rep.seconds_fusion << " t_map=" << rep.seconds_mapping << '\n';
    }
    if (points == 0) throw EmptyDataError("archive frames contain no valid points");
    save_map(out_path, map);
    Report r;
    r.add("seed", cfg.mapping.seed);
    r.hex("config_hash", config_hash(cfg));
    r.add("fusion", to_string(cfg.mapping.fusion));
    r.add("frames", n);
    r.add("points", points);
    r.add("bank_size", map.bank().size());
    r.add("fine_voxels", map.octree().level(map.octree().config().levels.size() - 1).voxels.size());
    r.add("corners", map.octree().corner_count());
    r.num("final_loss", last_loss);
    r.num("seconds", seconds);
    r.emit(out, "");
    return kOk;
}

inline Report eval_report(const Map& map, const GroundTruth& gt, const LabelSet& labels) {
    if (gt.size() == 0) throw EmptyDataError("ground truth has no points");
    if (labels.embeddings.rows() != map.config().decoder.output_dim) {
        throw InputError("label dimension differs from the map's");
    }
    for (int c : gt.class_ids) {
        if (c < 0 || c >= labels.classes()) throw InputError("ground-truth class outside the label table");
    }
    const auto cls = map.classify(gt.points, labels.embeddings);
    const auto m = evaluate_segmentation(gt.class_ids, cls.labels, labels.classes());
    Report r;
    r.add("seed", map.config().mapping.seed);
    r.hex("config_hash", config_hash(map.config()));
    r.add("points", m.points);
    r.add("unmapped", m.unmapped);
    r.num("accuracy", m.accuracy);
    r.num("mean_recall", m.mean_recall);
    r.num("mean_precision", m.mean_precision);
    r.num("mean_iou", m.mean_iou);
    static const char* kBuckets[] = {"f1_90_100", "f1_80_90", "f1_70_80", "f1_50_70", "f1_0_50"};
    for (std::size_t b = 0; b < 5; ++b) r.add(std::string("hist.") + kBuckets[b], m.f1_histogram[b]);
    for (const auto& c : m.per_class) {
        if (!c.present) continue;
        const std::string p = "class." + std::to_string(c.class_id) + ".";
        r.add(p + "name", class_name(labels, c.class_id));
        r.num(p + "recall", c.recall);
        r.num(p + "precision", c.precision);
        r.num(p + "iou", c.iou);
        r.num(p + "f1", c.f1);
    }
    return r;
}

inline int cmd_eval(const std::string& map_path, const std::string& gt_path, const std::string& labels_path,
                    const std::string& out_path, std::ostream& out) {
    const Map map = load_map<float>(map_path);
    eval_report(map, load_ground_truth(gt_path), load_labels(labels_path)).emit(out, out_path);
    return kOk;
}

inline std::vector<Vec3> fine_centers(const Map& map) {
    std::vector<Vec3> pts;
    for (const auto& k : map.octree().fine_keys()) pts.push_back(map.octree().fine_center(k));
    return pts;
}

inline int cmd_query(const std::string& map_path, const std::string& points_path, const std::string& labels_path,
                     const std::string& label, const std::string& out_path, std::ostream& out) {
    const Map map = load_map<float>(map_path);
    std::ostringstream os;
    char buf[96];
    if (!label.empty()) {
        if (labels_path.empty()) throw InputError("--label needs --labels");
        const LabelSet labels = load_labels(labels_path);
        const int want = labels.find(label);
        if (want < 0) throw InputError("label '" + label + "' not in the label table");
        const auto pts = points_path.empty() ? fine_centers(map) : parse_points(io::read_text(points_path));
        const auto cls = map.classify(pts, labels.embeddings);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (cls.labels[i] != want) continue;
            std::snprintf(buf, sizeof buf, "%.4f %.4f %.4f %.6f\n", pts[i].x(), pts[i].y(), pts[i].z(),
                          static_cast<double>(cls.confidence[i]));
            os << buf;
        }
    } else {
        if (points_path.empty()) throw InputError("query needs --points or --label");
        const auto pts = parse_points(io::read_text(points_path));
        if (!labels_path.empty()) {
            const LabelSet labels = load_labels(labels_path);
            const auto cls = map.classify(pts, labels.embeddings);
            for (std::size_t i = 0; i < pts.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.4f %.4f %.4f ", pts[i].x(), pts[i].y(), pts[i].z());
                os << buf << class_name(labels, cls.labels[i]);
                std::snprintf(buf, sizeof buf, " %.6f\n", static_cast<double>(cls.confidence[i]));
                os << buf;
            }
        } else {
            const auto q = map.query(pts);
            for (std::size_t i = 0; i < pts.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.4f %.4f %.4f %d", pts[i].x(), pts[i].y(), pts[i].z(),
                              static_cast<int>(q.mapped[i]));
                os << buf;
                for (Eigen::Index d = 0; d < q.features.rows(); ++d) {
                    std::snprintf(buf, sizeof buf, " %.6g", static_cast<double>(q.features(d, static_cast<Eigen::Index>(i))));
                    os << buf;
                }
                os << '\n';
            }
        }
    }
    if (out_path.empty()) {
        out << os.str();
    } else {
        io::write_text(out_path, os.str());
    }
    return kOk;
}

inline int cmd_export_ply(const std::string& map_path, const std::string& labels_path, const std::string& out_path,
                          std::ostream& out) {
    const Map map = load_map<float>(map_path);
    const LabelSet labels = load_labels(labels_path);
    const auto pts = fine_centers(map);
    if (pts.empty()) throw EmptyDataError("map has no reconstructed voxels");
    const auto cls = map.classify(pts, labels.embeddings);
    std::vector<PlyVertex> verts(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto rgb = palette_color(cls.labels[i]);
        verts[i] = {static_cast<float>(pts[i].x()), static_cast<float>(pts[i].y()), static_cast<float>(pts[i].z()),
                    rgb[0], rgb[1], rgb[2], cls.confidence[i]};
    }
    write_ply(out_path, verts);
    Report r;
    r.add("vertices", verts.size());
    r.emit(out, "");
    return kOk;
}

inline int cmd_stats(const std::string& map_path, std::ostream& out) {
    const Map map = load_map<float>(map_path);
    out << map.octree().stats();
    Report r;
    r.add("seed", map.config().mapping.seed);
    r.hex("config_hash", config_hash(map.config()));
    r.add("frames", map.frames_mapped());
    r.add("bank_size", map.bank().size());
    r.add("fusion_voxels", map.fusion().size());
    r.emit(out, "");
    out << serialize_config(map.config());
    return kOk;
}

// Whole command line; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"lilmap: incremental language-feature maps"};
    app.require_subcommand(1);

    std::string out_path;
    std::optional<std::uint64_t> synth_seed;
    std::string spec_path, archive, map_path, gt_path, labels_path, points_path, label;
    Overrides ov;

    auto* synth = app.add_subcommand("synth", "render a synthetic scene into a frame archive");
    synth->add_option("spec", spec_path, "scene spec file")->required();
    synth->add_option("--out", out_path, "archive directory")->required();
    synth->add_option("--seed", synth_seed, "overrides the spec's seed");

    auto* map = app.add_subcommand("map", "build a map checkpoint from a frame archive");
    map->add_option("archive", archive, "frame archive directory")->required();
    map->add_option("--out", out_path, "map checkpoint path")->required();
    ov.add_to(*map);

    auto* eval = app.add_subcommand("eval", "segmentation metrics against ground truth");
    eval->add_option("map", map_path)->required();
    eval->add_option("gt", gt_path)->required();
    eval->add_option("labels", labels_path)->required();
    eval->add_option("--out", out_path, "report file (default stdout)");

    auto* query = app.add_subcommand("query", "decode features or classify points");
    query->add_option("map", map_path)->required();
    query->add_option("--points", points_path, "text file, one 'x y z' per line");
    query->add_option("--labels", labels_path, "label-embedding file");
    query->add_option("--label", label, "list points classified as this label");
    query->add_option("--out", out_path);

    auto* ply = app.add_subcommand("export-ply", "colored fine-voxel point cloud");
    ply->add_option("map", map_path)->required();
    ply->add_option("labels", labels_path)->required();
    ply->add_option("--out", out_path)->required();

    auto* stats = app.add_subcommand("stats", "map summary");
    stats->add_option("map", map_path)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }

    try {
        apply_thread_limit();
        if (*synth) return cmd_synth(spec_path, out_path, synth_seed, out);
        if (*map) return cmd_map(archive, ov, out_path, out, err);
        if (*eval) return cmd_eval(map_path, gt_path, labels_path, out_path, out);
        if (*query) return cmd_query(map_path, points_path, labels_path, label, out_path, out);
        if (*ply) return cmd_export_ply(map_path, labels_path, out_path, out);
        if (*stats) return cmd_stats(map_path, out);
    } catch (const EmptyDataError& e) {
        err << "error: " << e.what() << '\n';
        return kEmptyData;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return kInputError;
    }
    return kInputError;
}

}  // namespace lilmap::cli
