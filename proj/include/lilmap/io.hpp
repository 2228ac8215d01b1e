#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lilmap/adaptive.hpp"
#include "lilmap/common.hpp"
#include "lilmap/config.hpp"
#include "lilmap/datagen.hpp"
#include "lilmap/fusion.hpp"
#include "lilmap/geometry.hpp"
#include "lilmap/neural.hpp"
#include "lilmap/pipeline.hpp"

namespace lilmap {

// All binary files are little-endian; multi-byte values are converted on
// big-endian hosts.
namespace io {

inline constexpr std::uint32_t fourcc(const char (&s)[5]) {
    return std::uint32_t(std::uint8_t(s[0])) | std::uint32_t(std::uint8_t(s[1])) << 8 |
           std::uint32_t(std::uint8_t(s[2])) << 16 | std::uint32_t(std::uint8_t(s[3])) << 24;
}

inline constexpr std::uint32_t kDecoderMagic = fourcc("LLDC");
inline constexpr std::uint32_t kBankMagic = fourcc("LLBK");
inline constexpr std::uint32_t kMapMagic = fourcc("LLMP");
inline constexpr std::uint32_t kFeatureMagic = fourcc("LLFT");
inline constexpr std::uint32_t kGroundTruthMagic = fourcc("LLGT");
inline constexpr std::uint32_t kLabelsMagic = fourcc("LLLB");
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

template <typename T>
T to_le(T v) {
    if constexpr (std::endian::native == std::endian::little || sizeof(T) == 1) {
        return v;
    } else {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

class Writer {
public:
    explicit Writer(std::ostream& os) : os_(os) {}

    template <typename T>
    void put(T v) {
        v = to_le(v);
        os_.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
    void u32(std::uint32_t v) { put(v); }
    void i32(std::int32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f64(double v) { put(v); }

    // Values are stored as float32 whatever the in-memory scalar.
    template <typename Scalar>
    void floats(const Scalar* data, std::size_t n) {
        std::vector<float> buf(n);
        for (std::size_t i = 0; i < n; ++i) buf[i] = to_le(static_cast<float>(data[i]));
        os_.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    }
    void string(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void key(const VoxelKey& k) {
        i32(k.x);
        i32(k.y);
        i32(k.z);
    }

private:
    std::ostream& os_;
};

class Reader {
public:
    Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

    template <typename T>
    T get() {
        T v{};
        is_.read(reinterpret_cast<char*>(&v), sizeof v);
        if (!is_) fail("truncated");
        return to_le(v);
    }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::int32_t i32() { return get<std::int32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    double f64() { return get<double>(); }

    template <typename Scalar>
    void floats(Scalar* out, std::size_t n) {
        std::vector<float> buf(n);
        is_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
        if (!is_) fail("truncated");
        for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<Scalar>(to_le(buf[i]));
    }
    std::string string(std::uint32_t max_len = 1u << 24) {
        const std::uint32_t n = u32();
        if (n > max_len) fail("string too long");
        std::string s(n, '\0');
        is_.read(s.data(), n);
        if (!is_) fail("truncated");
        return s;
    }
    VoxelKey key() {
        VoxelKey k;
        k.x = i32();
        k.y = i32();
        k.z = i32();
        return k;
    }
    void expect(std::uint32_t magic) {
        if (u32() != magic) fail("bad magic");
        if (const auto v = u32(); v != kVersion) fail("unsupported version " + std::to_string(v));
    }
    // Guards element counts read from a file before allocating.
    std::uint64_t count(std::uint64_t limit = 1ull << 34) {
        const auto n = u64();
        if (n > limit) fail("implausible element count");
        return n;
    }
    [[noreturn]] void fail(const std::string& why) const { throw InputError(what_ + ": " + why); }

private:
    std::istream& is_;
    std::string what_;
};

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) throw InputError("cannot write " + p.string());
    return os;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw InputError("cannot read " + p.string());
    return is;
}

inline std::string read_text(const std::filesystem::path& p) {
    auto is = open_in(p);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline std::string format_double_list(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + lilmap::detail::format_double(v[i]);
    return s;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    auto os = open_out(p);
    os << s;
    if (!os) throw InputError("write failed: " + p.string());
}

}  // namespace io

// ---- decoder ---------------------------------------------------------------
// header: magic, version, m, h, L, D, activation; then w1 b1 w2 b2 w3 b3 as
// column-major float32.

template <typename Scalar>
void write_decoder(io::Writer& w, const LanguageDecoder<Scalar>& dec) {
    const auto& c = dec.config();
    w.u32(io::kDecoderMagic);
    w.u32(io::kVersion);
    w.u32(static_cast<std::uint32_t>(c.input_dim));
    w.u32(static_cast<std::uint32_t>(c.hidden_dim));
    w.u32(static_cast<std::uint32_t>(c.f_dim));
    w.u32(static_cast<std::uint32_t>(c.output_dim));
    w.u32(c.activation == Activation::relu ? 0u : 1u);
    dec.params().for_each_block([&](std::span<const Scalar> b) { w.floats(b.data(), b.size()); });
}

template <typename Scalar>
LanguageDecoder<Scalar> read_decoder(io::Reader& r) {
    r.expect(io::kDecoderMagic);
    DecoderConfig c;
    auto dim = [&]() {
        const auto v = r.u32();
        if (v == 0 || v > (1u << 16)) r.fail("decoder dimension out of range");
        return static_cast<int>(v);
    };
    c.input_dim = dim();
    c.hidden_dim = dim();
    c.f_dim = dim();
    c.output_dim = dim();
    const auto act = r.u32();
    if (act > 1) r.fail("unknown activation");
    c.activation = act == 0 ? Activation::relu : Activation::tanh;
    LanguageDecoder<Scalar> dec(c);
    DecoderParams<Scalar> p = DecoderParams<Scalar>::zeros(c);
    p.for_each_block([&](std::span<Scalar> b) { r.floats(b.data(), b.size()); });
    dec.set_params(std::move(p));
    return dec;
}

template <typename Scalar>
void save_decoder(const std::filesystem::path& path, const LanguageDecoder<Scalar>& dec) {
    auto os = io::open_out(path);
    io::Writer w(os);
    write_decoder(w, dec);
}

template <typename Scalar>
LanguageDecoder<Scalar> load_decoder(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::Reader r(is, path.string());
    return read_decoder<Scalar>(r);
}

// ---- feature bank ----------------------------------------------------------
// header: magic, version, D, m, L, K, tau (f64); then features, encodings and
// F vectors, one column per entry.

template <typename Scalar>
void write_bank(io::Writer& w, const FeatureBank<Scalar>& bank, double tau) {
    w.u32(io::kBankMagic);
    w.u32(io::kVersion);
    w.u32(static_cast<std::uint32_t>(bank.feature_dim()));
    w.u32(static_cast<std::uint32_t>(bank.encoding_dim()));
    w.u32(static_cast<std::uint32_t>(bank.f_dim()));
    w.u64(bank.size());
    w.f64(tau);
    w.floats(bank.features.data(), static_cast<std::size_t>(bank.features.size()));
    w.floats(bank.encodings.data(), static_cast<std::size_t>(bank.encodings.size()));
    w.floats(bank.f_vectors.data(), static_cast<std::size_t>(bank.f_vectors.size()));
}

template <typename Scalar>
FeatureBank<Scalar> read_bank(io::Reader& r, double* tau = nullptr) {
    r.expect(io::kBankMagic);
    const auto d = static_cast<int>(r.u32());
    const auto m = static_cast<int>(r.u32());
    const auto l = static_cast<int>(r.u32());
    const auto k = static_cast<Eigen::Index>(r.count(1u << 24));
    const double t = r.f64();
    if (tau) *tau = t;
    if (d <= 0 || m <= 0 || l <= 0 || d > (1 << 16) || m > (1 << 16) || l > (1 << 16)) r.fail("bank dimension out of range");
    FeatureBank<Scalar> bank(d, m, l);
    bank.features.resize(d, k);
    bank.encodings.resize(m, k);
    bank.f_vectors.resize(l, k);
    r.floats(bank.features.data(), static_cast<std::size_t>(bank.features.size()));
    r.floats(bank.encodings.data(), static_cast<std::size_t>(bank.encodings.size()));
    r.floats(bank.f_vectors.data(), static_cast<std::size_t>(bank.f_vectors.size()));
    return bank;
}

template <typename Scalar>
void save_bank(const std::filesystem::path& path, const FeatureBank<Scalar>& bank, double tau) {
    auto os = io::open_out(path);
    io::Writer w(os);
    write_bank(w, bank, tau);
}

template <typename Scalar>
FeatureBank<Scalar> load_bank(const std::filesystem::path& path, double* tau = nullptr) {
    auto is = io::open_in(path);
    io::Reader r(is, path.string());
    return read_bank<Scalar>(r, tau);
}

// ---- full map --------------------------------------------------------------
// Hash-map contents are written in key order so equal maps give equal bytes.

namespace detail {

template <typename Map>
std::vector<typename Map::const_iterator> sorted_entries(const Map& m) {
    std::vector<typename Map::const_iterator> its;
    its.reserve(m.size());
    for (auto it = m.begin(); it != m.end(); ++it) its.push_back(it);
    std::sort(its.begin(), its.end(), [](auto a, auto b) { return a->first < b->first; });
    return its;
}

}  // namespace detail

template <typename Scalar>
void save_map(const std::filesystem::path& path, const LanguageMap<Scalar>& map) {
    auto os = io::open_out(path);
    io::Writer w(os);
    w.u32(io::kMapMagic);
    w.u32(io::kVersion);
    w.string(serialize_config(map.config()));
    w.u64(map.frames_mapped());
    w.string(map.rng().state());

    const auto& oct = map.octree();
    w.string(oct.rng().state());
    const std::size_t nlev = oct.config().levels.size();
    for (std::size_t li = 0; li < nlev; ++li) {
        const auto& lv = oct.level(li);
        w.u64(lv.corners.size());
        for (auto it : detail::sorted_entries(lv.corners)) {
            w.key(it->first);
            w.u32(it->second);
        }
        w.u64(lv.voxels.size());
        for (auto it : detail::sorted_entries(lv.voxels)) {
            w.key(it->first);
            for (auto c : it->second.corners) w.u32(c);
            w.u32(it->second.f_index);
        }
    }
    w.u64(oct.corner_data().size());
    w.floats(oct.corner_data().data(), oct.corner_data().size());
    w.u64(oct.f_data().size());
    w.floats(oct.f_data().data(), oct.f_data().size());

    write_decoder(w, map.decoder());
    write_bank(w, map.bank(), map.config().adaptive.tau);

    const auto& fusion = map.fusion();
    w.u64(fusion.dropped());
    w.u64(fusion.records().size());
    for (auto it : detail::sorted_entries(fusion.records())) {
        w.key(it->first);
        w.u32(it->second.n);
        w.u32(static_cast<std::uint32_t>(it->second.last_target.size()));
        w.floats(it->second.last_target.data(), static_cast<std::size_t>(it->second.last_target.size()));
    }
    if (!os) throw InputError("write failed: " + path.string());
}

template <typename Scalar>
LanguageMap<Scalar> load_map(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::Reader r(is, path.string());
    r.expect(io::kMapMagic);
    const RunConfig cfg = parse_config(r.string());
    LanguageMap<Scalar> map(cfg);
    map.set_frames_mapped(r.u64());
    Rng map_rng;
    map_rng.set_state(r.string());
    map.set_rng(map_rng);

    Rng oct_rng;
    oct_rng.set_state(r.string());
    using Octree = SparseFeatureOctree<Scalar>;
    std::vector<typename Octree::Level> levels(cfg.octree.levels.size());
    for (auto& lv : levels) {
        const auto nc = r.count();
        lv.corners.reserve(nc);
        for (std::uint64_t i = 0; i < nc; ++i) {
            const VoxelKey k = r.key();
            lv.corners.emplace(k, r.u32());
        }
        const auto nv = r.count();
        lv.voxels.reserve(nv);
        for (std::uint64_t i = 0; i < nv; ++i) {
            const VoxelKey k = r.key();
            typename Octree::VoxelRecord rec;
            for (auto& c : rec.corners) c = r.u32();
            rec.f_index = r.u32();
            lv.voxels.emplace(k, rec);
        }
    }
    std::vector<Scalar> corners(r.count());
    r.floats(corners.data(), corners.size());
    std::vector<Scalar> fvecs(r.count());
    r.floats(fvecs.data(), fvecs.size());
    map.octree().restore(std::move(levels), std::move(corners), std::move(fvecs), oct_rng);

    auto dec = read_decoder<Scalar>(r);
    if (!(dec.config() == cfg.decoder)) r.fail("decoder shape disagrees with config");
    map.decoder() = std::move(dec);
    auto bank = read_bank<Scalar>(r);
    if (bank.feature_dim() != cfg.decoder.output_dim || bank.encoding_dim() != cfg.decoder.input_dim ||
        bank.f_dim() != cfg.decoder.f_dim) {
        r.fail("bank shape disagrees with config");
    }
    map.bank() = std::move(bank);

    const auto dropped = static_cast<std::size_t>(r.u64());
    const auto nrec = r.count();
    std::unordered_map<VoxelKey, FusionRecord<Scalar>, VoxelKeyHash> records;
    records.reserve(nrec);
    for (std::uint64_t i = 0; i < nrec; ++i) {
        const VoxelKey k = r.key();
        FusionRecord<Scalar> rec;
        rec.n = r.u32();
        const auto len = r.u32();
        if (len != 0 && len != static_cast<std::uint32_t>(cfg.decoder.output_dim)) r.fail("fusion record length");
        rec.last_target.resize(len);
        r.floats(rec.last_target.data(), len);
        records.emplace(k, std::move(rec));
    }
    map.fusion().restore(std::move(records), dropped);
    return map;
}

// ---- frame archive ---------------------------------------------------------
// <dir>/intrinsics.txt      fx fy cx cy width height
// <dir>/frame_NNNNN.depth   H*W uint16 millimeters, row-major, 0 = invalid
// <dir>/frame_NNNNN.feat    8 x u32 header (magic, version, H, W, D, dtype,
//                           0, 0) then D*H*W float32, channel-major
// <dir>/frame_NNNNN.pose    12 numbers: R row-major, then t

namespace detail {

inline std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t i, const char* ext) {
    char name[64];
    std::snprintf(name, sizeof name, "frame_%05zu.%s", i, ext);
    return dir / name;
}

}  // namespace detail

inline void write_intrinsics(const std::filesystem::path& dir, const CameraIntrinsics& k) {
    std::ostringstream os;
    os << io::format_double_list({k.fx, k.fy, k.cx, k.cy}) << ' ' << k.width << ' ' << k.height << '\n';
    io::write_text(dir / "intrinsics.txt", os.str());
}

inline CameraIntrinsics read_intrinsics(const std::filesystem::path& dir) {
    std::istringstream is(io::read_text(dir / "intrinsics.txt"));
    CameraIntrinsics k;
    is >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height;
    if (!is) throw InputError("intrinsics.txt: expected fx fy cx cy width height");
    k.validate();
    return k;
}

inline void write_frame(const std::filesystem::path& dir, std::size_t index, const Frame& f) {
    f.validate();
    const auto n = static_cast<std::size_t>(f.width) * f.height;
    {
        auto os = io::open_out(detail::frame_path(dir, index, "depth"));
        io::Writer w(os);
        for (float d : f.depth) {
            const double mm = std::round(static_cast<double>(d) * 1000.0);
            w.put(static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0)));
        }
    }
    {
        auto os = io::open_out(detail::frame_path(dir, index, "feat"));
        io::Writer w(os);
        const auto d = static_cast<std::size_t>(f.features.rows());
        for (std::uint32_t v : {io::kFeatureMagic, io::kVersion, static_cast<std::uint32_t>(f.height),
                                static_cast<std::uint32_t>(f.width), static_cast<std::uint32_t>(d),
                                io::kDtypeFloat32, 0u, 0u}) {
            w.u32(v);
        }
        const Eigen::MatrixXf planes = f.features.transpose();  // (H*W) x D, column = channel
        w.floats(planes.data(), n * d);
    }
    std::ostringstream ps;
    std::vector<double> vals;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) vals.push_back(f.pose.rotation(i, j));
    for (int i = 0; i < 3; ++i) vals.push_back(f.pose.translation(i));
    io::write_text(detail::frame_path(dir, index, "pose"), io::format_double_list(vals) + "\n");
}

inline std::size_t count_frames(const std::filesystem::path& dir) {
    std::size_t n = 0;
    while (std::filesystem::exists(detail::frame_path(dir, n, "feat"))) ++n;
    return n;
}

inline Frame read_frame(const std::filesystem::path& dir, std::size_t index, const CameraIntrinsics& k) {
    Frame f;
    f.width = k.width;
    f.height = k.height;
    const auto n = static_cast<std::size_t>(k.width) * k.height;
    {
        const auto p = detail::frame_path(dir, index, "feat");
        auto is = io::open_in(p);
        io::Reader r(is, p.string());
        r.expect(io::kFeatureMagic);
        const auto h = r.u32();
        const auto w = r.u32();
        const auto d = r.u32();
        const auto dtype = r.u32();
        r.u32();
        r.u32();
        if (h != static_cast<std::uint32_t>(k.height) || w != static_cast<std::uint32_t>(k.width)) {
            r.fail("image size disagrees with intrinsics");
        }
        if (dtype != io::kDtypeFloat32) r.fail("unsupported dtype");
        if (d == 0 || d > (1u << 16)) r.fail("feature dimension out of range");
        Eigen::MatrixXf planes(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
        r.floats(planes.data(), n * d);
        f.features = planes.transpose();
    }
    {
        const auto p = detail::frame_path(dir, index, "depth");
        auto is = io::open_in(p);
        io::Reader r(is, p.string());
        f.depth.resize(n);
        for (auto& d : f.depth) d = static_cast<float>(r.get<std::uint16_t>()) / 1000.0f;
    }
    std::istringstream ps(io::read_text(detail::frame_path(dir, index, "pose")));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) ps >> f.pose.rotation(i, j);
    for (int i = 0; i < 3; ++i) ps >> f.pose.translation(i);
    if (!ps) throw InputError(detail::frame_path(dir, index, "pose").string() + ": expected 12 numbers");
    f.validate();
    return f;
}

// ---- labels and ground truth -----------------------------------------------
// labels: magic, version, C, D, C rows of D float32, then C length-prefixed names.
// ground truth: magic, version, N (u64), then per point x y z (f64), class, object (i32).

inline void save_labels(const std::filesystem::path& path, const Eigen::MatrixXf& embeddings,
                        const std::vector<std::string>& names) {
    if (names.size() != static_cast<std::size_t>(embeddings.cols())) {
        throw std::invalid_argument("save_labels: one name per class required");
    }
    auto os = io::open_out(path);
    io::Writer w(os);
    w.u32(io::kLabelsMagic);
    w.u32(io::kVersion);
    w.u32(static_cast<std::uint32_t>(embeddings.cols()));
    w.u32(static_cast<std::uint32_t>(embeddings.rows()));
    w.floats(embeddings.data(), static_cast<std::size_t>(embeddings.size()));  // column c = row c of the file
    for (const auto& n : names) w.string(n);
}

struct LabelSet {
    Eigen::MatrixXf embeddings;  // D x C
    std::vector<std::string> names;

    int classes() const { return static_cast<int>(embeddings.cols()); }
    int find(const std::string& name) const {
        const auto it = std::find(names.begin(), names.end(), name);
        return it == names.end() ? -1 : static_cast<int>(it - names.begin());
    }
};

inline LabelSet load_labels(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::Reader r(is, path.string());
    r.expect(io::kLabelsMagic);
    const auto c = r.u32();
    const auto d = r.u32();
    if (c == 0 || c > (1u << 20) || d == 0 || d > (1u << 16)) r.fail("label table size out of range");
    LabelSet s;
    s.embeddings.resize(d, c);
    r.floats(s.embeddings.data(), static_cast<std::size_t>(s.embeddings.size()));
    for (std::uint32_t i = 0; i < c; ++i) s.names.push_back(r.string(4096));
    return s;
}

inline void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
    auto os = io::open_out(path);
    io::Writer w(os);
    w.u32(io::kGroundTruthMagic);
    w.u32(io::kVersion);
    w.u64(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        for (int a = 0; a < 3; ++a) w.f64(gt.points[i](a));
        w.i32(gt.class_ids[i]);
        w.i32(gt.object_ids.empty() ? 0 : gt.object_ids[i]);
    }
}

// Embeddings and names are not part of this file; see save_labels.
inline GroundTruth load_ground_truth(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    io::Reader r(is, path.string());
    r.expect(io::kGroundTruthMagic);
    const auto n = r.count(1ull << 30);
    GroundTruth gt;
    gt.points.resize(n);
    gt.class_ids.resize(n);
    gt.object_ids.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) gt.points[i](a) = r.f64();
        gt.class_ids[i] = r.i32();
        gt.object_ids[i] = r.i32();
    }
    return gt;
}

// ---- PLY -------------------------------------------------------------------

struct PlyVertex {
    float x = 0, y = 0, z = 0;
    std::uint8_t r = 0, g = 0, b = 0;
    float confidence = 0;
};

inline std::array<std::uint8_t, 3> palette_color(int class_id) {
    static constexpr std::array<std::array<std::uint8_t, 3>, 20> kPalette{{
        {31, 119, 180},  {255, 127, 14},  {44, 160, 44},   {214, 39, 40},   {148, 103, 189},
        {140, 86, 75},   {227, 119, 194}, {188, 189, 34},  {23, 190, 207},  {174, 199, 232},
        {255, 187, 120}, {152, 223, 138}, {255, 152, 150}, {197, 176, 213}, {196, 156, 148},
        {247, 182, 210}, {219, 219, 141}, {158, 218, 229}, {57, 59, 121},   {99, 121, 57},
    }};
    if (class_id < 0) return {127, 127, 127};
    return kPalette[static_cast<std::size_t>(class_id) % kPalette.size()];
}

inline void write_ply(const std::filesystem::path& path, const std::vector<PlyVertex>& verts) {
    auto os = io::open_out(path);
    os << "ply\nformat binary_little_endian 1.0\ncomment lilmap language map\n"
       << "element vertex " << verts.size() << '\n'
       << "property float x\nproperty float y\nproperty float z\n"
       << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
       << "property float confidence\nend_header\n";
    io::Writer w(os);
    for (const auto& v : verts) {
        w.put(v.x);
        w.put(v.y);
        w.put(v.z);
        w.put(v.r);
        w.put(v.g);
        w.put(v.b);
        w.put(v.confidence);
    }
    if (!os) throw InputError("write failed: " + path.string());
}

// Reads binary little-endian PLY vertices. Properties other than x y z,
// red green blue and confidence are skipped; other elements must follow the
// vertex element.
inline std::vector<PlyVertex> read_ply(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    std::string line;
    std::getline(is, line);
    if (line != "ply") throw InputError(path.string() + ": not a PLY file");
    struct Prop {
        std::string type, name;
    };
    std::vector<Prop> props;
    std::size_t count = 0;
    bool in_vertex = false, seen_vertex = false, binary_le = false;
    while (std::getline(is, line)) {
        if (line == "end_header") break;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (tok == "element") {
            std::string name;
            ls >> name;
            in_vertex = name == "vertex";
            if (in_vertex) {
                if (seen_vertex) throw InputError(path.string() + ": duplicate vertex element");
                ls >> count;
                seen_vertex = true;
            }
        } else if (tok == "property" && in_vertex) {
            Prop p;
            ls >> p.type;
            if (p.type == "list") throw InputError(path.string() + ": list properties on vertices unsupported");
            ls >> p.name;
            props.push_back(p);
        }
    }
    if (!binary_le) throw InputError(path.string() + ": only binary_little_endian PLY is supported");
    io::Reader r(is, path.string());
    std::vector<PlyVertex> out(count);
    for (auto& v : out) {
        for (const auto& p : props) {
            double val = 0.0;
            if (p.type == "float" || p.type == "float32") val = r.get<float>();
            else if (p.type == "double" || p.type == "float64") val = r.get<double>();
            else if (p.type == "uchar" || p.type == "uint8") val = r.get<std::uint8_t>();
            else if (p.type == "char" || p.type == "int8") val = r.get<std::int8_t>();
            else if (p.type == "ushort" || p.type == "uint16") val = r.get<std::uint16_t>();
            else if (p.type == "short" || p.type == "int16") val = r.get<std::int16_t>();
            else if (p.type == "uint" || p.type == "uint32") val = r.get<std::uint32_t>();
            else if (p.type == "int" || p.type == "int32") val = r.get<std::int32_t>();
            else throw InputError(path.string() + ": unknown property type " + p.type);
            if (p.name == "x") v.x = static_cast<float>(val);
            else if (p.name == "y") v.y = static_cast<float>(val);
            else if (p.name == "z") v.z = static_cast<float>(val);
            else if (p.name == "red") v.r = static_cast<std::uint8_t>(val);
            else if (p.name == "green") v.g = static_cast<std::uint8_t>(val);
            else if (p.name == "blue") v.b = static_cast<std::uint8_t>(val);
            else if (p.name == "confidence") v.confidence = static_cast<float>(val);
        }
    }
    return out;
}

// ---- points ----------------------------------------------------------------

// One "x y z" per line; blank lines and '#' comments ignored.
inline std::vector<Vec3> parse_points(const std::string& text) {
    std::vector<Vec3> pts;
    std::istringstream is(text);
    std::string line;
    std::size_t ln = 0;
    while (std::getline(is, line)) {
        ++ln;
        if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        Vec3 p;
        std::string extra;
        if (!(ls >> p.x() >> p.y() >> p.z()) || (ls >> extra)) {
            throw InputError("points line " + std::to_string(ln) + ": expected x y z");
        }
        pts.push_back(p);
    }
    return pts;
}

}  // namespace lilmap
