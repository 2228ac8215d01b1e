#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lilmap/common.hpp"
#include "lilmap/pipeline.hpp"

namespace lilmap {

// Every tunable of a run, as one flat key = value file.
using RunConfig = MapConfig;

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InputError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

inline long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw InputError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw InputError("config: '" + key + "' expects true|false, got '" + v + "'");
}

inline std::vector<int> parse_levels(const std::string& v) {
    std::vector<int> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) out.push_back(static_cast<int>(parse_int("levels", trim(item))));
    if (out.empty()) throw InputError("config: 'levels' is empty");
    return out;
}

inline std::string join_levels(const std::vector<int>& levels) {
    std::string s;
    for (std::size_t i = 0; i < levels.size(); ++i) s += (i ? "," : "") + std::to_string(levels[i]);
    return s;
}

}  // namespace detail

// Applies one setting. L and m set both the octree and decoder sides so the
// two cannot drift apart.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
    using namespace detail;
    if (key == "tau") c.adaptive.tau = parse_double(key, value);
    else if (key == "n_opt") c.adaptive.n_opt = static_cast<int>(parse_int(key, value));
    else if (key == "lr") c.adaptive.adam.lr = parse_double(key, value);
    else if (key == "beta1") c.adaptive.adam.beta1 = parse_double(key, value);
    else if (key == "beta2") c.adaptive.adam.beta2 = parse_double(key, value);
    else if (key == "eps") c.adaptive.adam.eps = parse_double(key, value);
    else if (key == "f_regularization") c.adaptive.f_regularization = parse_bool(key, value);
    else if (key == "encoding_init_range") c.adaptive.encoding_init_range = parse_double(key, value);
    else if (key == "f_init_range") c.adaptive.f_init_range = parse_double(key, value);
    else if (key == "levels") c.octree.levels = parse_levels(value);
    else if (key == "fine_res") c.octree.fine_resolution = parse_double(key, value);
    else if (key == "m") c.octree.corner_feature_dim = c.decoder.input_dim = static_cast<int>(parse_int(key, value));
    else if (key == "L") c.octree.f_vector_dim = c.decoder.f_dim = static_cast<int>(parse_int(key, value));
    else if (key == "dim") c.decoder.output_dim = static_cast<int>(parse_int(key, value));
    else if (key == "hidden") c.decoder.hidden_dim = static_cast<int>(parse_int(key, value));
    else if (key == "activation") {
        if (value == "relu") c.decoder.activation = Activation::relu;
        else if (value == "tanh") c.decoder.activation = Activation::tanh;
        else throw InputError("config: activation must be relu|tanh");
    } else if (key == "map_iters") c.mapping.map_iters = static_cast<int>(parse_int(key, value));
    else if (key == "batch") c.mapping.batch_size = static_cast<int>(parse_int(key, value));
    else if (key == "fusion") c.mapping.fusion = parse_fusion_mode(value);
    else if (key == "invert_alpha") c.mapping.invert_alpha = parse_bool(key, value);
    else if (key == "warm_start") c.mapping.warm_start = parse_bool(key, value);
    else if (key == "seed") c.mapping.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else throw InputError("config: unknown key '" + key + "'");
}

inline std::string serialize_config(const RunConfig& c) {
    using detail::format_double;
    std::ostringstream os;
    auto b = [](bool v) { return v ? "true" : "false"; };
    os << "tau = " << format_double(c.adaptive.tau) << '\n'
       << "n_opt = " << c.adaptive.n_opt << '\n'
       << "lr = " << format_double(c.adaptive.adam.lr) << '\n'
       << "beta1 = " << format_double(c.adaptive.adam.beta1) << '\n'
       << "beta2 = " << format_double(c.adaptive.adam.beta2) << '\n'
       << "eps = " << format_double(c.adaptive.adam.eps) << '\n'
       << "f_regularization = " << b(c.adaptive.f_regularization) << '\n'
       << "encoding_init_range = " << format_double(c.adaptive.encoding_init_range) << '\n'
       << "f_init_range = " << format_double(c.adaptive.f_init_range) << '\n'
       << "levels = " << detail::join_levels(c.octree.levels) << '\n'
       << "fine_res = " << format_double(c.octree.fine_resolution) << '\n'
       << "m = " << c.octree.corner_feature_dim << '\n'
       << "L = " << c.octree.f_vector_dim << '\n'
       << "dim = " << c.decoder.output_dim << '\n'
       << "hidden = " << c.decoder.hidden_dim << '\n'
       << "activation = " << (c.decoder.activation == Activation::relu ? "relu" : "tanh") << '\n'
       << "map_iters = " << c.mapping.map_iters << '\n'
       << "batch = " << c.mapping.batch_size << '\n'
       << "fusion = " << to_string(c.mapping.fusion) << '\n'
       << "invert_alpha = " << b(c.mapping.invert_alpha) << '\n'
       << "warm_start = " << b(c.mapping.warm_start) << '\n'
       << "seed = " << c.mapping.seed << '\n';
    return os.str();
}

// Starts from `base` and applies every `key = value` line; '#' comments.
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
    std::istringstream is{std::string(text)};
    std::string line;
    std::size_t ln = 0;
    while (std::getline(is, line)) {
        ++ln;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw InputError("config line " + std::to_string(ln) + ": expected key = value");
        try {
            apply_setting(base, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
        } catch (const InputError& e) {
            throw InputError("config line " + std::to_string(ln) + ": " + e.what());
        }
    }
    base.validate();
    return base;
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t config_hash(const RunConfig& c) { return fnv1a(serialize_config(c)); }

}  // namespace lilmap
