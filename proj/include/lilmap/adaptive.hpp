#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lilmap/common.hpp"
#include "lilmap/neural.hpp"
#include "lilmap/rng.hpp"

namespace lilmap {

struct AdaptiveConfig {
    // Cosine-distance tolerance: two features are the same iff 1 - cos < tau.
    double tau = 0.02;
    int n_opt = 100;
    AdamConfig adam{};
    // Pull new F vectors towards existing ones through a shuffled cosine loss.
    bool f_regularization = true;
    // Fresh encodings are uniform in [-r, r]^m.
    double encoding_init_range = 1.0;
    // F initialization when the bank is empty, uniform in [-r, r]^L.
    double f_init_range = 1.0;
};

// Known unique features with their learnable decoder inputs. Column i of the
// three matrices belongs to the same entry.
template <typename Scalar>
struct FeatureBank {
    MatrixX<Scalar> features;   // D x K, unit norm
    MatrixX<Scalar> encodings;  // m x K
    MatrixX<Scalar> f_vectors;  // L x K

    FeatureBank() = default;
    FeatureBank(int d, int m, int l) : features(d, 0), encodings(m, 0), f_vectors(l, 0) {}

    std::size_t size() const { return static_cast<std::size_t>(features.cols()); }
    bool empty() const { return size() == 0; }
    int feature_dim() const { return static_cast<int>(features.rows()); }
    int encoding_dim() const { return static_cast<int>(encodings.rows()); }
    int f_dim() const { return static_cast<int>(f_vectors.rows()); }

    VectorX<Scalar> mean_f() const {
        if (empty()) throw std::logic_error("FeatureBank::mean_f on empty bank");
        return f_vectors.rowwise().mean();
    }

    bool operator==(const FeatureBank& o) const {
        auto same = [](const auto& a, const auto& b) {
            return a.rows() == b.rows() && a.cols() == b.cols() &&
                   std::equal(a.data(), a.data() + a.size(), b.data());
        };
        return same(features, o.features) && same(encodings, o.encodings) && same(f_vectors, o.f_vectors);
    }
};

inline bool is_distinct(double cosine, double tau) { return 1.0 - cosine >= tau; }

namespace detail {

template <typename Scalar>
MatrixX<Scalar> normalized_columns(const MatrixX<Scalar>& m) {
    MatrixX<Scalar> out = m;
    for (Eigen::Index i = 0; i < out.cols(); ++i) {
        const Scalar n = out.col(i).norm();
        if (static_cast<double>(n) >= kNormFloor) out.col(i) /= n;
        else out.col(i).setZero();
    }
    return out;
}

}  // namespace detail

// Greedy first-seen dedup: a column is admitted iff it is distinct from every
// column admitted before it. Zero columns are dropped.
template <typename Scalar>
MatrixX<Scalar> unique_features(const MatrixX<Scalar>& features, double tau) {
    const MatrixX<Scalar> unit = detail::normalized_columns(features);
    MatrixX<Scalar> kept(unit.rows(), std::min<Eigen::Index>(unit.cols(), 16));
    Eigen::Index count = 0;
    Eigen::Index last_hit = -1;
    for (Eigen::Index i = 0; i < unit.cols(); ++i) {
        const auto v = unit.col(i);
        if (static_cast<double>(v.squaredNorm()) == 0.0) continue;
        // consecutive pixels usually repeat the previous match
        if (last_hit >= 0 && !is_distinct(static_cast<double>(kept.col(last_hit).dot(v)), tau)) continue;
        bool fresh = true;
        for (Eigen::Index j = 0; j < count; ++j) {
            if (!is_distinct(static_cast<double>(kept.col(j).dot(v)), tau)) {
                fresh = false;
                last_hit = j;
                break;
            }
        }
        if (!fresh) continue;
        if (count == kept.cols()) kept.conservativeResize(Eigen::NoChange, std::max<Eigen::Index>(1, 2 * count));
        kept.col(count) = v;
        last_hit = count;
        ++count;
    }
    return kept.leftCols(count);
}

// Candidates distinct from every known feature.
template <typename Scalar>
MatrixX<Scalar> unknown_features(const MatrixX<Scalar>& candidates, const MatrixX<Scalar>& known, double tau) {
    const MatrixX<Scalar> unit = detail::normalized_columns(candidates);
    MatrixX<Scalar> out(unit.rows(), unit.cols());
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < unit.cols(); ++i) {
        bool fresh = static_cast<double>(unit.col(i).squaredNorm()) > 0.0;
        for (Eigen::Index j = 0; fresh && j < known.cols(); ++j) {
            if (!is_distinct(cosine_similarity(known.col(j), unit.col(i)), tau)) fresh = false;
        }
        if (fresh) out.col(count++) = unit.col(i);
    }
    return out.leftCols(count);
}

// Index of the most similar bank entry within tau; ties go to the lowest index.
template <typename Scalar, typename Derived>
std::optional<std::size_t> nearest_entry(const FeatureBank<Scalar>& bank, const Eigen::MatrixBase<Derived>& feature,
                                         double tau) {
    std::optional<std::size_t> best;
    double best_cos = -2.0;
    for (Eigen::Index j = 0; j < bank.features.cols(); ++j) {
        const double c = cosine_similarity(bank.features.col(j), feature);
        if (!is_distinct(c, tau) && c > best_cos) {
            best_cos = c;
            best = static_cast<std::size_t>(j);
        }
    }
    return best;
}

template <typename Scalar>
struct BankSeed {
    std::size_t index = 0;
    VectorX<Scalar> encoding;
    VectorX<Scalar> f_vector;
};

template <typename Scalar, typename Derived>
std::optional<BankSeed<Scalar>> seed_encoding_for(const FeatureBank<Scalar>& bank,
                                                  const Eigen::MatrixBase<Derived>& feature, double tau) {
    const auto idx = nearest_entry(bank, feature, tau);
    if (!idx) return std::nullopt;
    const auto j = static_cast<Eigen::Index>(*idx);
    return BankSeed<Scalar>{*idx, bank.encodings.col(j), bank.f_vectors.col(j)};
}

struct AdaptiveReport {
    std::size_t input_features = 0;
    std::size_t unique_features = 0;
    std::size_t new_features = 0;
    std::size_t bank_size = 0;
    int iterations = 0;
    std::vector<double> loss_curve;
    // Cosine between each bank feature and its reconstruction after the call.
    std::vector<double> fit_cosine;
    double seconds = 0.0;
};

// One evaluation of the decoder-extension objective: reconstruction of every
// bank target from its encoding and F vector, plus, when `perm` is non-empty,
// the F regularizer pulling each F towards the perm-shuffled one. Any of the
// gradient outputs may be null.
template <typename Scalar>
double adaptive_loss(const LanguageDecoder<Scalar>& decoder, const MatrixX<Scalar>& targets,
                     const MatrixX<Scalar>& encodings, const MatrixX<Scalar>& f_vectors,
                     std::span<const std::uint32_t> perm, MatrixX<Scalar>* d_e, MatrixX<Scalar>* d_f,
                     DecoderParams<Scalar>* d_params) {
    const Eigen::Index k = targets.cols();
    if (!perm.empty() && perm.size() != static_cast<std::size_t>(k)) {
        throw std::invalid_argument("adaptive_loss: permutation length");
    }
    const auto cache = decoder.forward(encodings, f_vectors);
    MatrixX<Scalar> d_out;
    double loss = cosine_loss<Scalar>(targets, cache.out, nullptr, &d_out);
    const bool want_inputs = d_e || d_f;
    DecoderInputGrads<Scalar> ig;
    if (want_inputs || d_params) ig = decoder.backward(cache, d_out, d_params);
    if (!perm.empty()) {
        MatrixX<Scalar> shuffled(f_vectors.rows(), k), g_shuffled, g_target;
        for (Eigen::Index j = 0; j < k; ++j) shuffled.col(j) = f_vectors.col(perm[j]);
        loss += cosine_loss<Scalar>(shuffled, f_vectors, want_inputs ? &g_shuffled : nullptr,
                                    want_inputs ? &g_target : nullptr);
        if (want_inputs) {
            ig.d_f += g_target;
            for (Eigen::Index j = 0; j < k; ++j) ig.d_f.col(perm[j]) += g_shuffled.col(j);
        }
    }
    if (d_e) *d_e = std::move(ig.d_e);
    if (d_f) *d_f = std::move(ig.d_f);
    return loss;
}

// Adaptive decoder optimization. Only the decoder and the parameters of newly
// admitted features are optimized; known entries are replayed unchanged so the
// decoder keeps representing them. Returns without touching anything when the
// frame carries no unknown feature.
template <typename Scalar>
AdaptiveReport optimize(FeatureBank<Scalar>& bank, LanguageDecoder<Scalar>& decoder,
                        const MatrixX<Scalar>& frame_features, const AdaptiveConfig& config, Rng& rng) {
    using Matrix = MatrixX<Scalar>;
    const auto t0 = std::chrono::steady_clock::now();
    const DecoderConfig& dc = decoder.config();
    if (bank.feature_dim() != dc.output_dim || bank.encoding_dim() != dc.input_dim || bank.f_dim() != dc.f_dim) {
        throw std::invalid_argument("adaptive optimize: bank and decoder dimensions disagree");
    }
    if (frame_features.cols() > 0 && frame_features.rows() != dc.output_dim) {
        throw std::invalid_argument("adaptive optimize: feature dimension mismatch");
    }

    AdaptiveReport report;
    report.input_features = static_cast<std::size_t>(frame_features.cols());
    const Matrix uniq = unique_features(frame_features, config.tau);
    report.unique_features = static_cast<std::size_t>(uniq.cols());
    const Matrix fresh = unknown_features(uniq, bank.features, config.tau);
    report.new_features = static_cast<std::size_t>(fresh.cols());
    report.bank_size = bank.size();
    if (fresh.cols() == 0) {
        report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return report;
    }

    const Eigen::Index k_old = bank.features.cols();
    const Eigen::Index k_new = fresh.cols();
    const Eigen::Index k_all = k_old + k_new;
    const int m = dc.input_dim;
    const int l = dc.f_dim;

    Matrix all_e(m, k_all);
    Matrix all_f(l, k_all);
    Matrix all_t(dc.output_dim, k_all);
    all_e.leftCols(k_old) = bank.encodings;
    all_f.leftCols(k_old) = bank.f_vectors;
    all_t.leftCols(k_old) = bank.features;
    all_t.rightCols(k_new) = fresh;
    for (Eigen::Index j = k_old; j < k_all; ++j) {
        for (int i = 0; i < m; ++i) {
            all_e(i, j) = static_cast<Scalar>(rng.uniform(-config.encoding_init_range, config.encoding_init_range));
        }
    }
    VectorX<Scalar> f0(l);
    if (bank.empty()) {
        for (int i = 0; i < l; ++i) f0(i) = static_cast<Scalar>(rng.uniform(-config.f_init_range, config.f_init_range));
    } else {
        f0 = bank.mean_f();
    }
    for (Eigen::Index j = k_old; j < k_all; ++j) all_f.col(j) = f0;

    const DecoderParams<Scalar> snapshot = decoder.params();
    auto rollback = [&](const char* what) {
        decoder.set_params(snapshot);
        throw NumericalError(what);
    };

    Adam<Scalar> adam(config.adam);
    DecoderParams<Scalar> pgrad = DecoderParams<Scalar>::zeros(dc);
    Matrix d_e, d_f;
    const std::size_t new_e_offset = static_cast<std::size_t>(k_old) * m;
    const std::size_t new_f_offset = static_cast<std::size_t>(k_old) * l;
    const std::size_t new_e_size = static_cast<std::size_t>(k_new) * m;
    const std::size_t new_f_size = static_cast<std::size_t>(k_new) * l;

    std::vector<std::uint32_t> perm;
    for (int it = 0; it < config.n_opt; ++it) {
        if (config.f_regularization) perm = rng.permutation(static_cast<std::size_t>(k_all));
        const double loss = adaptive_loss<Scalar>(decoder, all_t, all_e, all_f, perm, &d_e, &d_f, &pgrad);
        if (!std::isfinite(loss)) rollback("adaptive optimize: non-finite loss");
        report.loss_curve.push_back(loss);

        std::vector<ParamBlock<Scalar>> blocks;
        blocks.reserve(8);
        blocks.push_back({std::span<Scalar>(all_e.data() + new_e_offset, new_e_size),
                          std::span<const Scalar>(d_e.data() + new_e_offset, new_e_size)});
        blocks.push_back({std::span<Scalar>(all_f.data() + new_f_offset, new_f_size),
                          std::span<const Scalar>(d_f.data() + new_f_offset, new_f_size)});
        std::vector<std::span<const Scalar>> grad_spans;
        pgrad.for_each_block([&](std::span<const Scalar> s) { grad_spans.push_back(s); });
        std::size_t gi = 0;
        auto& params = decoder.mutable_params();
        params.for_each_block([&](std::span<Scalar> s) { blocks.push_back({s, grad_spans[gi++]}); });
        adam.step(std::span<const ParamBlock<Scalar>>(blocks));
        if (!params.all_finite() || !all_e.allFinite() || !all_f.allFinite()) {
            rollback("adaptive optimize: parameters diverged");
        }
        ++report.iterations;
    }

    const Matrix recon = decoder.predict(all_e, all_f);
    for (Eigen::Index j = 0; j < k_all; ++j) report.fit_cosine.push_back(cosine_similarity(all_t.col(j), recon.col(j)));

    bank.features = std::move(all_t);
    bank.encodings = std::move(all_e);
    bank.f_vectors = std::move(all_f);
    report.bank_size = bank.size();
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

}  // namespace lilmap
