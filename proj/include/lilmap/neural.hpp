#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "lilmap/common.hpp"
#include "lilmap/rng.hpp"

namespace lilmap {

enum class Activation { relu, tanh };

namespace detail {
// cond > 0 ? v : 0 without a branch; relu masks are random enough to defeat the predictor
template <typename Scalar>
inline Scalar keep_if_positive(Scalar cond, Scalar v) {
    using Bits = std::conditional_t<sizeof(Scalar) == 4, std::uint32_t, std::uint64_t>;
    const Bits mask = Bits(0) - Bits(cond > Scalar(0));
    return std::bit_cast<Scalar>(std::bit_cast<Bits>(v) & mask);
}
}  // namespace detail

struct DecoderConfig {
    int input_dim = 16;    // m
    int hidden_dim = 128;  // h
    int f_dim = 512;       // L
    int output_dim = 512;  // D
    Activation activation = Activation::relu;

    void validate() const {
        if (input_dim <= 0 || hidden_dim <= 0 || f_dim <= 0 || output_dim <= 0) {
            throw std::invalid_argument("DecoderConfig: all dimensions must be positive");
        }
    }
    bool operator==(const DecoderConfig&) const = default;
};

template <typename Scalar>
struct DecoderParams {
    MatrixX<Scalar> w1;  // h x m
    VectorX<Scalar> b1;  // h
    MatrixX<Scalar> w2;  // L x h
    VectorX<Scalar> b2;  // L
    MatrixX<Scalar> w3;  // D x L
    VectorX<Scalar> b3;  // D

    static DecoderParams zeros(const DecoderConfig& c) {
        DecoderParams p;
        p.w1 = MatrixX<Scalar>::Zero(c.hidden_dim, c.input_dim);
        p.b1 = VectorX<Scalar>::Zero(c.hidden_dim);
        p.w2 = MatrixX<Scalar>::Zero(c.f_dim, c.hidden_dim);
        p.b2 = VectorX<Scalar>::Zero(c.f_dim);
        p.w3 = MatrixX<Scalar>::Zero(c.output_dim, c.f_dim);
        p.b3 = VectorX<Scalar>::Zero(c.output_dim);
        return p;
    }

    // Fixed block order: w1, b1, w2, b2, w3, b3. Checkpoints and the optimizer
    // both rely on it.
    template <typename Fn>
    void for_each_block(Fn&& fn) {
        fn(std::span<Scalar>(w1.data(), w1.size()));
        fn(std::span<Scalar>(b1.data(), b1.size()));
        fn(std::span<Scalar>(w2.data(), w2.size()));
        fn(std::span<Scalar>(b2.data(), b2.size()));
        fn(std::span<Scalar>(w3.data(), w3.size()));
        fn(std::span<Scalar>(b3.data(), b3.size()));
    }
    template <typename Fn>
    void for_each_block(Fn&& fn) const {
        fn(std::span<const Scalar>(w1.data(), w1.size()));
        fn(std::span<const Scalar>(b1.data(), b1.size()));
        fn(std::span<const Scalar>(w2.data(), w2.size()));
        fn(std::span<const Scalar>(b2.data(), b2.size()));
        fn(std::span<const Scalar>(w3.data(), w3.size()));
        fn(std::span<const Scalar>(b3.data(), b3.size()));
    }

    bool all_finite() const {
        return w1.allFinite() && b1.allFinite() && w2.allFinite() && b2.allFinite() && w3.allFinite() &&
               b3.allFinite();
    }

    // Bit-level equality (NaN-safe shapes aside, values compared exactly).
    bool operator==(const DecoderParams& o) const {
        auto same = [](const auto& a, const auto& b) {
            return a.rows() == b.rows() && a.cols() == b.cols() &&
                   std::equal(a.data(), a.data() + a.size(), b.data());
        };
        return same(w1, o.w1) && same(b1, o.b1) && same(w2, o.w2) && same(b2, o.b2) && same(w3, o.w3) &&
               same(b3, o.b3);
    }
};

template <typename Scalar>
struct DecoderCache {
    MatrixX<Scalar> e;     // m x N
    MatrixX<Scalar> f;     // L x N
    MatrixX<Scalar> pre1;  // h x N
    MatrixX<Scalar> h1;    // h x N
    MatrixX<Scalar> pre2;  // L x N
    MatrixX<Scalar> s;     // L x N, element-wise scale applied to F
    MatrixX<Scalar> z;     // L x N, s ⊙ F
    MatrixX<Scalar> out;   // D x N
    std::uint64_t version = 0;
};

// Backward temporaries, kept between calls so repeated steps do not allocate.
template <typename Scalar>
struct DecoderScratch {
    MatrixX<Scalar> d_z;
    MatrixX<Scalar> d_pre2;
    MatrixX<Scalar> d_h1;
    MatrixX<Scalar> d_pre1;
};

template <typename Scalar>
struct DecoderInputGrads {
    MatrixX<Scalar> d_e;  // m x N
    MatrixX<Scalar> d_f;  // L x N
};

// Three fully connected layers. The first two map the point encoding to a
// scaling vector s; the last consumes s ⊙ F:
//   out = W3 (s ⊙ F) + b3,  s = act(W2 act(W1 e + b1) + b2)
template <typename Scalar>
class LanguageDecoder {
public:
    using Matrix = MatrixX<Scalar>;
    using Vector = VectorX<Scalar>;

    explicit LanguageDecoder(DecoderConfig config = {}) : config_(config) {
        config_.validate();
        params_ = DecoderParams<Scalar>::zeros(config_);
    }

    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    LanguageDecoder(DecoderConfig config, std::uint64_t seed) : LanguageDecoder(config) {
        Rng rng(seed);
        auto fill = [&rng](auto& m, int fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
        };
        fill(params_.w1, config_.input_dim);
        fill(params_.b1, config_.input_dim);
        fill(params_.w2, config_.hidden_dim);
        fill(params_.b2, config_.hidden_dim);
        fill(params_.w3, config_.f_dim);
        fill(params_.b3, config_.f_dim);
    }

    const DecoderConfig& config() const { return config_; }
    const DecoderParams<Scalar>& params() const { return params_; }

    // Any mutable access invalidates outstanding caches.
    DecoderParams<Scalar>& mutable_params() {
        ++version_;
        return params_;
    }
    void set_params(DecoderParams<Scalar> p) {
        check_shapes(p);
        params_ = std::move(p);
        ++version_;
    }
    std::uint64_t version() const { return version_; }

    DecoderCache<Scalar> forward(const Matrix& e, const Matrix& f) const {
        DecoderCache<Scalar> c;
        c.e = e;
        c.f = f;
        forward_inplace(c);
        return c;
    }

    // Forward pass on c.e and c.f, reusing the cache's storage.
    void forward_inplace(DecoderCache<Scalar>& c) const {
        check_inputs(c.e, c.f);
        c.version = version_;
        const auto n = c.e.cols();
        c.pre1.resize(config_.hidden_dim, n);
        c.pre1.noalias() = params_.w1 * c.e;
        c.pre1.colwise() += params_.b1;
        activate(c.pre1, c.h1);
        c.pre2.resize(config_.f_dim, n);
        c.pre2.noalias() = params_.w2 * c.h1;
        c.pre2.colwise() += params_.b2;
        activate(c.pre2, c.s);
        c.z = c.s.cwiseProduct(c.f);
        c.out.resize(config_.output_dim, n);
        c.out.noalias() = params_.w3 * c.z;
        c.out.colwise() += params_.b3;
    }

    Matrix predict(const Matrix& e, const Matrix& f) const { return forward(e, f).out; }

    // Reverse-mode gradients. Parameter gradients are written to `param_grads`
    // when non-null (overwritten, not accumulated).
    DecoderInputGrads<Scalar> backward(const DecoderCache<Scalar>& c, const Matrix& d_out,
                                       DecoderParams<Scalar>* param_grads = nullptr) const {
        DecoderScratch<Scalar> scratch;
        DecoderInputGrads<Scalar> g;
        backward_into(c, d_out, g, param_grads, scratch);
        return g;
    }

    void backward_into(const DecoderCache<Scalar>& c, const Matrix& d_out, DecoderInputGrads<Scalar>& g,
                       DecoderParams<Scalar>* param_grads, DecoderScratch<Scalar>& w) const {
        if (c.version != version_) throw std::logic_error("decoder backward: stale cache");
        if (d_out.rows() != config_.output_dim || d_out.cols() != c.out.cols()) {
            throw std::invalid_argument("decoder backward: upstream gradient shape mismatch");
        }
        const auto n = d_out.cols();
        w.d_z.resize(config_.f_dim, n);
        w.d_z.noalias() = params_.w3.transpose() * d_out;
        g.d_f.resize(config_.f_dim, n);
        w.d_pre2.resize(config_.f_dim, n);
        {
            const Scalar* dz = w.d_z.data();
            const Scalar* s = c.s.data();
            const Scalar* f = c.f.data();
            const Scalar* pre = c.pre2.data();
            Scalar* df = g.d_f.data();
            Scalar* dp = w.d_pre2.data();
            const Eigen::Index total = w.d_z.size();
            if (config_.activation == Activation::relu) {
                for (Eigen::Index i = 0; i < total; ++i) {
                    df[i] = dz[i] * s[i];
                    dp[i] = detail::keep_if_positive(pre[i], dz[i] * f[i]);
                }
            } else {
                for (Eigen::Index i = 0; i < total; ++i) {
                    df[i] = dz[i] * s[i];
                    dp[i] = (Scalar(1) - s[i] * s[i]) * dz[i] * f[i];
                }
            }
        }
        w.d_h1.resize(config_.hidden_dim, n);
        w.d_h1.noalias() = params_.w2.transpose() * w.d_pre2;
        w.d_pre1.resize(config_.hidden_dim, n);
        {
            const Scalar* dh = w.d_h1.data();
            Scalar* dp = w.d_pre1.data();
            const Eigen::Index total = w.d_h1.size();
            if (config_.activation == Activation::relu) {
                const Scalar* pre = c.pre1.data();
                for (Eigen::Index i = 0; i < total; ++i) dp[i] = detail::keep_if_positive(pre[i], dh[i]);
            } else {
                const Scalar* h = c.h1.data();
                for (Eigen::Index i = 0; i < total; ++i) dp[i] = (Scalar(1) - h[i] * h[i]) * dh[i];
            }
        }
        g.d_e.resize(config_.input_dim, n);
        g.d_e.noalias() = params_.w1.transpose() * w.d_pre1;
        if (param_grads) {
            param_grads->w3.noalias() = d_out * c.z.transpose();
            param_grads->b3 = d_out.rowwise().sum();
            param_grads->w2.noalias() = w.d_pre2 * c.h1.transpose();
            param_grads->b2 = w.d_pre2.rowwise().sum();
            param_grads->w1.noalias() = w.d_pre1 * c.e.transpose();
            param_grads->b1 = w.d_pre1.rowwise().sum();
        }
    }

private:
    void activate(const Matrix& x, Matrix& y) const {
        switch (config_.activation) {
            case Activation::relu: y = x.cwiseMax(Scalar(0)); return;
            case Activation::tanh: y = x.array().tanh().matrix(); return;
        }
    }

    void check_inputs(const Matrix& e, const Matrix& f) const {
        if (e.rows() != config_.input_dim || f.rows() != config_.f_dim || e.cols() != f.cols()) {
            throw std::invalid_argument("decoder forward: input dimension mismatch");
        }
    }

    void check_shapes(const DecoderParams<Scalar>& p) const {
        const auto ref = DecoderParams<Scalar>::zeros(config_);
        auto same = [](const auto& a, const auto& b) { return a.rows() == b.rows() && a.cols() == b.cols(); };
        if (!same(p.w1, ref.w1) || !same(p.b1, ref.b1) || !same(p.w2, ref.w2) || !same(p.b2, ref.b2) ||
            !same(p.w3, ref.w3) || !same(p.b3, ref.b3)) {
            throw std::invalid_argument("decoder parameters do not match config");
        }
    }

    DecoderConfig config_;
    DecoderParams<Scalar> params_;
    std::uint64_t version_ = 0;
};

inline constexpr double kNormFloor = 1e-12;

// a·b / (|a||b|); 0 when either norm is below 1e-12.
template <typename DerivedA, typename DerivedB>
double cosine_similarity(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
    const double na = static_cast<double>(a.norm());
    const double nb = static_cast<double>(b.norm());
    if (na < kNormFloor || nb < kNormFloor) return 0.0;
    return static_cast<double>(a.dot(b)) / (na * nb);
}

// Mean negative cosine similarity between matching columns:
//   loss = -(1/N) sum_i cos(a_i, b_i)
// with optional gradients with respect to either side.
template <typename Scalar>
double cosine_loss(const MatrixX<Scalar>& a, const MatrixX<Scalar>& b, MatrixX<Scalar>* grad_a,
                   MatrixX<Scalar>* grad_b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("cosine_loss: shape mismatch");
    const Eigen::Index n = a.cols();
    if (n == 0) throw std::invalid_argument("cosine_loss: empty batch");
    if (grad_a) grad_a->setZero(a.rows(), n);
    if (grad_b) grad_b->setZero(b.rows(), n);
    const double inv_n = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto ai = a.col(i);
        const auto bi = b.col(i);
        const double na = static_cast<double>(ai.norm());
        const double nb = static_cast<double>(bi.norm());
        if (na < kNormFloor || nb < kNormFloor) continue;
        const double cos = static_cast<double>(ai.dot(bi)) / (na * nb);
        total += cos;
        // d cos / d b = a/(|a||b|) - cos * b/|b|^2, scaled by -1/N
        if (grad_b) {
            grad_b->col(i) = (static_cast<Scalar>(-inv_n / (na * nb)) * ai) +
                             (static_cast<Scalar>(inv_n * cos / (nb * nb)) * bi);
        }
        if (grad_a) {
            grad_a->col(i) = (static_cast<Scalar>(-inv_n / (na * nb)) * bi) +
                             (static_cast<Scalar>(inv_n * cos / (na * na)) * ai);
        }
    }
    return -total * inv_n;
}

// Mapping loss: targets are fixed, gradient only with respect to predictions.
template <typename Scalar>
double vl_loss(const MatrixX<Scalar>& targets, const MatrixX<Scalar>& predictions,
               MatrixX<Scalar>* grad_predictions = nullptr) {
    return cosine_loss<Scalar>(targets, predictions, nullptr, grad_predictions);
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename Scalar>
struct ParamBlock {
    std::span<Scalar> value;
    std::span<const Scalar> grad;
};

// Bias-corrected Adam over a fixed list of parameter blocks. Block sizes are
// fixed by the first step. A block whose gradient contains a non-finite value
// is left untouched for that step and counted.
template <typename Scalar>
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    void step(std::span<const ParamBlock<Scalar>> blocks) {
        if (first_.empty()) {
            for (const auto& b : blocks) {
                first_.emplace_back(b.value.size(), Scalar(0));
                second_.emplace_back(b.value.size(), Scalar(0));
            }
        }
        if (blocks.size() != first_.size()) throw std::invalid_argument("Adam: block count changed");
        ++steps_;
        const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
        const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
        const double b1 = config_.beta1;
        const double b2 = config_.beta2;
        for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
            const auto& blk = blocks[bi];
            if (blk.value.size() != first_[bi].size() || blk.grad.size() != blk.value.size()) {
                throw std::invalid_argument("Adam: block shape changed");
            }
            bool finite = true;
            for (Scalar g : blk.grad) {
                if (!std::isfinite(static_cast<double>(g))) {
                    finite = false;
                    break;
                }
            }
            if (!finite) {
                ++skipped_;
                if (on_skip_) on_skip_(bi);
                continue;
            }
            Scalar* m = first_[bi].data();
            Scalar* v = second_[bi].data();
            for (std::size_t i = 0; i < blk.value.size(); ++i) {
                const double g = static_cast<double>(blk.grad[i]);
                const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
                const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
                m[i] = static_cast<Scalar>(mi);
                v[i] = static_cast<Scalar>(vi);
                const double update = config_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + config_.eps);
                blk.value[i] = static_cast<Scalar>(static_cast<double>(blk.value[i]) - update);
            }
        }
    }

    void step(std::initializer_list<ParamBlock<Scalar>> blocks) {
        step(std::span<const ParamBlock<Scalar>>(blocks.begin(), blocks.size()));
    }

    long steps() const { return steps_; }
    std::size_t skipped_blocks() const { return skipped_; }
    const AdamConfig& config() const { return config_; }
    const std::vector<std::vector<Scalar>>& first_moments() const { return first_; }
    const std::vector<std::vector<Scalar>>& second_moments() const { return second_; }

    // Called with the block index whenever a block is skipped.
    void on_skip(std::function<void(std::size_t)> fn) { on_skip_ = std::move(fn); }

private:
    AdamConfig config_;
    std::vector<std::vector<Scalar>> first_;
    std::vector<std::vector<Scalar>> second_;
    long steps_ = 0;
    std::size_t skipped_ = 0;
    std::function<void(std::size_t)> on_skip_;
};

}  // namespace lilmap
