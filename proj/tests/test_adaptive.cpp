#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fd.hpp"
#include "lilmap/adaptive.hpp"

using namespace lilmap;
using Mat = Eigen::MatrixXf;

namespace {

constexpr int kDim = 64;

DecoderConfig decoder_config() {
    DecoderConfig c;
    c.output_dim = kDim;
    return c;
}

Mat basis(std::initializer_list<int> axes, int dim = kDim) {
    Mat m = Mat::Zero(dim, static_cast<Eigen::Index>(axes.size()));
    Eigen::Index j = 0;
    for (int a : axes) m(a, j++) = 1.0f;
    return m;
}

Mat repeat(const Mat& cols, std::initializer_list<int> counts) {
    int total = 0;
    for (int c : counts) total += c;
    Mat out(cols.rows(), total);
    Eigen::Index k = 0, j = 0;
    for (int c : counts) {
        for (int r = 0; r < c; ++r) out.col(k++) = cols.col(j);
        ++j;
    }
    return out;
}

// Unit vector at angle acos(c) from e_0 inside the (e_0, e_1) plane.
Eigen::VectorXd tilted(double c, int dim) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v(0) = c;
    v(1) = std::sqrt(1.0 - c * c);
    return v;
}

std::vector<double> bank_fit(const FeatureBank<float>& bank, const LanguageDecoder<float>& dec) {
    const Mat recon = dec.predict(bank.encodings, bank.f_vectors);
    std::vector<double> out;
    for (Eigen::Index j = 0; j < recon.cols(); ++j) out.push_back(cosine_similarity(bank.features.col(j), recon.col(j)));
    return out;
}

}  // namespace

TEST(Unique, CollapsesExactDuplicates) {
    const Mat in = repeat(basis({0, 1}), {100, 50});
    const Mat u = unique_features(in, 0.02);
    ASSERT_EQ(u.cols(), 2);
    EXPECT_TRUE(u.col(0) == in.col(0));
    EXPECT_TRUE(u.col(1) == in.col(100));
}

TEST(Unique, ThresholdIsCosineDistance) {
    Eigen::MatrixXd in(8, 2);
    in.col(0) = tilted(1.0, 8);
    in.col(1) = tilted(0.995, 8);
    EXPECT_EQ(unique_features(in, 0.02).cols(), 1);
    in.col(1) = tilted(0.97, 8);
    EXPECT_EQ(unique_features(in, 0.02).cols(), 2);
    EXPECT_FALSE(is_distinct(0.995, 0.02));
    EXPECT_TRUE(is_distinct(0.98, 0.02));
}

TEST(Unique, FixpointAndEmpty) {
    Rng rng(1);
    Eigen::MatrixXd in(6, 40);
    for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = rng.normal();
    const Eigen::MatrixXd once = unique_features(in, 0.3);
    const Eigen::MatrixXd twice = unique_features(once, 0.3);
    ASSERT_EQ(once.cols(), twice.cols());
    EXPECT_LT((once - twice).cwiseAbs().maxCoeff(), 1e-15);
    for (Eigen::Index i = 0; i < once.cols(); ++i) {
        for (Eigen::Index j = 0; j < i; ++j) EXPECT_GE(1.0 - once.col(i).dot(once.col(j)), 0.3);
    }
    EXPECT_EQ(unique_features(Eigen::MatrixXd(6, 0), 0.02).cols(), 0);
    // zero columns carry no feature
    EXPECT_EQ(unique_features(Eigen::MatrixXd(Eigen::MatrixXd::Zero(6, 3)), 0.02).cols(), 0);
}

TEST(Unknown, Examples) {
    Eigen::MatrixXd known(8, 1);
    known.col(0) = tilted(1.0, 8);
    Eigen::MatrixXd in(8, 2);
    in.col(0) = tilted(0.999, 8);
    in.col(1) = Eigen::VectorXd::Unit(8, 5);
    const auto out = unknown_features(in, known, 0.02);
    ASSERT_EQ(out.cols(), 1);
    EXPECT_TRUE(out.col(0) == in.col(1));
    EXPECT_TRUE(unknown_features(in, Eigen::MatrixXd(8, 0), 0.02) == in);
    EXPECT_EQ(unknown_features(known, known, 0.02).cols(), 0);
}

TEST(SeedEncoding, NearestWithinTau) {
    FeatureBank<double> bank(8, 2, 3);
    bank.features = Eigen::MatrixXd::Zero(8, 3);
    bank.features(0, 0) = 1.0;
    bank.features(0, 1) = 1.0;  // exact duplicate of entry 0, only the tie rule separates them
    bank.features(2, 2) = 1.0;
    bank.encodings = Eigen::MatrixXd::Random(2, 3);
    bank.f_vectors = Eigen::MatrixXd::Random(3, 3);
    const auto s = seed_encoding_for(bank, Eigen::VectorXd::Unit(8, 0), 0.02);
    ASSERT_TRUE(s);
    EXPECT_EQ(s->index, 0u);
    EXPECT_TRUE(s->encoding == bank.encodings.col(0));
    EXPECT_TRUE(s->f_vector == bank.f_vectors.col(0));
    EXPECT_FALSE(seed_encoding_for(bank, Eigen::VectorXd::Unit(8, 4), 0.02));
    const auto s2 = seed_encoding_for(bank, Eigen::VectorXd::Unit(8, 2), 0.02);
    ASSERT_TRUE(s2);
    EXPECT_EQ(s2->index, 2u);
}

TEST(Optimize, SingleFeatureFromEmptyBank) {
    FeatureBank<float> bank(kDim, 16, 512);
    LanguageDecoder<float> dec(decoder_config(), 3);
    Rng rng(4);
    const auto r = optimize(bank, dec, repeat(basis({7}), {500}), AdaptiveConfig{}, rng);
    EXPECT_EQ(r.iterations, 100);
    EXPECT_EQ(r.new_features, 1u);
    ASSERT_EQ(bank.size(), 1u);
    ASSERT_EQ(r.fit_cosine.size(), 1u);
    EXPECT_GE(r.fit_cosine[0], 0.99);
    EXPECT_GE(bank_fit(bank, dec)[0], 0.99);
}

TEST(Optimize, ReplayRetainsKnownFeatures) {
    FeatureBank<float> bank(kDim, 16, 512);
    LanguageDecoder<float> dec(decoder_config(), 5);
    Rng rng(6);
    optimize(bank, dec, basis({0, 1, 2, 3, 4}), AdaptiveConfig{}, rng);
    const Mat known_enc = bank.encodings;
    const Mat known_f = bank.f_vectors;
    const auto r = optimize(bank, dec, basis({5, 6, 7, 8, 9}), AdaptiveConfig{}, rng);
    EXPECT_EQ(r.new_features, 5u);
    ASSERT_EQ(bank.size(), 10u);
    // known entries are replayed, never stepped
    EXPECT_TRUE(bank.encodings.leftCols(5) == known_enc);
    EXPECT_TRUE(bank.f_vectors.leftCols(5) == known_f);
    for (double c : bank_fit(bank, dec)) EXPECT_GE(c, 0.98);
}

TEST(Optimize, NewFeaturesStartFromMeanF) {
    FeatureBank<float> bank(kDim, 16, 512);
    LanguageDecoder<float> dec(decoder_config(), 5);
    Rng rng(6);
    optimize(bank, dec, basis({0, 1}), AdaptiveConfig{}, rng);
    const Eigen::VectorXf mean = bank.mean_f();
    AdaptiveConfig c;
    c.n_opt = 0;
    const auto r = optimize(bank, dec, basis({3, 4}), c, rng);
    EXPECT_EQ(r.iterations, 0);
    ASSERT_EQ(bank.size(), 4u);
    EXPECT_TRUE(bank.f_vectors.col(2) == mean);
    EXPECT_TRUE(bank.f_vectors.col(3) == mean);
    for (Eigen::Index j = 2; j < 4; ++j) {
        EXPECT_LE(bank.encodings.col(j).cwiseAbs().maxCoeff(), c.encoding_init_range);
    }
}

TEST(Optimize, EarlyReturnIsBitIdentical) {
    FeatureBank<float> bank(kDim, 16, 512);
    LanguageDecoder<float> dec(decoder_config(), 7);
    Rng rng(8);
    const Mat frame = repeat(basis({1, 2, 3}), {10, 20, 30});
    optimize(bank, dec, frame, AdaptiveConfig{}, rng);
    const auto params = dec.params();
    const auto bank_copy = bank;
    const Rng rng_copy = rng;
    const auto version = dec.version();
    const auto r = optimize(bank, dec, frame, AdaptiveConfig{}, rng);
    EXPECT_EQ(r.iterations, 0);
    EXPECT_TRUE(r.loss_curve.empty());
    EXPECT_TRUE(dec.params() == params);
    EXPECT_EQ(dec.version(), version);
    EXPECT_TRUE(bank == bank_copy);
    EXPECT_TRUE(rng == rng_copy);
    // an empty frame is also a no-op
    optimize(bank, dec, Mat(kDim, 0), AdaptiveConfig{}, rng);
    EXPECT_TRUE(dec.params() == params);
    EXPECT_TRUE(bank == bank_copy);
}

TEST(Optimize, NoForgettingOverSchedule) {
    FeatureBank<float> bank(kDim, 16, 512);
    LanguageDecoder<float> dec(decoder_config(), 9);
    Rng rng(10);
    Rng data(11);
    std::size_t last_size = 0;
    int admitted = 0;
    for (int call = 0; call < 12; ++call) {
        const int fresh = 1 + static_cast<int>(data.below(5));
        Mat frame(kDim, 3 * fresh + 4);
        for (int j = 0; j < fresh; ++j) {
            Eigen::VectorXf v(kDim);
            for (int i = 0; i < kDim; ++i) v(i) = static_cast<float>(data.normal());
            v.normalize();
            for (int r = 0; r < 3; ++r) frame.col(3 * j + r) = v;
        }
        // a few repeats of features the bank already holds
        for (int j = 0; j < 4; ++j) {
            frame.col(3 * fresh + j) = bank.empty() ? frame.col(0) : bank.features.col(static_cast<Eigen::Index>(data.below(bank.size())));
        }
        admitted += fresh;
        optimize(bank, dec, frame, AdaptiveConfig{}, rng);
        EXPECT_GE(bank.size(), last_size);
        last_size = bank.size();
        EXPECT_EQ(bank.size(), static_cast<std::size_t>(admitted));
        const auto fits = bank_fit(bank, dec);
        for (std::size_t j = 0; j < fits.size(); ++j) EXPECT_GE(fits[j], 0.98) << "call " << call << " entry " << j;
        for (Eigen::Index i = 0; i < bank.features.cols(); ++i) {
            for (Eigen::Index j = 0; j < i; ++j) {
                ASSERT_GE(1.0 - cosine_similarity(bank.features.col(i), bank.features.col(j)), 0.02);
            }
        }
    }
    EXPECT_LE(admitted, 64);
}

TEST(Optimize, RegularizationFlagChangesTrajectory) {
    auto run = [](bool reg) {
        FeatureBank<float> bank(kDim, 16, 512);
        LanguageDecoder<float> dec(decoder_config(), 12);
        Rng rng(13);
        AdaptiveConfig c;
        c.f_regularization = reg;
        c.n_opt = 20;
        optimize(bank, dec, basis({0, 1, 2}), c, rng);
        return bank;
    };
    EXPECT_FALSE(run(true) == run(false));
}

TEST(Optimize, DivergenceRollsBack) {
    FeatureBank<float> bank(kDim, 16, 512);
    LanguageDecoder<float> dec(decoder_config(), 14);
    dec.mutable_params().w3.setConstant(std::numeric_limits<float>::max());
    const auto params = dec.params();
    Rng rng(15);
    EXPECT_THROW(optimize(bank, dec, basis({0}), AdaptiveConfig{}, rng), NumericalError);
    EXPECT_TRUE(dec.params() == params);
    EXPECT_TRUE(bank.empty());
}

TEST(Optimize, DimensionChecks) {
    FeatureBank<float> bank(32, 16, 512);
    LanguageDecoder<float> dec(decoder_config());
    Rng rng(1);
    EXPECT_THROW(optimize(bank, dec, basis({0}), AdaptiveConfig{}, rng), std::invalid_argument);
    FeatureBank<float> ok(kDim, 16, 512);
    EXPECT_THROW(optimize(ok, dec, basis({0}, 32), AdaptiveConfig{}, rng), std::invalid_argument);
}

TEST(AdaptiveLoss, GradientsMatchFiniteDifferences) {
    DecoderConfig c;
    c.input_dim = 4;
    c.hidden_dim = 8;
    c.f_dim = 8;
    c.output_dim = 8;
    for (Activation act : {Activation::relu, Activation::tanh}) {
        c.activation = act;
        LanguageDecoder<double> dec(c, 7);
        Rng rng(8);
        Eigen::MatrixXd t(8, 6), e(4, 6), f(8, 6);
        for (auto* m : {&t, &e, &f})
            for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-1, 1);
        const auto perm = rng.permutation(6);
        for (bool reg : {false, true}) {
            std::span<const std::uint32_t> p = reg ? std::span<const std::uint32_t>(perm) : std::span<const std::uint32_t>{};
            Eigen::MatrixXd de, df;
            DecoderParams<double> dp;
            adaptive_loss<double>(dec, t, e, f, p, &de, &df, &dp);
            auto loss = [&] { return adaptive_loss<double>(dec, t, e, f, p, nullptr, nullptr, nullptr); };
            double worst = testfd::max_rel_error(std::span<double>(e.data(), e.size()), std::span<const double>(de.data(), de.size()), loss);
            worst = std::max(worst, testfd::max_rel_error(std::span<double>(f.data(), f.size()),
                                                          std::span<const double>(df.data(), df.size()), loss));
            std::vector<std::span<const double>> g;
            dp.for_each_block([&](std::span<const double> s) { g.push_back(s); });
            std::size_t bi = 0;
            const_cast<DecoderParams<double>&>(dec.params()).for_each_block(
                [&](std::span<double> s) { worst = std::max(worst, testfd::max_rel_error(s, g[bi++], loss)); });
            EXPECT_LT(worst, 1e-6) << "reg=" << reg;
        }
    }
    std::vector<std::uint32_t> bad{0, 1};
    DecoderConfig c2 = c;
    LanguageDecoder<double> dec(c2, 1);
    Eigen::MatrixXd t = Eigen::MatrixXd::Ones(8, 3), e = Eigen::MatrixXd::Ones(4, 3), f = Eigen::MatrixXd::Ones(8, 3);
    EXPECT_THROW(adaptive_loss<double>(dec, t, e, f, bad, nullptr, nullptr, nullptr), std::invalid_argument);
}
