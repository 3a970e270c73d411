#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "mzqkd/errors.hpp"
#include "mzqkd/hardware_model.hpp"
#include "mzqkd/security_bounds.hpp"

using namespace mzqkd;

namespace {

// tests/oracle/oracle.py
constexpr double kH002 = 0.14144054254182065;
constexpr double kH011 = 0.499915958164528;
constexpr double kRate25 = 0.45643555680040359;
constexpr double kRate27 = 0.72848212538827957;
constexpr double kSlope25 = 1.1697312175240017;
constexpr double kSlope28 = 2.3628348186574018;
constexpr double kMu1e6 = 0.028077201480133055;
constexpr double kCeat = 40.185065233535711;
constexpr std::uint64_t kEll1e6 = 264176;
constexpr double kEat1e6 = 428318.170255037;

}  // namespace

TEST(Entropy, BinaryEntropyValues) {
    EXPECT_NEAR(binary_entropy(0.02), kH002, 1e-15);
    EXPECT_NEAR(binary_entropy(0.11), kH011, 1e-15);
    EXPECT_EQ(binary_entropy(0.0), 0.0);
    EXPECT_EQ(binary_entropy(1.0), 0.0);
    EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
    EXPECT_THROW(binary_entropy(-0.1), DomainError);
    EXPECT_THROW(binary_entropy(1.1), DomainError);
}

TEST(Rate, AsymptoticRateValues) {
    EXPECT_NEAR(asymptotic_rate(2.5), kRate25, 1e-15);
    EXPECT_NEAR(asymptotic_rate(2.7), kRate27, 1e-15);
    EXPECT_EQ(asymptotic_rate(2.0), 0.0);
    EXPECT_EQ(asymptotic_rate(1.3), 0.0);
    EXPECT_NEAR(asymptotic_rate(2.0 * std::numbers::sqrt2), 1.0, 1e-12);
    EXPECT_THROW(asymptotic_rate(2.9), DomainError);
}

TEST(Rate, IsMonotoneAndConvex) {
    double prev = -1.0;
    double prev_slope = 0.0;
    for (int i = 1; i < 1000; ++i) {
        const double s = 2.0 + (2.0 * std::numbers::sqrt2 - 2.0) * i / 1000.0;
        const double r = asymptotic_rate(s);
        const double slope = asymptotic_rate_slope(s);
        EXPECT_GT(r, prev);
        EXPECT_GE(slope, prev_slope);
        prev = r;
        prev_slope = slope;
    }
}

TEST(Rate, SlopeMatchesOracleAndLimit) {
    EXPECT_NEAR(asymptotic_rate_slope(2.5), kSlope25, 1e-12);
    EXPECT_NEAR(asymptotic_rate_slope(2.8), kSlope28, 1e-12);
    EXPECT_NEAR(asymptotic_rate_slope(2.0 + 1e-14), 1.0 / (2.0 * std::numbers::ln2), 1e-6);
    EXPECT_THROW(asymptotic_rate_slope(2.0), DomainError);
}

TEST(Tradeoff, TangentTouchesCurve) {
    const auto line = build_min_tradeoff(2.5);
    EXPECT_NEAR(line(2.5), kRate25, 1e-15);
    EXPECT_NEAR(line.slope(), kSlope25, 1e-12);
    EXPECT_NEAR(line.intercept() + line.slope() * 2.5, kRate25, 1e-13);
    EXPECT_EQ(line.tangent_point(), 2.5);
}

TEST(Tradeoff, DegenerateTangentRejected) {
    EXPECT_THROW(build_min_tradeoff(2.0), DomainError);
    EXPECT_THROW(build_min_tradeoff(2.0 * std::numbers::sqrt2), DomainError);
    EXPECT_THROW(build_min_tradeoff(1.0), DomainError);
}

TEST(Tradeoff, LineIsMinorantOnGrid) {
    constexpr int kPoints = 10'000;
    const double lo = 2.0;
    const double hi = 2.0 * std::numbers::sqrt2;
    for (double t : {2.0001, 2.2, 2.5, 2.7, 2.8, 2.828}) {
        const auto line = build_min_tradeoff(t);
        for (int i = 0; i < kPoints; ++i) {
            const double s = lo + (hi - lo) * i / (kPoints - 1);
            ASSERT_LE(line(s), asymptotic_rate(std::min(s, hi)) + 1e-12) << "tangent " << t << " at " << s;
        }
    }
}

TEST(Hoeffding, DeviationValues) {
    EXPECT_NEAR(hoeffding_mu(1'000'000, 2e-11), kMu1e6, 1e-15);
    EXPECT_NEAR(hoeffding_mu(4'000'000, 2e-11), kMu1e6 / 2.0, 1e-15);
    EXPECT_THROW(hoeffding_mu(0, 2e-11), InsufficientStatistics);
    EXPECT_THROW(hoeffding_mu(10, 0.0), DomainError);
}

TEST(Hoeffding, DecreasesWithSamples) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::uint64_t m = 1; m < 100'000'000; m *= 3) {
        const double mu = hoeffding_mu(m, 1e-10);
        EXPECT_LT(mu, prev);
        prev = mu;
    }
}

TEST(Loss, PenaltyAndAbort) {
    PenaltyConfig cfg;
    EXPECT_EQ(loss_penalty(0.0, cfg).value, 0.0);
    EXPECT_FALSE(loss_penalty(0.0, cfg).abort);
    EXPECT_DOUBLE_EQ(loss_penalty(0.01, cfg).value, 0.08);
    EXPECT_FALSE(loss_penalty(0.02, cfg).abort);
    EXPECT_TRUE(loss_penalty(0.05, cfg).abort);
    EXPECT_TRUE(loss_penalty(0.075, cfg).abort);
    EXPECT_THROW(loss_penalty(-0.1, cfg), DomainError);
}

TEST(Penalize, SubtractsAllTerms) {
    EXPECT_DOUBLE_EQ(penalize_S(2.7, 0.03, 0.08, 0.002), 2.7 - 0.03 - 0.08 - 0.008);
}

TEST(Eat, MinEntropyExample) {
    const auto line = build_min_tradeoff(2.5);
    EpsilonBudget eps;
    EXPECT_NEAR(default_c_eat(eps), kCeat, 1e-12);
    EXPECT_NEAR(eat_min_entropy(1e6, 2.5, line, 4.0, eps.s, kCeat), kEat1e6, 1e-6);
}

TEST(KeyLength, OracleExample) {
    const EpsilonBudget eps;
    const auto r = key_length(1'000'000, 2.5, 0.02, 1.16, eps, 4.0, kCeat);
    EXPECT_EQ(r.ell, kEll1e6);
    EXPECT_FALSE(r.no_violation);
    EXPECT_NEAR(r.leak_ec, 1e6 * kH002 * 1.16, 1e-6);
    EXPECT_NEAR(r.pa_ec_cost, std::log2(1.0 / (2e-11 * 2e-11)), 1e-12);
}

TEST(KeyLength, NoViolationGivesZero) {
    const auto r = key_length(1'000'000, 2.0, 0.0, 1.16, EpsilonBudget{}, 4.0, kCeat);
    EXPECT_EQ(r.ell, 0u);
    EXPECT_TRUE(r.no_violation);
    const auto neg = key_length(1'000'000, -std::numeric_limits<double>::infinity(), 0.0, 1.16, EpsilonBudget{}, 4.0,
                                kCeat);
    EXPECT_EQ(neg.ell, 0u);
}

TEST(KeyLength, MonotoneAndClamped) {
    const EpsilonBudget eps;
    std::uint64_t prev = 0;
    for (double s = 2.3; s < 2.82; s += 0.01) {
        const auto r = key_length(10'000'000, s, 0.01, 1.16, eps, 4.0, kCeat);
        EXPECT_GE(r.ell, prev);
        EXPECT_LE(r.ell, 10'000'000u);
        prev = r.ell;
    }
    prev = 0;
    for (std::uint64_t n = 1000; n < 1'000'000'000; n *= 2) {
        const auto r = key_length(n, 2.7, 0.01, 1.16, eps, 4.0, kCeat);
        EXPECT_GE(r.ell, prev);
        EXPECT_LE(r.ell, n);
        prev = r.ell;
    }
    std::uint64_t last = std::numeric_limits<std::uint64_t>::max();
    for (double q = 0.0; q < 0.2; q += 0.005) {
        const auto r = key_length(10'000'000, 2.7, q, 1.16, eps, 4.0, kCeat);
        EXPECT_LE(r.ell, last);
        last = r.ell;
    }
    EXPECT_EQ(key_length(100, 2.8, 0.0, 1.0, eps, 4.0, kCeat).ell, 0u);
}

TEST(KeyLength, RejectsBadInputs) {
    EXPECT_THROW(key_length(10, 2.5, 0.6, 1.16, EpsilonBudget{}, 4.0, kCeat), DomainError);
    EXPECT_THROW(key_length(10, 2.5, 0.1, 0.9, EpsilonBudget{}, 4.0, kCeat), DomainError);
}

TEST(Epsilon, SplitAndValidation) {
    const auto e = EpsilonBudget::equal_split(1e-10);
    EXPECT_DOUBLE_EQ(e.pe, 2e-11);
    EXPECT_DOUBLE_EQ(e.s, e.eat);
    EXPECT_NO_THROW(e.validate());
    EpsilonBudget bad = e;
    bad.pe = 1e-10;
    EXPECT_THROW(bad.validate(), DomainError);
    bad = e;
    bad.s = 1e-10;
    EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Visibility, Conversions) {
    EXPECT_NEAR(qber_from_visibility(0.98), 0.01, 1e-16);
    EXPECT_DOUBLE_EQ(s_from_visibility(1.0), 2.0 * std::numbers::sqrt2);
    EXPECT_THROW(qber_from_visibility(1.2), DomainError);
}

TEST(AssessBlock, FullChain) {
    BlockObservables obs{.n = 1'000'000, .m_test = 1'000'000, .valid_rounds = 2'000'000, .s_hat = 2.6,
                         .s_expected = 2.6, .delta_eta = 0.005, .qber = 0.02};
    SecurityConfig cfg;
    cfg.penalty.delta_cal = 0.002;
    const auto r = assess_block(obs, cfg);
    EXPECT_NEAR(r.mu, kMu1e6, 1e-15);
    EXPECT_DOUBLE_EQ(r.lambda, 0.04);
    EXPECT_NEAR(r.s_final, 2.6 - kMu1e6 - 0.04 - 0.008, 1e-14);
    EXPECT_NEAR(r.tangent_s, 2.6 - kMu1e6, 1e-14);
    EXPECT_FALSE(r.aborted);
    EXPECT_GT(r.ell, 0u);
    EXPECT_DOUBLE_EQ(r.rate_per_round, static_cast<double>(r.ell) / 2e6);
}

TEST(AssessBlock, AbortAndMissingStatistics) {
    SecurityConfig cfg;
    BlockObservables obs{.n = 1'000'000, .m_test = 1'000'000, .valid_rounds = 2'000'000, .s_hat = 2.8,
                         .s_expected = 2.8, .delta_eta = 0.075, .qber = 0.0};
    auto r = assess_block(obs, cfg);
    EXPECT_TRUE(r.aborted);
    EXPECT_EQ(r.ell, 0u);
    EXPECT_FALSE(r.abort_reason.empty());

    obs.delta_eta = 0.0;
    obs.m_test = 0;
    r = assess_block(obs, cfg);
    EXPECT_TRUE(r.insufficient_statistics);
    EXPECT_EQ(r.ell, 0u);
    EXPECT_TRUE(std::isinf(r.mu));
}
