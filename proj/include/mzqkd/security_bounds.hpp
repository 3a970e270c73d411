#pragma once

// Finite-key security chain: penalized CHSH value, linear min-tradeoff
// minorant of the asymptotic rate curve, entropy-accumulation min-entropy
// bound and the extractable key length.

#include <cstdint>
#include <optional>
#include <string>

namespace mzqkd {

/// Composable failure-probability split.
struct EpsilonBudget {
    double pe = 2e-11;    ///< parameter estimation
    double eat = 2e-11;   ///< entropy accumulation
    double s = 2e-11;     ///< smoothing (part of eat)
    double ec = 2e-11;    ///< error correction
    double pa = 2e-11;    ///< privacy amplification
    double auth = 2e-11;  ///< authentication
    double total = 1e-10;

    /// Equal five-way split of `total`, with the smoothing parameter equal to
    /// the EAT share.
    static EpsilonBudget equal_split(double total);
    void validate() const;
};

struct PenaltyConfig {
    double lambda_coeff = 8.0;     ///< slope of the loss penalty
    double delta_eta_max = 0.02;   ///< efficiency-asymmetry abort threshold
    double delta_cal = 0.0;

    void validate() const;
};

/// Linear lower bound g(S) = intercept + slope * S on the asymptotic rate.
class MinTradeoff {
public:
    double slope() const { return slope_; }
    double intercept() const { return rate_at_tangent_ - slope_ * tangent_; }
    double tangent_point() const { return tangent_; }

    /// Value of the line at S.
    double operator()(double s_value) const { return rate_at_tangent_ + slope_ * (s_value - tangent_); }

private:
    friend MinTradeoff build_min_tradeoff(double tangent_s);
    double slope_ = 0.0;
    double tangent_ = 0.0;
    double rate_at_tangent_ = 0.0;
};

/// Everything that went into one key-length evaluation.
struct KeyLengthReport {
    std::uint64_t n = 0;             ///< raw key rounds
    std::uint64_t m_test = 0;        ///< detected test rounds
    std::uint64_t valid_rounds = 0;  ///< non-discarded, non-erased rounds
    double s_hat = 0.0;
    double mu = 0.0;
    double lambda = 0.0;
    double delta_cal = 0.0;
    double s_final = 0.0;
    double qber = 0.0;
    double tangent_s = 0.0;
    double variance_proxy = 0.0;
    double c_eat = 0.0;
    double asymptotic_rate = 0.0;  ///< 1 - h(...) at S_final
    double h_min_bound = 0.0;
    double leak_ec = 0.0;
    double delta_finite = 0.0;
    double pa_ec_cost = 0.0;  ///< log2(1/(eps_PA eps_EC))
    std::uint64_t ell = 0;
    double rate_per_round = 0.0;  ///< ell per valid round
    double rate_bps = 0.0;

    bool no_violation = false;
    bool aborted = false;
    bool insufficient_statistics = false;
    std::string abort_reason;
};

/// h(q) in bits; h(0) = h(1) = 0.
double binary_entropy(double q);

/// 1 - h((1 + sqrt((S/2)^2 - 1)) / 2); zero for S <= 2, DomainError above
/// Tsirelson.
double asymptotic_rate(double s_value);

/// d/dS of asymptotic_rate on (2, 2 sqrt 2).
double asymptotic_rate_slope(double s_value);

/// Tangent line to the asymptotic rate at tangent_s in the open interval
/// (2, 2 sqrt 2). The curve is convex there, so the tangent is a global
/// minorant on [2, 2 sqrt 2].
MinTradeoff build_min_tradeoff(double tangent_s);

/// Hoeffding deviation of the CHSH estimate, treating each test round's
/// score as a variable of range 8: 8 sqrt(ln(1/eps_PE) / (2 M_test)).
double hoeffding_mu(std::uint64_t m_test, double eps_pe);

struct LossPenalty {
    double value = 0.0;
    bool abort = false;
};

/// Lambda = lambda_coeff * delta_eta, or abort when delta_eta exceeds the
/// threshold (equality passes).
LossPenalty loss_penalty(double delta_eta, const PenaltyConfig& config);

/// S_hat - mu - Lambda - 4 delta_cal.
double penalize_S(double s_hat, double mu, double lambda, double delta_cal);

/// n g(S_final) - sqrt(n) v sqrt(2 ln(1/eps_s)) - C_EAT; may be negative.
double eat_min_entropy(double n, double s_final, const MinTradeoff& tradeoff, double variance_proxy,
                       double eps_s, double c_eat);

/// 2 (1 + |slope|).
double default_variance_proxy(const MinTradeoff& tradeoff);

/// log2(1/eps_EAT) + 2 log2 5.
double default_c_eat(const EpsilonBudget& eps);

/// Extractable key length with every intermediate term. Only the terms
/// owned by this step (asymptotic rate, leakage, finite-size, ell) are filled.
KeyLengthReport key_length(std::uint64_t n, double s_final, double qber, double f_ec, const EpsilonBudget& eps,
                           double variance_proxy, double c_eat);

/// Werner-state QBER in the key basis: (1 - V) / 2.
double qber_from_visibility(double visibility);

/// CHSH value at optimal settings for a Werner state: 2 sqrt(2) V.
double s_from_visibility(double visibility);

/// Post-processing parameters shared by the analytic and simulated chains.
struct SecurityConfig {
    EpsilonBudget eps;
    PenaltyConfig penalty;
    double f_ec = 1.16;
    std::optional<double> variance_proxy;  ///< default: 2 (1 + |slope|)
    std::optional<double> c_eat;           ///< default: default_c_eat(eps)
};

/// Block-level observables after sifting.
struct BlockObservables {
    std::uint64_t n = 0;
    std::uint64_t m_test = 0;
    std::uint64_t valid_rounds = 0;
    double s_hat = 0.0;
    double s_expected = 0.0;  ///< operating-point S used to place the tangent
    double delta_eta = 0.0;
    double qber = 0.0;
};

/// Loss-discipline audit, penalization and key length for one block.
/// Aborts and missing statistics produce ell = 0 with the matching flag.
KeyLengthReport assess_block(const BlockObservables& obs, const SecurityConfig& config);

}  // namespace mzqkd
