#include "mzqkd/security_bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mzqkd/errors.hpp"
#include "mzqkd/hardware_model.hpp"

namespace mzqkd {

namespace {

// Tangent points closer than this to either end of (2, 2 sqrt 2) are pulled
// inward when the tangent is placed automatically.
constexpr double kTangentMargin = 1e-6;

double rate_argument(double s_value) {
    const double half = s_value / 2.0;
    return std::sqrt(std::max(0.0, half * half - 1.0));
}

}  // namespace

EpsilonBudget EpsilonBudget::equal_split(double total) {
    const double share = total / 5.0;
    return {share, share, share, share, share, share, total};
}

void EpsilonBudget::validate() const {
    for (double e : {pe, eat, s, ec, pa, auth, total}) {
        if (!(e > 0.0 && e < 1.0)) throw DomainError("epsilon parameters must lie in (0, 1)");
    }
    if (s > eat) throw DomainError("eps_s must not exceed eps_EAT");
    // relative slack for the rounding of a decimal split
    if (pe + eat + ec + pa + auth > total * (1.0 + 1e-12)) {
        throw DomainError("epsilon split exceeds eps_tot");
    }
}

void PenaltyConfig::validate() const {
    if (!(lambda_coeff >= 0.0)) throw DomainError("lambda_coeff must be non-negative");
    if (!(delta_eta_max >= 0.0 && delta_eta_max <= 0.5)) throw DomainError("delta_eta_max must lie in [0, 0.5]");
    if (!(delta_cal >= 0.0)) throw DomainError("delta_cal must be non-negative");
}

double binary_entropy(double q) {
    if (!(q >= 0.0 && q <= 1.0)) throw DomainError("binary entropy argument must lie in [0, 1]");
    if (q == 0.0 || q == 1.0) return 0.0;
    return -(q * std::log2(q) + (1.0 - q) * std::log1p(-q) / std::numbers::ln2);
}

double asymptotic_rate(double s_value) {
    if (s_value > kTsirelson * (1.0 + 1e-12)) throw DomainError("S exceeds the Tsirelson bound");
    if (!(s_value > 2.0)) return 0.0;
    const double p = std::min(1.0, (1.0 + rate_argument(s_value)) / 2.0);
    return 1.0 - binary_entropy(p);
}

double asymptotic_rate_slope(double s_value) {
    if (!(s_value > 2.0 && s_value < kTsirelson)) {
        throw DomainError("rate slope is defined on the open interval (2, 2 sqrt 2)");
    }
    const double half = s_value / 2.0;
    const double u = rate_argument(s_value);
    if (u < 1e-8) return half / (2.0 * std::numbers::ln2);
    const double p = (1.0 + u) / 2.0;
    // -h'(p) dp/dS with h'(p) = log2((1-p)/p) and dp/dS = half / (4u)
    return std::log2(p / (1.0 - p)) * half / (4.0 * u);
}

MinTradeoff build_min_tradeoff(double tangent_s) {
    if (!(tangent_s > 2.0 && tangent_s < kTsirelson)) {
        throw DomainError("degenerate tangent: tangent point must lie strictly inside (2, 2 sqrt 2)");
    }
    MinTradeoff line;
    line.tangent_ = tangent_s;
    line.rate_at_tangent_ = asymptotic_rate(tangent_s);
    line.slope_ = asymptotic_rate_slope(tangent_s);
    return line;
}

double hoeffding_mu(std::uint64_t m_test, double eps_pe) {
    if (m_test == 0) throw InsufficientStatistics("no test rounds for the Hoeffding deviation");
    if (!(eps_pe > 0.0 && eps_pe < 1.0)) throw DomainError("eps_PE must lie in (0, 1)");
    return 8.0 * std::sqrt(std::log(1.0 / eps_pe) / (2.0 * static_cast<double>(m_test)));
}

LossPenalty loss_penalty(double delta_eta, const PenaltyConfig& config) {
    if (!(delta_eta >= 0.0 && delta_eta <= 0.5)) throw DomainError("delta_eta must lie in [0, 0.5]");
    if (delta_eta > config.delta_eta_max) return {0.0, true};
    return {config.lambda_coeff * delta_eta, false};
}

double penalize_S(double s_hat, double mu, double lambda, double delta_cal) {
    return s_hat - mu - lambda - 4.0 * delta_cal;
}

double eat_min_entropy(double n, double s_final, const MinTradeoff& tradeoff, double variance_proxy, double eps_s,
                       double c_eat) {
    return n * tradeoff(s_final) - std::sqrt(n) * variance_proxy * std::sqrt(2.0 * std::log(1.0 / eps_s)) - c_eat;
}

double default_variance_proxy(const MinTradeoff& tradeoff) { return 2.0 * (1.0 + std::abs(tradeoff.slope())); }

double default_c_eat(const EpsilonBudget& eps) { return std::log2(1.0 / eps.eat) + 2.0 * std::log2(5.0); }

KeyLengthReport key_length(std::uint64_t n, double s_final, double qber, double f_ec, const EpsilonBudget& eps,
                           double variance_proxy, double c_eat) {
    if (!(qber >= 0.0 && qber <= 0.5)) throw DomainError("QBER must lie in [0, 0.5]");
    if (!(f_ec >= 1.0)) throw DomainError("f_EC must be at least 1");

    KeyLengthReport r;
    r.n = n;
    r.s_final = s_final;
    r.qber = qber;
    r.variance_proxy = variance_proxy;
    r.c_eat = c_eat;

    const double rounds = static_cast<double>(n);
    r.asymptotic_rate = asymptotic_rate(std::min(s_final, kTsirelson));
    r.leak_ec = rounds * binary_entropy(qber) * f_ec;
    r.delta_finite = std::sqrt(rounds) * variance_proxy * std::sqrt(2.0 * std::log(1.0 / eps.s)) + c_eat;
    r.h_min_bound = rounds * r.asymptotic_rate - r.delta_finite;
    r.pa_ec_cost = std::log2(1.0 / (eps.pa * eps.ec));

    if (!(s_final > 2.0)) {
        r.no_violation = true;
        r.ell = 0;
        return r;
    }
    const double length = r.h_min_bound - r.leak_ec - r.pa_ec_cost;
    r.ell = length > 0.0 ? std::min<std::uint64_t>(n, static_cast<std::uint64_t>(std::floor(length))) : 0;
    return r;
}

double qber_from_visibility(double visibility) {
    if (!(visibility >= 0.0 && visibility <= 1.0)) throw DomainError("visibility must lie in [0, 1]");
    return (1.0 - visibility) / 2.0;
}

double s_from_visibility(double visibility) {
    if (!(visibility >= 0.0 && visibility <= 1.0)) throw DomainError("visibility must lie in [0, 1]");
    return kTsirelson * visibility;
}

KeyLengthReport assess_block(const BlockObservables& obs, const SecurityConfig& config) {
    KeyLengthReport base;
    base.n = obs.n;
    base.m_test = obs.m_test;
    base.valid_rounds = obs.valid_rounds;
    base.s_hat = obs.s_hat;
    base.qber = obs.qber;
    base.delta_cal = config.penalty.delta_cal;

    const LossPenalty loss = loss_penalty(obs.delta_eta, config.penalty);
    if (loss.abort) {
        base.aborted = true;
        base.abort_reason = "efficiency asymmetry above delta_eta_max";
        base.s_final = -std::numeric_limits<double>::infinity();
        return base;
    }
    if (obs.m_test == 0 || obs.n == 0) {
        // no test statistics: the deviation bound is unbounded
        base.insufficient_statistics = true;
        base.lambda = loss.value;
        base.mu = std::numeric_limits<double>::infinity();
        base.s_final = -std::numeric_limits<double>::infinity();
        return base;
    }

    const double mu = hoeffding_mu(obs.m_test, config.eps.pe);
    const double s_final = penalize_S(obs.s_hat, mu, loss.value, config.penalty.delta_cal);
    const double tangent = std::clamp(obs.s_expected - mu, 2.0 + kTangentMargin, kTsirelson - kTangentMargin);
    const MinTradeoff tradeoff = build_min_tradeoff(tangent);
    const double v = config.variance_proxy.value_or(default_variance_proxy(tradeoff));
    const double c = config.c_eat.value_or(default_c_eat(config.eps));

    KeyLengthReport r = key_length(obs.n, s_final, obs.qber, config.f_ec, config.eps, v, c);
    r.m_test = obs.m_test;
    r.valid_rounds = obs.valid_rounds;
    r.s_hat = obs.s_hat;
    r.mu = mu;
    r.lambda = loss.value;
    r.delta_cal = config.penalty.delta_cal;
    r.tangent_s = tangent;
    if (obs.valid_rounds > 0) r.rate_per_round = static_cast<double>(r.ell) / static_cast<double>(obs.valid_rounds);
    return r;
}

}  // namespace mzqkd
