#include "mzqkd/hardware_model.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cctype>
#include <cmath>
#include <functional>
#include <numeric>

#include "mzqkd/errors.hpp"

namespace mzqkd {

namespace {

constexpr double kQuadratureAbsTol = 1e-12;

void require_probability(double p, const char* name) {
    if (!(p >= 0.0 && p < 0.5)) {
        throw DomainError(std::string(name) + " must lie in [0, 0.5)");
    }
}

void require_nonnegative(double v, const char* name) {
    if (!(v >= 0.0)) throw DomainError(std::string(name) + " must be non-negative");
}

double integrate(const std::function<double(double)>& f, double a, double b) {
    if (b <= a) return 0.0;
    double error = 0.0;
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 20, 1e-14, &error);
    if (error > kQuadratureAbsTol) {
        throw ModelError("dwell-time quadrature did not reach the requested tolerance");
    }
    return value;
}

// E[fn(tau)] under the dwell density restricted to [0, tau_max] and
// renormalized.
double truncated_expectation(const DwellDistribution& dwell, double tau_max,
                             const std::function<double(double)>& fn) {
    require_nonnegative(tau_max, "tau_max");
    switch (dwell.kind()) {
        case DwellDistribution::Kind::Degenerate:
            if (dwell.scale() > tau_max) {
                throw ModelError("degenerate dwell time lies beyond tau_max; nothing survives the cutoff");
            }
            return fn(dwell.scale());
        case DwellDistribution::Kind::Exponential: {
            const double mean = dwell.scale();
            if (mean == 0.0) return fn(0.0);
            const double rate = 1.0 / mean;
            const double mass = -std::expm1(-rate * tau_max);
            if (!(mass > 0.0)) throw ModelError("exponential dwell density has no mass below tau_max");
            const double value =
                integrate([&](double t) { return fn(t) * rate * std::exp(-rate * t); }, 0.0, tau_max);
            return value / mass;
        }
        case DwellDistribution::Kind::Histogram: {
            const auto& edges = dwell.edges();
            const auto& weights = dwell.weights();
            double mass = 0.0;
            double value = 0.0;
            for (std::size_t i = 0; i < weights.size(); ++i) {
                const double lo = edges[i];
                const double hi = std::min(edges[i + 1], tau_max);
                if (hi <= lo || weights[i] == 0.0) continue;
                const double density = weights[i] / (edges[i + 1] - edges[i]);
                mass += density * (hi - lo);
                value += density * integrate(fn, lo, hi);
            }
            if (!(mass > 0.0)) throw ModelError("dwell histogram has no mass below tau_max");
            return value / mass;
        }
    }
    throw ModelError("unknown dwell distribution");
}

}  // namespace

void ErrorBudget::validate() const {
    require_probability(p_r, "p_r");
    require_probability(p_b, "p_b");
    require_probability(zeta, "zeta");
    require_probability(p_dep, "p_dep");
    require_nonnegative(gamma_p, "gamma_p");
    require_nonnegative(delta_cal, "delta_cal");
}

DwellDistribution DwellDistribution::degenerate(double tau) {
    require_nonnegative(tau, "dwell time");
    DwellDistribution d;
    d.kind_ = Kind::Degenerate;
    d.scale_ = tau;
    return d;
}

DwellDistribution DwellDistribution::exponential(double mean) {
    require_nonnegative(mean, "dwell mean");
    DwellDistribution d;
    d.kind_ = Kind::Exponential;
    d.scale_ = mean;
    return d;
}

DwellDistribution DwellDistribution::histogram(std::vector<double> edges, std::vector<double> weights) {
    if (weights.empty() || edges.size() != weights.size() + 1) {
        throw DomainError("dwell histogram needs n weights and n+1 edges");
    }
    if (edges.front() < 0.0) throw DomainError("dwell histogram edges must be non-negative");
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (!(edges[i + 1] > edges[i])) throw DomainError("dwell histogram edges must increase strictly");
    }
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw DomainError("dwell histogram weights must be non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw DomainError("dwell histogram is empty");

    DwellDistribution d;
    d.kind_ = Kind::Histogram;
    d.edges_ = std::move(edges);
    d.weights_ = std::move(weights);
    d.cumulative_.resize(d.weights_.size());
    std::partial_sum(d.weights_.begin(), d.weights_.end(), d.cumulative_.begin());
    double mean = 0.0;
    for (std::size_t i = 0; i < d.weights_.size(); ++i) {
        mean += d.weights_[i] * 0.5 * (d.edges_[i] + d.edges_[i + 1]);
    }
    d.scale_ = mean / total;
    return d;
}

double DwellDistribution::mean() const { return scale_; }

void TimingModel::validate() const {
    require_nonnegative(length_m, "fiber length");
    if (!(c_fiber > 0.0)) throw DomainError("c_fiber must be positive");
    require_nonnegative(t_braid, "t_braid");
    require_nonnegative(t_readout, "t_readout");
    require_nonnegative(tau_overhead, "tau_overhead");
    require_nonnegative(t_idle, "t_idle");
    require_nonnegative(tau_max, "tau_max");
    const double mean = dwell ? dwell->mean() : dwell_time(*this);
    if (tau_max < mean) throw DomainError("tau_max must not be below the mean dwell time");
}

double BraidSchedule::k_bar() const {
    return std::accumulate(m_xy.begin(), m_xy.end(), 0.0) / 4.0;
}

void BraidSchedule::validate() const {
    for (int m : m_xy) {
        if (m < 0) throw DomainError("braid depths must be non-negative");
    }
    if (m_key < 0) throw DomainError("braid depths must be non-negative");
    if (m_key > *std::min_element(m_xy.begin(), m_xy.end())) {
        throw DomainError("key-basis braid depth must not exceed any test-setting depth");
    }
}

Tier preset_tier(TierName name) {
    switch (name) {
        case TierName::Conservative:
            return {name, {.p_r = 0.01, .p_b = 1e-3, .gamma_p = 0.5, .zeta = 0.02, .p_dep = 0.005, .delta_cal = 0.005}};
        case TierName::Target:
            return {name, {.p_r = 0.004, .p_b = 5e-4, .gamma_p = 0.05, .zeta = 0.01, .p_dep = 0.002, .delta_cal = 0.002}};
        case TierName::Optimistic:
            return {name, {.p_r = 0.001, .p_b = 1e-4, .gamma_p = 0.005, .zeta = 0.005, .p_dep = 0.001, .delta_cal = 0.001}};
    }
    throw UsageError("unknown tier");
}

std::array<Tier, 3> preset_tiers() {
    return {preset_tier(TierName::Conservative), preset_tier(TierName::Target),
            preset_tier(TierName::Optimistic)};
}

TierName parse_tier_name(std::string_view text) {
    std::string lower;
    for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "conservative" || lower == "i" || lower == "tier1") return TierName::Conservative;
    if (lower == "target" || lower == "ii" || lower == "tier2") return TierName::Target;
    if (lower == "optimistic" || lower == "iii" || lower == "tier3") return TierName::Optimistic;
    throw UsageError("unknown tier '" + std::string(text) + "'");
}

std::string to_string(TierName name) {
    switch (name) {
        case TierName::Conservative: return "conservative";
        case TierName::Target: return "target";
        case TierName::Optimistic: return "optimistic";
    }
    return "unknown";
}

double poisoning_flip_prob(double gamma_p, double t) {
    require_nonnegative(gamma_p, "gamma_p");
    require_nonnegative(t, "dwell time");
    return -0.5 * std::expm1(-gamma_p * t);
}

double mean_poisoning_prob(double gamma_p, const DwellDistribution& dwell, double tau_max) {
    require_nonnegative(gamma_p, "gamma_p");
    return truncated_expectation(dwell, tau_max, [gamma_p](double t) { return -0.5 * std::expm1(-gamma_p * t); });
}

double dwell_discard_prob(const DwellDistribution& dwell, double tau_max) {
    switch (dwell.kind()) {
        case DwellDistribution::Kind::Degenerate:
            return dwell.scale() > tau_max ? 1.0 : 0.0;
        case DwellDistribution::Kind::Exponential:
            return dwell.scale() == 0.0 ? 0.0 : std::exp(-tau_max / dwell.scale());
        case DwellDistribution::Kind::Histogram: {
            const auto& e = dwell.edges();
            const auto& w = dwell.weights();
            double total = 0.0;
            double above = 0.0;
            for (std::size_t i = 0; i < w.size(); ++i) {
                total += w[i];
                if (e[i] >= tau_max) {
                    above += w[i];
                } else if (e[i + 1] > tau_max) {
                    above += w[i] * (e[i + 1] - tau_max) / (e[i + 1] - e[i]);
                }
            }
            return above / total;
        }
    }
    return 0.0;
}

double truncated_mean_dwell(const DwellDistribution& dwell, double tau_max) {
    return truncated_expectation(dwell, tau_max, [](double t) { return t; });
}

double dwell_time(const TimingModel& timing) {
    return timing.length_m / timing.c_fiber + timing.t_braid + timing.t_readout + timing.tau_overhead;
}

DwellDistribution effective_dwell(const TimingModel& timing) {
    if (timing.dwell) return *timing.dwell;
    return DwellDistribution::degenerate(dwell_time(timing));
}

double visibility_product(const ErrorBudget& budget, int n_braids, double p_bar_p) {
    const double readout = (1.0 - 2.0 * budget.p_r) * (1.0 - 2.0 * budget.p_r);
    return readout * std::pow(1.0 - budget.p_b, n_braids) * (1.0 - 2.0 * p_bar_p);
}

IsotropicVisibility visibility_isotropic(const ErrorBudget& budget, double k_bar, double p_bar_p) {
    const double error_sum =
        2.0 * budget.p_r + k_bar * budget.p_b + 2.0 * p_bar_p + budget.p_dep + budget.zeta;
    if (error_sum >= 1.0) return {0.0, true};
    return {1.0 - error_sum, false};
}

std::array<double, 4> chsh_optimal_correlators() {
    constexpr double pi = std::numbers::pi;
    const std::array<double, 2> alice{0.0, pi / 4.0};
    const std::array<double, 2> bob{pi / 8.0, -pi / 8.0};
    std::array<double, 4> e{};
    for (int x = 0; x < 2; ++x) {
        for (int y = 0; y < 2; ++y) e[2 * x + y] = std::cos(2.0 * (alice[x] - bob[y]));
    }
    return e;
}

double chsh_anisotropic_lower_bound(const ErrorBudget& budget, const BraidSchedule& schedule,
                                    std::span<const double, 4> ideal_correlators) {
    const double readout = (1.0 - 2.0 * budget.p_r) * (1.0 - 2.0 * budget.p_r);
    double s = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (std::abs(ideal_correlators[i]) > 1.0) throw DomainError("ideal correlators must lie in [-1, 1]");
        s += readout * std::pow(1.0 - budget.p_b, schedule.m_xy[i]) * std::abs(ideal_correlators[i]);
    }
    return s - 4.0 * budget.delta_cal;
}

double setting_state_visibility(const ErrorBudget& budget, int braid_depth) {
    return std::pow(1.0 - budget.p_b, braid_depth) * (1.0 - budget.p_dep);
}

BudgetParameter parse_budget_parameter(std::string_view name) {
    if (name == "p_r") return BudgetParameter::ReadoutError;
    if (name == "p_b") return BudgetParameter::BraidInfidelity;
    if (name == "gamma_p") return BudgetParameter::PoisoningRate;
    if (name == "zeta") return BudgetParameter::FalseHerald;
    if (name == "p_dep") return BudgetParameter::Depolarization;
    throw UsageError("unknown error-budget parameter '" + std::string(name) + "'");
}

std::string to_string(BudgetParameter p) {
    switch (p) {
        case BudgetParameter::ReadoutError: return "p_r";
        case BudgetParameter::BraidInfidelity: return "p_b";
        case BudgetParameter::PoisoningRate: return "gamma_p";
        case BudgetParameter::FalseHerald: return "zeta";
        case BudgetParameter::Depolarization: return "p_dep";
    }
    return "unknown";
}

double chsh_isotropic(const ErrorBudget& budget, const OperatingPoint& at) {
    const double p_bar = mean_poisoning_prob(budget.gamma_p, at.dwell, at.tau_max);
    return kTsirelson * visibility_isotropic(budget, at.k_bar, p_bar).value;
}

double sensitivity_gradient(const ErrorBudget& budget, BudgetParameter parameter, const OperatingPoint& at) {
    const double p_bar = mean_poisoning_prob(budget.gamma_p, at.dwell, at.tau_max);
    if (visibility_isotropic(budget, at.k_bar, p_bar).collapsed) return 0.0;
    switch (parameter) {
        case BudgetParameter::ReadoutError: return -2.0 * kTsirelson;
        case BudgetParameter::BraidInfidelity: return -kTsirelson * at.k_bar;
        case BudgetParameter::FalseHerald: return -kTsirelson;
        case BudgetParameter::Depolarization: return -kTsirelson;
        case BudgetParameter::PoisoningRate: {
            // d p_bar / d gamma_p = E[t exp(-gamma_p t) / 2]
            const double g = budget.gamma_p;
            const double dp = truncated_expectation(at.dwell, at.tau_max,
                                                    [g](double t) { return 0.5 * t * std::exp(-g * t); });
            return -2.0 * kTsirelson * dp;
        }
    }
    throw UsageError("unknown error-budget parameter");
}

}  // namespace mzqkd
