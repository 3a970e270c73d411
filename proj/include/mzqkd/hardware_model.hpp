#pragma once

// Hardware error model: maps Majorana error parameters and link timing to
// parity-flip probabilities, effective Bell-state visibility and the CHSH
// value expected under ideal CHSH-optimal settings.

#include <algorithm>
#include <array>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mzqkd {

inline constexpr double kTsirelson = 2.0 * std::numbers::sqrt2;

/// Microscopic error budget of one Majorana node pair.
struct ErrorBudget {
    double p_r = 0.0;        ///< readout misassignment per measurement
    double p_b = 0.0;        ///< infidelity per elementary braid
    double gamma_p = 0.0;    ///< quasiparticle poisoning rate [1/s]
    double zeta = 0.0;       ///< false-herald fraction
    double p_dep = 0.0;      ///< residual depolarization per round
    double delta_cal = 0.0;  ///< correlator calibration drift bound

    /// Throws DomainError unless probabilities are in [0, 0.5) and rates,
    /// drift are non-negative.
    void validate() const;

    friend bool operator==(const ErrorBudget&, const ErrorBudget&) = default;
};

/// Density of the storage time between herald and readout.
class DwellDistribution {
public:
    enum class Kind { Degenerate, Exponential, Histogram };

    DwellDistribution() = default;

    static DwellDistribution degenerate(double tau);
    static DwellDistribution exponential(double mean);
    /// Piecewise-constant density; `weights[i]` is the mass of
    /// [edges[i], edges[i+1]). Weights need not be normalized.
    static DwellDistribution histogram(std::vector<double> edges, std::vector<double> weights);

    Kind kind() const { return kind_; }
    /// Location for Degenerate, mean for Exponential.
    double scale() const { return scale_; }
    const std::vector<double>& edges() const { return edges_; }
    const std::vector<double>& weights() const { return weights_; }

    /// Untruncated mean.
    double mean() const;

    /// Draws one dwell time from the untruncated density.
    template <class URBG>
    double sample(URBG& rng) const;

    friend bool operator==(const DwellDistribution&, const DwellDistribution&) = default;

private:
    Kind kind_ = Kind::Degenerate;
    double scale_ = 0.0;
    std::vector<double> edges_;
    std::vector<double> weights_;
    std::vector<double> cumulative_;
};

/// Link timing. Lengths in metres, times in seconds.
struct TimingModel {
    double length_m = 0.0;
    double c_fiber = 2.0e8;
    double t_braid = 0.0;
    double t_readout = 0.0;
    double tau_overhead = 0.0;
    double tau_max = 1.0;  ///< rounds stored longer than this are discarded
    double t_idle = 1.0e-6;  ///< watchdog-monitored idle time per round
    /// Explicit dwell density; when empty the dwell time is degenerate at
    /// dwell_time(*this).
    std::optional<DwellDistribution> dwell;

    void validate() const;
};

/// Braid depth per CHSH setting (x,y) in row-major order 00,01,10,11, plus the
/// depth of the key basis.
struct BraidSchedule {
    std::array<int, 4> m_xy{0, 2, 2, 2};
    int m_key = 0;

    /// Test-setting average braid depth.
    double k_bar() const;
    void validate() const;

    friend bool operator==(const BraidSchedule&, const BraidSchedule&) = default;
};

enum class TierName { Conservative, Target, Optimistic };

struct Tier {
    TierName name = TierName::Target;
    ErrorBudget budget;
};

/// Built-in presets; identical to config/default.conf.
Tier preset_tier(TierName name);
std::array<Tier, 3> preset_tiers();
TierName parse_tier_name(std::string_view text);
std::string to_string(TierName name);

/// (1 - exp(-gamma_p t)) / 2.
double poisoning_flip_prob(double gamma_p, double t);

/// Parity-flip probability averaged over the dwell density truncated at
/// tau_max and renormalized. Throws ModelError if no mass lies in
/// [0, tau_max].
double mean_poisoning_prob(double gamma_p, const DwellDistribution& dwell, double tau_max);

/// Probability that a dwell time exceeds tau_max.
double dwell_discard_prob(const DwellDistribution& dwell, double tau_max);

/// Mean of the dwell density truncated at tau_max.
double truncated_mean_dwell(const DwellDistribution& dwell, double tau_max);

/// L / c_fiber + t_braid + t_readout + tau_overhead.
double dwell_time(const TimingModel& timing);

/// Dwell density in effect for `timing` (explicit one, or degenerate at
/// dwell_time()).
DwellDistribution effective_dwell(const TimingModel& timing);

/// (1-2p_r)^2 (1-p_b)^n (1-2 p_bar_p).
double visibility_product(const ErrorBudget& budget, int n_braids, double p_bar_p);

struct IsotropicVisibility {
    double value = 1.0;
    bool collapsed = false;  ///< error sum reached 1; value clamped to 0
};

/// 1 - (2p_r + k_bar p_b + 2 p_bar_p + p_dep + zeta), clamped at 0.
IsotropicVisibility visibility_isotropic(const ErrorBudget& budget, double k_bar, double p_bar_p);

/// Ideal correlators at Alice {0, pi/4}, Bob {pi/8, -pi/8} (polarization
/// convention, E = cos 2(alpha - beta)); order 00,01,10,11.
std::array<double, 4> chsh_optimal_correlators();

/// sum_xy (1-2p_r)^2 (1-p_b)^{m_xy} |E_xy| - 4 delta_cal.
double chsh_anisotropic_lower_bound(const ErrorBudget& budget, const BraidSchedule& schedule,
                                    std::span<const double, 4> ideal_correlators);

/// Visibility of the stored state itself for a setting of braid depth m:
/// (1-p_b)^m (1-p_dep). Readout, poisoning and false heralds act on top.
double setting_state_visibility(const ErrorBudget& budget, int braid_depth);

enum class BudgetParameter { ReadoutError, BraidInfidelity, PoisoningRate, FalseHerald, Depolarization };

/// Accepts "p_r", "p_b", "gamma_p", "zeta", "p_dep". Throws UsageError.
BudgetParameter parse_budget_parameter(std::string_view name);
std::string to_string(BudgetParameter p);

/// Where the isotropic CHSH value is evaluated.
struct OperatingPoint {
    double k_bar = 1.0;
    DwellDistribution dwell;
    double tau_max = 1.0;
};

/// S = 2 sqrt(2) V_iso with p_bar_p from the operating point's dwell density.
double chsh_isotropic(const ErrorBudget& budget, const OperatingPoint& at);

/// Analytic dS/dparameter of chsh_isotropic(). Zero once the visibility has
/// collapsed.
double sensitivity_gradient(const ErrorBudget& budget, BudgetParameter parameter,
                            const OperatingPoint& at);

// ---------------------------------------------------------------------------

template <class URBG>
double DwellDistribution::sample(URBG& rng) const {
    switch (kind_) {
        case Kind::Degenerate:
            return scale_;
        case Kind::Exponential: {
            if (scale_ == 0.0) return 0.0;
            std::exponential_distribution<double> d(1.0 / scale_);
            return d(rng);
        }
        case Kind::Histogram: {
            std::uniform_real_distribution<double> u(0.0, cumulative_.back());
            const double target = u(rng);
            auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
            std::size_t i = static_cast<std::size_t>(it - cumulative_.begin());
            if (i >= weights_.size()) i = weights_.size() - 1;
            std::uniform_real_distribution<double> within(edges_[i], edges_[i + 1]);
            return within(rng);
        }
    }
    return scale_;
}

}  // namespace mzqkd
