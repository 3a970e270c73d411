#pragma once

// Monte Carlo simulation of the heralded round protocol and the block-level
// pipeline built on it: heralding, watchdog discards, test/key selection,
// outcome sampling, efficiency audit, adaptive test fraction and sub-block
// salvage.

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "mzqkd/hardware_model.hpp"
#include "mzqkd/security_bounds.hpp"

namespace mzqkd {

struct ChannelModel {
    double alpha_db_per_km = 0.2;
    double eta_det = 0.9;
    double false_herald_rate = 0.0;  ///< dark heralds per attempt without a true herald
    double bsm_factor = 0.5;
    std::array<double, 4> erasure_xy{};  ///< readout-failure probability per test setting
    double erasure_key = 0.0;

    void validate() const;
};

/// bsm_factor * eta_det^2 * 10^(-alpha L / 10). Each photon covers L/2, so
/// the pair sees the full-path loss.
double herald_probability(double length_km, const ChannelModel& channel);

/// Probability that an attempt heralds at all (true or dark).
double total_herald_probability(double length_km, const ChannelModel& channel);

/// Fraction of heralds carrying an uncorrelated pair: intrinsic zeta combined
/// with dark heralds.
double effective_false_herald_fraction(double length_km, const ChannelModel& channel, const ErrorBudget& budget);

struct AdaptiveGammaConfig {
    bool enabled = false;
    double sigma_max = 0.05;  ///< S_hat spread above which gamma grows
    std::size_t window = 4;   ///< number of recent sub-blocks considered
    double growth = 1.5;
    double decay = 0.9;
};

/// Poisoning-rate override for one sub-block.
struct PoisoningBurst {
    std::size_t subblock = 0;
    double gamma_p = 0.0;
};

struct ProtocolConfig {
    double gamma = 0.25;
    double gamma_min = 0.05;
    double gamma_max = 0.5;
    std::uint64_t block_size = 100'000'000;  ///< attempts per block
    std::size_t subblock_count = 16;
    double r0 = 1e6;  ///< attempts per second
    std::uint64_t seed = 1;
    AdaptiveGammaConfig adaptive;
    std::vector<PoisoningBurst> bursts;
    std::size_t multiplex_k = 1;
    bool identical_chain_seeds = false;
    std::optional<double> postprocessing_cap_bps;

    void validate() const;
};

enum class RoundType : std::uint8_t { Key, Test };
enum class Outcome : std::uint8_t { Zero = 0, One = 1, Erasure = 2 };

struct Settings {
    std::uint8_t x = 0;
    std::uint8_t y = 0;
};

struct RoundRecord {
    bool heralded = false;
    bool false_herald = false;
    RoundType type = RoundType::Key;
    std::optional<Settings> settings;  ///< Test rounds only
    bool watchdog_discard = false;
    bool dwell_discard = false;        ///< stored longer than tau_max
    std::optional<Outcome> a;          ///< absent for discarded rounds
    std::optional<Outcome> b;
    std::size_t subblock = 0;
};

struct SettingCell {
    std::array<std::uint64_t, 4> counts{};  ///< index 2a + b
    std::uint64_t erasures = 0;
    std::uint64_t discards = 0;
    std::uint64_t heralded = 0;

    std::uint64_t detected() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
    friend bool operator==(const SettingCell&, const SettingCell&) = default;
};

struct KeyCell {
    std::uint64_t agree = 0;
    std::uint64_t disagree = 0;
    std::uint64_t erasures = 0;
    std::uint64_t discards = 0;
    std::uint64_t heralded = 0;

    std::uint64_t detected() const { return agree + disagree; }
    friend bool operator==(const KeyCell&, const KeyCell&) = default;
};

/// Counts for a block or sub-block. Merging is a plain sum.
struct Tally {
    std::uint64_t attempts = 0;
    std::uint64_t heralded = 0;
    std::uint64_t false_heralds = 0;
    std::uint64_t watchdog_discards = 0;
    std::uint64_t dwell_discards = 0;
    std::array<SettingCell, 4> test{};  ///< index 2x + y
    KeyCell key;

    void add(const RoundRecord& round);
    Tally& operator+=(const Tally& other);
    std::uint64_t valid_rounds() const;
    std::uint64_t test_detected() const;
    friend bool operator==(const Tally&, const Tally&) = default;
};

struct BlockTally {
    Tally total;
    std::vector<Tally> subblocks;
    std::vector<double> gamma_trace;  ///< test fraction used in each sub-block
    bool empty() const { return total.heralded == 0; }
    friend bool operator==(const BlockTally&, const BlockTally&) = default;
};

/// Independent 64-bit seed for (seed, block, chain).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t block_index, std::uint64_t chain_index);

/// Per-attempt sampler. Correlations follow a Werner state at CHSH-optimal
/// angles with per-setting visibility from the braid depth; false heralds,
/// in-window poisoning and readout misassignment act as explicit events.
class RoundSampler {
public:
    RoundSampler(const ErrorBudget& budget, const TimingModel& timing, const BraidSchedule& schedule,
                 const ChannelModel& channel, std::uint64_t seed);

    /// One attempt with test probability gamma; gamma_p_override replaces the
    /// poisoning rate (burst injection).
    RoundRecord next(double gamma, std::optional<double> gamma_p_override = std::nullopt);

private:
    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    bool bernoulli(double p) { return uniform() < p; }
    std::uint8_t bit() { return static_cast<std::uint8_t>(rng_() >> 63); }

    ErrorBudget budget_;
    TimingModel timing_;
    ChannelModel channel_;
    DwellDistribution dwell_;
    double p_true_herald_;
    std::array<double, 4> test_correlator_{};  ///< state visibility times ideal correlator
    double key_correlator_ = 1.0;
    std::mt19937_64 rng_;
};

/// Runs config.block_size attempts split into sub-blocks. Deterministic for a
/// given (config.seed, block_index, chain_index).
BlockTally simulate_block(const ProtocolConfig& config, const ErrorBudget& budget, const TimingModel& timing,
                          const BraidSchedule& schedule, const ChannelModel& channel,
                          std::uint64_t block_index = 0, std::uint64_t chain_index = 0);

struct ChshStatistics {
    std::array<double, 4> correlators{};  ///< E_xy, index 2x + y
    std::array<double, 4> eta{};          ///< detected / heralded
    std::array<std::uint64_t, 4> detected{};
    double s_hat = 0.0;  ///< E_00 + E_01 + E_10 - E_11
    double sigma = 0.0;  ///< delta-method standard error of s_hat
    double eta_bar = 0.0;
    double delta_eta = 0.0;  ///< max |eta_xy - eta_bar|
    std::optional<double> key_qber;
    std::uint64_t key_detected = 0;
};

/// Correlators from detected (non-erased) test counts. Throws
/// InsufficientStatistics if any setting pair has no detected event.
ChshStatistics estimate_chsh(const Tally& tally);

enum class AuditResult { Pass, Abort };

/// Abort iff delta_eta > delta_eta_max.
AuditResult audit_efficiencies(const ChshStatistics& stats, const PenaltyConfig& config);

/// Grows gamma by `growth` (capped at gamma_max) when the sample standard
/// deviation of the last `window` S values exceeds sigma_max, otherwise
/// decays it by `decay` (floored at gamma_min). Fewer than two entries leave
/// gamma unchanged.
double adaptive_gamma(std::span<const double> history, double gamma, const ProtocolConfig& config);

struct SalvagePolicy {
    bool enabled = true;
    double discard_threshold = 0.05;       ///< max watchdog-discard fraction per sub-block
    std::optional<double> qber_threshold;  ///< optional key-QBER ceiling per sub-block
};

struct SalvageResult {
    BlockTally retained;
    double retention = 1.0;  ///< retained attempts / all attempts
    std::vector<std::size_t> dropped;
    bool empty = false;
};

/// Drops sub-blocks whose watchdog-discard fraction (or key QBER, when a
/// ceiling is set) exceeds the policy.
SalvageResult salvage(const BlockTally& tally, const SalvagePolicy& policy);

/// Expected per-attempt behaviour of a link under the analytic model.
struct LinkExpectation {
    double length_km = 0.0;
    double tau = 0.0;          ///< mean dwell time (truncated)
    double p_bar_p = 0.0;
    double zeta_eff = 0.0;
    double herald_prob = 0.0;  ///< true + dark heralds per attempt
    double watchdog_prob = 0.0;
    double dwell_discard_prob = 0.0;
    IsotropicVisibility v_iso;  ///< linearized model at the mean test braid depth
    double s_isotropic = 0.0;   ///< 2 sqrt 2 V_iso
    double s_expected = 0.0;    ///< exact expectation of S_hat under the per-setting model
    double v_eff = 0.0;         ///< s_expected / (2 sqrt 2)
    double qber = 0.0;          ///< exact expectation of the key-basis error rate
    std::array<double, 4> eta{};
    double delta_eta = 0.0;
};

LinkExpectation expected_link(const ErrorBudget& budget, const TimingModel& timing, const BraidSchedule& schedule,
                              const ChannelModel& channel);

/// Everything one protocol run needs.
struct ProtocolScenario {
    ProtocolConfig protocol;
    ErrorBudget budget;
    TimingModel timing;
    BraidSchedule schedule;
    ChannelModel channel;
    SecurityConfig security;
    SalvagePolicy salvage;
};

struct ProtocolRun {
    KeyLengthReport report;  ///< first chain; rate_bps covers all chains
    std::uint64_t total_ell = 0;
    BlockTally tally;        ///< first chain, before salvage
    std::optional<ChshStatistics> stats;
    SalvageResult salvage;
};

/// simulate -> salvage -> estimate -> audit -> penalize -> key length, for
/// every multiplexed chain. rate_bps = total ell / (block_size / R0), capped by
/// the optional post-processing limit.
ProtocolRun run_protocol(const ProtocolScenario& scenario);

/// Analytic counterpart of run_protocol: expected counts in place of sampled
/// ones, same security chain.
KeyLengthReport analyze_block(const ProtocolScenario& scenario);

/// rate_bps for `ell_total` bits from one block of the given config.
double block_rate_bps(std::uint64_t ell_total, const ProtocolConfig& config);

}  // namespace mzqkd
