#include "mzqkd/protocol_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mzqkd/errors.hpp"

namespace mzqkd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::array<double, 4> kSign{1.0, 1.0, 1.0, -1.0};

std::optional<double> burst_rate(const ProtocolConfig& config, std::size_t subblock) {
    for (const auto& burst : config.bursts) {
        if (burst.subblock == subblock) return burst.gamma_p;
    }
    return std::nullopt;
}

}  // namespace

void ChannelModel::validate() const {
    if (!(alpha_db_per_km >= 0.0)) throw DomainError("attenuation must be non-negative");
    if (!(eta_det > 0.0 && eta_det <= 1.0)) throw DomainError("eta_det must lie in (0, 1]");
    if (!(false_herald_rate >= 0.0 && false_herald_rate < 1.0)) {
        throw DomainError("false_herald_rate must lie in [0, 1)");
    }
    if (!(bsm_factor >= 0.0 && bsm_factor <= 1.0)) throw DomainError("bsm_factor must lie in [0, 1]");
    for (double e : erasure_xy) {
        if (!(e >= 0.0 && e < 1.0)) throw DomainError("erasure probabilities must lie in [0, 1)");
    }
    if (!(erasure_key >= 0.0 && erasure_key < 1.0)) throw DomainError("erasure probabilities must lie in [0, 1)");
}

double herald_probability(double length_km, const ChannelModel& channel) {
    if (!(length_km >= 0.0)) throw DomainError("distance must be non-negative");
    return channel.bsm_factor * channel.eta_det * channel.eta_det *
           std::pow(10.0, -channel.alpha_db_per_km * length_km / 10.0);
}

double total_herald_probability(double length_km, const ChannelModel& channel) {
    const double p = herald_probability(length_km, channel);
    return p + (1.0 - p) * channel.false_herald_rate;
}

double effective_false_herald_fraction(double length_km, const ChannelModel& channel, const ErrorBudget& budget) {
    // without dark heralds every herald is a true one, even where the herald
    // probability itself underflows
    if (channel.false_herald_rate == 0.0) return budget.zeta;
    const double p_true = herald_probability(length_km, channel);
    const double p_total = total_herald_probability(length_km, channel);
    if (p_total == 0.0) return 1.0;
    const double true_share = p_true / p_total;
    return 1.0 - true_share * (1.0 - budget.zeta);
}

void ProtocolConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("gamma must lie in (0, 1]");
    if (!(gamma_min <= gamma && gamma <= gamma_max)) throw DomainError("gamma must lie in [gamma_min, gamma_max]");
    if (subblock_count == 0) throw DomainError("subblock_count must be positive");
    if (!(r0 > 0.0)) throw DomainError("R0 must be positive");
    if (multiplex_k == 0) throw DomainError("multiplex_k must be positive");
    if (adaptive.window < 2) throw DomainError("adaptive window must hold at least two sub-blocks");
    for (const auto& burst : bursts) {
        if (burst.subblock >= subblock_count) throw DomainError("burst sub-block index out of range");
        if (!(burst.gamma_p >= 0.0)) throw DomainError("burst poisoning rate must be non-negative");
    }
}

void Tally::add(const RoundRecord& round) {
    ++attempts;
    if (!round.heralded) return;
    ++heralded;
    if (round.false_herald) ++false_heralds;
    if (round.watchdog_discard) ++watchdog_discards;
    if (round.dwell_discard) ++dwell_discards;
    const bool discarded = round.watchdog_discard || round.dwell_discard;
    const bool erased = !discarded && (*round.a == Outcome::Erasure);

    if (round.type == RoundType::Test) {
        SettingCell& cell = test[2 * round.settings->x + round.settings->y];
        ++cell.heralded;
        if (discarded) {
            ++cell.discards;
        } else if (erased) {
            ++cell.erasures;
        } else {
            ++cell.counts[2 * static_cast<int>(*round.a) + static_cast<int>(*round.b)];
        }
    } else {
        ++key.heralded;
        if (discarded) {
            ++key.discards;
        } else if (erased) {
            ++key.erasures;
        } else if (*round.a == *round.b) {
            ++key.agree;
        } else {
            ++key.disagree;
        }
    }
}

Tally& Tally::operator+=(const Tally& other) {
    attempts += other.attempts;
    heralded += other.heralded;
    false_heralds += other.false_heralds;
    watchdog_discards += other.watchdog_discards;
    dwell_discards += other.dwell_discards;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) test[i].counts[j] += other.test[i].counts[j];
        test[i].erasures += other.test[i].erasures;
        test[i].discards += other.test[i].discards;
        test[i].heralded += other.test[i].heralded;
    }
    key.agree += other.key.agree;
    key.disagree += other.key.disagree;
    key.erasures += other.key.erasures;
    key.discards += other.key.discards;
    key.heralded += other.key.heralded;
    return *this;
}

std::uint64_t Tally::test_detected() const {
    std::uint64_t n = 0;
    for (const auto& cell : test) n += cell.detected();
    return n;
}

std::uint64_t Tally::valid_rounds() const { return test_detected() + key.detected(); }

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t block_index, std::uint64_t chain_index) {
    return splitmix64(splitmix64(splitmix64(seed) ^ block_index) ^ (chain_index * 0xd1b54a32d192ed03ULL));
}

RoundSampler::RoundSampler(const ErrorBudget& budget, const TimingModel& timing, const BraidSchedule& schedule,
                           const ChannelModel& channel, std::uint64_t seed)
    : budget_(budget),
      timing_(timing),
      channel_(channel),
      dwell_(effective_dwell(timing)),
      p_true_herald_(herald_probability(timing.length_m / 1000.0, channel)),
      rng_(seed) {
    const auto ideal = chsh_optimal_correlators();
    for (std::size_t i = 0; i < 4; ++i) {
        test_correlator_[i] = setting_state_visibility(budget, schedule.m_xy[i]) * ideal[i];
    }
    key_correlator_ = setting_state_visibility(budget, schedule.m_key);
}

RoundRecord RoundSampler::next(double gamma, std::optional<double> gamma_p_override) {
    RoundRecord r;
    const bool true_herald = bernoulli(p_true_herald_);
    const bool dark_herald = !true_herald && bernoulli(channel_.false_herald_rate);
    if (!true_herald && !dark_herald) return r;
    r.heralded = true;

    // Settings are chosen locally before anything about the round is known.
    double correlator = key_correlator_;
    double erasure = channel_.erasure_key;
    if (bernoulli(gamma)) {
        r.type = RoundType::Test;
        r.settings = Settings{bit(), bit()};
        const std::size_t cell = 2 * r.settings->x + r.settings->y;
        correlator = test_correlator_[cell];
        erasure = channel_.erasure_xy[cell];
    }

    const double gamma_p = gamma_p_override.value_or(budget_.gamma_p);
    if (gamma_p > 0.0 && bernoulli(-std::expm1(-gamma_p * timing_.t_idle))) {
        r.watchdog_discard = true;
        return r;
    }
    const double tau = dwell_.sample(rng_);
    if (tau > timing_.tau_max) {
        r.dwell_discard = true;
        return r;
    }

    r.false_herald = dark_herald || bernoulli(budget_.zeta);
    if (r.false_herald) correlator = 0.0;

    std::uint8_t a = bit();
    std::uint8_t b = bernoulli((1.0 + correlator) / 2.0) ? a : static_cast<std::uint8_t>(a ^ 1U);
    if (gamma_p > 0.0 && bernoulli(-0.5 * std::expm1(-gamma_p * tau))) a ^= 1U;
    if (bernoulli(budget_.p_r)) a ^= 1U;
    if (bernoulli(budget_.p_r)) b ^= 1U;

    if (bernoulli(erasure)) {
        r.a = Outcome::Erasure;
        r.b = Outcome::Erasure;
    } else {
        r.a = static_cast<Outcome>(a);
        r.b = static_cast<Outcome>(b);
    }
    return r;
}

BlockTally simulate_block(const ProtocolConfig& config, const ErrorBudget& budget, const TimingModel& timing,
                          const BraidSchedule& schedule, const ChannelModel& channel, std::uint64_t block_index,
                          std::uint64_t chain_index) {
    config.validate();
    budget.validate();
    timing.validate();
    schedule.validate();
    channel.validate();

    RoundSampler sampler(budget, timing, schedule, channel, stream_seed(config.seed, block_index, chain_index));
    BlockTally block;
    block.subblocks.resize(config.subblock_count);
    std::vector<double> history;
    double gamma = config.gamma;

    const std::uint64_t n = config.block_size;
    const std::uint64_t k = config.subblock_count;
    for (std::uint64_t s = 0; s < k; ++s) {
        // boundaries floor(s N / K) without overflow
        const std::uint64_t begin = (n / k) * s + (n % k) * s / k;
        const std::uint64_t end = (n / k) * (s + 1) + (n % k) * (s + 1) / k;
        const auto burst = burst_rate(config, s);
        Tally& sub = block.subblocks[s];
        for (std::uint64_t i = begin; i < end; ++i) sub.add(sampler.next(gamma, burst));
        block.total += sub;
        block.gamma_trace.push_back(gamma);

        if (config.adaptive.enabled) {
            try {
                history.push_back(estimate_chsh(sub).s_hat);
            } catch (const InsufficientStatistics&) {
                continue;
            }
            const std::size_t w = std::min(history.size(), config.adaptive.window);
            gamma = adaptive_gamma(std::span<const double>(history).last(w), gamma, config);
        }
    }
    return block;
}

ChshStatistics estimate_chsh(const Tally& tally) {
    ChshStatistics st;
    double variance = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const SettingCell& cell = tally.test[i];
        const std::uint64_t detected = cell.detected();
        if (detected == 0 || cell.heralded == 0) {
            throw InsufficientStatistics("setting pair without detected test events");
        }
        const double same = static_cast<double>(cell.counts[0] + cell.counts[3]);
        const double diff = static_cast<double>(cell.counts[1] + cell.counts[2]);
        const double e = (same - diff) / static_cast<double>(detected);
        st.correlators[i] = e;
        st.detected[i] = detected;
        st.eta[i] = static_cast<double>(detected) / static_cast<double>(cell.heralded);
        st.s_hat += kSign[i] * e;
        variance += (1.0 - e * e) / static_cast<double>(detected);
    }
    st.sigma = std::sqrt(variance);
    st.eta_bar = std::accumulate(st.eta.begin(), st.eta.end(), 0.0) / 4.0;
    for (double eta : st.eta) st.delta_eta = std::max(st.delta_eta, std::abs(eta - st.eta_bar));
    st.key_detected = tally.key.detected();
    if (st.key_detected > 0) {
        st.key_qber = static_cast<double>(tally.key.disagree) / static_cast<double>(st.key_detected);
    }
    return st;
}

AuditResult audit_efficiencies(const ChshStatistics& stats, const PenaltyConfig& config) {
    return stats.delta_eta > config.delta_eta_max ? AuditResult::Abort : AuditResult::Pass;
}

double adaptive_gamma(std::span<const double> history, double gamma, const ProtocolConfig& config) {
    if (history.size() < 2) return gamma;
    const double mean = std::accumulate(history.begin(), history.end(), 0.0) / static_cast<double>(history.size());
    double ss = 0.0;
    for (double s : history) ss += (s - mean) * (s - mean);
    const double sd = std::sqrt(ss / static_cast<double>(history.size() - 1));
    if (sd > config.adaptive.sigma_max) return std::min(config.gamma_max, config.adaptive.growth * gamma);
    return std::max(config.gamma_min, config.adaptive.decay * gamma);
}

SalvageResult salvage(const BlockTally& tally, const SalvagePolicy& policy) {
    SalvageResult result;
    if (!policy.enabled) {
        result.retained = tally;
        result.empty = tally.empty();
        return result;
    }
    std::uint64_t kept_attempts = 0;
    for (std::size_t s = 0; s < tally.subblocks.size(); ++s) {
        const Tally& sub = tally.subblocks[s];
        bool drop = false;
        if (sub.heralded > 0) {
            const double discard_fraction =
                static_cast<double>(sub.watchdog_discards) / static_cast<double>(sub.heralded);
            drop = discard_fraction > policy.discard_threshold;
        }
        if (!drop && policy.qber_threshold && sub.key.detected() > 0) {
            const double qber = static_cast<double>(sub.key.disagree) / static_cast<double>(sub.key.detected());
            drop = qber > *policy.qber_threshold;
        }
        if (drop) {
            result.dropped.push_back(s);
            continue;
        }
        result.retained.subblocks.push_back(sub);
        result.retained.total += sub;
        if (s < tally.gamma_trace.size()) result.retained.gamma_trace.push_back(tally.gamma_trace[s]);
        kept_attempts += sub.attempts;
    }
    result.retention = tally.total.attempts == 0
                           ? 0.0
                           : static_cast<double>(kept_attempts) / static_cast<double>(tally.total.attempts);
    result.empty = result.retained.empty();
    return result;
}

LinkExpectation expected_link(const ErrorBudget& budget, const TimingModel& timing, const BraidSchedule& schedule,
                              const ChannelModel& channel) {
    LinkExpectation link;
    link.length_km = timing.length_m / 1000.0;
    const DwellDistribution dwell = effective_dwell(timing);
    link.tau = truncated_mean_dwell(dwell, timing.tau_max);
    link.p_bar_p = mean_poisoning_prob(budget.gamma_p, dwell, timing.tau_max);
    link.zeta_eff = effective_false_herald_fraction(link.length_km, channel, budget);
    link.herald_prob = total_herald_probability(link.length_km, channel);
    link.watchdog_prob = -std::expm1(-budget.gamma_p * timing.t_idle);
    link.dwell_discard_prob = dwell_discard_prob(dwell, timing.tau_max);

    ErrorBudget effective = budget;
    effective.zeta = link.zeta_eff;
    link.v_iso = visibility_isotropic(effective, schedule.k_bar(), link.p_bar_p);
    link.s_isotropic = s_from_visibility(link.v_iso.value);

    // Security uses the per-setting model the sampler draws from. Readout
    // flips act on both parties, hence (1 - 2 p_r)^2 where the linearized
    // model charges 2 p_r.
    const double damping = (1.0 - link.zeta_eff) * (1.0 - 2.0 * link.p_bar_p) * (1.0 - 2.0 * budget.p_r) *
                           (1.0 - 2.0 * budget.p_r);
    const auto ideal = chsh_optimal_correlators();
    for (std::size_t i = 0; i < 4; ++i) {
        link.s_expected += kSign[i] * ideal[i] * damping * setting_state_visibility(budget, schedule.m_xy[i]);
    }
    link.v_eff = link.s_expected / kTsirelson;
    link.qber = (1.0 - damping * setting_state_visibility(budget, schedule.m_key)) / 2.0;

    const double kept = (1.0 - link.watchdog_prob) * (1.0 - link.dwell_discard_prob);
    double eta_bar = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        link.eta[i] = kept * (1.0 - channel.erasure_xy[i]);
        eta_bar += link.eta[i] / 4.0;
    }
    for (double eta : link.eta) link.delta_eta = std::max(link.delta_eta, std::abs(eta - eta_bar));
    return link;
}

double block_rate_bps(std::uint64_t ell_total, const ProtocolConfig& config) {
    const double rate = static_cast<double>(ell_total) * config.r0 / static_cast<double>(config.block_size);
    return config.postprocessing_cap_bps ? std::min(rate, *config.postprocessing_cap_bps) : rate;
}

namespace {

// The drift bound is a property of the hardware; the budget's value wins.
SecurityConfig effective_security(const ProtocolScenario& sc) {
    SecurityConfig security = sc.security;
    security.penalty.delta_cal = sc.budget.delta_cal;
    return security;
}

struct ChainOutcome {
    KeyLengthReport report;
    BlockTally tally;
    std::optional<ChshStatistics> stats;
    SalvageResult salvage;
};

ChainOutcome run_chain(const ProtocolScenario& sc, double s_expected, std::uint64_t chain) {
    ChainOutcome out;
    out.tally = simulate_block(sc.protocol, sc.budget, sc.timing, sc.schedule, sc.channel, 0, chain);
    out.salvage = salvage(out.tally, sc.salvage);

    const SecurityConfig security = effective_security(sc);
    KeyLengthReport& r = out.report;
    r.delta_cal = security.penalty.delta_cal;
    if (out.salvage.empty) {
        r.insufficient_statistics = true;
        r.s_final = -std::numeric_limits<double>::infinity();
        r.abort_reason = "no heralded rounds";
        return out;
    }
    try {
        out.stats = estimate_chsh(out.salvage.retained.total);
    } catch (const InsufficientStatistics& e) {
        r.insufficient_statistics = true;
        r.s_final = -std::numeric_limits<double>::infinity();
        r.abort_reason = e.what();
        return out;
    }
    const ChshStatistics& st = *out.stats;
    if (audit_efficiencies(st, security.penalty) == AuditResult::Abort || st.delta_eta > 0.5) {
        r.aborted = true;
        r.s_hat = st.s_hat;
        r.s_final = -std::numeric_limits<double>::infinity();
        r.abort_reason = "efficiency asymmetry above delta_eta_max";
        return out;
    }
    const Tally& t = out.salvage.retained.total;
    BlockObservables obs;
    obs.n = t.key.detected();
    obs.m_test = t.test_detected();
    obs.valid_rounds = t.valid_rounds();
    obs.s_hat = st.s_hat;
    obs.s_expected = s_expected;
    obs.delta_eta = st.delta_eta;
    obs.qber = std::min(0.5, st.key_qber.value_or(0.5));
    r = assess_block(obs, security);
    return out;
}

}  // namespace

ProtocolRun run_protocol(const ProtocolScenario& sc) {
    sc.security.eps.validate();
    sc.security.penalty.validate();
    const double s_expected = expected_link(sc.budget, sc.timing, sc.schedule, sc.channel).s_expected;

    ProtocolRun run;
    ChainOutcome first = run_chain(sc, s_expected, 0);
    run.total_ell = first.report.ell;
    const std::size_t k = sc.protocol.multiplex_k;
    if (sc.protocol.identical_chain_seeds) {
        run.total_ell = first.report.ell * k;
    } else {
        for (std::size_t c = 1; c < k; ++c) run.total_ell += run_chain(sc, s_expected, c).report.ell;
    }
    run.report = std::move(first.report);
    run.report.rate_bps = block_rate_bps(run.total_ell, sc.protocol);
    run.tally = std::move(first.tally);
    run.stats = std::move(first.stats);
    run.salvage = std::move(first.salvage);
    return run;
}

KeyLengthReport analyze_block(const ProtocolScenario& sc) {
    sc.protocol.validate();
    sc.budget.validate();
    sc.timing.validate();
    sc.schedule.validate();
    sc.channel.validate();
    sc.security.eps.validate();
    sc.security.penalty.validate();

    const LinkExpectation link = expected_link(sc.budget, sc.timing, sc.schedule, sc.channel);
    const ProtocolConfig& p = sc.protocol;
    const double kept = static_cast<double>(p.block_size) * link.herald_prob * (1.0 - link.watchdog_prob) *
                        (1.0 - link.dwell_discard_prob);
    double test_detect = 0.0;
    for (double e : sc.channel.erasure_xy) test_detect += (1.0 - e) / 4.0;
    const double test_valid = kept * p.gamma * test_detect;
    const double key_valid = kept * (1.0 - p.gamma) * (1.0 - sc.channel.erasure_key);

    BlockObservables obs;
    obs.n = static_cast<std::uint64_t>(std::floor(key_valid));
    obs.m_test = static_cast<std::uint64_t>(std::floor(test_valid));
    obs.valid_rounds = static_cast<std::uint64_t>(std::floor(test_valid + key_valid));
    obs.s_hat = link.s_expected;
    obs.s_expected = link.s_expected;
    obs.delta_eta = link.delta_eta;
    obs.qber = link.qber;

    KeyLengthReport r = assess_block(obs, effective_security(sc));
    r.rate_bps = block_rate_bps(r.ell * p.multiplex_k, p);
    return r;
}

}  // namespace mzqkd
