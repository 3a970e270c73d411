#pragma once

// Flat key-value configuration with dotted section names, e.g.
//
//   # comment
//   tier.target.p_r = 0.004
//   channel.erasure_xy = 0, 0, 0, 0
//
// Every key is optional; unset keys keep the built-in defaults, which are
// the values written out in config/default.conf. See docs/config.md.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mzqkd/hardware_model.hpp"
#include "mzqkd/protocol_engine.hpp"
#include "mzqkd/security_bounds.hpp"

namespace mzqkd {

/// Dwell density as configured; exponential without an explicit mean follows
/// dwell_time() at each distance.
struct DwellSpec {
    DwellDistribution::Kind kind = DwellDistribution::Kind::Degenerate;
    std::optional<double> mean;
    std::vector<double> edges;
    std::vector<double> weights;
};

struct Configuration {
    std::array<Tier, 3> tiers = preset_tiers();
    TimingModel timing = [] {
        TimingModel t;
        t.tau_overhead = 1e-5;
        return t;
    }();  ///< length_m is set per evaluation
    DwellSpec dwell;
    BraidSchedule schedule;
    ChannelModel channel;
    ProtocolConfig protocol;
    SecurityConfig security;
    SalvagePolicy salvage;
    double length_km = 10.0;            ///< default distance for blocksize / landscape
    double multiplex_length_km = 50.0;  ///< default distance for multiplex

    const Tier& tier(TierName name) const;
};

Configuration default_configuration();

/// Parses configuration text on top of the defaults. Throws UsageError on
/// unknown keys or malformed values (message carries the line number).
Configuration parse_configuration(std::string_view text);

Configuration load_configuration(const std::filesystem::path& path);

/// Every key with its effective value, one "key = value" per line, sorted.
std::string canonical_text(const Configuration& config);

/// FNV-1a 64 of canonical_text(), as 16 hex digits.
std::string config_hash(const Configuration& config);

/// Scenario for one tier budget at one distance.
ProtocolScenario make_scenario(const Configuration& config, const ErrorBudget& budget, double length_km);

}  // namespace mzqkd
