#include "mzqkd/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "mzqkd/errors.hpp"

namespace mzqkd {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

double to_double(std::string_view text, std::string_view key) {
    const std::string s(trim(text));
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw UsageError(fmt::format("{}: '{}' is not a number", key, s));
    }
    if (used != s.size()) throw UsageError(fmt::format("{}: '{}' is not a number", key, s));
    return v;
}

std::uint64_t to_count(std::string_view text, std::string_view key) {
    const double v = to_double(text, key);
    if (!(v >= 0.0) || v != std::floor(v) || v > 1.8e19) {
        throw UsageError(fmt::format("{}: expected a non-negative integer", key));
    }
    return static_cast<std::uint64_t>(v);
}

bool to_bool(std::string_view text, std::string_view key) {
    const auto s = trim(text);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw UsageError(fmt::format("{}: expected true or false", key));
}

std::vector<double> to_list(std::string_view text, std::string_view key) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto item = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        if (!trim(item).empty()) out.push_back(to_double(item, key));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

std::optional<double> to_auto(std::string_view text, std::string_view key, std::string_view word) {
    if (trim(text) == word) return std::nullopt;
    return to_double(text, key);
}

std::string num(double v) { return fmt::format("{}", v); }

std::string list(const auto& values) {
    std::string out;
    for (const auto& v : values) {
        if (!out.empty()) out += ", ";
        out += fmt::format("{}", v);
    }
    return out;
}

using Setter = std::function<void(Configuration&, std::string_view)>;

std::map<std::string, Setter, std::less<>> make_setters() {
    std::map<std::string, Setter, std::less<>> s;

    const std::array<std::pair<const char*, TierName>, 3> tiers{{{"conservative", TierName::Conservative},
                                                                 {"target", TierName::Target},
                                                                 {"optimistic", TierName::Optimistic}}};
    for (const auto& [name, id] : tiers) {
        const std::size_t i = static_cast<std::size_t>(id);
        const std::string p = std::string("tier.") + name + ".";
        s[p + "p_r"] = [i](Configuration& c, std::string_view v) { c.tiers[i].budget.p_r = to_double(v, "p_r"); };
        s[p + "p_b"] = [i](Configuration& c, std::string_view v) { c.tiers[i].budget.p_b = to_double(v, "p_b"); };
        s[p + "gamma_p"] = [i](Configuration& c, std::string_view v) {
            c.tiers[i].budget.gamma_p = to_double(v, "gamma_p");
        };
        s[p + "zeta"] = [i](Configuration& c, std::string_view v) { c.tiers[i].budget.zeta = to_double(v, "zeta"); };
        s[p + "p_dep"] = [i](Configuration& c, std::string_view v) { c.tiers[i].budget.p_dep = to_double(v, "p_dep"); };
        s[p + "delta_cal"] = [i](Configuration& c, std::string_view v) {
            c.tiers[i].budget.delta_cal = to_double(v, "delta_cal");
        };
    }

    s["timing.c_fiber"] = [](Configuration& c, std::string_view v) { c.timing.c_fiber = to_double(v, "c_fiber"); };
    s["timing.t_braid"] = [](Configuration& c, std::string_view v) { c.timing.t_braid = to_double(v, "t_braid"); };
    s["timing.t_readout"] = [](Configuration& c, std::string_view v) {
        c.timing.t_readout = to_double(v, "t_readout");
    };
    s["timing.tau_overhead"] = [](Configuration& c, std::string_view v) {
        c.timing.tau_overhead = to_double(v, "tau_overhead");
    };
    s["timing.tau_max"] = [](Configuration& c, std::string_view v) { c.timing.tau_max = to_double(v, "tau_max"); };
    s["timing.t_idle"] = [](Configuration& c, std::string_view v) { c.timing.t_idle = to_double(v, "t_idle"); };
    s["timing.dwell"] = [](Configuration& c, std::string_view v) {
        const auto kind = trim(v);
        if (kind == "degenerate") {
            c.dwell.kind = DwellDistribution::Kind::Degenerate;
        } else if (kind == "exponential") {
            c.dwell.kind = DwellDistribution::Kind::Exponential;
        } else if (kind == "histogram") {
            c.dwell.kind = DwellDistribution::Kind::Histogram;
        } else {
            throw UsageError("timing.dwell: expected degenerate, exponential or histogram");
        }
    };
    s["timing.dwell_mean"] = [](Configuration& c, std::string_view v) {
        c.dwell.mean = to_auto(v, "dwell_mean", "auto");
    };
    s["timing.dwell_edges"] = [](Configuration& c, std::string_view v) { c.dwell.edges = to_list(v, "dwell_edges"); };
    s["timing.dwell_weights"] = [](Configuration& c, std::string_view v) {
        c.dwell.weights = to_list(v, "dwell_weights");
    };

    s["schedule.m_xy"] = [](Configuration& c, std::string_view v) {
        const auto values = to_list(v, "m_xy");
        if (values.size() != 4) throw UsageError("schedule.m_xy: expected four braid depths");
        for (std::size_t i = 0; i < 4; ++i) c.schedule.m_xy[i] = static_cast<int>(to_count(num(values[i]), "m_xy"));
    };
    s["schedule.m_key"] = [](Configuration& c, std::string_view v) {
        c.schedule.m_key = static_cast<int>(to_count(v, "m_key"));
    };

    s["channel.alpha_db_per_km"] = [](Configuration& c, std::string_view v) {
        c.channel.alpha_db_per_km = to_double(v, "alpha_db_per_km");
    };
    s["channel.eta_det"] = [](Configuration& c, std::string_view v) { c.channel.eta_det = to_double(v, "eta_det"); };
    s["channel.false_herald_rate"] = [](Configuration& c, std::string_view v) {
        c.channel.false_herald_rate = to_double(v, "false_herald_rate");
    };
    s["channel.bsm_factor"] = [](Configuration& c, std::string_view v) {
        c.channel.bsm_factor = to_double(v, "bsm_factor");
    };
    s["channel.erasure_xy"] = [](Configuration& c, std::string_view v) {
        const auto values = to_list(v, "erasure_xy");
        if (values.size() != 4) throw UsageError("channel.erasure_xy: expected four probabilities");
        std::copy(values.begin(), values.end(), c.channel.erasure_xy.begin());
    };
    s["channel.erasure_key"] = [](Configuration& c, std::string_view v) {
        c.channel.erasure_key = to_double(v, "erasure_key");
    };

    s["protocol.gamma"] = [](Configuration& c, std::string_view v) { c.protocol.gamma = to_double(v, "gamma"); };
    s["protocol.gamma_min"] = [](Configuration& c, std::string_view v) {
        c.protocol.gamma_min = to_double(v, "gamma_min");
    };
    s["protocol.gamma_max"] = [](Configuration& c, std::string_view v) {
        c.protocol.gamma_max = to_double(v, "gamma_max");
    };
    s["protocol.block_size"] = [](Configuration& c, std::string_view v) {
        c.protocol.block_size = to_count(v, "block_size");
    };
    s["protocol.subblock_count"] = [](Configuration& c, std::string_view v) {
        c.protocol.subblock_count = to_count(v, "subblock_count");
    };
    s["protocol.r0"] = [](Configuration& c, std::string_view v) { c.protocol.r0 = to_double(v, "r0"); };
    s["protocol.seed"] = [](Configuration& c, std::string_view v) { c.protocol.seed = to_count(v, "seed"); };
    s["protocol.multiplex_k"] = [](Configuration& c, std::string_view v) {
        c.protocol.multiplex_k = to_count(v, "multiplex_k");
    };
    s["protocol.identical_chain_seeds"] = [](Configuration& c, std::string_view v) {
        c.protocol.identical_chain_seeds = to_bool(v, "identical_chain_seeds");
    };
    s["protocol.postprocessing_cap_bps"] = [](Configuration& c, std::string_view v) {
        c.protocol.postprocessing_cap_bps = to_auto(v, "postprocessing_cap_bps", "none");
    };
    s["protocol.adaptive.enabled"] = [](Configuration& c, std::string_view v) {
        c.protocol.adaptive.enabled = to_bool(v, "adaptive.enabled");
    };
    s["protocol.adaptive.sigma_max"] = [](Configuration& c, std::string_view v) {
        c.protocol.adaptive.sigma_max = to_double(v, "adaptive.sigma_max");
    };
    s["protocol.adaptive.window"] = [](Configuration& c, std::string_view v) {
        c.protocol.adaptive.window = to_count(v, "adaptive.window");
    };
    s["protocol.adaptive.growth"] = [](Configuration& c, std::string_view v) {
        c.protocol.adaptive.growth = to_double(v, "adaptive.growth");
    };
    s["protocol.adaptive.decay"] = [](Configuration& c, std::string_view v) {
        c.protocol.adaptive.decay = to_double(v, "adaptive.decay");
    };

    // epsilon.total is applied first (see parse_configuration)
    s["epsilon.pe"] = [](Configuration& c, std::string_view v) { c.security.eps.pe = to_double(v, "epsilon.pe"); };
    s["epsilon.eat"] = [](Configuration& c, std::string_view v) { c.security.eps.eat = to_double(v, "epsilon.eat"); };
    s["epsilon.s"] = [](Configuration& c, std::string_view v) { c.security.eps.s = to_double(v, "epsilon.s"); };
    s["epsilon.ec"] = [](Configuration& c, std::string_view v) { c.security.eps.ec = to_double(v, "epsilon.ec"); };
    s["epsilon.pa"] = [](Configuration& c, std::string_view v) { c.security.eps.pa = to_double(v, "epsilon.pa"); };
    s["epsilon.auth"] = [](Configuration& c, std::string_view v) {
        c.security.eps.auth = to_double(v, "epsilon.auth");
    };

    s["penalty.lambda_coeff"] = [](Configuration& c, std::string_view v) {
        c.security.penalty.lambda_coeff = to_double(v, "lambda_coeff");
    };
    s["penalty.delta_eta_max"] = [](Configuration& c, std::string_view v) {
        c.security.penalty.delta_eta_max = to_double(v, "delta_eta_max");
    };
    s["security.f_ec"] = [](Configuration& c, std::string_view v) { c.security.f_ec = to_double(v, "f_ec"); };
    s["security.variance_proxy"] = [](Configuration& c, std::string_view v) {
        c.security.variance_proxy = to_auto(v, "variance_proxy", "auto");
    };
    s["security.c_eat"] = [](Configuration& c, std::string_view v) {
        c.security.c_eat = to_auto(v, "c_eat", "auto");
    };

    s["salvage.enabled"] = [](Configuration& c, std::string_view v) { c.salvage.enabled = to_bool(v, "salvage"); };
    s["salvage.discard_threshold"] = [](Configuration& c, std::string_view v) {
        c.salvage.discard_threshold = to_double(v, "discard_threshold");
    };
    s["salvage.qber_threshold"] = [](Configuration& c, std::string_view v) {
        c.salvage.qber_threshold = to_auto(v, "qber_threshold", "none");
    };

    s["sweep.length_km"] = [](Configuration& c, std::string_view v) { c.length_km = to_double(v, "length_km"); };
    s["sweep.multiplex_length_km"] = [](Configuration& c, std::string_view v) {
        c.multiplex_length_km = to_double(v, "multiplex_length_km");
    };
    return s;
}

const std::map<std::string, Setter, std::less<>>& setters() {
    static const auto table = make_setters();
    return table;
}

std::string dwell_kind_name(DwellDistribution::Kind kind) {
    switch (kind) {
        case DwellDistribution::Kind::Degenerate: return "degenerate";
        case DwellDistribution::Kind::Exponential: return "exponential";
        case DwellDistribution::Kind::Histogram: return "histogram";
    }
    return "degenerate";
}

}  // namespace

const Tier& Configuration::tier(TierName name) const { return tiers[static_cast<std::size_t>(name)]; }

Configuration default_configuration() { return Configuration{}; }

Configuration parse_configuration(std::string_view text) {
    // Collect first so that the result does not depend on line order.
    std::map<std::string, std::pair<std::string, int>, std::less<>> entries;
    int line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = text.find('\n', pos);
        std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
        ++line_no;
        pos = end == std::string_view::npos ? text.size() + 1 : end + 1;

        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw UsageError(fmt::format("config line {}: expected 'key = value'", line_no));
        }
        const std::string key(trim(line.substr(0, eq)));
        const std::string value(trim(line.substr(eq + 1)));
        if (key != "epsilon.total" && !setters().contains(key)) {
            throw UsageError(fmt::format("config line {}: unknown key '{}'", line_no, key));
        }
        if (entries.contains(key)) throw UsageError(fmt::format("config line {}: duplicate key '{}'", line_no, key));
        entries[key] = {value, line_no};
    }

    Configuration config;
    if (const auto it = entries.find("epsilon.total"); it != entries.end()) {
        config.security.eps = EpsilonBudget::equal_split(to_double(it->second.first, "epsilon.total"));
    }
    for (const auto& [key, entry] : entries) {
        if (key == "epsilon.total") continue;
        try {
            setters().at(key)(config, entry.first);
        } catch (const UsageError& e) {
            throw UsageError(fmt::format("config line {}: {}", entry.second, e.what()));
        }
    }

    try {
        for (const auto& tier : config.tiers) tier.budget.validate();
        config.schedule.validate();
        config.channel.validate();
        config.protocol.validate();
        config.security.eps.validate();
        config.security.penalty.validate();
        if (config.dwell.kind == DwellDistribution::Kind::Histogram) {
            (void)DwellDistribution::histogram(config.dwell.edges, config.dwell.weights);
        }
    } catch (const std::exception& e) {
        throw UsageError(std::string("invalid configuration: ") + e.what());
    }
    return config;
}

Configuration load_configuration(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_configuration(buffer.str());
}

std::string canonical_text(const Configuration& c) {
    std::map<std::string, std::string> kv;
    for (const auto& tier : c.tiers) {
        const std::string p = "tier." + to_string(tier.name) + ".";
        kv[p + "p_r"] = num(tier.budget.p_r);
        kv[p + "p_b"] = num(tier.budget.p_b);
        kv[p + "gamma_p"] = num(tier.budget.gamma_p);
        kv[p + "zeta"] = num(tier.budget.zeta);
        kv[p + "p_dep"] = num(tier.budget.p_dep);
        kv[p + "delta_cal"] = num(tier.budget.delta_cal);
    }
    kv["timing.c_fiber"] = num(c.timing.c_fiber);
    kv["timing.t_braid"] = num(c.timing.t_braid);
    kv["timing.t_readout"] = num(c.timing.t_readout);
    kv["timing.tau_overhead"] = num(c.timing.tau_overhead);
    kv["timing.tau_max"] = num(c.timing.tau_max);
    kv["timing.t_idle"] = num(c.timing.t_idle);
    kv["timing.dwell"] = dwell_kind_name(c.dwell.kind);
    kv["timing.dwell_mean"] = c.dwell.mean ? num(*c.dwell.mean) : "auto";
    kv["timing.dwell_edges"] = list(c.dwell.edges);
    kv["timing.dwell_weights"] = list(c.dwell.weights);
    kv["schedule.m_xy"] = list(c.schedule.m_xy);
    kv["schedule.m_key"] = fmt::format("{}", c.schedule.m_key);
    kv["channel.alpha_db_per_km"] = num(c.channel.alpha_db_per_km);
    kv["channel.eta_det"] = num(c.channel.eta_det);
    kv["channel.false_herald_rate"] = num(c.channel.false_herald_rate);
    kv["channel.bsm_factor"] = num(c.channel.bsm_factor);
    kv["channel.erasure_xy"] = list(c.channel.erasure_xy);
    kv["channel.erasure_key"] = num(c.channel.erasure_key);
    kv["protocol.gamma"] = num(c.protocol.gamma);
    kv["protocol.gamma_min"] = num(c.protocol.gamma_min);
    kv["protocol.gamma_max"] = num(c.protocol.gamma_max);
    kv["protocol.block_size"] = fmt::format("{}", c.protocol.block_size);
    kv["protocol.subblock_count"] = fmt::format("{}", c.protocol.subblock_count);
    kv["protocol.r0"] = num(c.protocol.r0);
    kv["protocol.seed"] = fmt::format("{}", c.protocol.seed);
    kv["protocol.multiplex_k"] = fmt::format("{}", c.protocol.multiplex_k);
    kv["protocol.identical_chain_seeds"] = c.protocol.identical_chain_seeds ? "true" : "false";
    kv["protocol.postprocessing_cap_bps"] =
        c.protocol.postprocessing_cap_bps ? num(*c.protocol.postprocessing_cap_bps) : "none";
    kv["protocol.adaptive.enabled"] = c.protocol.adaptive.enabled ? "true" : "false";
    kv["protocol.adaptive.sigma_max"] = num(c.protocol.adaptive.sigma_max);
    kv["protocol.adaptive.window"] = fmt::format("{}", c.protocol.adaptive.window);
    kv["protocol.adaptive.growth"] = num(c.protocol.adaptive.growth);
    kv["protocol.adaptive.decay"] = num(c.protocol.adaptive.decay);
    kv["epsilon.pe"] = num(c.security.eps.pe);
    kv["epsilon.eat"] = num(c.security.eps.eat);
    kv["epsilon.s"] = num(c.security.eps.s);
    kv["epsilon.ec"] = num(c.security.eps.ec);
    kv["epsilon.pa"] = num(c.security.eps.pa);
    kv["epsilon.auth"] = num(c.security.eps.auth);
    kv["epsilon.total"] = num(c.security.eps.total);
    kv["penalty.lambda_coeff"] = num(c.security.penalty.lambda_coeff);
    kv["penalty.delta_eta_max"] = num(c.security.penalty.delta_eta_max);
    kv["security.f_ec"] = num(c.security.f_ec);
    kv["security.variance_proxy"] = c.security.variance_proxy ? num(*c.security.variance_proxy) : "auto";
    kv["security.c_eat"] = c.security.c_eat ? num(*c.security.c_eat) : "auto";
    kv["salvage.enabled"] = c.salvage.enabled ? "true" : "false";
    kv["salvage.discard_threshold"] = num(c.salvage.discard_threshold);
    kv["salvage.qber_threshold"] = c.salvage.qber_threshold ? num(*c.salvage.qber_threshold) : "none";
    kv["sweep.length_km"] = num(c.length_km);
    kv["sweep.multiplex_length_km"] = num(c.multiplex_length_km);

    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

std::string config_hash(const Configuration& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_text(config)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

ProtocolScenario make_scenario(const Configuration& config, const ErrorBudget& budget, double length_km) {
    ProtocolScenario sc;
    sc.protocol = config.protocol;
    sc.budget = budget;
    sc.timing = config.timing;
    sc.timing.length_m = length_km * 1000.0;
    switch (config.dwell.kind) {
        case DwellDistribution::Kind::Degenerate:
            sc.timing.dwell.reset();
            break;
        case DwellDistribution::Kind::Exponential:
            sc.timing.dwell = DwellDistribution::exponential(config.dwell.mean.value_or(dwell_time(sc.timing)));
            break;
        case DwellDistribution::Kind::Histogram:
            sc.timing.dwell = DwellDistribution::histogram(config.dwell.edges, config.dwell.weights);
            break;
    }
    sc.schedule = config.schedule;
    sc.channel = config.channel;
    sc.security = config.security;
    sc.security.penalty.delta_cal = budget.delta_cal;
    sc.salvage = config.salvage;
    return sc;
}

}  // namespace mzqkd
