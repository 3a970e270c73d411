#include "mzqkd/experiments.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <thread>

#include "mzqkd/errors.hpp"

namespace mzqkd {

namespace {

// Evaluates fn(0..count-1) on worker threads; results stay in index order.
template <class Row>
std::vector<Row> parallel_rows(std::size_t count, const std::function<Row(std::size_t)>& fn) {
    std::vector<Row> rows(count);
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) rows[i] = fn(i);
        return rows;
    }
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < count; i += workers) rows[i] = fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return rows;
}

std::string field(double v) { return fmt::format("{}", v); }

nlohmann::json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

struct Labeled {
    std::string label;
    ErrorBudget budget;
};

std::vector<Labeled> budgets_for(const Configuration& config, const SweepSpec& spec) {
    if (spec.budget) return {{"custom", *spec.budget}};
    std::vector<Labeled> out;
    for (TierName name : spec.tiers) out.push_back({to_string(name), config.tier(name).budget});
    return out;
}

double row_length(const Configuration& config, const SweepSpec& spec) {
    return spec.length_km.value_or(spec.kind == SweepKind::Multiplex ? config.multiplex_length_km : config.length_km);
}

// Analytic S_final at (budget, N, L), with -inf when no statistics survive.
double analytic_s_final(const Configuration& config, const ErrorBudget& budget, std::uint64_t block_size,
                        double length_km) {
    ProtocolScenario sc = make_scenario(config, budget, length_km);
    sc.protocol.block_size = block_size;
    return analyze_block(sc).s_final;
}

}  // namespace

std::string to_string(SweepKind kind) {
    switch (kind) {
        case SweepKind::Blocksize: return "blocksize";
        case SweepKind::Distance: return "distance";
        case SweepKind::Landscape: return "landscape";
        case SweepKind::Multiplex: return "multiplex";
        case SweepKind::Single: return "single";
    }
    return "single";
}

std::string to_string(EvalMode mode) { return mode == EvalMode::Analytic ? "analytic" : "simulate"; }

EvalMode parse_eval_mode(std::string_view text) {
    if (text == "analytic") return EvalMode::Analytic;
    if (text == "simulate") return EvalMode::Simulate;
    throw UsageError("mode must be 'analytic' or 'simulate'");
}

Grid Grid::explicit_values(std::vector<double> values) {
    if (values.empty()) throw UsageError("grid must not be empty");
    return Grid{std::move(values)};
}

Grid Grid::log_range(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0 && hi > 0.0)) throw UsageError("log-range grids need positive endpoints");
    if (n == 0) throw UsageError("grid must not be empty");
    if (n == 1) return Grid{{lo}};
    Grid g;
    const double a = std::log10(lo);
    const double b = std::log10(hi);
    for (std::size_t i = 0; i < n; ++i) {
        g.values.push_back(std::pow(10.0, a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1)));
    }
    g.values.front() = lo;
    g.values.back() = hi;
    return g;
}

Grid Grid::linear_range(double lo, double hi, double step) {
    if (!(step > 0.0) || hi < lo) throw UsageError("linear grid needs step > 0 and hi >= lo");
    Grid g;
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    for (std::size_t i = 0; i < count; ++i) g.values.push_back(lo + step * static_cast<double>(i));
    return g;
}

Grid Grid::per_decade(double lo, double hi, std::size_t per_decade) {
    if (!(lo > 0.0 && hi > 0.0)) throw UsageError("log-range grids need positive endpoints");
    const double decades = std::log10(hi / lo);
    const auto n = static_cast<std::size_t>(std::llround(decades * static_cast<double>(per_decade))) + 1;
    return log_range(lo, hi, n);
}

Grid Grid::parse(std::string_view text) {
    auto split = [](std::string_view s, char sep) {
        std::vector<std::string> parts;
        std::size_t start = 0;
        while (true) {
            const auto pos = s.find(sep, start);
            parts.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        return parts;
    };
    auto number = [](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw UsageError("bad grid value '" + s + "'");
        }
        if (used != s.size()) throw UsageError("bad grid value '" + s + "'");
        return v;
    };
    if (text.starts_with("log:") || text.starts_with("lin:")) {
        const auto parts = split(text.substr(4), ':');
        if (parts.size() != 3) throw UsageError("range grids are 'log:lo:hi:n' or 'lin:lo:hi:step'");
        if (text.starts_with("log:")) {
            const double n = number(parts[2]);
            if (!(n >= 1.0) || n != std::floor(n)) throw UsageError("log grid point count must be a positive integer");
            return log_range(number(parts[0]), number(parts[1]), static_cast<std::size_t>(n));
        }
        return linear_range(number(parts[0]), number(parts[1]), number(parts[2]));
    }
    std::vector<double> values;
    for (const auto& p : split(text, ',')) {
        if (!p.empty()) values.push_back(number(p));
    }
    return explicit_values(std::move(values));
}

SweepSpec default_spec(SweepKind kind, const Configuration& config) {
    SweepSpec spec;
    spec.kind = kind;
    spec.seed = config.protocol.seed;
    switch (kind) {
        case SweepKind::Blocksize:
            spec.grid = Grid::per_decade(1e3, 1e8, 6);
            break;
        case SweepKind::Distance:
            spec.grid = Grid::linear_range(0.0, 200.0, 2.0);
            break;
        case SweepKind::Landscape:
            spec.tiers = {TierName::Target};
            spec.grid = Grid::log_range(1e-4, 3e-2, 40);
            spec.grid2 = Grid::log_range(1e-3, 10.0, 40);
            break;
        case SweepKind::Multiplex:
            spec.tiers = {TierName::Target};
            spec.grid = Grid::explicit_values({1, 2, 4, 8, 16});
            break;
        case SweepKind::Single:
            spec.tiers = {TierName::Target};
            spec.grid = Grid::explicit_values({static_cast<double>(config.protocol.block_size)});
            break;
    }
    return spec;
}

ResultRow evaluate_point(const Configuration& config, const std::string& tier_label, const ErrorBudget& budget,
                         std::uint64_t block_size, double length_km, std::size_t k, EvalMode mode,
                         std::uint64_t seed) {
    ProtocolScenario sc = make_scenario(config, budget, length_km);
    sc.protocol.block_size = block_size;
    sc.protocol.multiplex_k = k;
    sc.protocol.seed = seed;
    const LinkExpectation link = expected_link(sc.budget, sc.timing, sc.schedule, sc.channel);

    ResultRow row;
    row.tier = tier_label;
    row.mode = to_string(mode);
    row.block_size = block_size;
    row.length_km = length_km;
    row.k = k;
    row.p_r = budget.p_r;
    row.gamma_p = budget.gamma_p;
    row.seed = seed;
    row.tau_s = link.tau;
    row.v_eff = link.v_eff;
    row.s_analytic = link.s_expected;

    KeyLengthReport report;
    if (mode == EvalMode::Analytic) {
        report = analyze_block(sc);
    } else {
        ProtocolRun run = run_protocol(sc);
        report = run.report;
        if (run.stats) {
            row.s_hat = run.stats->s_hat;
            row.sigma = run.stats->sigma;
        }
    }
    row.s_final = report.s_final;
    row.qber = report.qber;
    row.n = report.n;
    row.ell = report.ell;
    row.rate_per_round = report.rate_per_round;
    row.rate_bps = report.rate_bps;
    row.abort = report.aborted;
    return row;
}

std::vector<ResultRow> sweep_blocksize(const Configuration& config, const SweepSpec& spec) {
    const auto budgets = budgets_for(config, spec);
    const double length = row_length(config, spec);
    const std::size_t per = spec.grid.values.size();
    return parallel_rows<ResultRow>(budgets.size() * per, [&](std::size_t i) {
        const auto& b = budgets[i / per];
        const double n = spec.grid.values[i % per];
        if (!(n >= 1.0)) throw UsageError("block sizes must be at least 1");
        return evaluate_point(config, b.label, b.budget, static_cast<std::uint64_t>(std::llround(n)), length, 1,
                              spec.mode, stream_seed(spec.seed, i, 0));
    });
}

std::vector<ResultRow> sweep_distance(const Configuration& config, const SweepSpec& spec) {
    const auto budgets = budgets_for(config, spec);
    const std::uint64_t block = spec.block_size.value_or(config.protocol.block_size);
    const std::size_t per = spec.grid.values.size();
    return parallel_rows<ResultRow>(budgets.size() * per, [&](std::size_t i) {
        const auto& b = budgets[i / per];
        return evaluate_point(config, b.label, b.budget, block, spec.grid.values[i % per], 1, spec.mode,
                              stream_seed(spec.seed, i, 0));
    });
}

std::vector<ResultRow> sweep_landscape(const Configuration& config, const SweepSpec& spec) {
    const auto budgets = budgets_for(config, spec);
    const ErrorBudget base = budgets.front().budget;
    const double length = row_length(config, spec);
    const std::size_t per = spec.grid2.values.size();
    if (per == 0) throw UsageError("landscape needs a gamma_p grid");
    return parallel_rows<ResultRow>(spec.grid.values.size() * per, [&](std::size_t i) {
        ErrorBudget budget = base;
        budget.p_r = spec.grid.values[i / per];
        budget.gamma_p = spec.grid2.values[i % per];
        budget.validate();
        const ProtocolScenario sc = make_scenario(config, budget, length);
        const LinkExpectation link = expected_link(sc.budget, sc.timing, sc.schedule, sc.channel);
        ResultRow row;
        row.tier = budgets.front().label;
        row.mode = to_string(EvalMode::Analytic);
        row.length_km = length;
        row.p_r = budget.p_r;
        row.gamma_p = budget.gamma_p;
        row.tau_s = link.tau;
        row.v_eff = link.v_iso.value;
        row.s_analytic = link.s_isotropic;
        return row;
    });
}

std::vector<ResultRow> sweep_multiplex(const Configuration& config, const SweepSpec& spec) {
    const auto budgets = budgets_for(config, spec);
    const double length = row_length(config, spec);
    const std::uint64_t block = spec.block_size.value_or(config.protocol.block_size);
    const std::size_t per = spec.grid.values.size();
    return parallel_rows<ResultRow>(budgets.size() * per, [&](std::size_t i) {
        const auto& b = budgets[i / per];
        const double k = spec.grid.values[i % per];
        if (!(k >= 1.0) || k != std::floor(k)) throw UsageError("channel counts must be positive integers");
        // every k shares the seed so that chains are comparable across rows
        return evaluate_point(config, b.label, b.budget, block, length, static_cast<std::size_t>(k), spec.mode,
                              stream_seed(spec.seed, i / per, 0));
    });
}

std::vector<ResultRow> run_sweep(const Configuration& config, const SweepSpec& spec) {
    switch (spec.kind) {
        case SweepKind::Blocksize: return sweep_blocksize(config, spec);
        case SweepKind::Distance: return sweep_distance(config, spec);
        case SweepKind::Landscape: return sweep_landscape(config, spec);
        case SweepKind::Multiplex: return sweep_multiplex(config, spec);
        case SweepKind::Single: break;
    }
    throw UsageError("single runs are not sweeps");
}

std::string csv_header(SweepKind kind) {
    switch (kind) {
        case SweepKind::Blocksize: return "tier,N,L_km,S_final,n,ell,rate_per_round,rate_bps,abort";
        case SweepKind::Distance: return "tier,L_km,tau_s,V_eff,S_analytic,S_final,Q,ell,rate_bps,abort";
        case SweepKind::Landscape: return "p_r,gamma_p,L_km,V_eff,S";
        case SweepKind::Multiplex: return "tier,k,L_km,rate_bps";
        case SweepKind::Single: break;
    }
    throw UsageError("single runs have no CSV schema");
}

std::string to_csv(SweepKind kind, const std::vector<ResultRow>& rows) {
    std::string out = csv_header(kind) + "\n";
    for (const auto& r : rows) {
        switch (kind) {
            case SweepKind::Blocksize:
                out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.tier, r.block_size, field(r.length_km),
                                   field(r.s_final), r.n, r.ell, field(r.rate_per_round), field(r.rate_bps),
                                   r.abort ? 1 : 0);
                break;
            case SweepKind::Distance:
                out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.tier, field(r.length_km), field(r.tau_s),
                                   field(r.v_eff), field(r.s_analytic), field(r.s_final), field(r.qber), r.ell,
                                   field(r.rate_bps), r.abort ? 1 : 0);
                break;
            case SweepKind::Landscape:
                out += fmt::format("{},{},{},{},{}\n", field(r.p_r), field(r.gamma_p), field(r.length_km),
                                   field(r.v_eff), field(r.s_analytic));
                break;
            case SweepKind::Multiplex:
                out += fmt::format("{},{},{},{}\n", r.tier, r.k, field(r.length_km), field(r.rate_bps));
                break;
            case SweepKind::Single:
                break;
        }
    }
    return out;
}

nlohmann::json run_manifest(const Configuration& config, const SweepSpec& spec, std::size_t row_count) {
    nlohmann::json cfg = nlohmann::json::object();
    const std::string text = canonical_text(config);
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        const std::string line = text.substr(pos, end - pos);
        const auto eq = line.find(" = ");
        cfg[line.substr(0, eq)] = line.substr(eq + 3);
        pos = end + 1;
    }
    nlohmann::json tiers = nlohmann::json::array();
    for (TierName t : spec.tiers) tiers.push_back(to_string(t));

    nlohmann::json m;
    m["tool"] = "mzqkd";
    m["version"] = kToolVersion;
    m["sweep"] = to_string(spec.kind);
    m["mode"] = to_string(spec.mode);
    m["seed"] = spec.seed;
    m["config_hash"] = config_hash(config);
    m["config"] = cfg;
    m["tiers"] = spec.budget ? nlohmann::json::array({"custom"}) : tiers;
    m["grid"] = spec.grid.values;
    if (!spec.grid2.values.empty()) m["grid2"] = spec.grid2.values;
    if (spec.length_km) m["length_km"] = *spec.length_km;
    if (spec.block_size) m["block_size"] = *spec.block_size;
    m["rows"] = row_count;
    m["output"] = spec.output;
    return m;
}

nlohmann::json to_json(const KeyLengthReport& r) {
    return {{"n", r.n},
            {"m_test", r.m_test},
            {"valid_rounds", r.valid_rounds},
            {"S_hat", finite_or_null(r.s_hat)},
            {"mu", finite_or_null(r.mu)},
            {"Lambda", finite_or_null(r.lambda)},
            {"delta_cal", r.delta_cal},
            {"S_final", finite_or_null(r.s_final)},
            {"Q", r.qber},
            {"tangent_S", r.tangent_s},
            {"v", r.variance_proxy},
            {"C_EAT", r.c_eat},
            {"asymptotic_rate", r.asymptotic_rate},
            {"H_min_bound", r.h_min_bound},
            {"leak_EC", r.leak_ec},
            {"Delta_finite", r.delta_finite},
            {"pa_ec_cost", r.pa_ec_cost},
            {"ell", r.ell},
            {"rate_per_round", r.rate_per_round},
            {"rate_bps", r.rate_bps},
            {"no_violation", r.no_violation},
            {"aborted", r.aborted},
            {"insufficient_statistics", r.insufficient_statistics},
            {"abort_reason", r.abort_reason}};
}

namespace {

nlohmann::json tally_json(const Tally& t) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t i = 0; i < 4; ++i) {
        const auto& c = t.test[i];
        cells.push_back({{"x", i / 2},
                         {"y", i % 2},
                         {"counts", c.counts},
                         {"erasures", c.erasures},
                         {"discards", c.discards},
                         {"heralded", c.heralded}});
    }
    return {{"attempts", t.attempts},
            {"heralded", t.heralded},
            {"false_heralds", t.false_heralds},
            {"watchdog_discards", t.watchdog_discards},
            {"dwell_discards", t.dwell_discards},
            {"test", cells},
            {"key",
             {{"agree", t.key.agree},
              {"disagree", t.key.disagree},
              {"erasures", t.key.erasures},
              {"discards", t.key.discards},
              {"heralded", t.key.heralded}}}};
}

}  // namespace

nlohmann::json to_json(const BlockTally& tally) {
    nlohmann::json subs = nlohmann::json::array();
    for (const auto& s : tally.subblocks) subs.push_back(tally_json(s));
    return {{"total", tally_json(tally.total)}, {"subblocks", subs}, {"gamma_trace", tally.gamma_trace},
            {"empty", tally.empty()}};
}

nlohmann::json to_json(const ChshStatistics& s) {
    nlohmann::json j = {{"E", s.correlators}, {"eta", s.eta},         {"detected", s.detected},
                        {"S_hat", s.s_hat},   {"sigma", s.sigma},     {"eta_bar", s.eta_bar},
                        {"delta_eta", s.delta_eta}, {"key_detected", s.key_detected}};
    j["key_qber"] = s.key_qber ? nlohmann::json(*s.key_qber) : nlohmann::json(nullptr);
    return j;
}

double asymptotic_key_rate_per_attempt(const Configuration& config, const ErrorBudget& budget, double length_km) {
    const ProtocolScenario sc = make_scenario(config, budget, length_km);
    const LinkExpectation link = expected_link(sc.budget, sc.timing, sc.schedule, sc.channel);
    const LossPenalty loss = loss_penalty(link.delta_eta, sc.security.penalty);
    if (loss.abort) return 0.0;
    const double s = std::min(kTsirelson, link.s_expected - loss.value - 4.0 * budget.delta_cal);
    const double per_round = asymptotic_rate(s) - sc.security.f_ec * binary_entropy(link.qber);
    if (per_round <= 0.0) return 0.0;
    const double key_fraction = link.herald_prob * (1.0 - link.watchdog_prob) * (1.0 - link.dwell_discard_prob) *
                                (1.0 - sc.protocol.gamma) * (1.0 - sc.channel.erasure_key);
    return key_fraction * per_round;
}

double relative_finite_size_penalty(const Configuration& config, const ErrorBudget& budget, const ResultRow& row) {
    const double asymptotic = asymptotic_key_rate_per_attempt(config, budget, row.length_km);
    if (asymptotic <= 0.0 || row.block_size == 0) return 1.0;
    return 1.0 - (static_cast<double>(row.ell) / static_cast<double>(row.block_size)) / asymptotic;
}

std::optional<std::uint64_t> finite_size_cliff(const std::vector<ResultRow>& rows) {
    for (const auto& r : rows) {
        if (r.ell > 0) return r.block_size;
    }
    return std::nullopt;
}

std::optional<double> secure_distance_limit(const Configuration& config, const ErrorBudget& budget,
                                            std::uint64_t block_size, const Grid& grid) {
    auto margin = [&](double l) { return analytic_s_final(config, budget, block_size, l) - 2.0; };
    if (grid.values.empty()) return std::nullopt;
    double prev = grid.values.front();
    if (!(margin(prev) > 0.0)) return prev;
    for (std::size_t i = 1; i < grid.values.size(); ++i) {
        const double l = grid.values[i];
        if (margin(l) > 0.0) {
            prev = l;
            continue;
        }
        double lo = prev;
        double hi = l;
        for (int it = 0; it < 60 && hi - lo > 1e-9; ++it) {
            const double mid = 0.5 * (lo + hi);
            (margin(mid) > 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    }
    return std::nullopt;
}

std::optional<double> poisoning_cutoff_distance(const Configuration& config, const ErrorBudget& budget) {
    Configuration cfg = config;
    cfg.channel.false_herald_rate = 0.0;
    // N -> infinity margin; nullopt once the dwell cutoff discards everything
    auto margin = [&](double l) -> std::optional<double> {
        try {
            const ProtocolScenario sc = make_scenario(cfg, budget, l);
            const LinkExpectation link = expected_link(sc.budget, sc.timing, sc.schedule, sc.channel);
            if (link.dwell_discard_prob >= 1.0) return std::nullopt;
            const LossPenalty loss = loss_penalty(link.delta_eta, sc.security.penalty);
            return link.s_expected - loss.value - 4.0 * budget.delta_cal - 2.0;
        } catch (const ModelError&) {
            return std::nullopt;
        }
    };
    const auto at_zero = margin(0.0);
    if (!at_zero) return std::nullopt;
    if (*at_zero <= 0.0) return 0.0;

    double lo = 0.0;
    double hi = 1.0;
    constexpr double kSearchLimitKm = 1e15;
    while (true) {
        const auto m = margin(hi);
        if (!m) return std::nullopt;
        if (*m <= 0.0) break;
        lo = hi;
        hi *= 2.0;
        if (hi > kSearchLimitKm) return std::nullopt;
    }
    for (int it = 0; it < 200 && (hi - lo) > 1e-9 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        const auto m = margin(mid);
        if (m && *m > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace mzqkd
