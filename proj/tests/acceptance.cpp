// Acceptance run: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria.

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "mzqkd/config.hpp"
#include "mzqkd/experiments.hpp"

using namespace mzqkd;

namespace {

constexpr double kSqrt2 = std::numbers::sqrt2;

struct Verdict {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double time_limit_s;
    std::function<Verdict()> check;
};

Verdict closed_form_oracles() {
    const double flip = poisoning_flip_prob(0.5, 0.2);
    const double r25 = asymptotic_rate(2.5);
    const double r2 = asymptotic_rate(2.0);
    const double rt = asymptotic_rate(2.0 * kSqrt2);
    // 0.0475813 is the 7-digit rounding of the exact value; the 1e-9 band is
    // applied to the full-precision reference
    const bool rounds = std::round(flip * 1e7) == 475813.0;
    const bool pass = rounds && std::abs(flip - 0.047581290982020213) <= 1e-9 &&
                      std::abs(r25 - 0.456436) <= 1e-6 && std::abs(r2) <= 1e-12 && std::abs(rt - 1.0) <= 1e-12;
    return {pass, fmt::format("p_p(0.5,0.2)={:.12f} r(2.5)={:.9f} r(2)={:.1e} r(2sqrt2)-1={:.1e}", flip, r25, r2,
                              rt - 1.0)};
}

Verdict gradient_reproduction() {
    const ErrorBudget b = preset_tier(TierName::Target).budget;
    const OperatingPoint at{1.5, DwellDistribution::degenerate(6e-5), 1.0};
    auto fd = [&](double ErrorBudget::*field) {
        const double h = 1e-6;
        ErrorBudget up = b;
        ErrorBudget down = b;
        up.*field += h;
        down.*field -= h;
        return (chsh_isotropic(up, at) - chsh_isotropic(down, at)) / (2.0 * h);
    };
    const double d_pr = fd(&ErrorBudget::p_r);
    const double d_zeta = fd(&ErrorBudget::zeta);
    const double e_pr = std::abs(d_pr / (-4.0 * kSqrt2) - 1.0);
    const double e_zeta = std::abs(d_zeta / (-2.0 * kSqrt2) - 1.0);
    return {e_pr <= 1e-6 && e_zeta <= 1e-6,
            fmt::format("dS/dp_r={:.9f} (rel err {:.1e}) dS/dzeta={:.9f} (rel err {:.1e})", d_pr, e_pr, d_zeta,
                        e_zeta)};
}

Verdict minorant_audit() {
    constexpr int kPoints = 10'000;
    const double hi = 2.0 * kSqrt2;
    double worst = -1.0;
    int lines = 0;
    for (double t = 2.001; t < hi; t += 0.0205) {
        const auto line = build_min_tradeoff(t);
        ++lines;
        for (int i = 0; i < kPoints; ++i) {
            const double s = 2.0 + (hi - 2.0) * i / (kPoints - 1);
            worst = std::max(worst, line(s) - asymptotic_rate(std::min(s, hi)));
        }
    }
    return {worst <= 1e-12, fmt::format("{} tangent lines, max(line - curve) = {:.2e}", lines, worst)};
}

Verdict finite_size_cliff_check() {
    const auto cfg = default_configuration();
    auto spec = default_spec(SweepKind::Blocksize, cfg);
    spec.tiers = {TierName::Target};
    const auto rows = sweep_blocksize(cfg, spec);
    const auto cliff = finite_size_cliff(rows);
    const auto& budget = cfg.tier(TierName::Target).budget;
    std::optional<std::uint64_t> converged;
    double last_penalty = 1.0;
    for (const auto& r : rows) {
        last_penalty = relative_finite_size_penalty(cfg, budget, r);
        if (!converged && r.block_size <= 100'000'000 && last_penalty < 0.05) converged = r.block_size;
    }
    const bool pass = cliff && *cliff >= 10'000 && *cliff <= 1'000'000 && converged.has_value();
    return {pass, fmt::format("cliff N*={} , penalty<5% from N={} (penalty at 1e8 = {:.4f})",
                              cliff ? std::to_string(*cliff) : "none",
                              converged ? std::to_string(*converged) : "none", last_penalty)};
}

Verdict hard_cutoff() {
    const auto cfg = default_configuration();
    const Grid grid = Grid::linear_range(0.0, 400.0, 2.0);
    std::vector<double> lmax;
    for (const auto& t : cfg.tiers) {
        const auto l = secure_distance_limit(cfg, t.budget, cfg.protocol.block_size, grid);
        if (!l) return {false, fmt::format("{}: S_final never crosses 2", to_string(t.name))};
        lmax.push_back(*l);
    }
    const bool ordered = lmax[0] < lmax[1] && lmax[1] < lmax[2];

    // N -> infinity poisoning cutoff, storage limit lifted so that only
    // poisoning can end the link
    auto lifted = cfg;
    lifted.timing.tau_max = 1e12;
    std::vector<double> cut;
    bool finite = true;
    for (const auto& t : cfg.tiers) {
        const auto c = poisoning_cutoff_distance(lifted, t.budget);
        finite = finite && c.has_value();
        cut.push_back(c.value_or(NAN));
    }
    const bool cut_ordered = finite && cut[0] < cut[1] && cut[1] < cut[2];

    bool removed = true;
    bool flat = true;
    for (const auto& t : cfg.tiers) {
        ErrorBudget off = t.budget;
        off.gamma_p = 0.0;
        removed = removed && !poisoning_cutoff_distance(lifted, off).has_value();
        auto spec = default_spec(SweepKind::Distance, cfg);
        spec.budget = off;
        const auto rows = sweep_distance(cfg, spec);
        for (const auto& r : rows) flat = flat && r.s_analytic == rows.front().s_analytic;
    }
    return {ordered && cut_ordered && removed && flat,
            fmt::format("L_max = {:.2f} < {:.2f} < {:.2f} km; poisoning cutoff = {:.3g} < {:.3g} < {:.3g} km; "
                        "gamma_p=0: cutoff removed={} S_analytic flat={}",
                        lmax[0], lmax[1], lmax[2], cut[0], cut[1], cut[2], removed, flat)};
}

Verdict monte_carlo_vs_analytic() {
    constexpr int kSeeds = 100;
    constexpr std::uint64_t kRounds = 100'000;
    ProtocolScenario sc;
    sc.budget.p_dep = 0.05;  // Werner visibility 0.95, nothing else
    sc.schedule.m_xy = {0, 0, 0, 0};
    sc.channel.bsm_factor = 1.0;
    sc.channel.eta_det = 1.0;
    sc.protocol.gamma = 1.0;
    sc.protocol.gamma_max = 1.0;
    sc.protocol.block_size = kRounds;
    const double target = 2.0 * kSqrt2 * 0.95;
    int within = 0;
    for (int seed = 1; seed <= kSeeds; ++seed) {
        sc.protocol.seed = static_cast<std::uint64_t>(seed);
        const auto tally =
            simulate_block(sc.protocol, sc.budget, sc.timing, sc.schedule, sc.channel).total;
        const auto st = estimate_chsh(tally);
        if (std::abs(st.s_hat - target) <= 3.0 * st.sigma) ++within;
    }
    return {within >= 99, fmt::format("{}/{} seeds within 3 sigma of {:.6f}", within, kSeeds, target)};
}

Verdict loss_discipline() {
    const auto cfg = default_configuration();
    auto sc = make_scenario(cfg, cfg.tier(TierName::Target).budget, 10.0);
    sc.protocol.block_size = 2'000'000;
    sc.channel.erasure_xy = {0.10, 0.20, 0.20, 0.20};
    const auto sim = run_protocol(sc);
    const auto ana = analyze_block(sc);
    const bool abort = sim.report.aborted && sim.report.ell == 0 && sim.total_ell == 0 && ana.aborted && ana.ell == 0;

    sc.channel.erasure_xy = {0, 0, 0, 0};
    const auto clean = analyze_block(sc);
    const double lambda0 = loss_penalty(0.0, sc.security.penalty).value;
    const bool no_penalty = lambda0 == 0.0 && clean.lambda == 0.0 && !clean.aborted;
    return {abort && no_penalty,
            fmt::format("delta_eta sim={:.4f} analytic=0.075 -> aborted={} ell={}; delta_eta=0 -> Lambda={}",
                        sim.stats ? sim.stats->delta_eta : NAN, sim.report.aborted, sim.report.ell, clean.lambda)};
}

Verdict salvage_check() {
    const auto cfg = default_configuration();
    auto sc = make_scenario(cfg, cfg.tier(TierName::Target).budget, 10.0);
    sc.protocol.block_size = 8'000'000;
    // 6.9e5 /s over the 1 us idle window discards half the heralds
    sc.protocol.bursts = {{9, 6.9e5}};
    const auto kept = run_protocol(sc);
    sc.salvage.enabled = false;
    const auto raw = run_protocol(sc);
    const double retention = kept.salvage.retention;
    const bool pass = std::abs(retention - 0.9375) <= 0.01 && kept.report.ell > raw.report.ell;
    return {pass, fmt::format("retention={:.4f} dropped={} ell salvaged={} unsalvaged={}", retention,
                              kept.salvage.dropped.size(), kept.report.ell, raw.report.ell)};
}

Verdict multiplex_linearity() {
    const auto cfg = default_configuration();
    auto spec = default_spec(SweepKind::Multiplex, cfg);
    spec.grid = Grid::explicit_values({1, 16});
    const auto rows = sweep_multiplex(cfg, spec);
    const bool pass = rows.size() == 2 && rows[1].rate_bps == 16.0 * rows[0].rate_bps;
    return {pass, fmt::format("target @ {} km: k=1 {} bps, k=16 {} bps", rows[0].length_km, rows[0].rate_bps,
                              rows[1].rate_bps)};
}

Verdict determinism() {
    const auto cfg = default_configuration();
    std::vector<std::string> mismatched;
    for (SweepKind kind : {SweepKind::Blocksize, SweepKind::Distance, SweepKind::Landscape, SweepKind::Multiplex}) {
        const auto spec = default_spec(kind, cfg);
        if (to_csv(kind, run_sweep(cfg, spec)) != to_csv(kind, run_sweep(cfg, spec))) {
            mismatched.push_back(to_string(kind));
        }
    }
    auto sim = default_spec(SweepKind::Distance, cfg);
    sim.mode = EvalMode::Simulate;
    sim.grid = Grid::explicit_values({0, 50, 100});
    sim.block_size = 1'000'000;
    if (to_csv(SweepKind::Distance, run_sweep(cfg, sim)) != to_csv(SweepKind::Distance, run_sweep(cfg, sim))) {
        mismatched.push_back("distance(simulate)");
    }
    return {mismatched.empty(), mismatched.empty() ? "four default sweeps and a simulated sweep byte-identical"
                                                   : "mismatch: " + fmt::format("{}", fmt::join(mismatched, ", "))};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {"closed-form oracles", 1.0, closed_form_oracles},
        {"gradient reproduction", 1.0, gradient_reproduction},
        {"minorant audit", 1.0, minorant_audit},
        {"finite-size cliff", 10.0, finite_size_cliff_check},
        {"hard cutoff", 10.0, hard_cutoff},
        {"monte carlo vs analytic", 60.0, monte_carlo_vs_analytic},
        {"loss discipline", 10.0, loss_discipline},
        {"salvage", 30.0, salvage_check},
        {"multiplex linearity", 5.0, multiplex_linearity},
        {"determinism", 300.0, determinism},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict out;
        try {
            out = c.check();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = elapsed < c.time_limit_s;
        const bool pass = out.pass && in_time;
        if (!pass) ++failed;
        fmt::print("{} {}: {} [{:.3f} s, limit {} s{}]\n", pass ? "PASS" : "FAIL", c.name, out.detail, elapsed,
                   c.time_limit_s, in_time ? "" : ", too slow");
    }
    fmt::print("{}/{} criteria passed\n", criteria.size() - failed, criteria.size());
    return failed;
}
