// mzqkd: parameter sweeps, single-block simulation and key-length evaluation.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mzqkd/config.hpp"
#include "mzqkd/errors.hpp"
#include "mzqkd/experiments.hpp"

using namespace mzqkd;

namespace {

constexpr int kExitAbort = 2;
constexpr int kExitError = 1;

struct CommonOptions {
    std::string config_path;
    std::vector<std::string> tiers;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string mode = "analytic";
};

void add_common(CLI::App* cmd, CommonOptions& opt) {
    cmd->add_option("--config", opt.config_path, "configuration file (key = value)")->check(CLI::ExistingFile);
    cmd->add_option("--tier", opt.tiers, "tier name (conservative, target, optimistic); repeatable");
    cmd->add_option("--seed", opt.seed, "random seed");
    cmd->add_option("--out", opt.out, "output path (stdout when omitted)");
    cmd->add_option("--mode", opt.mode, "evaluation mode")->check(CLI::IsMember({"analytic", "simulate"}));
}

Configuration load(const CommonOptions& opt) {
    Configuration config = opt.config_path.empty() ? default_configuration() : load_configuration(opt.config_path);
    if (opt.seed) config.protocol.seed = *opt.seed;
    return config;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream file(path, std::ios::binary);
    if (!file) throw UsageError("cannot open '" + path + "' for writing");
    file << text;
    if (!file) throw UsageError("failed writing '" + path + "'");
}

PoisoningBurst parse_burst(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw UsageError("--burst expects SUBBLOCK:GAMMA_P");
    try {
        return {static_cast<std::size_t>(std::stoull(text.substr(0, colon))), std::stod(text.substr(colon + 1))};
    } catch (const std::exception&) {
        throw UsageError("--burst expects SUBBLOCK:GAMMA_P");
    }
}

struct SweepOptions {
    CommonOptions common;
    std::string grid;
    std::string grid2;
    std::optional<double> length_km;
    std::optional<double> block_size;
};

int run_sweep_command(SweepKind kind, const SweepOptions& opt) {
    const Configuration config = load(opt.common);
    SweepSpec spec = default_spec(kind, config);
    spec.mode = parse_eval_mode(opt.common.mode);
    if (kind == SweepKind::Landscape && spec.mode == EvalMode::Simulate) {
        throw UsageError("the landscape sweep is analytic only");
    }
    if (!opt.common.tiers.empty()) {
        spec.tiers.clear();
        for (const auto& t : opt.common.tiers) spec.tiers.push_back(parse_tier_name(t));
    }
    if (!opt.grid.empty()) spec.grid = Grid::parse(opt.grid);
    if (!opt.grid2.empty()) spec.grid2 = Grid::parse(opt.grid2);
    spec.length_km = opt.length_km;
    if (opt.block_size) {
        if (!(*opt.block_size >= 1.0)) throw UsageError("--N must be at least 1");
        spec.block_size = static_cast<std::uint64_t>(*opt.block_size);
    }
    spec.output = opt.common.out;

    const auto rows = run_sweep(config, spec);
    write_text(opt.common.out, to_csv(kind, rows));
    if (!opt.common.out.empty()) {
        write_text(opt.common.out + ".manifest.json", run_manifest(config, spec, rows.size()).dump(2) + "\n");
    }
    return 0;
}

struct BlockOptions {
    CommonOptions common;
    std::optional<double> length_km;
    std::optional<double> block_size;
    std::size_t k = 1;
    std::vector<std::string> bursts;
};

ProtocolScenario block_scenario(const Configuration& config, const BlockOptions& opt) {
    if (opt.common.tiers.size() > 1) throw UsageError("give at most one --tier");
    const TierName tier = opt.common.tiers.empty() ? TierName::Target : parse_tier_name(opt.common.tiers.front());
    ProtocolScenario sc = make_scenario(config, config.tier(tier).budget, opt.length_km.value_or(config.length_km));
    if (opt.block_size) {
        if (!(*opt.block_size >= 1.0)) throw UsageError("--N must be at least 1");
        sc.protocol.block_size = static_cast<std::uint64_t>(*opt.block_size);
    }
    sc.protocol.multiplex_k = opt.k;
    for (const auto& b : opt.bursts) sc.protocol.bursts.push_back(parse_burst(b));
    sc.protocol.validate();
    return sc;
}

int run_simulate(const BlockOptions& opt) {
    const Configuration config = load(opt.common);
    const ProtocolScenario sc = block_scenario(config, opt);
    nlohmann::json out;
    out["mode"] = opt.common.mode;
    out["config_hash"] = config_hash(config);
    out["seed"] = sc.protocol.seed;
    out["L_km"] = sc.timing.length_m / 1000.0;
    out["N"] = sc.protocol.block_size;
    out["k"] = sc.protocol.multiplex_k;
    out["version"] = kToolVersion;
    KeyLengthReport report;
    if (parse_eval_mode(opt.common.mode) == EvalMode::Analytic) {
        report = analyze_block(sc);
        out["total_ell"] = report.ell * sc.protocol.multiplex_k;
    } else {
        const ProtocolRun run = run_protocol(sc);
        report = run.report;
        out["total_ell"] = run.total_ell;
        out["tally"] = to_json(run.tally);
        out["chsh"] = run.stats ? to_json(*run.stats) : nlohmann::json(nullptr);
        out["salvage"] = {{"retention", run.salvage.retention},
                          {"dropped", run.salvage.dropped},
                          {"empty", run.salvage.empty}};
    }
    out["report"] = to_json(report);
    write_text(opt.common.out, out.dump(2) + "\n");
    return report.aborted ? kExitAbort : 0;
}

struct KeylenOptions {
    BlockOptions block;
    std::optional<double> n;
    std::optional<double> s_final;
    std::optional<double> qber;
};

int run_keylen(const KeylenOptions& opt) {
    const Configuration config = load(opt.block.common);
    KeyLengthReport report;
    const int given = (opt.n ? 1 : 0) + (opt.s_final ? 1 : 0) + (opt.qber ? 1 : 0);
    if (given == 3) {
        if (!(*opt.n >= 0.0)) throw UsageError("--n must be non-negative");
        const double tangent = std::clamp(*opt.s_final, 2.0 + 1e-6, kTsirelson - 1e-6);
        const MinTradeoff line = build_min_tradeoff(tangent);
        const auto& sec = config.security;
        report = key_length(static_cast<std::uint64_t>(*opt.n), *opt.s_final, *opt.qber, sec.f_ec, sec.eps,
                            sec.variance_proxy.value_or(default_variance_proxy(line)),
                            sec.c_eat.value_or(default_c_eat(sec.eps)));
        report.tangent_s = tangent;
    } else if (given == 0) {
        report = analyze_block(block_scenario(config, opt.block));
    } else {
        throw UsageError("--n, --S and --Q go together");
    }
    write_text(opt.block.common.out, to_json(report).dump(2) + "\n");
    return report.aborted ? kExitAbort : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-size key rates and protocol simulation for Majorana-memory device-independent QKD"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    struct Sweep {
        const char* name;
        const char* help;
        SweepKind kind;
        SweepOptions opt;
    };
    std::vector<Sweep> sweeps{
        {"sweep-blocksize", "key length versus block size", SweepKind::Blocksize, {}},
        {"sweep-distance", "key rate versus fiber distance", SweepKind::Distance, {}},
        {"landscape", "S over the (p_r, gamma_p) plane", SweepKind::Landscape, {}},
        {"multiplex", "rate versus number of parallel chains", SweepKind::Multiplex, {}},
    };
    std::vector<CLI::App*> sweep_cmds;
    for (auto& s : sweeps) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        add_common(cmd, s.opt.common);
        cmd->add_option("--grid", s.opt.grid, "primary axis: a,b,c | log:lo:hi:n | lin:lo:hi:step");
        if (s.kind == SweepKind::Landscape) cmd->add_option("--grid2", s.opt.grid2, "gamma_p axis");
        if (s.kind != SweepKind::Distance) cmd->add_option("--L", s.opt.length_km, "distance in km");
        if (s.kind == SweepKind::Distance || s.kind == SweepKind::Multiplex) {
            cmd->add_option("--N", s.opt.block_size, "attempts per block");
        }
        sweep_cmds.push_back(cmd);
    }

    KeylenOptions keylen;
    BlockOptions sim;
    auto* sim_cmd = app.add_subcommand("simulate", "one block through the full pipeline, JSON report");
    auto* key_cmd = app.add_subcommand("keylen", "key length from (n, S, Q) or from the analytic chain");
    for (auto [cmd, opt] : {std::pair{sim_cmd, &sim}, std::pair{key_cmd, &keylen.block}}) {
        add_common(cmd, opt->common);
        cmd->add_option("--L", opt->length_km, "distance in km");
        cmd->add_option("--N", opt->block_size, "attempts per block");
        cmd->add_option("--k", opt->k, "parallel chains")->check(CLI::PositiveNumber);
        cmd->add_option("--burst", opt->bursts, "poisoning burst SUBBLOCK:GAMMA_P; repeatable");
    }
    sim.common.mode = "simulate";
    key_cmd->add_option("--n", keylen.n, "key rounds");
    key_cmd->add_option("--S", keylen.s_final, "penalized CHSH value");
    key_cmd->add_option("--Q", keylen.qber, "key QBER");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitError;
    }

    try {
        for (std::size_t i = 0; i < sweeps.size(); ++i) {
            if (sweep_cmds[i]->parsed()) return run_sweep_command(sweeps[i].kind, sweeps[i].opt);
        }
        if (sim_cmd->parsed()) return run_simulate(sim);
        if (key_cmd->parsed()) return run_keylen(keylen);
    } catch (const UsageError& e) {
        fmt::print(stderr, "usage error: {}\n", e.what());
        return kExitError;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kExitError;
    }
    return kExitError;
}
