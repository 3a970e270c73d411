#pragma once

// Parameter sweeps over block size, distance, error landscape and
// multiplexing, with CSV/JSON output and run manifests.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mzqkd/config.hpp"

namespace mzqkd {

enum class SweepKind { Blocksize, Distance, Landscape, Multiplex, Single };
enum class EvalMode { Analytic, Simulate };

std::string to_string(SweepKind kind);
std::string to_string(EvalMode mode);
EvalMode parse_eval_mode(std::string_view text);

/// Ordered list of grid points.
struct Grid {
    std::vector<double> values;

    static Grid explicit_values(std::vector<double> values);
    /// n log-spaced points from lo to hi inclusive; both must be positive.
    static Grid log_range(double lo, double hi, std::size_t n);
    /// lo, lo + step, ..., up to hi inclusive (within rounding).
    static Grid linear_range(double lo, double hi, double step);
    /// Log grid with `per_decade` points per decade, endpoints inclusive.
    static Grid per_decade(double lo, double hi, std::size_t per_decade);
    /// Accepts "a,b,c", "log:lo:hi:n" or "lin:lo:hi:step".
    static Grid parse(std::string_view text);
};

struct SweepSpec {
    SweepKind kind = SweepKind::Single;
    std::vector<TierName> tiers{TierName::Conservative, TierName::Target, TierName::Optimistic};
    std::optional<ErrorBudget> budget;  ///< replaces the tier budget when set ("custom")
    Grid grid;                          ///< N, L, p_r or k depending on kind
    Grid grid2;                         ///< gamma_p axis for the landscape
    std::optional<double> length_km;    ///< fixed distance (default from config)
    std::optional<std::uint64_t> block_size;  ///< fixed N (default from config)
    EvalMode mode = EvalMode::Analytic;
    std::uint64_t seed = 1;
    std::string output;
};

/// Default spec for a sweep kind (grids as documented in the README).
SweepSpec default_spec(SweepKind kind, const Configuration& config);

struct ResultRow {
    std::string tier;
    std::string mode;
    std::uint64_t block_size = 0;
    double length_km = 0.0;
    std::size_t k = 1;
    double p_r = 0.0;
    double gamma_p = 0.0;
    std::uint64_t seed = 0;
    double tau_s = 0.0;
    double v_eff = 0.0;
    double s_analytic = 0.0;
    std::optional<double> s_hat;
    std::optional<double> sigma;
    double s_final = 0.0;
    double qber = 0.0;
    std::uint64_t n = 0;
    std::uint64_t ell = 0;
    double rate_per_round = 0.0;
    double rate_bps = 0.0;
    bool abort = false;
};

/// One row: tier budget at (N, L, k) in the requested mode. The simulate mode
/// seeds the block with `seed`.
ResultRow evaluate_point(const Configuration& config, const std::string& tier_label, const ErrorBudget& budget,
                         std::uint64_t block_size, double length_km, std::size_t k, EvalMode mode,
                         std::uint64_t seed);

std::vector<ResultRow> sweep_blocksize(const Configuration& config, const SweepSpec& spec);
std::vector<ResultRow> sweep_distance(const Configuration& config, const SweepSpec& spec);
std::vector<ResultRow> sweep_landscape(const Configuration& config, const SweepSpec& spec);
std::vector<ResultRow> sweep_multiplex(const Configuration& config, const SweepSpec& spec);
std::vector<ResultRow> run_sweep(const Configuration& config, const SweepSpec& spec);

/// Header line (no trailing newline) of the CSV for a sweep kind.
std::string csv_header(SweepKind kind);
std::string to_csv(SweepKind kind, const std::vector<ResultRow>& rows);

/// Run manifest: config hash, full canonical config, seed, grid, version.
nlohmann::json run_manifest(const Configuration& config, const SweepSpec& spec, std::size_t row_count);

nlohmann::json to_json(const KeyLengthReport& report);
nlohmann::json to_json(const BlockTally& tally);
nlohmann::json to_json(const ChshStatistics& stats);

/// Limit of ell / attempts as N grows, for the analytic chain.
double asymptotic_key_rate_per_attempt(const Configuration& config, const ErrorBudget& budget, double length_km);

/// 1 - (ell / N) / asymptotic rate; 1 when the asymptotic rate is zero.
double relative_finite_size_penalty(const Configuration& config, const ErrorBudget& budget, const ResultRow& row);

/// Smallest N of a blocksize sweep (rows of one tier, ascending N) with ell > 0.
std::optional<std::uint64_t> finite_size_cliff(const std::vector<ResultRow>& rows);

/// Distance at which the analytic S_final for blocks of block_size attempts
/// falls to 2, located by scanning `grid` then bisecting. Empty if S_final
/// stays above 2 across the grid.
std::optional<double> secure_distance_limit(const Configuration& config, const ErrorBudget& budget,
                                            std::uint64_t block_size, const Grid& grid);

/// Distance at which the N -> infinity value S_expected - Lambda - 4 delta_cal
/// reaches 2 through poisoning alone. Empty when it never does (e.g. gamma_p
/// = 0, or the dwell cutoff tau_max is hit first).
std::optional<double> poisoning_cutoff_distance(const Configuration& config, const ErrorBudget& budget);

inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace mzqkd
