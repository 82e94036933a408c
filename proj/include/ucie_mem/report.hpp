#pragma once

#include "ucie_mem/analytic.hpp"
#include "ucie_mem/core_model.hpp"
#include "ucie_mem/flit_codec.hpp"
#include "ucie_mem/link_sim.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ucie_mem {

struct CsvSchemaError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// ============================================================================
// Rows
// ============================================================================

/// Link column value for rows that do not ride on a UCIe link.
inline constexpr char const *kNativeLink = "native";

struct SimExtras {
    double delta_bw_eff = 0;
    double delta_p_data = 0;
    std::uint64_t retried_flits = 0;
    std::uint64_t generated = 0;
    std::uint64_t delivered = 0;
};

struct CsvRow {
    std::string approach;
    std::string link;
    double reads = 0;
    double writes = 0;
    double bw_eff = 0;
    double bw_linear = 0; ///< GB/s/mm
    double bw_areal = 0;  ///< GB/s/mm^2
    double p_data = 0;
    double power_eff = 0; ///< pJ/b
    std::string source = "analytic";
    std::optional<SimExtras> sim;
};

std::vector<std::string> const &csv_columns();
std::vector<std::string> const &sim_csv_columns();
std::vector<std::string> const &verdict_columns();

/// Header plus rows; extra simulation columns when `with_sim` is set.
std::string to_csv(std::vector<CsvRow> const &rows, bool with_sim = false);
/// Checks header, field count, numeric fields, source values and line endings.
void validate_csv(std::string const &text, std::vector<std::string> const &columns);

CsvRow analytic_row(ApproachId approach, LinkVariant const &link, TrafficMix const &mix,
                    EvaluateOptions const &opts = {});

// ============================================================================
// Sweeps
// ============================================================================

enum class SweepMode : std::uint8_t { Analytic, Simulate, Both };

struct SweepSpec {
    std::vector<ApproachId> approaches;
    std::vector<LinkVariant> links;
    std::vector<TrafficMix> mixes;
    SweepMode mode = SweepMode::Analytic;
    std::uint64_t duration_ui = 1'000'000;
    std::uint64_t seed = 1;
    double error_rate = 0;
    EvaluateOptions model{};

    void validate() const;
};

/// Evaluates every (approach, link, mix) tuple concurrently; rows come back in
/// approach, link, mix order. Baselines appear once per mix with link "native".
std::vector<CsvRow> sweep(SweepSpec const &spec);

/// Simulation row with its analytic counterpart (analytic first).
std::vector<CsvRow> simulate_rows(SimConfig const &config);

// ============================================================================
// Figures
// ============================================================================

struct Verdict {
    std::string claim;
    bool asserted = true; ///< false for figures reported without a pass/fail expectation
    bool pass = false;
    std::string detail;
};

struct FigureSet {
    std::vector<CsvRow> fig10; ///< UCIe-A 55um + baselines
    std::vector<CsvRow> fig11; ///< UCIe-S + baselines
    std::vector<CsvRow> fig12; ///< both links + baselines (power focus)
    std::vector<Verdict> verdicts;
};

FigureSet build_figures();
std::string verdicts_csv(std::vector<Verdict> const &verdicts);
/// Writes fig10.csv, fig11.csv, fig12.csv and verdicts.csv; every file is schema-checked.
std::vector<std::filesystem::path> write_figures(std::filesystem::path const &dir);

/// Flag, then environment (UCIEMEM_OUT_DIR), then config, then ".".
std::filesystem::path resolve_out_dir(std::optional<std::string> const &flag,
                                      std::optional<std::string> const &config);

void write_text(std::filesystem::path const &path, std::string const &text);

// ============================================================================
// Flit listings
// ============================================================================

/// One message per line: `REQ cmd= meta= tag= addr=0x.. poison= [data=<128 hex>]`
/// or `RSP cmd= meta= devload= tag= poison= [data=..]`.
std::string format_message(Message const &m);
Message parse_message(std::string_view line);

} // namespace ucie_mem
