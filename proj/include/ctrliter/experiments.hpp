#pragma once

#include "ctrliter/config.hpp"
#include "ctrliter/lqr.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ctrliter {

struct TraceRow {
    std::string run;
    std::size_t iter = 0;
    double distance = 0.0;
    std::optional<double> ms;  // written only when timing is enabled
};

struct ExperimentResult {
    std::string kind;
    std::vector<TraceRow> trace;
    /// Ordered `key = value` lines of summary.txt.
    std::vector<std::pair<std::string, std::string>> summary;
    /// Additional trace files (file name → rows), e.g. one per α in a sweep.
    std::map<std::string, std::vector<TraceRow>> extra_traces;
    bool numerical_abort = false;
};

struct RunContext {
    std::optional<std::uint64_t> seed;  // overrides the config seed
    std::size_t workers = 1;
};

/// Executes the experiment described by the config. Divergence of a solver is
/// reported in the result; malformed configs throw ConfigError.
ExperimentResult run_experiment(const Config& cfg, const RunContext& ctx);

/// Certificate of a riccati or lambda config.
ConvergenceCertificate experiment_certificate(const Config& cfg, const RunContext& ctx);

/// Fixed-format number used in every output file.
std::string format_number(double v);
/// RFC-4180 field quoting.
std::string csv_field(const std::string& s);

void write_trace(std::ostream& out, const std::vector<TraceRow>& rows);
void write_summary(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& summary);
/// Writes trace.csv, summary.txt and the extra traces into `dir` (created if
/// needed).
void write_outputs(const std::string& dir, const ExperimentResult& result);

/// Human-readable certificate report.
void print_certificate(std::ostream& out, const ConvergenceCertificate& cert);

}  // namespace ctrliter
