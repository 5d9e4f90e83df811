#pragma once

#include "cex/finder.hpp"
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace cex {

enum ExitCode : int { ExitFound = 0, ExitAgree = 1, ExitUsage = 2, ExitTimeout = 3, ExitSearchFailed = 4 };

struct CliConfig
{
    std::filesystem::path schema, data, q1, q2;
    bool json = false;
    std::optional<std::filesystem::path> emit_smt;
    FinderOptions finder;
};

/// Human-readable report: one table per relation of the counterexample, then both query results on it.
std::string render_report_table(const Report &r, const Database &db);

/// Reads the ids, parameter values, strategy and verification flag back from a rendered report.
Counterexample counterexample_from_json(const nlohmann::json &j, const Database &db);

/// Loads everything, runs the finder and writes the report; diagnostics go to `err`.  Returns an ExitCode.
int run(const CliConfig &config, std::ostream &out, std::ostream &err);

/// Parses `compare --schema ... --q2 ...` and calls run.
int cli_main(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}
