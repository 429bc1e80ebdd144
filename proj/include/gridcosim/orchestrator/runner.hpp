#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "gridcosim/orchestrator/run_record.hpp"
#include "gridcosim/orchestrator/scenario.hpp"

namespace gridcosim::orchestrator {

struct RunOptions {
    std::optional<std::uint64_t> seed;
    std::optional<RunMode> mode;
    /// Written when set; otherwise outputs.directory when non-empty.
    std::optional<std::filesystem::path> out_dir;
    bool write_outputs = true;
};

struct RunResult {
    RunRecord record;
    bool ok = true;
    std::string error;
    double wall_seconds = 0.0;
    double max_lag_ms = 0.0;  // realtime mode only
    std::uint64_t events = 0;
    std::optional<std::filesystem::path> written_to;
};

/// Executes a scenario on one virtual clock. A component failure stops the
/// loop and returns the partial record with a failed manifest.
RunResult run(const ScenarioConfig& cfg, const RunOptions& options = {});

}  // namespace gridcosim::orchestrator
