#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gridcosim/orchestrator/run_record.hpp"
#include "gridcosim/orchestrator/scenario.hpp"

namespace gridcosim::orchestrator {

class MissingChannel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Divergence {
    std::size_t index = 0;
    nlohmann::json expected;  // null when the replay produced extra output
    nlohmann::json actual;    // null when the replay stopped short
};

struct ReplayResult {
    std::string component;
    std::size_t inputs = 0;
    std::size_t expected = 0;
    std::size_t produced = 0;
    std::optional<Divergence> first_divergence;

    bool identical() const noexcept { return !first_divergence; }
};

/// Re-runs one component on its recorded inputs and diffs the outputs.
/// Components: any control scheme name (ufls, separation, voltage,
/// tertiary, vsa, dip_monitor) or "wls". `patch` is merged into the
/// scheme's config before rebuilding it.
ReplayResult replay(const RunRecord& record, const ScenarioConfig& cfg, const std::string& component,
                    const nlohmann::json& patch = nlohmann::json::object());

/// Same, for a record directory written by run().
ReplayResult replay_directory(const std::filesystem::path& dir, const std::string& component,
                              const nlohmann::json& patch = nlohmann::json::object());

/// Scenario stored next to a record, bound to the stored case.
ScenarioConfig load_recorded_scenario(const std::filesystem::path& dir);

}  // namespace gridcosim::orchestrator
