#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridcosim/controls/controller.hpp"
#include "gridcosim/ems/ems.hpp"
#include "gridcosim/netemu/fabric.hpp"
#include "gridcosim/powersim/dynamics.hpp"
#include "gridcosim/sensors/sensors.hpp"

namespace gridcosim::orchestrator {

inline constexpr int kSchemaVersion = 1;

enum class RunMode { Deterministic, Realtime };

std::string to_string(RunMode m);
RunMode parse_mode(const std::string& s);

struct SimConfig {
    double step_h = 0.01;
    double duration = 10.0;
    RunMode mode = RunMode::Deterministic;
    std::uint64_t seed = 1;
    std::uint32_t start_soc = 1'700'000'000;
    int truth_decimation = 10;  // grid steps per sim.truth row
};

struct ContourConfig {
    bool enabled = false;
    int decimation = 1;  // truth rows per snapshot
    std::string variable = "v_mag";
};

struct OutputConfig {
    std::string directory;
    std::vector<std::string> channels;  // empty records everything
    ContourConfig contour;
};

struct NetEvent {
    double time = 0.0;
    netemu::LinkChange change;
};

struct ScenarioConfig {
    std::filesystem::path path;
    std::string bytes;  // file contents, hashed into the manifest
    nlohmann::json doc;
    std::filesystem::path case_path;
    powersim::GridCase grid;
    netemu::NetTopology topology;
    std::vector<sensors::SensorSpec> sensors;
    ems::EmsConfig ems;
    controls::ControlsConfig controls;
    std::vector<powersim::GridEvent> events;
    std::vector<NetEvent> net_events;
    SimConfig sim;
    OutputConfig outputs;
};

class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

class MissingFile : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Reads, parses and validates a scenario; every violation is reported.
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Same, from text; relative case paths resolve against `base_dir`.
ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir,
                              const std::filesystem::path& origin = {});

netemu::LinkChange link_change_from_json(const nlohmann::json& j);
nlohmann::json link_change_to_json(const netemu::LinkChange& c);

}  // namespace gridcosim::orchestrator
