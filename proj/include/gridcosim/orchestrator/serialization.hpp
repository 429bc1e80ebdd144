#pragma once

#include <json.hpp>

#include "gridcosim/netemu/fabric.hpp"
#include "gridcosim/powersim/dynamics.hpp"
#include "gridcosim/protocols/c37118.hpp"
#include "gridcosim/protocols/dnp_lite.hpp"
#include "gridcosim/sensors/sensors.hpp"

namespace gridcosim::orchestrator {

/// Single-PMU configuration frame describing a sensor's phasor channels.
protocols::C37Config pmu_config(const sensors::SensorSpec& spec, const powersim::GridCase& grid);

protocols::C37Data pmu_frame(const sensors::PmuSample& s);

/// Analog block, then a binary block when the device reports breakers.
std::vector<protocols::DnpMessage> telemetry_messages(const sensors::TelemetryRecord& rec, const sensors::SampleTime& when,
                                                      std::uint16_t dst, std::uint16_t& seq);

nlohmann::json pmu_sample_to_json(const sensors::PmuSample& s);
nlohmann::json telemetry_to_json(const sensors::TelemetryRecord& r);

/// Truth row: bus voltages, machine states, island labels and the
/// per-island centre-of-inertia frequency in Hz.
nlohmann::json truth_to_json(const powersim::GridCase& grid, const powersim::DynamicState& state);

nlohmann::json outcome_to_json(const netemu::NetMessage& msg, const netemu::DeliveryOutcome& out);

}  // namespace gridcosim::orchestrator
