#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridcosim/powersim/grid_case.hpp"

namespace gridcosim::ems {

/// Setpoints in MW; lambda in $/MWh.
struct DispatchResult {
    std::vector<std::string> generators;
    std::vector<double> p_setpoint;
    double lambda = 0.0;
    bool feasible = false;

    bool operator==(const DispatchResult&) const = default;
};

class Infeasible : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Equal incremental cost with limit clamping, losses ignored. Units with
/// a = 0 are marginal at lambda = b and absorb any remainder there.
DispatchResult economic_dispatch(const powersim::GridCase& grid, double demand_mw, double tolerance = 1e-6);

/// Marginal cost 2aP + b of a unit at P MW.
double incremental_cost(const powersim::CostCurve& c, double p_mw) noexcept;

nlohmann::json dispatch_to_json(const DispatchResult& d);

struct AgcConfig {
    bool enabled = false;
    double beta_mw_per_hz = 66.7;
    double ki = 0.1;  // 1/s
    double period = 2.0;
    std::vector<std::string> generators;
    std::vector<double> participation;  // sums to 1
    double ramp_mw_per_s = 1e9;
    /// Tie-line flows counted as exports (from-side p_flow telemetry).
    std::vector<std::string> tie_branches;
    double scheduled_export_mw = 0.0;
    /// PMU supplying the area frequency.
    std::uint16_t freq_pmu = 0;
};

struct AgcState {
    double ace_integral = 0.0;      // MW s
    std::vector<double> commands;   // standing MW offsets per participating unit
    double last_ace = 0.0;

    bool operator==(const AgcState&) const = default;
};

/// Headroom of each participating unit as [lo, hi] MW offsets.
struct AgcLimits {
    std::vector<double> lo;
    std::vector<double> hi;
};

/// One control cycle: ACE = dP_tie + beta df, integral action
/// -Ki * int(ACE) split by participation, ramp and capacity clamped, with
/// conditional integration while clamped. Returns per-unit MW deltas
/// relative to the previous commands.
std::vector<double> agc_step(double delta_f_hz, double delta_ptie_mw, AgcState& state, const AgcConfig& cfg,
                             double dt, const AgcLimits& limits);

std::vector<std::string> check_agc(const AgcConfig& cfg, const powersim::GridCase& grid);

}  // namespace gridcosim::ems
