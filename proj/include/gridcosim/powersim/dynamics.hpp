#pragma once

#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include "gridcosim/powersim/grid_case.hpp"
#include "gridcosim/powersim/islands.hpp"
#include "gridcosim/powersim/power_flow.hpp"
#include "gridcosim/powersim/ybus.hpp"

namespace gridcosim::powersim {

/// Classical machine with a first-order governor.
struct MachineState {
    double delta = 0.0;    // rad, synchronous frame
    double omega = 1.0;    // pu speed
    double e_prime = 1.0;  // pu EMF magnitude behind xd'
    double p_mech = 0.0;
    double p_ref = 0.0;
    // Algebraic outputs of the last network solve.
    double p_elec = 0.0;
    Complex current{};  // terminal current, injected into the bus
    bool online = true;

    bool operator==(const MachineState&) const = default;
};

struct DynamicState {
    double t = 0.0;
    std::vector<MachineState> machines;  // case generator order
    Eigen::VectorXcd v;                  // bus voltage phasors
    IslandMap island_map;

    bool operator==(const DynamicState& other) const
    {
        return t == other.t && machines == other.machines && v == other.v && island_map == other.island_map;
    }
};

struct LineTrip {
    std::string branch;
    bool operator==(const LineTrip&) const = default;
};
struct LineClose {
    std::string branch;
    bool operator==(const LineClose&) const = default;
};
struct GenTrip {
    std::string generator;
    bool operator==(const GenTrip&) const = default;
};
/// Multiplies the load admittance at each bus. When `reactive_factor` is
/// set it scales the susceptance and `factor` only the conductance.
struct LoadScale {
    double factor = 1.0;
    std::vector<int> buses;
    std::optional<double> reactive_factor;
    bool operator==(const LoadScale&) const = default;
};
struct GovSetpoint {
    std::string generator;
    double delta_p = 0.0;
    bool operator==(const GovSetpoint&) const = default;
};
struct AvrSetpoint {
    std::string generator;
    double delta_v = 0.0;
    bool operator==(const AvrSetpoint&) const = default;
};
struct Separate {
    std::vector<std::string> branches;
    bool operator==(const Separate&) const = default;
};

using GridAction = std::variant<LineTrip, LineClose, GenTrip, LoadScale, GovSetpoint, AvrSetpoint, Separate>;

struct GridEvent {
    double time = 0.0;
    GridAction action;
};

/// {"type": "line_trip", "branch": ...} and friends; see README.
nlohmann::json action_to_json(const GridAction& a);
GridAction action_from_json(const nlohmann::json& j);
std::string action_type(const GridAction& a);

struct EventOutcome {
    bool changed = false;
    std::vector<std::string> warnings;
};

class AlgebraicSolveFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IntegrationFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct IntegrationOptions {
    double tolerance = 1e-8;
    int max_iterations = 60;
};

/// Per-machine time derivatives, packed [delta, omega, p_mech] per generator.
using StateDerivative = Eigen::VectorXd;

/// Positive-sequence electromechanical simulator: classical machines as
/// Norton sources, constant-admittance loads, fixed-step trapezoidal
/// integration. Holds the network model; states are plain values.
class Simulator {
public:
    explicit Simulator(GridCase grid, IntegrationOptions options = {});

    const GridCase& grid() const noexcept { return grid_; }
    const AdmittanceMatrix& ybus() const noexcept { return ybus_; }
    const Eigen::VectorXcd& load_admittance() const noexcept { return load_y_; }
    const IslandMap& islands() const noexcept { return islands_; }
    double synchronous_speed() const noexcept { return 2.0 * std::numbers::pi * grid_.nominal_freq; }

    /// Machine states from a converged power flow; also converts loads to
    /// constant admittance at the solved voltages.
    DynamicState init_dynamics(const PowerFlowSolution& pf);

    DynamicState step(const DynamicState& state, double h) const;

    /// Applies a topology or parameter change and re-solves the network at
    /// the current machine states. Unknown targets throw UnknownTarget.
    EventOutcome apply_event(DynamicState& state, const GridAction& action);

    /// Re-solves bus voltages and machine outputs for the present rotor states.
    void refresh(DynamicState& state) const;

    StateDerivative derivative(const DynamicState& state) const;

    /// True when the island holds at least one online generator.
    bool energized(int island_label) const;

private:
    void rebuild_network();
    void solve_network(std::vector<MachineState>& machines, Eigen::VectorXcd& v) const;
    void trip_branch(std::size_t k, EventOutcome& out);
    std::size_t generator_index(const std::string& id) const;

    GridCase grid_;
    IntegrationOptions options_;
    AdmittanceMatrix ybus_;
    Eigen::VectorXcd load_y_;
    IslandMap islands_;
    std::vector<std::size_t> gen_bus_;
    std::vector<Eigen::Index> reduced_;  // bus position -> row in the energized system, -1 if dark
    Eigen::Index reduced_size_ = 0;
    Eigen::SparseLU<Eigen::SparseMatrix<Complex>> network_lu_;
    bool network_ok_ = false;
};

/// Centre-of-inertia speed of an island; nullopt when it has no online machine.
std::optional<double> island_coi_speed(const GridCase& grid, const DynamicState& state, int island_label);

}  // namespace gridcosim::powersim
