#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "gridcosim/powersim/grid_case.hpp"

namespace gridcosim::powersim {

struct PowerFlowOptions {
    double tolerance = 1e-8;
    int max_iterations = 20;
    bool enforce_q_limits = true;
};

struct PowerFlowSolution {
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;
    /// Per generator, in case order; zero for out-of-service units.
    Eigen::VectorXd gen_p;
    Eigen::VectorXd gen_q;
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
    /// Bus ids switched from PV to PQ because a reactive limit bound.
    std::vector<int> q_limited_buses;

    Eigen::VectorXcd voltage() const;
};

class PowerFlowError : public std::runtime_error {
public:
    enum class Kind { NonConvergence, SingularJacobian };

    PowerFlowError(Kind kind, int bus, const std::string& what)
        : std::runtime_error(what), kind_(kind), bus_(bus)
    {
    }

    Kind kind() const noexcept { return kind_; }
    /// Bus most implicated in the failure (largest mismatch or null-space weight).
    int bus() const noexcept { return bus_; }

private:
    Kind kind_;
    int bus_;
};

/// Newton-Raphson in polar mismatch form. PV buses that exceed their
/// aggregate reactive limits are converted to PQ at the limit, at most once
/// per bus per solve.
PowerFlowSolution solve_power_flow(const GridCase& grid, const PowerFlowOptions& options = {});

/// Complex power injected at every bus by voltage `v`: S = V * conj(Y V).
Eigen::VectorXcd bus_injections(const GridCase& grid, const Eigen::VectorXcd& v);

}  // namespace gridcosim::powersim
