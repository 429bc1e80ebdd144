#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "gridcosim/powersim/grid_case.hpp"

namespace gridcosim::ems {

enum class MeasKind { VMag, VPhasor, PInj, QInj, PFlow, QFlow };

std::string to_string(MeasKind k);
MeasKind parse_meas_kind(const std::string& s);

/// One measurement. A v_phasor carries magnitude in `value` and angle in
/// `angle`, each with its own sigma.
struct Measurement {
    MeasKind kind = MeasKind::VMag;
    int bus = 0;
    std::string branch;
    bool to_end = false;
    double value = 0.0;
    double sigma = 0.01;
    double angle = 0.0;
    double angle_sigma = 0.01;

    bool operator==(const Measurement&) const = default;
};

using MeasurementSet = std::vector<Measurement>;

struct WlsOptions {
    double tolerance = 1e-6;
    int max_iterations = 25;
    int max_halvings = 20;
};

struct StateEstimate {
    double t = 0.0;
    Eigen::VectorXd v_mag;
    Eigen::VectorXd v_ang;  // radians, reference bus at zero
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
    std::vector<double> objective_history;  // J at the start and after each accepted step
    std::vector<double> normalized_residuals;
    double gradient_norm = 0.0;

    bool operator==(const StateEstimate& o) const
    {
        return t == o.t && v_mag == o.v_mag && v_ang == o.v_ang && converged == o.converged &&
               iterations == o.iterations && objective == o.objective && objective_history == o.objective_history &&
               normalized_residuals == o.normalized_residuals && gradient_norm == o.gradient_norm;
    }
};

class Unobservable : public std::runtime_error {
public:
    Unobservable(const std::string& what, std::vector<std::string> hint)
        : std::runtime_error(what), hint_(std::move(hint))
    {
    }
    /// State variables spanning the null space of the gain matrix.
    const std::vector<std::string>& null_space_hint() const noexcept { return hint_; }

private:
    std::vector<std::string> hint_;
};

class SeNonConvergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Gauss-Newton weighted least squares over polar bus voltages, flat start.
/// Islands without a phasor measurement take their slack bus (or lowest id)
/// as angle reference; the result is re-referenced to the case slack bus.
StateEstimate wls_estimate(const MeasurementSet& meas, const powersim::GridCase& model, const WlsOptions& options = {});

/// Noise-free measurement value for a known voltage profile.
double measurement_model(const Measurement& m, const powersim::GridCase& model, const Eigen::VectorXcd& v);

nlohmann::json measurement_to_json(const Measurement& m);
Measurement measurement_from_json(const nlohmann::json& j);
nlohmann::json estimate_to_json(const StateEstimate& e);
StateEstimate estimate_from_json(const nlohmann::json& j);

}  // namespace gridcosim::ems
