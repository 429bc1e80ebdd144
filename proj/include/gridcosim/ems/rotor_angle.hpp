#pragma once

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace gridcosim::ems {

using Complex = std::complex<double>;

/// Classical-machine internal angle arg(V + j xd' I).
double rotor_angle(Complex v, Complex i, double xd_prime);

class MissingChannel : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RotorAngleEstimate {
    double t = 0.0;
    std::vector<std::string> generators;
    /// Unwrapped angles, nullopt where the machine is not observable.
    std::vector<std::optional<double>> delta;

    /// Observable angles only.
    std::vector<double> available() const;
    bool operator==(const RotorAngleEstimate&) const = default;
};

/// Terminal phasors of one machine, or nullopt when its channels are dark.
struct MachinePhasors {
    std::string generator;
    double xd_prime = 0.0;
    std::optional<Complex> v;
    std::optional<Complex> i;
};

/// Keeps rotor angles continuous across samples so that spreads beyond pi
/// stay visible.
class RotorAngleTracker {
public:
    RotorAngleEstimate update(double t, const std::vector<MachinePhasors>& machines);

private:
    std::vector<std::optional<double>> last_;
};

nlohmann::json rotor_to_json(const RotorAngleEstimate& r);
RotorAngleEstimate rotor_from_json(const nlohmann::json& j);

}  // namespace gridcosim::ems
