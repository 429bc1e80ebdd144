#include "gridcosim/ems/rotor_angle.hpp"

#include <cmath>
#include <numbers>

namespace gridcosim::ems {

using nlohmann::json;

double rotor_angle(Complex v, Complex i, double xd_prime)
{
    return std::arg(v + Complex(0.0, xd_prime) * i);
}

std::vector<double> RotorAngleEstimate::available() const
{
    std::vector<double> out;
    for (const auto& d : delta)
        if (d)
            out.push_back(*d);
    return out;
}

RotorAngleEstimate RotorAngleTracker::update(double t, const std::vector<MachinePhasors>& machines)
{
    last_.resize(machines.size());
    RotorAngleEstimate est;
    est.t = t;
    for (std::size_t g = 0; g < machines.size(); ++g) {
        const auto& m = machines[g];
        est.generators.push_back(m.generator);
        if (!m.v || !m.i) {
            est.delta.push_back(std::nullopt);
            continue;
        }
        const double raw = rotor_angle(*m.v, *m.i, m.xd_prime);
        double value = raw;
        if (last_[g])
            value = *last_[g] + std::remainder(raw - *last_[g], 2.0 * std::numbers::pi);
        last_[g] = value;
        est.delta.push_back(value);
    }
    return est;
}

json rotor_to_json(const RotorAngleEstimate& r)
{
    json d = json::array();
    for (const auto& x : r.delta)
        d.push_back(x ? json(*x) : json(nullptr));
    return json{{"t", r.t}, {"generators", r.generators}, {"delta", d}};
}

RotorAngleEstimate rotor_from_json(const json& j)
{
    RotorAngleEstimate r;
    r.t = j.at("t").get<double>();
    r.generators = j.at("generators").get<std::vector<std::string>>();
    for (const auto& x : j.at("delta"))
        r.delta.push_back(x.is_null() ? std::nullopt : std::optional<double>(x.get<double>()));
    return r;
}

}  // namespace gridcosim::ems
