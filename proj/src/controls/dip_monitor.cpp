#include "gridcosim/controls/dip_monitor.hpp"

#include <cmath>

namespace gridcosim::controls {

DipMonitor::DipMonitor(DipMonitorConfig cfg) : cfg_(cfg) {}

std::optional<DipViolation> DipMonitor::update(int bus, double t, double v)
{
    auto& tr = buses_[bus];
    if (v >= cfg_.v_floor) {
        tr = Track{};
        return std::nullopt;
    }
    if (!tr.onset)
        tr.onset = t;
    const double lasted = t - *tr.onset;
    if (tr.flagged || !(lasted > cfg_.duration()))
        return std::nullopt;
    tr.flagged = true;
    return DipViolation{bus, *tr.onset, lasted};
}

DipMonitorController::DipMonitorController(DipMonitorConfig cfg, std::vector<int> buses)
    : monitor_(cfg), buses_(std::move(buses))
{
}

Subscription DipMonitorController::subscription() const
{
    Subscription s;
    s.topics = {ems::Topic::Estimate};
    s.buses.insert(buses_.begin(), buses_.end());
    return s;
}

ControlOutput DipMonitorController::on_record(const ControlPlaneView& view, double now)
{
    ControlOutput out;
    const double t = view.estimate_time();
    for (int bus : buses_) {
        if (auto viol = monitor_.update(bus, t, std::abs(view.bus_voltage(bus))))
            out.alarms.push_back({now, name(), "voltage_dip",
                                  {{"bus", viol->bus}, {"onset", viol->onset}, {"duration", viol->duration}}});
    }
    return out;
}

}  // namespace gridcosim::controls
