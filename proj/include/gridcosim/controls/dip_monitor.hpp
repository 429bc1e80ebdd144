#pragma once

#include <map>
#include <optional>
#include <vector>

#include "gridcosim/controls/controller.hpp"

namespace gridcosim::controls {

struct DipMonitorConfig {
    double v_floor = 0.8;
    double duration_cycles = 40.0;
    double nominal_freq = 60.0;

    double duration() const noexcept { return duration_cycles / nominal_freq; }
};

struct DipViolation {
    int bus = 0;
    double onset = 0.0;
    double duration = 0.0;  // below the floor when flagged
};

/// Flags each dip once, when it has lasted strictly longer than the limit.
class DipMonitor {
public:
    explicit DipMonitor(DipMonitorConfig cfg);

    std::optional<DipViolation> update(int bus, double t, double v);
    void reset() { buses_.clear(); }

private:
    struct Track {
        std::optional<double> onset;
        bool flagged = false;
    };

    DipMonitorConfig cfg_;
    std::map<int, Track> buses_;
};

class DipMonitorController : public Controller {
public:
    DipMonitorController(DipMonitorConfig cfg, std::vector<int> buses);

    std::string name() const override { return "dip_monitor"; }
    Subscription subscription() const override;
    ControlOutput on_record(const ControlPlaneView& view, double now) override;
    void reset() override { monitor_.reset(); }

private:
    DipMonitor monitor_;
    std::vector<int> buses_;
};

}  // namespace gridcosim::controls
