#pragma once

#include <optional>
#include <vector>

#include "gridcosim/controls/controller.hpp"

namespace gridcosim::controls {

struct VoltageRegion {
    std::vector<std::string> generators;
    int pilot_bus = 0;
    double v_target = 1.0;
    double kp = 0.5;
    double ki = 0.2;
    double deadband = 0.005;
    double clamp = 0.1;  // bound on the total excitation offset, pu
};

struct VoltageScheme {
    std::vector<VoltageRegion> regions;
    double period = 1.0;
};

std::vector<std::string> check_voltage(const VoltageScheme& s, const powersim::GridCase& grid);

/// PI state of one region.
struct SvcState {
    double integral = 0.0;
    double output = 0.0;  // offset currently applied
};

/// New total offset for a pilot reading; holds inside the deadband and
/// stops integrating while clamped.
double svc_step(double v_pilot, const VoltageRegion& region, SvcState& state, double dt);

class SecondaryVoltageController : public Controller {
public:
    SecondaryVoltageController(VoltageScheme scheme, powersim::GridCase model);

    std::string name() const override { return "voltage"; }
    Subscription subscription() const override;
    ControlOutput on_record(const ControlPlaneView& view, double now) override;
    void reset() override;

private:
    struct Pilot {
        double t = 0.0;
        double v = 0.0;
    };

    VoltageScheme scheme_;
    powersim::GridCase model_;
    std::vector<SvcState> states_;
    std::vector<std::optional<Pilot>> pilots_;
    std::optional<double> last_act_;
};

/// Slow re-dispatch level: re-runs economic dispatch on the model load and
/// reports the result as an alarm record.
class TertiaryDispatch : public Controller {
public:
    TertiaryDispatch(double period, powersim::GridCase model);

    std::string name() const override { return "tertiary"; }
    Subscription subscription() const override;
    ControlOutput on_record(const ControlPlaneView& view, double now) override;
    void reset() override { next_ = 0.0; }

private:
    double period_;
    powersim::GridCase model_;
    double next_ = 0.0;
};

}  // namespace gridcosim::controls
