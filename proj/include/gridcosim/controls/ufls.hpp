#pragma once

#include <optional>
#include <vector>

#include "gridcosim/controls/controller.hpp"

namespace gridcosim::controls {

struct UflsStage {
    double threshold = 59.3;  // Hz
    double shed_fraction = 0.1;
    double delay = 0.2;  // s
    bool fired = false;
    std::optional<double> below_since;
};

struct UflsScheme {
    std::vector<UflsStage> stages;
    std::vector<int> buses;
};

/// Throws std::invalid_argument for non-decreasing thresholds or fractions
/// outside (0, 1].
void check_ufls(const UflsScheme& s);

/// One frequency sample at time t. Returns the load-scale commands of the
/// stages that fire now.
std::vector<powersim::LoadScale> ufls_evaluate(UflsScheme& scheme, double f, double t);

class UflsController : public Controller {
public:
    UflsController(UflsScheme scheme, std::uint16_t freq_pmu);

    std::string name() const override { return "ufls"; }
    Subscription subscription() const override;
    ControlOutput on_record(const ControlPlaneView& view, double now) override;
    void reset() override;

    const UflsScheme& scheme() const noexcept { return scheme_; }

private:
    UflsScheme scheme_;
    std::uint16_t pmu_;
};

}  // namespace gridcosim::controls
