#pragma once

#include <complex>
#include <deque>
#include <stdexcept>
#include <vector>

#include "gridcosim/controls/controller.hpp"

namespace gridcosim::controls {

class IllConditioned : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct VsaFit {
    Complex e_th;
    Complex z_th;
    double index = 0.0;  // |Z_th| / |Z_load| at the latest sample
    bool alarm = false;
};

/// Least-squares Thevenin fit of V = E_th - Z_th I over a sample window.
VsaFit vsa_fit(const std::vector<Complex>& v, const std::vector<Complex>& i, double alarm_index = 0.9);

struct VsaBus {
    int bus = 0;
    std::uint16_t pmu = 0;
    std::size_t v_channel = 0;
    std::size_t i_channel = 1;  // load current channel
};

struct VsaConfig {
    std::vector<VsaBus> buses;
    std::size_t window = 10;
    double alarm_index = 0.9;
};

class VsaController : public Controller {
public:
    explicit VsaController(VsaConfig cfg);

    std::string name() const override { return "vsa"; }
    Subscription subscription() const override;
    ControlOutput on_record(const ControlPlaneView& view, double now) override;
    void reset() override;

private:
    struct Window {
        std::deque<Complex> v;
        std::deque<Complex> i;
        bool alarmed = false;
    };

    VsaConfig cfg_;
    std::vector<Window> windows_;
};

}  // namespace gridcosim::controls
