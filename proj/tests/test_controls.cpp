#include <doctest.h>

#include <cmath>

#include "gridcosim/controls/dip_monitor.hpp"
#include "gridcosim/controls/separation.hpp"
#include "gridcosim/controls/ufls.hpp"
#include "gridcosim/controls/voltage_control.hpp"
#include "gridcosim/controls/vsa.hpp"
#include "oracles.hpp"

using namespace gridcosim;
using namespace gridcosim::controls;

namespace {

UflsScheme one_stage()
{
    UflsScheme s;
    s.stages = {{59.3, 0.10, 0.2, false, std::nullopt}};
    s.buses = {5, 6};
    return s;
}

/// Feeds a constant frequency sampled at 30 fps over [t0, t1).
std::vector<powersim::LoadScale> hold(UflsScheme& s, double f, double t0, double t1)
{
    std::vector<powersim::LoadScale> out;
    for (int k = 0; t0 + k / 30.0 < t1 - 1e-12; ++k)
        for (auto& c : ufls_evaluate(s, f, t0 + k / 30.0))
            out.push_back(c);
    return out;
}

SeparationScheme two_area_scheme()
{
    SeparationScheme s;
    s.epis = {{1, 2, 5, 6}, {3, 4, 7, 8}};
    s.interfaces = {{0, 1, {"TIE1", "TIE2", "TIE3", "TIE4"}}};
    s.threshold = 2.094;
    s.post_shed_fraction = 0.10;
    return s;
}

/// Drives the monitor at 240 samples/s through a dip of `cycles` cycles at `level`.
int dip_flags(double level, double cycles)
{
    DipMonitor mon({0.8, 40.0, 60.0});
    const double onset = 1.0, end = onset + cycles / 60.0;
    int flags = 0;
    for (int k = 0; k < 240 * 4; ++k) {
        const double t = k / 240.0;
        const double v = (t >= onset && t < end) ? level : 1.0;
        if (mon.update(7, t, v))
            ++flags;
    }
    return flags;
}

ems::ControlRecord rotor_record(double t, std::vector<double> angles)
{
    ems::RotorAngleEstimate r;
    r.t = t;
    for (std::size_t k = 0; k < angles.size(); ++k) {
        r.generators.push_back("G" + std::to_string(k + 1));
        r.delta.emplace_back(angles[k]);
    }
    return {1, t, r};
}

}  // namespace

TEST_CASE("ufls fires one stage after its delay")
{
    auto s = one_stage();
    const auto cmds = hold(s, 59.2, 0.0, 0.3);
    REQUIRE(cmds.size() == 1);
    CHECK(1.0 - cmds[0].factor == doctest::Approx(0.10));
    CHECK(cmds[0].buses == std::vector<int>{5, 6});
    // One-shot: staying low fires nothing more.
    CHECK(hold(s, 59.2, 0.3, 2.0).empty());
    CHECK(s.stages[0].fired);
}

TEST_CASE("ufls ignores a short dip")
{
    auto s = one_stage();
    CHECK(hold(s, 59.2, 0.0, 0.1).empty());
    CHECK(hold(s, 60.0, 0.1, 1.0).empty());
    CHECK_FALSE(s.stages[0].fired);
    CHECK_FALSE(s.stages[0].below_since);
}

TEST_CASE("ufls stages fire in order and bad schemes are rejected")
{
    UflsScheme s;
    s.stages = {{59.3, 0.05, 0.2, false, std::nullopt}, {59.0, 0.10, 0.2, false, std::nullopt}};
    CHECK(hold(s, 59.1, 0.0, 1.0).size() == 1);
    CHECK(hold(s, 58.9, 1.0, 2.0).size() == 1);
    CHECK_NOTHROW(check_ufls(s));

    auto up = s;
    up.stages[1].threshold = 59.5;
    CHECK_THROWS_AS(check_ufls(up), std::invalid_argument);
    auto big = one_stage();
    big.stages[0].shed_fraction = 1.5;
    CHECK_THROWS_AS(check_ufls(big), std::invalid_argument);
}

TEST_CASE("angle spread")
{
    CHECK(angle_spread({0.1, 0.2, 1.9}, 1) == doctest::Approx(1.8).epsilon(1e-12));
    CHECK(angle_spread({0.1, 0.2, 1.9}, 1) >= 1.5);
    CHECK(angle_spread({0.4, 0.4, 0.4, 0.4}, 2) == 0.0);
    CHECK(angle_spread({0.0, 1.0, 2.0, 3.0}, 2) == doctest::Approx(2.0));
    CHECK_THROWS_AS(angle_spread({0.1, 0.2, 0.3}, 2), InsufficientEstimates);
}

TEST_CASE("separation plan and structure checks")
{
    const auto g = powersim::load_case(oracle::case_path("two_area"));
    auto s = two_area_scheme();
    CHECK(check_separation(s, g).empty());
    CHECK(effective_k(s, g.generators.size()) == 2);

    const auto plan = separation_plan(s);
    CHECK(plan.lines == std::vector<std::string>{"TIE1", "TIE2", "TIE3", "TIE4"});
    REQUIRE(plan.islands.size() == 2);
    CHECK(plan.islands[0] == std::vector<int>{1, 2, 5, 6});

    // Power flows from the first area into the second: the second imports.
    const std::map<std::string, double> flows{{"TIE1", 0.5}, {"TIE2", 0.5}, {"TIE3", 0.5}, {"TIE4", 0.5}};
    CHECK(deficient_islands(plan, g, flows) == std::vector<std::size_t>{1});

    auto bad = s;
    bad.epis = {{1, 2, 5}, {3, 4, 7, 8, 99}};
    bad.interfaces[0].lines.push_back("L56");
    bad.k = 9;
    CHECK(check_separation(bad, g).size() >= 4);
}

TEST_CASE("separation controller latches on a wide spread")
{
    const auto g = powersim::load_case(oracle::case_path("two_area"));
    std::vector<std::unique_ptr<Controller>> cs;
    cs.push_back(std::make_unique<SeparationController>(two_area_scheme(), g));
    ControlsHost host(std::move(cs), g);

    CHECK(host.deliver(rotor_record(1.0, {0.3, 0.3, 0.3, 0.3}), 1.0).commands.empty());
    CHECK(host.deliver(rotor_record(2.0, {0.0, 0.1, 1.0, 1.1}), 2.0).commands.empty());

    const auto out = host.deliver(rotor_record(3.0, {0.0, 0.1, 2.3, 2.4}), 3.0);
    REQUIRE(out.commands.size() == 2);
    CHECK(std::get<powersim::Separate>(out.commands[0].action).branches.size() == 4);
    // Without an estimate the lagging area is taken as the importer.
    const auto& shed = std::get<powersim::LoadScale>(out.commands[1].action);
    CHECK(shed.buses == std::vector<int>{1, 2, 5, 6});
    CHECK(shed.factor == doctest::Approx(0.9));
    REQUIRE(out.alarms.size() == 1);
    CHECK(out.alarms[0].detail["spread"].get<double>() == doctest::Approx(2.3));

    CHECK(host.deliver(rotor_record(4.0, {0.0, 0.1, 3.3, 3.4}), 4.0).commands.empty());
}

TEST_CASE("secondary voltage control law")
{
    VoltageRegion r;
    r.v_target = 1.0;
    r.deadband = 0.005;
    r.kp = 1.0;
    r.ki = 0.0;
    r.clamp = 0.02;

    SvcState quiet;
    CHECK(svc_step(1.003, r, quiet, 1.0) == 0.0);
    CHECK(svc_step(0.996, r, quiet, 1.0) == 0.0);

    SvcState s;
    CHECK(svc_step(0.95, r, s, 1.0) == doctest::Approx(0.02));

    r.ki = 1.0;
    SvcState w;
    for (int k = 0; k < 20; ++k)
        svc_step(0.95, r, w, 1.0);
    CHECK(w.output == doctest::Approx(0.02));
    // Integrator held at the clamp, so one good reading lets go at once.
    CHECK(w.integral <= 0.02 + 1e-12);
}

TEST_CASE("voltage scheme checks")
{
    const auto g = powersim::load_case(oracle::case_path("two_area"));
    VoltageScheme s;
    VoltageRegion r;
    r.generators = {"G3", "G4"};
    r.pilot_bus = 7;
    s.regions = {r};
    CHECK(check_voltage(s, g).empty());
    s.regions[0].generators.push_back("G9");
    s.regions[0].pilot_bus = 42;
    CHECK(check_voltage(s, g).size() >= 2);
}

TEST_CASE("thevenin fit recovers a constructed source")
{
    const Complex e(1.0, 0.0), z(0.0, 0.1);
    const std::vector<Complex> i{0.5, 1.0};
    std::vector<Complex> v;
    for (auto x : i)
        v.push_back(e - z * x);
    const auto fit = vsa_fit(v, i);
    CHECK(std::abs(fit.e_th - e) < 1e-9);
    CHECK(std::abs(fit.z_th - z) < 1e-9);
    CHECK(fit.index == doctest::Approx(0.1 / std::abs(Complex(1.0, -0.1))).epsilon(1e-9));
    CHECK(fit.index == doctest::Approx(0.0995).epsilon(1e-3));
    CHECK_FALSE(fit.alarm);
}

TEST_CASE("thevenin fit over a longer window and a stiff source")
{
    const Complex e = std::polar(1.05, 0.2), z(0.01, 0.08);
    std::vector<Complex> v, i;
    for (int k = 0; k < 12; ++k) {
        i.push_back(std::polar(0.4 + 0.05 * k, -0.1 - 0.01 * k));
        v.push_back(e - z * i.back());
    }
    const auto fit = vsa_fit(v, i);
    CHECK(std::abs(fit.e_th - e) < 1e-9);
    CHECK(std::abs(fit.z_th - z) < 1e-9);

    std::vector<Complex> vs;
    for (auto x : i)
        vs.push_back(e - Complex(0.0, 1e-7) * x);
    CHECK(vsa_fit(vs, i).index < 1e-6);

    // Heavy loading: index 0.2 / |(1 - j0.9) / 4.5| = 0.669.
    std::vector<Complex> vn, in{Complex(4.0, 0.0), Complex(4.5, 0.0)};
    for (auto x : in)
        vn.push_back(Complex(1.0, 0.0) - Complex(0.0, 0.2) * x);
    const auto heavy = vsa_fit(vn, in, 0.6);
    CHECK(heavy.index == doctest::Approx(0.9 / std::abs(Complex(1.0, -0.9))).epsilon(1e-9));
    CHECK(heavy.alarm);
    CHECK_FALSE(vsa_fit(vn, in, 0.7).alarm);
}

TEST_CASE("unchanged load cannot be fitted")
{
    const std::vector<Complex> i(5, Complex(0.7, -0.1));
    const std::vector<Complex> v(5, Complex(0.98, -0.05));
    CHECK_THROWS_AS(vsa_fit(v, i), IllConditioned);
}

TEST_CASE("voltage dip duration rule")
{
    CHECK(dip_flags(0.75, 50.0) == 1);
    CHECK(dip_flags(0.75, 30.0) == 0);
    CHECK(dip_flags(0.85, 200.0) == 0);

    DipMonitor mon({0.8, 40.0, 60.0});
    std::optional<DipViolation> hit;
    for (int k = 0; k < 240 && !hit; ++k)
        hit = mon.update(3, 2.0 + k / 240.0, 0.7);
    REQUIRE(hit);
    CHECK(hit->bus == 3);
    CHECK(hit->onset == 2.0);
    CHECK(hit->duration > 40.0 / 60.0);
    CHECK(hit->duration < 40.0 / 60.0 + 2.0 / 240.0);
}

TEST_CASE("controllers read only what they subscribe to")
{
    const auto g = powersim::load_case(oracle::case_path("case9"));
    Subscription sub;
    sub.topics = {ems::Topic::Aligned};
    sub.pmus = {1};
    ems::AlignedFrameSet set;
    set.entries = {{1, protocols::PmuData{}}, {2, protocols::PmuData{}}};
    const ems::ControlRecord rec{0, 1.0, set};
    ControlPlaneView view(rec, sub, g, "probe");
    CHECK(view.pmu(1) != nullptr);
    CHECK_THROWS_AS(view.pmu(2), SubscriptionViolation);
    CHECK_THROWS_AS(view.rotor_angles(), SubscriptionViolation);
}

TEST_CASE("controllers from json")
{
    const auto g = powersim::load_case(oracle::case_path("two_area"));
    const auto cfg = controls_config_from_json(nlohmann::json::parse(R"({
        "separation": {"epis": [[1, 2, 5, 6], [3, 4, 7, 8]],
                       "interfaces": [{"epis": [0, 1], "lines": ["TIE3", "TIE4"]}]},
        "dip_monitor": {"buses": [6, 7]},
        "voltage": {"enabled": false, "regions": []}
    })"));
    const auto cs = make_controllers(cfg, g);
    REQUIRE(cs.size() == 2);
    CHECK(make_controller("ufls", cfg, g) == nullptr);

    Command c{1.5, "ufls", powersim::LoadScale{0.9, {5}, std::nullopt}, "frequency"};
    const auto back = command_from_json(command_to_json(c));
    CHECK(back.t == c.t);
    CHECK(back.controller == c.controller);
    CHECK(back.action == c.action);
    CHECK(back.reason == c.reason);
}
