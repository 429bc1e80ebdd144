#include <doctest.h>

#include <cmath>
#include <random>

#include "gridcosim/ems/control_plane.hpp"
#include "gridcosim/ems/dispatch.hpp"
#include "gridcosim/ems/pdc.hpp"
#include "gridcosim/ems/rotor_angle.hpp"
#include "gridcosim/ems/wls.hpp"
#include "gridcosim/powersim/dynamics.hpp"
#include "gridcosim/powersim/power_flow.hpp"
#include "oracles.hpp"

using namespace gridcosim;
using namespace gridcosim::ems;

namespace {

protocols::C37Data frame_at(std::uint16_t id, std::uint32_t soc, std::uint32_t fracsec)
{
    protocols::C37Data d;
    d.prefix = {id, soc, fracsec};
    d.pmus.push_back({protocols::kStatOk, {{1.0f, 0.0f}}, 60.0f, 0.0f});
    return d;
}

PdcConfig two_pmus()
{
    PdcConfig c;
    c.expected = {1, 2};
    c.wait_window = 0.100;
    c.rate = 30;
    c.first_slot = 30;  // T = 1.0 s
    return c;
}

powersim::GridCase single_bus()
{
    powersim::GridCase g;
    g.name = "single";
    g.buses = {{1, powersim::BusKind::Slack, 0.0, 0.0, 1.0, std::nullopt}};
    return g;
}

Measurement vmag(int bus, double value, double sigma)
{
    Measurement m;
    m.kind = MeasKind::VMag;
    m.bus = bus;
    m.value = value;
    m.sigma = sigma;
    return m;
}

double slack_angle(const powersim::GridCase& g, const std::vector<oracle::C>& v)
{
    for (std::size_t i = 0; i < g.buses.size(); ++i)
        if (g.buses[i].kind == powersim::BusKind::Slack)
            return std::arg(v[i]);
    return 0.0;
}

powersim::GridCase quadratic_units(std::vector<powersim::CostCurve> costs, double p_max_mw)
{
    powersim::GridCase g;
    g.base_mva = 100.0;
    g.buses = {{1, powersim::BusKind::Slack, 0.0, 0.0, 1.0, std::nullopt}};
    for (std::size_t k = 0; k < costs.size(); ++k) {
        powersim::Generator gen;
        gen.id = "U" + std::to_string(k + 1);
        gen.bus = 1;
        gen.p_min = 0.0;
        gen.p_max = p_max_mw / g.base_mva;
        gen.cost = costs[k];
        g.generators.push_back(gen);
    }
    return g;
}

}  // namespace

TEST_CASE("pdc emits a complete set at the last arrival")
{
    Pdc pdc(two_pmus());
    CHECK(pdc.on_frame(frame_at(1, 1, 0), 1.020).empty());
    const auto out = pdc.on_frame(frame_at(2, 1, 0), 1.090);
    REQUIRE(out.size() == 1);
    CHECK(out[0].t == doctest::Approx(1.0));
    CHECK(out[0].emitted_at == doctest::Approx(1.090));
    CHECK(out[0].completeness == 1.0);
    CHECK(out[0].find(1) != nullptr);
    CHECK(out[0].find(2) != nullptr);
}

TEST_CASE("pdc releases at the window and counts the straggler late")
{
    Pdc pdc(two_pmus());
    pdc.on_frame(frame_at(1, 1, 0), 1.020);
    const auto out = pdc.advance(1.100);
    REQUIRE(out.size() == 1);
    CHECK(out[0].emitted_at == doctest::Approx(1.100));
    CHECK(out[0].completeness == 0.5);
    CHECK(out[0].find(2) == nullptr);
    CHECK(pdc.counters().missing == 1);
    pdc.on_frame(frame_at(2, 1, 0), 1.150);
    CHECK(pdc.counters().late == 1);
}

TEST_CASE("pdc with zero latency is always complete and in order")
{
    Pdc pdc(two_pmus());
    std::vector<AlignedFrameSet> sets;
    for (std::int64_t k = 30; k < 90; ++k) {
        const auto soc = static_cast<std::uint32_t>(k / 30);
        const auto frac = static_cast<std::uint32_t>((k % 30) * 1'000'000 / 30);
        const double t = pdc.grid_time(k);
        for (std::uint16_t id : {2, 1})
            for (auto& s : pdc.on_frame(frame_at(id, soc, frac), t))
                sets.push_back(s);
    }
    REQUIRE(sets.size() == 60);
    for (std::size_t n = 0; n < sets.size(); ++n) {
        CHECK(sets[n].completeness == 1.0);
        CHECK(sets[n].grid_index == static_cast<std::int64_t>(30 + n));
        CHECK(sets[n].emitted_at == sets[n].t);
    }
    CHECK(pdc.counters().late == 0);
}

TEST_CASE("pdc counts duplicates and strangers and fills silent slots")
{
    Pdc pdc(two_pmus());
    pdc.on_frame(frame_at(1, 1, 0), 1.01);
    pdc.on_frame(frame_at(1, 1, 0), 1.02);
    pdc.on_frame(frame_at(7, 1, 0), 1.02);
    CHECK(pdc.counters().duplicates == 1);
    CHECK(pdc.counters().unexpected == 1);
    const auto out = pdc.advance(1.19);
    // Slots 30, 31 and 32 have deadlines before 1.19 s.
    REQUIRE(out.size() == 3);
    CHECK(out[1].completeness == 0.0);
    CHECK(aligned_from_json(aligned_to_json(out[0])) == out[0]);
}

TEST_CASE("single-bus estimate is the weighted mean")
{
    const auto g = single_bus();
    const auto eq = wls_estimate({vmag(1, 1.00, 0.01), vmag(1, 1.02, 0.01)}, g);
    CHECK(eq.v_mag[0] == doctest::Approx(1.01).epsilon(1e-9));
    const auto w = wls_estimate({vmag(1, 1.00, 0.01), vmag(1, 1.02, 0.02)}, g);
    // Weights 1/sigma^2: (1.00 * 4 + 1.02 * 1) / 5
    CHECK(w.v_mag[0] == doctest::Approx(1.004).epsilon(1e-9));
}

TEST_CASE("under-measured network is unobservable")
{
    const auto g = powersim::load_case(oracle::case_path("two_bus"));
    try {
        wls_estimate({vmag(1, 1.0, 0.01)}, g);
        FAIL("estimated with one measurement");
    } catch (const Unobservable& e) {
        CHECK_FALSE(e.null_space_hint().empty());
    }
}

TEST_CASE("noiseless measurements recover the oracle state on every fixture")
{
    for (const char* name : {"two_bus", "two_machine", "case9", "two_area", "case39"}) {
        CAPTURE(name);
        const auto g = powersim::load_case(oracle::case_path(name));
        const auto v = oracle::gauss_seidel(g);
        const auto est = wls_estimate(oracle::noiseless_measurements(g, v), g);
        CHECK(est.converged);
        const double ref = slack_angle(g, v);
        double worst = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            worst = std::max(worst, std::abs(est.v_mag[k] - std::abs(v[i])));
            worst = std::max(worst, std::abs(est.v_ang[k] - (std::arg(v[i]) - ref)));
        }
        CHECK(worst < 1e-6);
        CHECK(est.objective < 1e-12);
    }
}

TEST_CASE("objective never increases under noise")
{
    const auto g = powersim::load_case(oracle::case_path("case39"));
    const auto v = oracle::gauss_seidel(g);
    auto meas = oracle::noiseless_measurements(g, v);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto& m : meas)
        m.value += m.sigma * unit(rng);
    const auto est = wls_estimate(meas, g);
    REQUIRE(est.objective_history.size() >= 2);
    for (std::size_t k = 1; k < est.objective_history.size(); ++k)
        CHECK(est.objective_history[k] <= est.objective_history[k - 1]);
    CHECK(estimate_from_json(estimate_to_json(est)) == est);
}

TEST_CASE("measurement model agrees with the flow oracle")
{
    const auto g = powersim::load_case(oracle::case_path("case9"));
    const auto v = oracle::gauss_seidel(g);
    Eigen::VectorXcd vv(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        vv[static_cast<Eigen::Index>(i)] = v[i];
    for (const auto& m : oracle::noiseless_measurements(g, v))
        CHECK(measurement_model(m, g, vv) == doctest::Approx(m.value).epsilon(1e-10));
    for (const auto& m : oracle::noiseless_measurements(g, v))
        CHECK(measurement_from_json(measurement_to_json(m)) == m);
}

TEST_CASE("rotor angle from terminal phasors")
{
    CHECK(rotor_angle({1.0, 0.0}, {1.0, 0.0}, 0.3) == doctest::Approx(0.2915).epsilon(1e-4));
    CHECK(rotor_angle({1.0, 0.0}, {1.0, 0.0}, 0.3) == doctest::Approx(std::atan(0.3)).epsilon(1e-14));
    const Complex v = std::polar(0.97, -0.4);
    CHECK(rotor_angle(v, {0.0, 0.0}, 0.3) == doctest::Approx(-0.4).epsilon(1e-14));
}

TEST_CASE("rotor angles close the loop against the simulator")
{
    const auto g = powersim::load_case(oracle::case_path("case9"));
    powersim::Simulator sim(g);
    auto s = sim.init_dynamics(powersim::solve_power_flow(g));
    sim.apply_event(s, powersim::GenTrip{"G3"});
    RotorAngleTracker tracker;
    for (int k = 0; k < 200; ++k) {
        s = sim.step(s, 0.01);
        std::vector<MachinePhasors> in;
        for (std::size_t m = 0; m < g.generators.size(); ++m) {
            MachinePhasors p{g.generators[m].id, g.generators[m].xd_prime, std::nullopt, std::nullopt};
            if (s.machines[m].online) {
                p.v = s.v[static_cast<Eigen::Index>(g.bus_index(g.generators[m].bus))];
                p.i = s.machines[m].current;
            }
            in.push_back(p);
        }
        const auto est = tracker.update(s.t, in);
        CHECK_FALSE(est.delta[2].has_value());
        for (std::size_t m = 0; m < 2; ++m) {
            REQUIRE(est.delta[m].has_value());
            const double err = std::remainder(*est.delta[m] - s.machines[m].delta, 2.0 * std::numbers::pi);
            CHECK(std::abs(err) < 1e-9);
        }
    }
}

TEST_CASE("tracker unwraps past pi")
{
    RotorAngleTracker tr;
    double last = 0.0;
    for (int k = 0; k <= 40; ++k) {
        const double a = 0.2 * k;
        const auto e = tr.update(k * 0.1, {{"G", 0.0, std::polar(1.0, a), Complex{}}});
        last = *e.delta[0];
        CHECK(last == doctest::Approx(a).epsilon(1e-12));
    }
    CHECK(last > 2.0 * std::numbers::pi);
}

TEST_CASE("economic dispatch")
{
    SUBCASE("identical units share equally")
    {
        const auto g = quadratic_units({{0.01, 10.0, 0.0}, {0.01, 10.0, 0.0}, {0.01, 10.0, 0.0}}, 500.0);
        const auto d = economic_dispatch(g, 300.0);
        for (double p : d.p_setpoint)
            CHECK(p == doctest::Approx(100.0).epsilon(1e-6));
        CHECK(d.feasible);
    }
    SUBCASE("two quadratic units at 300 MW")
    {
        const auto g = quadratic_units({{0.01, 10.0, 0.0}, {0.02, 10.0, 0.0}}, 500.0);
        const auto d = economic_dispatch(g, 300.0);
        CHECK(d.p_setpoint[0] == doctest::Approx(200.0).epsilon(1e-6));
        CHECK(d.p_setpoint[1] == doctest::Approx(100.0).epsilon(1e-6));
        CHECK(d.lambda == doctest::Approx(14.0).epsilon(1e-6));
        CHECK(incremental_cost(g.generators[0].cost, 200.0) == doctest::Approx(14.0));
    }
    SUBCASE("limits clamp and move the margin")
    {
        const auto g = quadratic_units({{0.01, 10.0, 0.0}, {0.02, 10.0, 0.0}}, 150.0);
        const auto d = economic_dispatch(g, 280.0);
        CHECK(d.p_setpoint[0] == doctest::Approx(150.0).epsilon(1e-6));
        CHECK(d.p_setpoint[1] == doctest::Approx(130.0).epsilon(1e-6));
        CHECK(d.lambda == doctest::Approx(15.2).epsilon(1e-6));
    }
    SUBCASE("demand above capacity")
    {
        const auto g = quadratic_units({{0.01, 10.0, 0.0}, {0.02, 10.0, 0.0}}, 100.0);
        CHECK_THROWS_AS(economic_dispatch(g, 300.0), Infeasible);
    }
}

TEST_CASE("agc control law")
{
    AgcConfig cfg;
    cfg.enabled = true;
    cfg.beta_mw_per_hz = 100.0;
    cfg.ki = 0.1;
    cfg.generators = {"G1", "G2"};
    cfg.participation = {0.5, 0.5};
    const AgcLimits wide{{-1e9, -1e9}, {1e9, 1e9}};

    AgcState s0;
    const auto zero = agc_step(0.0, 0.0, s0, cfg, 2.0, wide);
    CHECK(zero == std::vector<double>{0.0, 0.0});

    AgcState s;
    const auto d = agc_step(-0.05, 0.0, s, cfg, 2.0, wide);
    CHECK(s.last_ace == doctest::Approx(-5.0));
    CHECK(d[0] > 0.0);
    CHECK(d[0] + d[1] == doctest::Approx(0.1 * 5.0 * 2.0));

    SUBCASE("ramp clamp freezes the integral")
    {
        auto slow = cfg;
        slow.ramp_mw_per_s = 0.1;
        AgcState r;
        const auto step = agc_step(-0.05, 0.0, r, slow, 2.0, wide);
        CHECK(step[0] == doctest::Approx(0.2));
        CHECK(r.ace_integral == 0.0);
    }
}

TEST_CASE("agc restores nominal frequency and droop alone does not")
{
    const auto g = powersim::load_case(oracle::case_path("case9"));
    AgcConfig cfg;
    cfg.enabled = true;
    cfg.beta_mw_per_hz = 190.0;
    cfg.ki = 0.3;
    cfg.period = 2.0;
    cfg.generators = {"G1", "G2"};
    cfg.participation = {0.8, 0.2};
    const AgcLimits wide{{-1e9, -1e9}, {1e9, 1e9}};

    auto final_offset = [&](bool with_agc) {
        powersim::Simulator sim(g);
        auto s = sim.init_dynamics(powersim::solve_power_flow(g));
        sim.apply_event(s, powersim::GenTrip{"G3"});
        AgcState st;
        const double h = 0.01;
        for (int k = 1; k <= 9000; ++k) {
            s = sim.step(s, h);
            if (with_agc && k % 200 == 0) {
                const double df = (*powersim::island_coi_speed(g, s, s.island_map[0]) - 1.0) * g.nominal_freq;
                const auto delta = agc_step(df, 0.0, st, cfg, cfg.period, wide);
                for (std::size_t u = 0; u < delta.size(); ++u)
                    sim.apply_event(s, powersim::GovSetpoint{cfg.generators[u], delta[u] / g.base_mva});
            }
        }
        return (*powersim::island_coi_speed(g, s, s.island_map[0]) - 1.0) * g.nominal_freq;
    };
    CHECK(std::abs(final_offset(true)) < 0.005);
    CHECK(std::abs(final_offset(false)) > 0.1);
}

TEST_CASE("publisher holds estimates until the first aligned set")
{
    ControlPlanePublisher pub;
    StateEstimate est;
    est.v_mag = Eigen::VectorXd::Ones(1);
    est.v_ang = Eigen::VectorXd::Zero(1);
    CHECK_FALSE(pub.publish(0.1, est));
    CHECK(pub.suppressed() == 1);

    AlignedFrameSet set;
    set.entries = {{1, std::nullopt}};
    const auto a = pub.publish(0.2, set);
    REQUIRE(a);
    CHECK(a->topic() == Topic::Aligned);
    const auto b = pub.publish(0.2, est);
    REQUIRE(b);
    const auto c = pub.publish(0.3, RotorAngleEstimate{0.3, {"G1"}, {1.0}});
    REQUIRE(c);
    CHECK(a->seq < b->seq);
    CHECK(b->seq < c->seq);
    CHECK(record_from_json(record_to_json(*c)) == *c);
    CHECK(parse_topic(to_string(Topic::Estimate)) == Topic::Estimate);
}
