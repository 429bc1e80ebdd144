#include <doctest.h>

#include <cmath>
#include <numbers>

#include "gridcosim/powersim/dynamics.hpp"
#include "oracles.hpp"

using namespace gridcosim::powersim;

namespace {

GridCase load(const std::string& name)
{
    return load_case(oracle::case_path(name));
}

Complex y_at(const AdmittanceMatrix& y, Eigen::Index r, Eigen::Index c)
{
    return Eigen::MatrixXcd(y.y)(r, c);
}

/// Slack bus feeding its own load: terminal current equals the load current.
GridCase one_bus(double p, double q, double xd)
{
    GridCase g;
    g.name = "one";
    g.buses = {{1, BusKind::Slack, p, q, 1.0, std::nullopt}};
    Generator gen;
    gen.id = "G";
    gen.bus = 1;
    gen.p_sched = p;
    gen.xd_prime = xd;
    gen.governor.enabled = false;
    g.generators = {gen};
    return g;
}

DynamicState run_for(const Simulator& sim, DynamicState s, double h, double horizon)
{
    const auto n = static_cast<int>(std::llround(horizon / h));
    for (int k = 0; k < n; ++k)
        s = sim.step(s, h);
    return s;
}

}  // namespace

TEST_CASE("two-bus admittance matrix")
{
    const auto g = load("two_bus");
    const auto y = build_ybus(g);
    CHECK(std::abs(y_at(y, 0, 0) - Complex(0, -10)) < 1e-12);
    CHECK(std::abs(y_at(y, 0, 1) - Complex(0, 10)) < 1e-12);
    CHECK(std::abs(y_at(y, 1, 0) - Complex(0, 10)) < 1e-12);
    CHECK(std::abs(y_at(y, 1, 1) - Complex(0, -10)) < 1e-12);
}

TEST_CASE("admittance matrix of an all-open case is zero")
{
    auto g = load("case9");
    for (auto& b : g.branches)
        b.status = BranchStatus::Out;
    CHECK(Eigen::MatrixXcd(build_ybus(g).y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("admittance matrices match the element-by-element oracle")
{
    for (const char* name : {"case9", "two_area", "case39"}) {
        const auto g = load(name);
        const Eigen::MatrixXcd lib(build_ybus(g).y);
        const auto ref = oracle::dense_ybus(g);
        CHECK_MESSAGE((lib - ref).cwiseAbs().maxCoeff() < 1e-12, name);
    }
}

TEST_CASE("stamp_branch removes what assembly added")
{
    const auto g = load("case9");
    auto y = build_ybus(g);
    stamp_branch(y.y, g, g.branches[3], -1.0);
    auto g2 = g;
    g2.branches[3].status = BranchStatus::Out;
    CHECK((Eigen::MatrixXcd(y.y) - oracle::dense_ybus(g2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("no-load case solves flat")
{
    auto g = load("case9");
    for (auto& b : g.buses) {
        b.load_p = b.load_q = 0.0;
        b.v_setpoint = 1.0;
    }
    for (auto& b : g.branches)
        b.b_shunt = 0.0;
    for (auto& gen : g.generators)
        gen.p_sched = 0.0;
    const auto pf = solve_power_flow(g);
    CHECK(pf.converged);
    CHECK((pf.v_mag.array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK(pf.v_ang.cwiseAbs().maxCoeff() < 1e-10);
    CHECK(pf.gen_p.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("two-bus closed form")
{
    // Lossless line, Q2 = 0: V2 = cos(theta) and sin(2 theta) = -2 P x.
    const double p = 0.5, x = 0.1;
    const double theta = -0.5 * std::asin(2.0 * p * x);
    const double v2 = std::cos(theta);
    const auto pf = solve_power_flow(load("two_bus"));
    REQUIRE(pf.converged);
    CHECK(std::abs(pf.v_ang[1] - theta) < 1e-6);
    CHECK(std::abs(pf.v_mag[1] - v2) < 1e-6);
    // Substitution back into the PQ mismatch.
    const Complex v(std::polar(pf.v_mag[1], pf.v_ang[1]));
    const Complex s2 = v * std::conj((v - 1.0) / Complex(0, x));
    CHECK(std::abs(s2 - Complex(-p, 0)) < 1e-8);
    // Printed rounding of the published pair.
    CHECK(std::abs(pf.v_ang[1] - (-0.05008)) < 5e-6);
    CHECK(std::abs(pf.v_mag[1] - 0.99875) < 5e-6);
}

TEST_CASE("power flow agrees with Gauss-Seidel")
{
    for (const char* name : {"case9", "two_area", "case39"}) {
        const auto g = load(name);
        const auto pf = solve_power_flow(g);
        REQUIRE(pf.converged);
        const auto ref = oracle::gauss_seidel(g);
        double err = 0.0;
        for (std::size_t i = 0; i < ref.size(); ++i)
            err = std::max(err, std::abs(std::polar(pf.v_mag[static_cast<Eigen::Index>(i)],
                                                    pf.v_ang[static_cast<Eigen::Index>(i)]) -
                                         ref[i]));
        CHECK_MESSAGE(err < 1e-6, name);
    }
}

TEST_CASE("9-bus generation balances load plus losses")
{
    const auto g = load("case9");
    const auto pf = solve_power_flow(g);
    std::vector<Complex> v;
    for (Eigen::Index i = 0; i < pf.v_mag.size(); ++i)
        v.push_back(std::polar(pf.v_mag[i], pf.v_ang[i]));
    double losses = 0.0;
    for (const auto& br : g.branches)
        losses += (oracle::branch_flow(g, br, v, false) + oracle::branch_flow(g, br, v, true)).real();
    double total_load = 0.0;
    for (const auto& b : g.buses)
        total_load += b.load_p;
    CHECK(std::abs(pf.gen_p.sum() - total_load - losses) < 1e-8);
    CHECK(losses > 0.0);
}

TEST_CASE("overloaded line does not converge")
{
    auto g = load("two_bus");
    g.buses[1].load_p = 10.0;
    CHECK_THROWS_AS(solve_power_flow(g), PowerFlowError);
}

TEST_CASE("reactive limits convert PV buses")
{
    auto g = load("case9");
    g.generators[1].q_max = 0.0;
    g.generators[1].q_min = -0.01;
    const auto pf = solve_power_flow(g);
    CHECK(pf.converged);
    REQUIRE(pf.q_limited_buses.size() == 1);
    CHECK(pf.q_limited_buses[0] == 2);
    CHECK(pf.gen_q[1] <= 1e-9);
}

TEST_CASE("machine initialization")
{
    SUBCASE("no load: EMF equals terminal voltage")
    {
        auto g = load("two_bus");
        g.buses[1].load_p = 0.0;
        g.generators[0].p_sched = 0.0;
        Simulator sim(g);
        const auto s = sim.init_dynamics(solve_power_flow(g));
        CHECK(std::abs(s.machines[0].e_prime - 1.0) < 1e-9);
        CHECK(std::abs(s.machines[0].delta) < 1e-9);
    }
    SUBCASE("unit current behind 0.3")
    {
        const auto g = one_bus(1.0, 0.0, 0.3);
        Simulator sim(g);
        const auto s = sim.init_dynamics(solve_power_flow(g));
        CHECK(s.machines[0].e_prime == doctest::Approx(std::hypot(1.0, 0.3)).epsilon(1e-9));
        CHECK(s.machines[0].e_prime == doctest::Approx(1.044).epsilon(1e-3));
        CHECK(s.machines[0].delta == doctest::Approx(std::atan(0.3)).epsilon(1e-9));
        CHECK(s.machines[0].delta == doctest::Approx(0.2915).epsilon(1e-3));
    }
}

TEST_CASE("9-bus starts at an equilibrium")
{
    const auto g = load("case9");
    Simulator sim(g);
    const auto s0 = sim.init_dynamics(solve_power_flow(g));
    CHECK(sim.derivative(s0).cwiseAbs().maxCoeff() < 1e-9);

    const auto s1 = sim.step(s0, 0.01);
    for (std::size_t k = 0; k < s0.machines.size(); ++k) {
        CHECK(std::abs(s1.machines[k].delta - s0.machines[k].delta) < 1e-10);
        CHECK(std::abs(s1.machines[k].omega - s0.machines[k].omega) < 1e-10);
    }
    const auto s = run_for(sim, s0, 0.01, 10.0);
    for (const auto& m : s.machines)
        CHECK(std::abs(m.omega - 1.0) < 1e-8);
}

TEST_CASE("trapezoidal step halving")
{
    const auto g = load("two_machine");
    Simulator sim(g);
    auto s0 = sim.init_dynamics(solve_power_flow(g));
    s0.machines[1].delta += 0.3;
    std::vector<double> d;
    for (double h : {0.02, 0.01, 0.005})
        d.push_back(run_for(sim, s0, h, 1.0).machines[1].delta);
    const double ratio = (d[0] - d[1]) / (d[1] - d[2]);
    CHECK(ratio > 3.0);
    CHECK(ratio < 5.0);
}

TEST_CASE("undamped two-machine energy is conserved")
{
    const auto g = load("two_machine");
    Simulator sim(g);
    const auto pf = solve_power_flow(g);
    auto s = sim.init_dynamics(pf);
    const oracle::TwoMachineEnergy energy{g.generators[0].inertia_h,
                                          g.generators[1].inertia_h,
                                          1.0 / (g.generators[0].xd_prime + g.branches[0].x + g.generators[1].xd_prime),
                                          s.machines[0].e_prime,
                                          s.machines[1].e_prime,
                                          s.machines[0].p_mech,
                                          sim.synchronous_speed()};
    auto w = [&](const DynamicState& x) {
        return energy(x.machines[0].delta, x.machines[0].omega, x.machines[1].delta, x.machines[1].omega);
    };
    const double w_eq = w(s);
    s.machines[0].delta += 0.2;
    sim.refresh(s);
    const double w0 = w(s);
    const double swing = w0 - w_eq;
    REQUIRE(swing > 0.0);
    double worst = 0.0;
    for (int k = 0; k < 10000; ++k) {
        s = sim.step(s, 1e-3);
        worst = std::max(worst, std::abs(w(s) - w0));
    }
    CHECK(worst / swing < 1e-3);
}

TEST_CASE("9-bus generator trip settles on aggregate droop")
{
    const auto g = load("case9");
    Simulator sim(g);
    auto s = sim.init_dynamics(solve_power_flow(g));
    const double lost = s.machines[2].p_mech;
    sim.apply_event(s, GenTrip{"G3"});
    s = run_for(sim, s, 0.01, 50.0);
    // Undamped machines keep a small residual swing; average the last 10 s.
    double mean = 0.0, spread = 0.0;
    for (int k = 0; k < 1000; ++k) {
        s = sim.step(s, 0.01);
        mean += *island_coi_speed(g, s, s.island_map[0]) / 1000.0;
        spread = std::max(spread, std::abs(s.machines[0].omega - s.machines[1].omega));
    }
    double inv_r = 0.0;
    for (std::size_t k = 0; k < 2; ++k)
        inv_r += 1.0 / g.generators[k].governor.droop_r;
    const double expected = -lost / inv_r;
    const double df = mean - 1.0;
    CHECK(spread < 0.05 * std::abs(expected));
    CHECK(std::abs(df - expected) < 0.05 * std::abs(expected));
}

TEST_CASE("events")
{
    auto g = load("two_area");
    Simulator sim(g);
    auto s = sim.init_dynamics(solve_power_flow(g));

    SUBCASE("load scaling")
    {
        const Eigen::VectorXcd before = sim.load_admittance();
        sim.apply_event(s, LoadScale{0.9, {6, 7}, std::nullopt});
        const auto& after = sim.load_admittance();
        for (Eigen::Index i = 0; i < after.size(); ++i) {
            const double f = (g.buses[static_cast<std::size_t>(i)].id == 6 || g.buses[static_cast<std::size_t>(i)].id == 7)
                                 ? 0.9
                                 : 1.0;
            CHECK(std::abs(after[i] - f * before[i]) < 1e-15);
        }
    }
    SUBCASE("reactive-only scaling")
    {
        const Eigen::VectorXcd before = sim.load_admittance();
        sim.apply_event(s, LoadScale{1.0, {7}, 2.0});
        const auto k = static_cast<Eigen::Index>(g.bus_index(7));
        CHECK(sim.load_admittance()[k].real() == doctest::Approx(before[k].real()));
        CHECK(sim.load_admittance()[k].imag() == doctest::Approx(2.0 * before[k].imag()));
    }
    SUBCASE("repeat trip warns")
    {
        CHECK(sim.apply_event(s, LineTrip{"TIE1"}).changed);
        const auto again = sim.apply_event(s, LineTrip{"TIE1"});
        CHECK_FALSE(again.changed);
        CHECK(again.warnings.size() == 1);
    }
    SUBCASE("separation splits the system")
    {
        sim.apply_event(s, Separate{{"TIE1", "TIE2", "TIE3", "TIE4"}});
        CHECK(island_labels(s.island_map).size() == 2);
        CHECK(sim.energized(s.island_map[0]));
        CHECK(sim.energized(s.island_map[g.bus_index(7)]));
    }
    SUBCASE("unknown targets")
    {
        CHECK_THROWS_AS(sim.apply_event(s, LineTrip{"nope"}), UnknownTarget);
        CHECK_THROWS_AS(sim.apply_event(s, GenTrip{"nope"}), UnknownTarget);
    }
}

TEST_CASE("island detection")
{
    auto g = load("case9");
    CHECK(island_labels(detect_islands(g)).size() == 1);
    g.branches[*g.find_branch("T14")].status = BranchStatus::Out;
    const auto m = detect_islands(g);
    CHECK(island_labels(m).size() == 2);
    CHECK(m[g.bus_index(1)] == 1);
    CHECK(m[g.bus_index(4)] == 2);
    for (auto& b : g.branches)
        b.status = BranchStatus::Out;
    CHECK(island_labels(detect_islands(g)).size() == g.buses.size());
}

TEST_CASE("case validation collects every problem")
{
    auto g = load("case9");
    CHECK(check_case(g).empty());
    g.generators[0].inertia_h = 0.0;
    g.generators[1].q_min = 5.0;
    g.branches[0].to_bus = 99;
    g.buses[2].id = g.buses[1].id;
    CHECK(check_case(g).size() >= 4);
    CHECK_THROWS_AS(validate_case(g), CaseError);
}

TEST_CASE("case json round trip")
{
    const auto g = load("two_area");
    CHECK(case_from_json(case_to_json(g)) == g);
}

TEST_CASE("action json round trip")
{
    const std::vector<GridAction> all{LineTrip{"a"},          LineClose{"b"},          GenTrip{"G1"},
                                      LoadScale{0.9, {1, 2}, std::nullopt}, LoadScale{1.0, {3}, 1.5},
                                      GovSetpoint{"G2", 0.1}, AvrSetpoint{"G3", -0.02}, Separate{{"x", "y"}}};
    for (const auto& a : all)
        CHECK(action_from_json(action_to_json(a)) == a);
    CHECK(action_type(all[0]) == "line_trip");
    CHECK_THROWS(action_from_json(nlohmann::json{{"type", "explode"}}));
}
