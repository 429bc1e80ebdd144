#include "gridcosim/powersim/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace gridcosim::powersim {

namespace {

constexpr Complex kJ{0.0, 1.0};

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

}  // namespace

Simulator::Simulator(GridCase grid, IntegrationOptions options) : grid_(std::move(grid)), options_(options)
{
    validate_case(grid_);
    const auto index = bus_lookup(grid_);
    gen_bus_.reserve(grid_.generators.size());
    for (const auto& g : grid_.generators)
        gen_bus_.push_back(index.at(g.bus));
    ybus_ = build_ybus(grid_);
    load_y_ = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid_.buses.size()));
    for (std::size_t i = 0; i < grid_.buses.size(); ++i) {
        const auto& bus = grid_.buses[i];
        load_y_[static_cast<Eigen::Index>(i)] = Complex(bus.load_p, -bus.load_q);
    }
    rebuild_network();
}

bool Simulator::energized(int island_label) const
{
    for (std::size_t g = 0; g < grid_.generators.size(); ++g)
        if (grid_.generators[g].in_service && islands_[gen_bus_[g]] == island_label)
            return true;
    return false;
}

void Simulator::rebuild_network()
{
    islands_ = detect_islands(grid_);
    std::set<int> live;
    for (std::size_t g = 0; g < grid_.generators.size(); ++g)
        if (grid_.generators[g].in_service)
            live.insert(islands_[gen_bus_[g]]);

    const auto n = grid_.buses.size();
    reduced_.assign(n, -1);
    reduced_size_ = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (live.contains(islands_[i]))
            reduced_[i] = reduced_size_++;

    std::vector<Eigen::Triplet<Complex>> trip;
    trip.reserve(static_cast<std::size_t>(ybus_.y.nonZeros()) + n + grid_.generators.size());
    for (Eigen::Index col = 0; col < ybus_.y.outerSize(); ++col) {
        for (ComplexSparse::InnerIterator it(ybus_.y, col); it; ++it) {
            const auto r = reduced_[static_cast<std::size_t>(it.row())];
            const auto c = reduced_[static_cast<std::size_t>(it.col())];
            if (r >= 0 && c >= 0)
                trip.emplace_back(r, c, it.value());
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (auto r = reduced_[i]; r >= 0)
            trip.emplace_back(r, r, load_y_[static_cast<Eigen::Index>(i)]);
    for (std::size_t g = 0; g < grid_.generators.size(); ++g) {
        if (!grid_.generators[g].in_service)
            continue;
        const auto r = reduced_[gen_bus_[g]];
        trip.emplace_back(r, r, 1.0 / (kJ * grid_.generators[g].xd_prime));
    }

    network_ok_ = true;
    if (reduced_size_ == 0)
        return;
    Eigen::SparseMatrix<Complex> a(reduced_size_, reduced_size_);
    a.setFromTriplets(trip.begin(), trip.end());
    a.makeCompressed();
    network_lu_.compute(a);
    network_ok_ = network_lu_.info() == Eigen::Success;
}

void Simulator::solve_network(std::vector<MachineState>& machines, Eigen::VectorXcd& v) const
{
    const auto n = static_cast<Eigen::Index>(grid_.buses.size());
    v = Eigen::VectorXcd::Zero(n);
    if (reduced_size_ > 0) {
        if (!network_ok_)
            throw AlgebraicSolveFailure("network admittance matrix is singular");
        Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(reduced_size_);
        for (std::size_t g = 0; g < machines.size(); ++g) {
            if (!machines[g].online)
                continue;
            const auto& m = machines[g];
            rhs[reduced_[gen_bus_[g]]] += std::polar(m.e_prime, m.delta) / (kJ * grid_.generators[g].xd_prime);
        }
        const Eigen::VectorXcd x = network_lu_.solve(rhs);
        if (!x.allFinite())
            throw AlgebraicSolveFailure("network solve produced non-finite voltages");
        for (std::size_t i = 0; i < grid_.buses.size(); ++i)
            if (auto r = reduced_[i]; r >= 0)
                v[static_cast<Eigen::Index>(i)] = x[r];
    }
    for (std::size_t g = 0; g < machines.size(); ++g) {
        auto& m = machines[g];
        if (!m.online) {
            m.current = 0.0;
            m.p_elec = 0.0;
            continue;
        }
        const Complex e = std::polar(m.e_prime, m.delta);
        m.current = (e - v[static_cast<Eigen::Index>(gen_bus_[g])]) / (kJ * grid_.generators[g].xd_prime);
        m.p_elec = (e * std::conj(m.current)).real();
    }
}

void Simulator::refresh(DynamicState& state) const
{
    solve_network(state.machines, state.v);
    state.island_map = islands_;
}

DynamicState Simulator::init_dynamics(const PowerFlowSolution& pf)
{
    if (!pf.converged)
        throw std::invalid_argument("init_dynamics requires a converged power flow");
    const auto n = static_cast<Eigen::Index>(grid_.buses.size());
    if (pf.v_mag.size() != n)
        throw std::invalid_argument("power flow solution does not match the case");

    const Eigen::VectorXcd v = pf.voltage();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& bus = grid_.buses[static_cast<std::size_t>(i)];
        const double vm2 = std::norm(v[i]);
        load_y_[i] = vm2 > 0.0 ? Complex(bus.load_p, -bus.load_q) / vm2 : Complex{};
    }
    rebuild_network();

    DynamicState state;
    state.t = 0.0;
    state.machines.resize(grid_.generators.size());
    for (std::size_t g = 0; g < grid_.generators.size(); ++g) {
        const auto& gen = grid_.generators[g];
        auto& m = state.machines[g];
        m.online = gen.in_service;
        if (!m.online)
            continue;
        const Complex vt = v[static_cast<Eigen::Index>(gen_bus_[g])];
        const Complex s(pf.gen_p[static_cast<Eigen::Index>(g)], pf.gen_q[static_cast<Eigen::Index>(g)]);
        const Complex i = std::conj(s / vt);
        const Complex e = vt + kJ * gen.xd_prime * i;
        m.delta = std::arg(e);
        m.e_prime = std::abs(e);
        m.omega = 1.0;
    }
    refresh(state);
    // Mechanical power equals the electrical output of the network solve, so
    // the initial point is an exact equilibrium of the discretised model.
    for (auto& m : state.machines) {
        m.p_mech = m.p_elec;
        m.p_ref = m.p_elec;
    }
    return state;
}

StateDerivative Simulator::derivative(const DynamicState& state) const
{
    const double ws = synchronous_speed();
    StateDerivative d = StateDerivative::Zero(static_cast<Eigen::Index>(3 * state.machines.size()));
    for (std::size_t g = 0; g < state.machines.size(); ++g) {
        const auto& m = state.machines[g];
        if (!m.online)
            continue;
        const auto& gen = grid_.generators[g];
        const auto k = static_cast<Eigen::Index>(3 * g);
        const double dw = m.omega - 1.0;
        d[k] = ws * dw;
        d[k + 1] = (m.p_mech - m.p_elec - gen.damping_d * dw) / (2.0 * gen.inertia_h);
        if (gen.governor.enabled)
            d[k + 2] = ((m.p_ref - dw / gen.governor.droop_r) - m.p_mech) / gen.governor.time_const_tg;
    }
    return d;
}

DynamicState Simulator::step(const DynamicState& state, double h) const
{
    if (!(h > 0.0))
        throw std::invalid_argument("step size must be positive");

    DynamicState start = state;
    refresh(start);
    const StateDerivative f0 = derivative(start);

    auto pack = [](const DynamicState& s) {
        Eigen::VectorXd x(static_cast<Eigen::Index>(3 * s.machines.size()));
        for (std::size_t g = 0; g < s.machines.size(); ++g) {
            x[static_cast<Eigen::Index>(3 * g)] = s.machines[g].delta;
            x[static_cast<Eigen::Index>(3 * g + 1)] = s.machines[g].omega;
            x[static_cast<Eigen::Index>(3 * g + 2)] = s.machines[g].p_mech;
        }
        return x;
    };
    auto unpack = [](const Eigen::VectorXd& x, DynamicState& s) {
        for (std::size_t g = 0; g < s.machines.size(); ++g) {
            if (!s.machines[g].online)
                continue;
            s.machines[g].delta = x[static_cast<Eigen::Index>(3 * g)];
            s.machines[g].omega = x[static_cast<Eigen::Index>(3 * g + 1)];
            s.machines[g].p_mech = x[static_cast<Eigen::Index>(3 * g + 2)];
        }
    };

    const Eigen::VectorXd x0 = pack(start);
    DynamicState next = start;
    next.t = state.t + h;
    Eigen::VectorXd x = x0 + h * f0;
    for (int iter = 0; iter < options_.max_iterations; ++iter) {
        unpack(x, next);
        solve_network(next.machines, next.v);
        const Eigen::VectorXd x_new = x0 + 0.5 * h * (f0 + derivative(next));
        const double change = (x_new - x).lpNorm<Eigen::Infinity>();
        x = x_new;
        if (change < options_.tolerance) {
            unpack(x, next);
            solve_network(next.machines, next.v);
            next.island_map = islands_;
            return next;
        }
    }
    throw IntegrationFailure("trapezoidal corrector did not converge at t = " + std::to_string(next.t));
}

std::size_t Simulator::generator_index(const std::string& id) const
{
    if (auto g = grid_.find_generator(id))
        return *g;
    throw UnknownTarget("unknown generator '" + id + "'");
}

void Simulator::trip_branch(std::size_t k, EventOutcome& out)
{
    auto& br = grid_.branches[k];
    if (!br.in_service()) {
        out.warnings.push_back("branch '" + br.id + "' already out of service");
        return;
    }
    stamp_branch(ybus_.y, grid_, br, -1.0);
    br.status = BranchStatus::Out;
    out.changed = true;
}

EventOutcome Simulator::apply_event(DynamicState& state, const GridAction& action)
{
    EventOutcome out;
    bool topology = false;
    std::visit(
        overloaded{
            [&](const LineTrip& e) {
                auto k = grid_.find_branch(e.branch);
                if (!k)
                    throw UnknownTarget("unknown branch '" + e.branch + "'");
                trip_branch(*k, out);
                topology = out.changed;
            },
            [&](const Separate& e) {
                std::vector<std::size_t> idx;
                for (const auto& id : e.branches) {
                    auto k = grid_.find_branch(id);
                    if (!k)
                        throw UnknownTarget("unknown branch '" + id + "'");
                    idx.push_back(*k);
                }
                for (auto k : idx)
                    trip_branch(k, out);
                topology = out.changed;
            },
            [&](const LineClose& e) {
                auto k = grid_.find_branch(e.branch);
                if (!k)
                    throw UnknownTarget("unknown branch '" + e.branch + "'");
                auto& br = grid_.branches[*k];
                if (br.in_service()) {
                    out.warnings.push_back("branch '" + br.id + "' already in service");
                    return;
                }
                br.status = BranchStatus::In;
                stamp_branch(ybus_.y, grid_, br, 1.0);
                out.changed = topology = true;
            },
            [&](const GenTrip& e) {
                const auto g = generator_index(e.generator);
                if (!grid_.generators[g].in_service) {
                    out.warnings.push_back("generator '" + e.generator + "' already offline");
                    return;
                }
                grid_.generators[g].in_service = false;
                state.machines[g].online = false;
                out.changed = topology = true;
            },
            [&](const LoadScale& e) {
                std::vector<std::size_t> idx;
                for (int bus : e.buses)
                    idx.push_back(grid_.bus_index(bus));
                for (auto i : idx) {
                    auto& y = load_y_[static_cast<Eigen::Index>(i)];
                    const double q_factor = e.reactive_factor.value_or(e.factor);
                    y = Complex(y.real() * e.factor, y.imag() * q_factor);
                }
                out.changed = topology = !idx.empty();
            },
            [&](const GovSetpoint& e) {
                const auto g = generator_index(e.generator);
                state.machines[g].p_ref += e.delta_p;
                out.changed = true;
            },
            [&](const AvrSetpoint& e) {
                const auto g = generator_index(e.generator);
                state.machines[g].e_prime += e.delta_v;
                out.changed = true;
            },
        },
        action);

    if (topology)
        rebuild_network();
    if (out.changed)
        refresh(state);
    return out;
}

std::optional<double> island_coi_speed(const GridCase& grid, const DynamicState& state, int island_label)
{
    const auto index = bus_lookup(grid);
    double num = 0.0, den = 0.0;
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        if (!state.machines[g].online)
            continue;
        if (state.island_map[index.at(grid.generators[g].bus)] != island_label)
            continue;
        num += grid.generators[g].inertia_h * state.machines[g].omega;
        den += grid.generators[g].inertia_h;
    }
    if (den == 0.0)
        return std::nullopt;
    return num / den;
}

}  // namespace gridcosim::powersim
