#include "gridcosim/powersim/power_flow.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <Eigen/SparseLU>

#include "gridcosim/powersim/islands.hpp"
#include "gridcosim/powersim/ybus.hpp"

namespace gridcosim::powersim {

namespace {

enum class Role { Slack, PV, PQ };

struct BusSpec {
    Role role = Role::PQ;
    double p = 0.0;  // scheduled net injection
    double q = 0.0;  // scheduled net injection when PQ
    double v = 1.0;
    double q_min = 0.0;  // aggregate generator limits
    double q_max = 0.0;
};

std::vector<BusSpec> scheduled_injections(const GridCase& grid)
{
    const auto index = bus_lookup(grid);
    std::vector<BusSpec> spec(grid.buses.size());
    std::vector<int> online(grid.buses.size(), 0);
    for (const auto& g : grid.generators) {
        if (!g.in_service)
            continue;
        auto i = index.at(g.bus);
        spec[i].p += g.p_sched;
        spec[i].q_min += g.q_min;
        spec[i].q_max += g.q_max;
        ++online[i];
    }
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        const auto& bus = grid.buses[i];
        spec[i].p -= bus.load_p;
        spec[i].q = -bus.load_q;
        spec[i].v = bus.v_setpoint;
        switch (bus.kind) {
        case BusKind::Slack:
            spec[i].role = Role::Slack;
            break;
        case BusKind::PV:
            spec[i].role = online[i] > 0 ? Role::PV : Role::PQ;
            break;
        case BusKind::PQ:
            spec[i].role = Role::PQ;
            break;
        }
        if (spec[i].role == Role::PQ)
            spec[i].v = 1.0;
    }
    return spec;
}

int null_space_bus(const GridCase& grid, const Eigen::SparseMatrix<double>& jac,
                   const std::vector<Eigen::Index>& column_bus)
{
    Eigen::MatrixXd dense(jac);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(dense);
    const Eigen::MatrixXd kernel = lu.kernel();
    Eigen::Index worst = 0;
    if (kernel.cols() > 0)
        kernel.col(0).cwiseAbs().maxCoeff(&worst);
    return grid.buses[static_cast<std::size_t>(column_bus[static_cast<std::size_t>(worst)])].id;
}

struct NewtonResult {
    bool converged = false;
    int iterations = 0;
    double max_mismatch = 0.0;
    int worst_bus = 0;
};

// One Newton-Raphson solve with fixed bus roles. Updates `vm`/`va` in place.
NewtonResult newton_solve(const GridCase& grid, const ComplexSparse& y, const std::vector<BusSpec>& spec,
                          Eigen::VectorXd& vm, Eigen::VectorXd& va, const PowerFlowOptions& options)
{
    const auto n = static_cast<Eigen::Index>(grid.buses.size());
    std::vector<Eigen::Index> ang_idx(static_cast<std::size_t>(n), -1);
    std::vector<Eigen::Index> mag_idx(static_cast<std::size_t>(n), -1);
    std::vector<Eigen::Index> column_bus;
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (spec[static_cast<std::size_t>(i)].role != Role::Slack) {
            ang_idx[static_cast<std::size_t>(i)] = k++;
            column_bus.push_back(i);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (spec[static_cast<std::size_t>(i)].role == Role::PQ) {
            mag_idx[static_cast<std::size_t>(i)] = k++;
            column_bus.push_back(i);
        }
    }
    const Eigen::Index dim = k;

    NewtonResult result;
    Eigen::VectorXd mismatch(dim);
    Eigen::VectorXd p_calc(n), q_calc(n);

    auto evaluate = [&]() {
        p_calc.setZero();
        q_calc.setZero();
        for (Eigen::Index col = 0; col < y.outerSize(); ++col) {
            for (ComplexSparse::InnerIterator it(y, col); it; ++it) {
                const auto i = it.row();
                const auto j = it.col();
                const double g = it.value().real();
                const double b = it.value().imag();
                const double th = va[i] - va[j];
                const double c = std::cos(th), s = std::sin(th);
                p_calc[i] += vm[i] * vm[j] * (g * c + b * s);
                q_calc[i] += vm[i] * vm[j] * (g * s - b * c);
            }
        }
        double worst = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& s = spec[static_cast<std::size_t>(i)];
            if (auto a = ang_idx[static_cast<std::size_t>(i)]; a >= 0) {
                mismatch[a] = s.p - p_calc[i];
                if (std::abs(mismatch[a]) > worst) {
                    worst = std::abs(mismatch[a]);
                    result.worst_bus = grid.buses[static_cast<std::size_t>(i)].id;
                }
            }
            if (auto m = mag_idx[static_cast<std::size_t>(i)]; m >= 0) {
                mismatch[m] = s.q - q_calc[i];
                if (std::abs(mismatch[m]) > worst) {
                    worst = std::abs(mismatch[m]);
                    result.worst_bus = grid.buses[static_cast<std::size_t>(i)].id;
                }
            }
        }
        return worst;
    };

    result.max_mismatch = evaluate();
    if (dim == 0 || result.max_mismatch <= options.tolerance) {
        result.converged = true;
        return result;
    }

    std::vector<Eigen::Triplet<double>> trip;
    Eigen::SparseMatrix<double> jac(dim, dim);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;

    for (int iter = 1; iter <= options.max_iterations; ++iter) {
        trip.clear();
        for (Eigen::Index col = 0; col < y.outerSize(); ++col) {
            for (ComplexSparse::InnerIterator it(y, col); it; ++it) {
                const auto i = it.row();
                const auto j = it.col();
                const auto ai = ang_idx[static_cast<std::size_t>(i)];
                const auto mi = mag_idx[static_cast<std::size_t>(i)];
                if (ai < 0 && mi < 0)
                    continue;
                const double g = it.value().real();
                const double b = it.value().imag();
                const auto aj = ang_idx[static_cast<std::size_t>(j)];
                const auto mj = mag_idx[static_cast<std::size_t>(j)];
                double dp_dth, dp_dv, dq_dth, dq_dv;
                if (i == j) {
                    dp_dth = -q_calc[i] - b * vm[i] * vm[i];
                    dp_dv = p_calc[i] / vm[i] + g * vm[i];
                    dq_dth = p_calc[i] - g * vm[i] * vm[i];
                    dq_dv = q_calc[i] / vm[i] - b * vm[i];
                } else {
                    const double th = va[i] - va[j];
                    const double c = std::cos(th), s = std::sin(th);
                    dp_dth = vm[i] * vm[j] * (g * s - b * c);
                    dp_dv = vm[i] * (g * c + b * s);
                    dq_dth = -vm[i] * vm[j] * (g * c + b * s);
                    dq_dv = vm[i] * (g * s - b * c);
                }
                if (ai >= 0 && aj >= 0)
                    trip.emplace_back(ai, aj, dp_dth);
                if (ai >= 0 && mj >= 0)
                    trip.emplace_back(ai, mj, dp_dv);
                if (mi >= 0 && aj >= 0)
                    trip.emplace_back(mi, aj, dq_dth);
                if (mi >= 0 && mj >= 0)
                    trip.emplace_back(mi, mj, dq_dv);
            }
        }
        jac.setFromTriplets(trip.begin(), trip.end());
        lu.compute(jac);
        if (lu.info() != Eigen::Success) {
            const int bus = null_space_bus(grid, jac, column_bus);
            throw PowerFlowError(PowerFlowError::Kind::SingularJacobian, bus,
                                 "power flow Jacobian is singular near bus " + std::to_string(bus));
        }
        const Eigen::VectorXd dx = lu.solve(mismatch);
        if (!dx.allFinite()) {
            const int bus = null_space_bus(grid, jac, column_bus);
            throw PowerFlowError(PowerFlowError::Kind::SingularJacobian, bus,
                                 "power flow Jacobian is singular near bus " + std::to_string(bus));
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            if (auto a = ang_idx[static_cast<std::size_t>(i)]; a >= 0)
                va[i] += dx[a];
            if (auto m = mag_idx[static_cast<std::size_t>(i)]; m >= 0)
                vm[i] += dx[m];
        }
        result.iterations = iter;
        result.max_mismatch = evaluate();
        if (result.max_mismatch <= options.tolerance) {
            result.converged = true;
            return result;
        }
    }
    return result;
}

}  // namespace

Eigen::VectorXcd PowerFlowSolution::voltage() const
{
    Eigen::VectorXcd v(v_mag.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = std::polar(v_mag[i], v_ang[i]);
    return v;
}

Eigen::VectorXcd bus_injections(const GridCase& grid, const Eigen::VectorXcd& v)
{
    const auto y = build_ybus(grid);
    const Eigen::VectorXcd current = y.y * v;
    return v.cwiseProduct(current.conjugate());
}

PowerFlowSolution solve_power_flow(const GridCase& grid, const PowerFlowOptions& options)
{
    const auto n = static_cast<Eigen::Index>(grid.buses.size());
    const auto islands = detect_islands(grid);
    const auto labels = island_labels(islands);
    for (int label : labels) {
        bool has_slack = false;
        for (std::size_t i = 0; i < grid.buses.size(); ++i)
            if (islands[i] == label && grid.buses[i].kind == BusKind::Slack)
                has_slack = true;
        if (!has_slack)
            throw PowerFlowError(PowerFlowError::Kind::SingularJacobian, label,
                                 "island containing bus " + std::to_string(label) + " has no slack bus");
    }

    const auto y = build_ybus(grid).y;
    auto spec = scheduled_injections(grid);

    PowerFlowSolution sol;
    sol.v_mag = Eigen::VectorXd::Ones(n);
    sol.v_ang = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
        if (spec[static_cast<std::size_t>(i)].role != Role::PQ)
            sol.v_mag[i] = spec[static_cast<std::size_t>(i)].v;

    std::set<Eigen::Index> switched;
    int total_iterations = 0;
    NewtonResult nr;
    while (true) {
        nr = newton_solve(grid, y, spec, sol.v_mag, sol.v_ang, options);
        total_iterations += nr.iterations;
        if (!nr.converged)
            break;
        if (!options.enforce_q_limits)
            break;

        const Eigen::VectorXcd s = sol.voltage().cwiseProduct((y * sol.voltage()).conjugate());
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            auto& bs = spec[static_cast<std::size_t>(i)];
            if (bs.role != Role::PV || switched.contains(i))
                continue;
            const double q_gen = s[i].imag() + grid.buses[static_cast<std::size_t>(i)].load_q;
            const double limit = q_gen > bs.q_max ? bs.q_max : (q_gen < bs.q_min ? bs.q_min : q_gen);
            if (limit != q_gen) {
                bs.role = Role::PQ;
                bs.q = limit - grid.buses[static_cast<std::size_t>(i)].load_q;
                switched.insert(i);
                sol.q_limited_buses.push_back(grid.buses[static_cast<std::size_t>(i)].id);
                changed = true;
            }
        }
        if (!changed)
            break;
    }

    sol.converged = nr.converged;
    sol.iterations = total_iterations;
    sol.max_mismatch = nr.max_mismatch;
    if (!sol.converged) {
        throw PowerFlowError(PowerFlowError::Kind::NonConvergence, nr.worst_bus,
                             "power flow did not converge in " + std::to_string(options.max_iterations) +
                                 " iterations (max mismatch " + std::to_string(nr.max_mismatch) + " pu at bus " +
                                 std::to_string(nr.worst_bus) + ")");
    }

    // Distribute bus-level generation back to units.
    const Eigen::VectorXcd s = sol.voltage().cwiseProduct((y * sol.voltage()).conjugate());
    const auto index = bus_lookup(grid);
    sol.gen_p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.generators.size()));
    sol.gen_q = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.generators.size()));
    std::vector<double> p_share(grid.buses.size(), 0.0), q_share(grid.buses.size(), 0.0);
    std::vector<int> count(grid.buses.size(), 0);
    for (const auto& g : grid.generators) {
        if (!g.in_service)
            continue;
        auto i = index.at(g.bus);
        p_share[i] += std::abs(g.p_max);
        q_share[i] += g.q_max - g.q_min;
        ++count[i];
    }
    for (std::size_t gi = 0; gi < grid.generators.size(); ++gi) {
        const auto& g = grid.generators[gi];
        if (!g.in_service)
            continue;
        const auto i = index.at(g.bus);
        const auto& bus = grid.buses[i];
        const double p_bus = s[static_cast<Eigen::Index>(i)].real() + bus.load_p;
        const double q_bus = s[static_cast<Eigen::Index>(i)].imag() + bus.load_q;
        const auto e = static_cast<Eigen::Index>(gi);
        if (spec[i].role == Role::Slack) {
            sol.gen_p[e] = p_share[i] > 0.0 ? p_bus * std::abs(g.p_max) / p_share[i] : p_bus / count[i];
        } else {
            sol.gen_p[e] = g.p_sched;
        }
        sol.gen_q[e] = q_share[i] > 0.0 ? q_bus * (g.q_max - g.q_min) / q_share[i] : q_bus / count[i];
    }
    return sol;
}

}  // namespace gridcosim::powersim
