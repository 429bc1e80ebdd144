#pragma once

// Reference computations used by the tests. Each is written from first
// principles and shares no code with the library beyond plain data structs.

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridcosim/ems/wls.hpp"
#include "gridcosim/powersim/grid_case.hpp"

namespace oracle {

using C = std::complex<double>;

inline std::filesystem::path data_dir()
{
    return GRIDCOSIM_DATA_DIR;
}

inline std::filesystem::path case_path(const std::string& name)
{
    return data_dir() / "cases" / (name + ".json");
}

inline std::filesystem::path scenario_path(const std::string& name)
{
    return data_dir() / "scenarios" / (name + ".json");
}

/// Shift-register CRC-16/CCITT-FALSE, one bit per iteration.
inline std::uint16_t crc_bit_serial(std::span<const std::uint8_t> data)
{
    std::uint16_t reg = 0xFFFF;
    for (std::uint8_t byte : data) {
        for (int bit = 7; bit >= 0; --bit) {
            const bool in = (byte >> bit) & 1u;
            const bool top = (reg >> 15) & 1u;
            reg = static_cast<std::uint16_t>(reg << 1);
            if (in != top)
                reg ^= 0x1021;
        }
    }
    return reg;
}

inline std::size_t index_of(const gridcosim::powersim::GridCase& g, int bus)
{
    for (std::size_t i = 0; i < g.buses.size(); ++i)
        if (g.buses[i].id == bus)
            return i;
    throw std::out_of_range("bus");
}

/// Dense admittance matrix, one pi-section at a time.
inline Eigen::MatrixXcd dense_ybus(const gridcosim::powersim::GridCase& g)
{
    const auto n = static_cast<Eigen::Index>(g.buses.size());
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& br : g.branches) {
        if (br.status != gridcosim::powersim::BranchStatus::In)
            continue;
        const auto f = static_cast<Eigen::Index>(index_of(g, br.from_bus));
        const auto t = static_cast<Eigen::Index>(index_of(g, br.to_bus));
        const double z2 = br.r * br.r + br.x * br.x;
        const C series(br.r / z2, -br.x / z2);
        const C charging(0.0, br.b_shunt / 2.0);
        const double a = br.tap_ratio;
        y(f, f) += (series + charging) / (a * a);
        y(t, t) += series + charging;
        y(f, t) -= series / a;
        y(t, f) -= series / a;
    }
    return y;
}

/// Scheduled net injection (generation minus load) per bus.
inline std::vector<C> scheduled_injection(const gridcosim::powersim::GridCase& g)
{
    std::vector<C> s(g.buses.size());
    for (std::size_t i = 0; i < g.buses.size(); ++i)
        s[i] = C(-g.buses[i].load_p, -g.buses[i].load_q);
    for (const auto& gen : g.generators)
        if (gen.in_service)
            s[index_of(g, gen.bus)] += gen.p_sched;
    return s;
}

/// Plain Gauss-Seidel load flow, no acceleration, no reactive limits.
inline std::vector<C> gauss_seidel(const gridcosim::powersim::GridCase& g, double tol = 1e-13, int max_iter = 200000)
{
    using gridcosim::powersim::BusKind;
    const auto y = dense_ybus(g);
    const auto s = scheduled_injection(g);
    const std::size_t n = g.buses.size();
    std::vector<C> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = g.buses[i].kind == BusKind::PQ ? C(1.0, 0.0) : C(g.buses[i].v_setpoint, 0.0);
    for (int it = 0; it < max_iter; ++it) {
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto& b = g.buses[i];
            if (b.kind == BusKind::Slack)
                continue;
            const auto ii = static_cast<Eigen::Index>(i);
            C sum_other(0.0, 0.0);
            for (std::size_t k = 0; k < n; ++k)
                if (k != i)
                    sum_other += y(ii, static_cast<Eigen::Index>(k)) * v[k];
            double p = s[i].real();
            double q = s[i].imag();
            if (b.kind == BusKind::PV)
                q = -std::imag(std::conj(v[i]) * (sum_other + y(ii, ii) * v[i]));
            C next = (C(p, -q) / std::conj(v[i]) - sum_other) / y(ii, ii);
            if (b.kind == BusKind::PV)
                next = std::polar(b.v_setpoint, std::arg(next));
            change = std::max(change, std::abs(next - v[i]));
            v[i] = next;
        }
        if (change < tol)
            return v;
    }
    throw std::runtime_error("Gauss-Seidel oracle did not converge");
}

/// Complex power entering a branch at its from (or to) end.
inline C branch_flow(const gridcosim::powersim::GridCase& g, const gridcosim::powersim::Branch& br,
                     const std::vector<C>& v, bool to_end)
{
    const C vf = v[index_of(g, br.from_bus)];
    const C vt = v[index_of(g, br.to_bus)];
    const C ys = 1.0 / C(br.r, br.x);
    const C bc(0.0, br.b_shunt / 2.0);
    const double a = br.tap_ratio;
    if (!to_end) {
        const C i = vf * (ys + bc) / (a * a) - vt * ys / a;
        return vf * std::conj(i);
    }
    const C i = vt * (ys + bc) - vf * ys / a;
    return vt * std::conj(i);
}

/// Two classical machines through a lossless reactance, no loads. Energy
/// is kinetic plus the path integral of the accelerating power.
struct TwoMachineEnergy {
    double h1, h2;       // inertia constants
    double b;            // 1 / (xd1' + x_line + xd2')
    double e1, e2;       // internal EMFs
    double pm1;          // mechanical power of machine 1 (pm2 = -pm1)
    double omega_s;      // rad/s

    double operator()(double d1, double w1, double d2, double w2) const
    {
        const double d12 = d1 - d2;
        const double kinetic = h1 * (w1 - 1.0) * (w1 - 1.0) + h2 * (w2 - 1.0) * (w2 - 1.0);
        const double potential = (-pm1 * d12 - e1 * e2 * b * std::cos(d12)) / omega_s;
        return kinetic + potential;
    }
};

inline gridcosim::ems::Measurement scalar_meas(gridcosim::ems::MeasKind kind, int bus, std::string branch, bool to_end,
                                             double value)
{
    gridcosim::ems::Measurement m;
    m.kind = kind;
    m.bus = bus;
    m.branch = std::move(branch);
    m.to_end = to_end;
    m.value = value;
    m.sigma = 0.01;
    return m;
}

/// Full noiseless set (magnitudes, injections, both-end flows) from the oracle solution.
inline gridcosim::ems::MeasurementSet noiseless_measurements(const gridcosim::powersim::GridCase& g, const std::vector<C>& v)
{
    const auto y = dense_ybus(g);
    Eigen::VectorXcd vv(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
        vv[static_cast<Eigen::Index>(i)] = v[i];
    const Eigen::VectorXcd inj = y * vv;
    gridcosim::ems::MeasurementSet out;
    for (std::size_t i = 0; i < g.buses.size(); ++i) {
        const int bus = g.buses[i].id;
        const auto s = v[i] * std::conj(inj[static_cast<Eigen::Index>(i)]);
        gridcosim::ems::Measurement m;
        m.kind = gridcosim::ems::MeasKind::VMag;
        m.bus = bus;
        m.value = std::abs(v[i]);
        m.sigma = 0.004;
        out.push_back(m);
        out.push_back(scalar_meas(gridcosim::ems::MeasKind::PInj, bus, {}, false, s.real()));
        out.push_back(scalar_meas(gridcosim::ems::MeasKind::QInj, bus, {}, false, s.imag()));
    }
    for (const auto& br : g.branches) {
        for (bool to_end : {false, true}) {
            const auto s = branch_flow(g, br, v, to_end);
            out.push_back(scalar_meas(gridcosim::ems::MeasKind::PFlow, 0, br.id, to_end, s.real()));
            out.push_back(scalar_meas(gridcosim::ems::MeasKind::QFlow, 0, br.id, to_end, s.imag()));
        }
    }
    return out;
}

}  // namespace oracle
