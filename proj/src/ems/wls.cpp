#include "gridcosim/ems/wls.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <set>

#include "gridcosim/powersim/islands.hpp"
#include "gridcosim/powersim/ybus.hpp"

namespace gridcosim::ems {

using Complex = std::complex<double>;
using nlohmann::json;
using powersim::GridCase;

namespace {

constexpr Complex kJ{0.0, 1.0};

double wrap(double a)
{
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi)
        a += 2.0 * std::numbers::pi;
    return a;
}

/// A linear current expression I = sum y_k V_k seen from bus `at`.
struct Terms {
    std::size_t at = 0;
    std::vector<std::pair<std::size_t, Complex>> y;
};

struct Model {
    const GridCase& grid;
    std::unordered_map<int, std::size_t> index;
    Eigen::SparseMatrix<Complex, Eigen::RowMajor> ybus;

    explicit Model(const GridCase& g) : grid(g), index(powersim::bus_lookup(g)), ybus(powersim::build_ybus(g).y) {}

    std::size_t bus(int id) const
    {
        auto it = index.find(id);
        if (it == index.end())
            throw powersim::UnknownTarget("measurement references unknown bus " + std::to_string(id));
        return it->second;
    }

    Terms injection(std::size_t i) const
    {
        Terms t;
        t.at = i;
        for (decltype(ybus)::InnerIterator it(ybus, static_cast<Eigen::Index>(i)); it; ++it)
            t.y.emplace_back(static_cast<std::size_t>(it.col()), it.value());
        return t;
    }

    Terms flow(const Measurement& m) const
    {
        const auto k = grid.find_branch(m.branch);
        if (!k)
            throw powersim::UnknownTarget("measurement references unknown branch '" + m.branch + "'");
        const auto& br = grid.branches[*k];
        const std::size_t f = bus(br.from_bus);
        const std::size_t t = bus(br.to_bus);
        Terms out;
        out.at = m.to_end ? t : f;
        if (!br.in_service())
            return out;
        const auto st = powersim::branch_stamp(br);
        if (m.to_end)
            out.y = {{f, st.tf}, {t, st.tt}};
        else
            out.y = {{f, st.ff}, {t, st.ft}};
        return out;
    }
};

Complex complex_power(const Terms& t, const Eigen::VectorXcd& v)
{
    Complex i{};
    for (const auto& [k, y] : t.y)
        i += y * v[static_cast<Eigen::Index>(k)];
    return v[static_cast<Eigen::Index>(t.at)] * std::conj(i);
}

struct Layout {
    std::vector<Eigen::Index> ang;  // -1 for reference buses
    std::vector<Eigen::Index> mag;
    Eigen::Index size = 0;
    std::vector<std::string> names;
};

Layout make_layout(const GridCase& grid, const MeasurementSet& meas, const Model& model)
{
    const auto islands = powersim::detect_islands(grid);
    std::set<int> with_phasor;
    for (const auto& m : meas)
        if (m.kind == MeasKind::VPhasor)
            with_phasor.insert(islands[model.bus(m.bus)]);

    // Reference per island lacking phasors: its slack bus, else its label.
    std::unordered_map<int, std::size_t> ref;
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        const int label = islands[i];
        if (with_phasor.contains(label))
            continue;
        if (grid.buses[i].kind == powersim::BusKind::Slack && !ref.contains(label))
            ref[label] = i;
    }
    for (std::size_t i = 0; i < grid.buses.size(); ++i) {
        const int label = islands[i];
        if (!with_phasor.contains(label) && !ref.contains(label) && grid.buses[i].id == label)
            ref[label] = i;
    }

    Layout l;
    const auto n = grid.buses.size();
    l.ang.assign(n, -1);
    l.mag.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        auto it = ref.find(islands[i]);
        if (it != ref.end() && it->second == i)
            continue;
        l.ang[i] = l.size++;
        l.names.push_back("theta[" + std::to_string(grid.buses[i].id) + "]");
    }
    for (std::size_t i = 0; i < n; ++i) {
        l.mag[i] = l.size++;
        l.names.push_back("v[" + std::to_string(grid.buses[i].id) + "]");
    }
    return l;
}

Eigen::VectorXcd voltages(const Layout& l, const Eigen::VectorXd& x)
{
    const auto n = static_cast<Eigen::Index>(l.mag.size());
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double th = l.ang[static_cast<std::size_t>(i)] >= 0 ? x[l.ang[static_cast<std::size_t>(i)]] : 0.0;
        v[i] = std::polar(x[l.mag[static_cast<std::size_t>(i)]], th);
    }
    return v;
}

struct Linearization {
    Eigen::VectorXd r;      // z - h, angles wrapped
    Eigen::MatrixXd h;      // Jacobian
    Eigen::VectorXd w;      // 1 / sigma^2
    double objective = 0.0;
};

Eigen::Index row_count(const MeasurementSet& meas)
{
    Eigen::Index rows = 0;
    for (const auto& m : meas)
        rows += m.kind == MeasKind::VPhasor ? 2 : 1;
    return rows;
}

Linearization linearize(const MeasurementSet& meas, const Model& model, const Layout& l, const Eigen::VectorXd& x,
                        bool with_jacobian)
{
    const Eigen::VectorXcd v = voltages(l, x);
    const auto rows = row_count(meas);
    Linearization lin;
    lin.r.resize(rows);
    lin.w.resize(rows);
    if (with_jacobian)
        lin.h = Eigen::MatrixXd::Zero(rows, l.size);

    Eigen::Index row = 0;
    for (const auto& m : meas) {
        switch (m.kind) {
        case MeasKind::VMag: {
            const auto i = model.bus(m.bus);
            lin.r[row] = m.value - std::abs(v[static_cast<Eigen::Index>(i)]);
            lin.w[row] = 1.0 / (m.sigma * m.sigma);
            if (with_jacobian)
                lin.h(row, l.mag[i]) = 1.0;
            ++row;
            break;
        }
        case MeasKind::VPhasor: {
            const auto i = model.bus(m.bus);
            const Complex vi = v[static_cast<Eigen::Index>(i)];
            lin.r[row] = m.value - std::abs(vi);
            lin.w[row] = 1.0 / (m.sigma * m.sigma);
            lin.r[row + 1] = wrap(m.angle - std::arg(vi));
            lin.w[row + 1] = 1.0 / (m.angle_sigma * m.angle_sigma);
            if (with_jacobian) {
                lin.h(row, l.mag[i]) = 1.0;
                if (l.ang[i] >= 0)
                    lin.h(row + 1, l.ang[i]) = 1.0;
            }
            row += 2;
            break;
        }
        case MeasKind::PInj:
        case MeasKind::QInj:
        case MeasKind::PFlow:
        case MeasKind::QFlow: {
            const bool inj = m.kind == MeasKind::PInj || m.kind == MeasKind::QInj;
            const bool real = m.kind == MeasKind::PInj || m.kind == MeasKind::PFlow;
            const Terms t = inj ? model.injection(model.bus(m.bus)) : model.flow(m);
            const Complex s = complex_power(t, v);
            lin.r[row] = m.value - (real ? s.real() : s.imag());
            lin.w[row] = 1.0 / (m.sigma * m.sigma);
            if (with_jacobian && !t.y.empty()) {
                const Complex vi = v[static_cast<Eigen::Index>(t.at)];
                Complex i_at{};
                for (const auto& [k, y] : t.y)
                    i_at += y * v[static_cast<Eigen::Index>(k)];
                auto add = [&](Eigen::Index col, Complex d) {
                    if (col >= 0)
                        lin.h(row, col) += real ? d.real() : d.imag();
                };
                // dS/dtheta_k = delta_ik jS - jV_i conj(y_k V_k)
                // dS/dV_k     = delta_ik e^{j theta_i} conj(I) + V_i conj(y_k e^{j theta_k})
                const Complex ui = vi / std::abs(vi);
                add(l.ang[t.at], kJ * s);
                add(l.mag[t.at], ui * std::conj(i_at));
                for (const auto& [k, y] : t.y) {
                    const Complex vk = v[static_cast<Eigen::Index>(k)];
                    add(l.ang[k], -kJ * vi * std::conj(y * vk));
                    add(l.mag[k], vi * std::conj(y * vk / std::abs(vk)));
                }
            }
            ++row;
            break;
        }
        }
    }
    lin.objective = (lin.r.array().square() * lin.w.array()).sum();
    return lin;
}

}  // namespace

std::string to_string(MeasKind k)
{
    switch (k) {
    case MeasKind::VMag:
        return "v_mag";
    case MeasKind::VPhasor:
        return "v_phasor";
    case MeasKind::PInj:
        return "p_inj";
    case MeasKind::QInj:
        return "q_inj";
    case MeasKind::PFlow:
        return "p_flow";
    case MeasKind::QFlow:
        return "q_flow";
    }
    return "v_mag";
}

MeasKind parse_meas_kind(const std::string& s)
{
    for (auto k : {MeasKind::VMag, MeasKind::VPhasor, MeasKind::PInj, MeasKind::QInj, MeasKind::PFlow, MeasKind::QFlow})
        if (to_string(k) == s)
            return k;
    throw std::invalid_argument("unknown measurement kind '" + s + "'");
}

double measurement_model(const Measurement& m, const GridCase& grid, const Eigen::VectorXcd& v)
{
    const Model model(grid);
    switch (m.kind) {
    case MeasKind::VMag:
    case MeasKind::VPhasor:
        return std::abs(v[static_cast<Eigen::Index>(model.bus(m.bus))]);
    case MeasKind::PInj:
        return complex_power(model.injection(model.bus(m.bus)), v).real();
    case MeasKind::QInj:
        return complex_power(model.injection(model.bus(m.bus)), v).imag();
    case MeasKind::PFlow:
        return complex_power(model.flow(m), v).real();
    case MeasKind::QFlow:
        return complex_power(model.flow(m), v).imag();
    }
    return 0.0;
}

StateEstimate wls_estimate(const MeasurementSet& meas, const GridCase& grid, const WlsOptions& options)
{
    for (const auto& m : meas) {
        if (!(m.sigma > 0.0) || (m.kind == MeasKind::VPhasor && !(m.angle_sigma > 0.0)))
            throw std::invalid_argument("measurement sigma must be positive");
    }
    const Model model(grid);
    const Layout layout = make_layout(grid, meas, model);

    Eigen::VectorXd x = Eigen::VectorXd::Zero(layout.size);
    for (auto i : layout.mag)
        x[i] = 1.0;

    StateEstimate est;
    Linearization lin = linearize(meas, model, layout, x, true);
    est.objective_history.push_back(lin.objective);

    Eigen::MatrixXd gain = lin.h.transpose() * lin.w.asDiagonal() * lin.h;
    {
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gain);
        lu.setThreshold(1e-10);
        if (lu.rank() < layout.size) {
            const Eigen::MatrixXd kernel = lu.kernel();
            std::vector<std::string> hint;
            for (Eigen::Index i = 0; i < kernel.rows(); ++i)
                if (kernel.row(i).cwiseAbs().maxCoeff() > 1e-8)
                    hint.push_back(layout.names[static_cast<std::size_t>(i)]);
            throw Unobservable("measurement set is unobservable: gain rank " + std::to_string(lu.rank()) + " of " +
                                   std::to_string(layout.size),
                               std::move(hint));
        }
    }

    for (int it = 0; it < options.max_iterations; ++it) {
        gain = lin.h.transpose() * lin.w.asDiagonal() * lin.h;
        const Eigen::VectorXd rhs = lin.h.transpose() * (lin.w.array() * lin.r.array()).matrix();
        const Eigen::LDLT<Eigen::MatrixXd> ldlt(gain);
        const Eigen::VectorXd dx = ldlt.solve(rhs);
        if (!dx.allFinite())
            throw SeNonConvergence("gain matrix solve produced non-finite step");

        double alpha = 1.0;
        Eigen::VectorXd trial = x + dx;
        Linearization next = linearize(meas, model, layout, trial, false);
        for (int h = 0; h < options.max_halvings && next.objective > lin.objective; ++h) {
            alpha *= 0.5;
            trial = x + alpha * dx;
            next = linearize(meas, model, layout, trial, false);
        }
        if (next.objective > lin.objective) {
            // No descent along the step: already at the minimum to rounding.
            est.converged = dx.lpNorm<Eigen::Infinity>() < options.tolerance;
            break;
        }
        x = trial;
        lin = linearize(meas, model, layout, x, true);
        est.objective_history.push_back(lin.objective);
        ++est.iterations;
        if ((alpha * dx).lpNorm<Eigen::Infinity>() < options.tolerance) {
            est.converged = true;
            break;
        }
    }
    if (!est.converged)
        throw SeNonConvergence("state estimator did not converge in " + std::to_string(options.max_iterations) +
                               " iterations");

    est.objective = lin.objective;
    gain = lin.h.transpose() * lin.w.asDiagonal() * lin.h;
    const Eigen::VectorXd grad = lin.h.transpose() * (lin.w.array() * lin.r.array()).matrix();
    est.gradient_norm = grad.lpNorm<Eigen::Infinity>();

    // Residual covariance diagonal: R - H G^-1 H^T.
    const Eigen::MatrixXd ginv_ht = Eigen::LDLT<Eigen::MatrixXd>(gain).solve(lin.h.transpose());
    est.normalized_residuals.resize(static_cast<std::size_t>(lin.r.size()));
    for (Eigen::Index i = 0; i < lin.r.size(); ++i) {
        const double rii = 1.0 / lin.w[i];
        const double omega = rii - lin.h.row(i).dot(ginv_ht.col(i));
        est.normalized_residuals[static_cast<std::size_t>(i)] = omega > 1e-12 * rii ? lin.r[i] / std::sqrt(omega) : 0.0;
    }

    const Eigen::VectorXcd v = voltages(layout, x);
    est.v_mag = v.cwiseAbs();
    est.v_ang.resize(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        est.v_ang[i] = std::arg(v[i]);

    // Re-reference phasor-anchored islands to the case slack bus.
    std::optional<std::size_t> slack;
    for (std::size_t i = 0; i < grid.buses.size() && !slack; ++i)
        if (grid.buses[i].kind == powersim::BusKind::Slack)
            slack = i;
    if (slack && layout.ang[*slack] >= 0) {
        const double shift = est.v_ang[static_cast<Eigen::Index>(*slack)];
        for (std::size_t i = 0; i < grid.buses.size(); ++i)
            if (layout.ang[i] >= 0)
                est.v_ang[static_cast<Eigen::Index>(i)] = wrap(est.v_ang[static_cast<Eigen::Index>(i)] - shift);
    }
    return est;
}

json measurement_to_json(const Measurement& m)
{
    json j{{"kind", to_string(m.kind)}, {"value", m.value}, {"sigma", m.sigma}};
    if (m.kind == MeasKind::PFlow || m.kind == MeasKind::QFlow) {
        j["branch"] = m.branch;
        j["end"] = m.to_end ? "to" : "from";
    } else {
        j["bus"] = m.bus;
    }
    if (m.kind == MeasKind::VPhasor) {
        j["angle"] = m.angle;
        j["angle_sigma"] = m.angle_sigma;
    }
    return j;
}

Measurement measurement_from_json(const json& j)
{
    Measurement m;
    m.kind = parse_meas_kind(j.at("kind").get<std::string>());
    m.value = j.at("value").get<double>();
    m.sigma = j.at("sigma").get<double>();
    m.bus = j.value("bus", 0);
    m.branch = j.value("branch", std::string{});
    m.to_end = j.value("end", std::string("from")) == "to";
    m.angle = j.value("angle", 0.0);
    m.angle_sigma = j.value("angle_sigma", 0.01);
    return m;
}

json estimate_to_json(const StateEstimate& e)
{
    return json{{"t", e.t},
                {"v_mag", std::vector<double>(e.v_mag.begin(), e.v_mag.end())},
                {"v_ang", std::vector<double>(e.v_ang.begin(), e.v_ang.end())},
                {"converged", e.converged},
                {"iterations", e.iterations},
                {"objective", e.objective},
                {"objective_history", e.objective_history},
                {"normalized_residuals", e.normalized_residuals},
                {"gradient_norm", e.gradient_norm}};
}

StateEstimate estimate_from_json(const json& j)
{
    StateEstimate e;
    e.t = j.at("t").get<double>();
    const auto vm = j.at("v_mag").get<std::vector<double>>();
    const auto va = j.at("v_ang").get<std::vector<double>>();
    e.v_mag = Eigen::Map<const Eigen::VectorXd>(vm.data(), static_cast<Eigen::Index>(vm.size()));
    e.v_ang = Eigen::Map<const Eigen::VectorXd>(va.data(), static_cast<Eigen::Index>(va.size()));
    e.converged = j.at("converged").get<bool>();
    e.iterations = j.at("iterations").get<int>();
    e.objective = j.at("objective").get<double>();
    e.objective_history = j.at("objective_history").get<std::vector<double>>();
    e.normalized_residuals = j.at("normalized_residuals").get<std::vector<double>>();
    e.gradient_norm = j.at("gradient_norm").get<double>();
    return e;
}

}  // namespace gridcosim::ems
