#include "gridcosim/ems/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gridcosim::ems {

using nlohmann::json;
using powersim::GridCase;

namespace {

struct Unit {
    std::size_t index;
    double p_min;
    double p_max;
    powersim::CostCurve cost;
};

double output_at(const Unit& u, double lambda)
{
    if (u.cost.a > 0.0)
        return std::clamp((lambda - u.cost.b) / (2.0 * u.cost.a), u.p_min, u.p_max);
    if (lambda > u.cost.b)
        return u.p_max;
    return u.p_min;
}

}  // namespace

double incremental_cost(const powersim::CostCurve& c, double p_mw) noexcept
{
    return 2.0 * c.a * p_mw + c.b;
}

DispatchResult economic_dispatch(const GridCase& grid, double demand_mw, double tolerance)
{
    std::vector<Unit> units;
    double lo_sum = 0.0, hi_sum = 0.0;
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        const auto& gen = grid.generators[g];
        if (!gen.in_service)
            continue;
        units.push_back({g, gen.p_min * grid.base_mva, gen.p_max * grid.base_mva, gen.cost});
        lo_sum += units.back().p_min;
        hi_sum += units.back().p_max;
    }
    if (units.empty() || demand_mw < lo_sum - tolerance || demand_mw > hi_sum + tolerance)
        throw Infeasible("demand " + std::to_string(demand_mw) + " MW outside [" + std::to_string(lo_sum) + ", " +
                         std::to_string(hi_sum) + "]");

    double lam_lo = std::numeric_limits<double>::infinity();
    double lam_hi = -std::numeric_limits<double>::infinity();
    for (const auto& u : units) {
        lam_lo = std::min(lam_lo, incremental_cost(u.cost, u.p_min));
        lam_hi = std::max(lam_hi, incremental_cost(u.cost, u.p_max));
    }
    lam_lo -= 1.0;
    lam_hi += 1.0;

    auto total = [&](double lambda) {
        double s = 0.0;
        for (const auto& u : units)
            s += output_at(u, lambda);
        return s;
    };
    double lambda = 0.5 * (lam_lo + lam_hi);
    for (int it = 0; it < 200; ++it) {
        lambda = 0.5 * (lam_lo + lam_hi);
        const double mismatch = total(lambda) - demand_mw;
        if (std::abs(mismatch) <= tolerance * 1e-3)
            break;
        (mismatch > 0.0 ? lam_hi : lam_lo) = lambda;
    }

    std::vector<double> p(units.size());
    for (std::size_t k = 0; k < units.size(); ++k)
        p[k] = output_at(units[k], lambda);
    // Linear units sitting at the margin take whatever the quadratic ones leave.
    double rest = demand_mw - std::accumulate(p.begin(), p.end(), 0.0);
    for (std::size_t k = 0; k < units.size() && std::abs(rest) > tolerance * 1e-3; ++k) {
        const auto& u = units[k];
        if (u.cost.a != 0.0 || std::abs(u.cost.b - lambda) > 1e-6)
            continue;
        const double take = std::clamp(p[k] + rest, u.p_min, u.p_max) - p[k];
        p[k] += take;
        rest -= take;
    }

    DispatchResult out;
    out.lambda = lambda;
    for (const auto& gen : grid.generators) {
        out.generators.push_back(gen.id);
        out.p_setpoint.push_back(0.0);
    }
    for (std::size_t k = 0; k < units.size(); ++k)
        out.p_setpoint[units[k].index] = p[k];
    out.feasible = std::abs(std::accumulate(p.begin(), p.end(), 0.0) - demand_mw) <= tolerance;
    return out;
}

json dispatch_to_json(const DispatchResult& d)
{
    return json{{"generators", d.generators}, {"p_setpoint", d.p_setpoint}, {"lambda", d.lambda}, {"feasible", d.feasible}};
}

std::vector<double> agc_step(double delta_f_hz, double delta_ptie_mw, AgcState& state, const AgcConfig& cfg,
                             double dt, const AgcLimits& limits)
{
    const auto n = cfg.participation.size();
    state.commands.resize(n, 0.0);
    const double ace = delta_ptie_mw + cfg.beta_mw_per_hz * delta_f_hz;
    state.last_ace = ace;

    const double candidate = state.ace_integral + ace * dt;
    const double total = -cfg.ki * candidate;
    std::vector<double> next(n);
    bool clamped = false;
    for (std::size_t k = 0; k < n; ++k) {
        const double want = cfg.participation[k] * total;
        const double prev = state.commands[k];
        const double step = cfg.ramp_mw_per_s * dt;
        double v = std::clamp(want, prev - step, prev + step);
        if (k < limits.lo.size())
            v = std::clamp(v, limits.lo[k], limits.hi[k]);
        if (std::abs(v - want) > 1e-12)
            clamped = true;
        next[k] = v;
    }
    if (!clamped)
        state.ace_integral = candidate;

    std::vector<double> delta(n);
    for (std::size_t k = 0; k < n; ++k) {
        delta[k] = next[k] - state.commands[k];
        state.commands[k] = next[k];
    }
    return delta;
}

std::vector<std::string> check_agc(const AgcConfig& cfg, const GridCase& grid)
{
    std::vector<std::string> problems;
    if (!cfg.enabled)
        return problems;
    if (!(cfg.beta_mw_per_hz > 0.0))
        problems.push_back("ems.agc.beta_mw_per_hz must be positive");
    if (cfg.ki < 0.0)
        problems.push_back("ems.agc.ki must be non-negative");
    if (!(cfg.period > 0.0))
        problems.push_back("ems.agc.period must be positive");
    if (cfg.generators.size() != cfg.participation.size() || cfg.generators.empty())
        problems.push_back("ems.agc: generators and participation must be non-empty and equal length");
    const double sum = std::accumulate(cfg.participation.begin(), cfg.participation.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9)
        problems.push_back("ems.agc.participation must sum to 1");
    for (const auto& g : cfg.generators)
        if (!grid.find_generator(g))
            problems.push_back("ems.agc: unknown generator '" + g + "'");
    for (const auto& b : cfg.tie_branches)
        if (!grid.find_branch(b))
            problems.push_back("ems.agc: unknown tie branch '" + b + "'");
    return problems;
}

}  // namespace gridcosim::ems
