#include "gridcosim/controls/voltage_control.hpp"

#include <algorithm>
#include <cmath>

#include "gridcosim/ems/dispatch.hpp"

namespace gridcosim::controls {

std::vector<std::string> check_voltage(const VoltageScheme& s, const powersim::GridCase& grid)
{
    std::vector<std::string> problems;
    if (!(s.period > 0.0))
        problems.push_back("period must be positive");
    for (std::size_t k = 0; k < s.regions.size(); ++k) {
        const auto& r = s.regions[k];
        const std::string where = "region " + std::to_string(k);
        if (!grid.find_bus(r.pilot_bus))
            problems.push_back(where + ": unknown pilot bus " + std::to_string(r.pilot_bus));
        if (r.generators.empty())
            problems.push_back(where + ": no generators");
        for (const auto& g : r.generators)
            if (!grid.find_generator(g))
                problems.push_back(where + ": unknown generator '" + g + "'");
        if (r.kp < 0.0 || r.ki < 0.0)
            problems.push_back(where + ": gains must be non-negative");
        if (!(r.deadband >= 0.0) || !(r.clamp > 0.0))
            problems.push_back(where + ": deadband must be non-negative and clamp positive");
    }
    return problems;
}

double svc_step(double v_pilot, const VoltageRegion& region, SvcState& state, double dt)
{
    const double e = region.v_target - v_pilot;
    if (std::abs(e) <= region.deadband)
        return state.output;
    const double integral = state.integral + e * dt;
    const double u = region.kp * e + region.ki * integral;
    if (std::abs(u) > region.clamp) {
        state.output = std::clamp(u, -region.clamp, region.clamp);
    } else {
        state.integral = integral;
        state.output = u;
    }
    return state.output;
}

SecondaryVoltageController::SecondaryVoltageController(VoltageScheme scheme, powersim::GridCase model)
    : scheme_(std::move(scheme)), model_(std::move(model)), states_(scheme_.regions.size()),
      pilots_(scheme_.regions.size())
{
    const auto problems = check_voltage(scheme_, model_);
    if (!problems.empty())
        throw std::invalid_argument("voltage scheme: " + problems.front());
}

Subscription SecondaryVoltageController::subscription() const
{
    Subscription s;
    s.topics = {ems::Topic::Estimate};
    for (const auto& r : scheme_.regions)
        s.buses.insert(r.pilot_bus);
    return s;
}

ControlOutput SecondaryVoltageController::on_record(const ControlPlaneView& view, double now)
{
    ControlOutput out;
    for (std::size_t k = 0; k < scheme_.regions.size(); ++k)
        pilots_[k] = Pilot{view.estimate_time(), std::abs(view.bus_voltage(scheme_.regions[k].pilot_bus))};

    if (last_act_ && now - *last_act_ < scheme_.period)
        return out;
    const double dt = last_act_ ? now - *last_act_ : scheme_.period;
    last_act_ = now;

    for (std::size_t k = 0; k < scheme_.regions.size(); ++k) {
        const auto& r = scheme_.regions[k];
        if (!pilots_[k] || now - pilots_[k]->t >= 5.0 * scheme_.period)
            continue;  // stale: hold
        const double before = states_[k].output;
        const double after = svc_step(pilots_[k]->v, r, states_[k], dt);
        const double delta = after - before;
        if (delta == 0.0)
            continue;
        std::vector<std::string> online;
        for (const auto& g : r.generators)
            if (model_.generators[*model_.find_generator(g)].in_service)
                online.push_back(g);
        for (const auto& g : online)
            out.commands.push_back({now, name(), powersim::AvrSetpoint{g, delta / static_cast<double>(online.size())},
                                    "pilot bus " + std::to_string(r.pilot_bus) + " at " +
                                        std::to_string(pilots_[k]->v) + " pu"});
    }
    return out;
}

void SecondaryVoltageController::reset()
{
    states_.assign(scheme_.regions.size(), SvcState{});
    pilots_.assign(scheme_.regions.size(), std::nullopt);
    last_act_.reset();
}

TertiaryDispatch::TertiaryDispatch(double period, powersim::GridCase model) : period_(period), model_(std::move(model))
{
    if (!(period_ > 0.0))
        throw std::invalid_argument("tertiary period must be positive");
}

Subscription TertiaryDispatch::subscription() const
{
    Subscription s;
    s.topics = {ems::Topic::Estimate};
    return s;
}

ControlOutput TertiaryDispatch::on_record(const ControlPlaneView&, double now)
{
    ControlOutput out;
    if (now < next_)
        return out;
    next_ = now + period_;
    double demand = 0.0;
    for (const auto& b : model_.buses)
        demand += b.load_p * model_.base_mva;
    nlohmann::json detail{{"demand_mw", demand}};
    try {
        detail["dispatch"] = ems::dispatch_to_json(ems::economic_dispatch(model_, demand));
    } catch (const ems::Infeasible& e) {
        detail["error"] = e.what();
    }
    out.alarms.push_back({now, name(), "dispatch", std::move(detail)});
    return out;
}

}  // namespace gridcosim::controls
