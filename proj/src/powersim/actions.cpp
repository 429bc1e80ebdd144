#include <stdexcept>

#include "gridcosim/powersim/dynamics.hpp"

namespace gridcosim::powersim {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

}  // namespace

std::string action_type(const GridAction& a)
{
    static const char* names[] = {"line_trip",    "line_close",   "gen_trip", "load_scale",
                                  "gov_setpoint", "avr_setpoint", "separate"};
    return names[a.index()];
}

json action_to_json(const GridAction& a)
{
    json j = std::visit(overloaded{
                            [](const LineTrip& e) { return json{{"branch", e.branch}}; },
                            [](const LineClose& e) { return json{{"branch", e.branch}}; },
                            [](const GenTrip& e) { return json{{"generator", e.generator}}; },
                            [](const LoadScale& e) {
                                json o{{"factor", e.factor}, {"buses", e.buses}};
                                if (e.reactive_factor)
                                    o["reactive_factor"] = *e.reactive_factor;
                                return o;
                            },
                            [](const GovSetpoint& e) { return json{{"generator", e.generator}, {"delta_p", e.delta_p}}; },
                            [](const AvrSetpoint& e) { return json{{"generator", e.generator}, {"delta_v", e.delta_v}}; },
                            [](const Separate& e) { return json{{"branches", e.branches}}; },
                        },
                        a);
    j["type"] = action_type(a);
    return j;
}

GridAction action_from_json(const json& j)
{
    const auto type = j.at("type").get<std::string>();
    if (type == "line_trip")
        return LineTrip{j.at("branch").get<std::string>()};
    if (type == "line_close")
        return LineClose{j.at("branch").get<std::string>()};
    if (type == "gen_trip")
        return GenTrip{j.at("generator").get<std::string>()};
    if (type == "load_scale") {
        LoadScale e;
        e.factor = j.at("factor").get<double>();
        e.buses = j.at("buses").get<std::vector<int>>();
        if (j.contains("reactive_factor"))
            e.reactive_factor = j.at("reactive_factor").get<double>();
        return e;
    }
    if (type == "gov_setpoint")
        return GovSetpoint{j.at("generator").get<std::string>(), j.at("delta_p").get<double>()};
    if (type == "avr_setpoint")
        return AvrSetpoint{j.at("generator").get<std::string>(), j.at("delta_v").get<double>()};
    if (type == "separate")
        return Separate{j.at("branches").get<std::vector<std::string>>()};
    throw std::invalid_argument("unknown grid action type '" + type + "'");
}

}  // namespace gridcosim::powersim
