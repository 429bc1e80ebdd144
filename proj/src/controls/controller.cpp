#include "gridcosim/controls/controller.hpp"

#include <algorithm>

#include "gridcosim/controls/dip_monitor.hpp"
#include "gridcosim/controls/separation.hpp"
#include "gridcosim/controls/ufls.hpp"
#include "gridcosim/controls/voltage_control.hpp"
#include "gridcosim/controls/vsa.hpp"

namespace gridcosim::controls {

using nlohmann::json;

ControlPlaneView::ControlPlaneView(const ems::ControlRecord& record, const Subscription& sub,
                                   const powersim::GridCase& model, std::string controller)
    : record_(record), sub_(sub), model_(model), controller_(std::move(controller))
{
}

void ControlPlaneView::violation(const std::string& what) const
{
    throw SubscriptionViolation("controller '" + controller_ + "' read " + what + " outside its subscription");
}

void ControlPlaneView::require(ems::Topic t) const
{
    if (!sub_.topics.contains(t))
        violation("topic " + ems::to_string(t));
    if (record_.topic() != t)
        throw std::logic_error("record carries " + ems::to_string(record_.topic()) + ", not " + ems::to_string(t));
}

double ControlPlaneView::aligned_time() const
{
    require(ems::Topic::Aligned);
    return std::get<ems::AlignedFrameSet>(record_.payload).t;
}

const protocols::PmuData* ControlPlaneView::pmu(std::uint16_t idcode) const
{
    require(ems::Topic::Aligned);
    if (!sub_.pmus.contains(idcode))
        violation("PMU " + std::to_string(idcode));
    return std::get<ems::AlignedFrameSet>(record_.payload).find(idcode);
}

double ControlPlaneView::estimate_time() const
{
    require(ems::Topic::Estimate);
    return std::get<ems::StateEstimate>(record_.payload).t;
}

Complex ControlPlaneView::bus_voltage(int bus) const
{
    require(ems::Topic::Estimate);
    if (!sub_.all_buses && !sub_.buses.contains(bus))
        violation("bus " + std::to_string(bus));
    const auto& e = std::get<ems::StateEstimate>(record_.payload);
    const auto k = static_cast<Eigen::Index>(model_.bus_index(bus));
    return std::polar(e.v_mag[k], e.v_ang[k]);
}

const ems::StateEstimate& ControlPlaneView::estimate() const
{
    require(ems::Topic::Estimate);
    if (!sub_.all_buses)
        violation("the full estimate");
    return std::get<ems::StateEstimate>(record_.payload);
}

double ControlPlaneView::rotor_time() const
{
    require(ems::Topic::Rotor);
    return std::get<ems::RotorAngleEstimate>(record_.payload).t;
}

std::optional<double> ControlPlaneView::rotor_angle(const std::string& generator) const
{
    require(ems::Topic::Rotor);
    if (!sub_.all_generators && !sub_.generators.contains(generator))
        violation("generator " + generator);
    const auto& r = std::get<ems::RotorAngleEstimate>(record_.payload);
    for (std::size_t k = 0; k < r.generators.size(); ++k)
        if (r.generators[k] == generator)
            return r.delta[k];
    return std::nullopt;
}

std::vector<double> ControlPlaneView::rotor_angles() const
{
    require(ems::Topic::Rotor);
    if (!sub_.all_generators)
        violation("every rotor angle");
    return std::get<ems::RotorAngleEstimate>(record_.payload).available();
}

void ControlOutput::append(ControlOutput&& other)
{
    for (auto& c : other.commands)
        commands.push_back(std::move(c));
    for (auto& a : other.alarms)
        alarms.push_back(std::move(a));
}

ControlsHost::ControlsHost(std::vector<std::unique_ptr<Controller>> controllers, powersim::GridCase model)
    : controllers_(std::move(controllers)), model_(std::move(model))
{
    for (const auto& c : controllers_)
        subs_.push_back(c->subscription());
}

ControlOutput ControlsHost::deliver(const ems::ControlRecord& record, double now)
{
    ControlOutput out;
    for (std::size_t k = 0; k < controllers_.size(); ++k) {
        if (!subs_[k].topics.contains(record.topic()))
            continue;
        const ControlPlaneView view(record, subs_[k], model_, controllers_[k]->name());
        out.append(controllers_[k]->on_record(view, now));
    }
    return out;
}

ControlsConfig controls_config_from_json(const json& j)
{
    ControlsConfig c;
    c.host = j.value("host", c.host);
    c.dnp_address = j.value("dnp_address", c.dnp_address);
    for (const auto& [key, value] : j.items())
        if (key != "host" && key != "dnp_address")
            c.schemes[key] = value;
    return c;
}

namespace {

UflsScheme ufls_from_json(const json& j)
{
    UflsScheme s;
    s.buses = j.at("buses").get<std::vector<int>>();
    for (const auto& js : j.at("stages")) {
        UflsStage st;
        st.threshold = js.at("threshold").get<double>();
        st.shed_fraction = js.at("shed_fraction").get<double>();
        st.delay = js.value("delay", st.delay);
        s.stages.push_back(st);
    }
    check_ufls(s);
    return s;
}

SeparationScheme separation_from_json(const json& j, const powersim::GridCase& model)
{
    SeparationScheme s;
    s.epis = j.at("epis").get<std::vector<std::vector<int>>>();
    for (const auto& ji : j.at("interfaces")) {
        Interface i;
        const auto pair = ji.at("epis").get<std::vector<std::size_t>>();
        if (pair.size() != 2)
            throw std::invalid_argument("separation interface needs exactly two EPIs");
        i.a = pair[0];
        i.b = pair[1];
        i.lines = ji.at("lines").get<std::vector<std::string>>();
        s.interfaces.push_back(i);
    }
    s.cut = j.value("cut", s.cut);
    if (j.contains("k"))
        s.k = j.at("k").get<int>();
    s.threshold = j.value("threshold", s.threshold);
    s.post_shed_fraction = j.value("post_shed_fraction", s.post_shed_fraction);
    const auto problems = check_separation(s, model);
    if (!problems.empty())
        throw std::invalid_argument("separation scheme: " + problems.front());
    return s;
}

VoltageScheme voltage_from_json(const json& j, const powersim::GridCase& model)
{
    VoltageScheme s;
    s.period = j.value("period", s.period);
    for (const auto& jr : j.at("regions")) {
        VoltageRegion r;
        r.generators = jr.at("generators").get<std::vector<std::string>>();
        r.pilot_bus = jr.at("pilot_bus").get<int>();
        r.v_target = jr.value("v_target", r.v_target);
        r.kp = jr.value("kp", r.kp);
        r.ki = jr.value("ki", r.ki);
        r.deadband = jr.value("deadband", r.deadband);
        r.clamp = jr.value("clamp", r.clamp);
        s.regions.push_back(r);
    }
    const auto problems = check_voltage(s, model);
    if (!problems.empty())
        throw std::invalid_argument("voltage scheme: " + problems.front());
    return s;
}

VsaConfig vsa_from_json(const json& j)
{
    VsaConfig c;
    c.window = j.value("window", c.window);
    c.alarm_index = j.value("alarm_index", c.alarm_index);
    for (const auto& jb : j.at("buses"))
        c.buses.push_back({jb.at("bus").get<int>(), jb.at("pmu").get<std::uint16_t>(),
                           jb.value("v_channel", std::size_t{0}), jb.value("i_channel", std::size_t{1})});
    if (c.window < 2)
        throw std::invalid_argument("vsa window must hold at least 2 samples");
    return c;
}

}  // namespace

std::unique_ptr<Controller> make_controller(const std::string& name, const ControlsConfig& cfg,
                                            const powersim::GridCase& model)
{
    const auto it = cfg.schemes.find(name);
    if (it == cfg.schemes.end())
        return nullptr;
    const auto& j = *it;
    if (name == "ufls")
        return std::make_unique<UflsController>(ufls_from_json(j), j.at("pmu").get<std::uint16_t>());
    if (name == "separation")
        return std::make_unique<SeparationController>(separation_from_json(j, model), model);
    if (name == "voltage")
        return std::make_unique<SecondaryVoltageController>(voltage_from_json(j, model), model);
    if (name == "tertiary")
        return std::make_unique<TertiaryDispatch>(j.value("period", 60.0), model);
    if (name == "vsa")
        return std::make_unique<VsaController>(vsa_from_json(j));
    if (name == "dip_monitor") {
        DipMonitorConfig c;
        c.v_floor = j.value("v_floor", c.v_floor);
        c.duration_cycles = j.value("duration_cycles", c.duration_cycles);
        c.nominal_freq = model.nominal_freq;
        if (!(c.v_floor > 0.0))
            throw std::invalid_argument("dip monitor v_floor must be positive");
        return std::make_unique<DipMonitorController>(c, j.at("buses").get<std::vector<int>>());
    }
    throw std::invalid_argument("unknown control scheme '" + name + "'");
}

std::vector<std::unique_ptr<Controller>> make_controllers(const ControlsConfig& cfg, const powersim::GridCase& model)
{
    std::vector<std::unique_ptr<Controller>> out;
    // Fixed evaluation order, independent of key order in the file.
    for (const char* name : {"ufls", "separation", "voltage", "tertiary", "vsa", "dip_monitor"}) {
        const auto it = cfg.schemes.find(name);
        if (it == cfg.schemes.end() || !it->value("enabled", true))
            continue;
        out.push_back(make_controller(name, cfg, model));
    }
    for (const auto& [key, value] : cfg.schemes.items()) {
        static const std::set<std::string> known{"ufls", "separation", "voltage", "tertiary", "vsa", "dip_monitor"};
        if (!known.contains(key))
            throw std::invalid_argument("unknown control scheme '" + key + "'");
    }
    return out;
}

json command_to_json(const Command& c)
{
    return json{{"t", c.t}, {"controller", c.controller}, {"action", powersim::action_to_json(c.action)},
                {"reason", c.reason}};
}

Command command_from_json(const json& j)
{
    return Command{j.at("t").get<double>(), j.at("controller").get<std::string>(),
                   powersim::action_from_json(j.at("action")), j.value("reason", std::string{})};
}

json alarm_to_json(const Alarm& a)
{
    return json{{"t", a.t}, {"controller", a.controller}, {"kind", a.kind}, {"detail", a.detail}};
}

}  // namespace gridcosim::controls
