#include "gridcosim/orchestrator/serialization.hpp"

#include <cmath>

namespace gridcosim::orchestrator {

using nlohmann::json;
using sensors::Quantity;

protocols::C37Config pmu_config(const sensors::SensorSpec& spec, const powersim::GridCase& grid)
{
    protocols::C37Config cfg;
    cfg.prefix.idcode = spec.id;
    cfg.time_base = sensors::kTimeBase;
    cfg.data_rate = static_cast<std::int16_t>(spec.rate);
    protocols::PmuChannelConfig p;
    p.station = spec.name.substr(0, 16);
    p.idcode = spec.id;
    p.fnom = grid.nominal_freq == 50.0 ? 1 : 0;
    for (const auto& t : spec.targets) {
        if (!t.is_phasor())
            continue;
        std::string name;
        switch (t.quantity) {
        case Quantity::VPhasor:
            name = "V" + std::to_string(t.bus);
            break;
        case Quantity::IPhasor:
            name = "I" + t.branch + (t.to_end ? "T" : "F");
            break;
        case Quantity::GenI:
            name = "IG" + t.generator;
            break;
        default:
            name = "IL" + std::to_string(t.bus);
            break;
        }
        p.phasor_names.push_back(name.substr(0, 16));
        p.phasor_units.push_back(t.quantity == Quantity::VPhasor ? 0x00000000u : 0x01000000u);
    }
    cfg.pmus.push_back(std::move(p));
    return cfg;
}

protocols::C37Data pmu_frame(const sensors::PmuSample& s)
{
    protocols::C37Data f;
    f.prefix = {s.idcode, s.soc, s.fracsec};
    protocols::PmuData d;
    if (!s.quality.valid)
        d.stat = protocols::kStatInvalid;
    else if (s.quality.deenergized)
        d.stat = protocols::kStatDeenergized;
    for (const auto& ph : s.phasors)
        d.phasors.push_back({static_cast<float>(std::abs(ph)), static_cast<float>(std::arg(ph))});
    d.freq = static_cast<float>(s.freq);
    d.dfreq = static_cast<float>(s.rocof);
    f.pmus.push_back(std::move(d));
    return f;
}

std::vector<protocols::DnpMessage> telemetry_messages(const sensors::TelemetryRecord& rec, const sensors::SampleTime& when,
                                                      std::uint16_t dst, std::uint16_t& seq)
{
    const std::uint64_t ms = std::uint64_t{when.soc} * 1000 + when.fracsec / (sensors::kTimeBase / 1000);
    std::vector<protocols::DnpMessage> out;
    protocols::AnalogInputBlock a{ms, {}};
    for (const auto& p : rec.analogs)
        a.points.push_back({p.index, p.value, p.quality});
    out.push_back({seq++, rec.device, dst, a});
    if (!rec.binaries.empty()) {
        protocols::BinaryInputBlock b{ms, {}};
        for (const auto& p : rec.binaries)
            b.points.push_back({p.index, p.closed, p.quality});
        out.push_back({seq++, rec.device, dst, b});
    }
    return out;
}

json pmu_sample_to_json(const sensors::PmuSample& s)
{
    json ph = json::array();
    for (const auto& p : s.phasors)
        ph.push_back({std::abs(p), std::arg(p)});
    return json{{"idcode", s.idcode}, {"t", s.t},      {"soc", s.soc},         {"fracsec", s.fracsec},
                {"phasors", ph},      {"freq", s.freq}, {"rocof", s.rocof},     {"valid", s.quality.valid},
                {"deenergized", s.quality.deenergized}};
}

json telemetry_to_json(const sensors::TelemetryRecord& r)
{
    json a = json::array();
    for (const auto& p : r.analogs)
        a.push_back({{"index", p.index}, {"value", p.value}, {"quality", p.quality}});
    json b = json::array();
    for (const auto& p : r.binaries)
        b.push_back({{"index", p.index}, {"closed", p.closed}, {"quality", p.quality}});
    return json{{"device", r.device}, {"timestamp", r.timestamp}, {"analogs", a}, {"binaries", b}};
}

json truth_to_json(const powersim::GridCase& grid, const powersim::DynamicState& state)
{
    json vm = json::array(), va = json::array(), om = json::array(), de = json::array(), pe = json::array(),
         pm = json::array(), isl = json::array();
    for (Eigen::Index k = 0; k < state.v.size(); ++k) {
        vm.push_back(std::abs(state.v[k]));
        va.push_back(std::arg(state.v[k]));
    }
    for (const auto& m : state.machines) {
        om.push_back(m.omega);
        de.push_back(m.delta);
        pe.push_back(m.p_elec);
        pm.push_back(m.p_mech);
    }
    for (int l : state.island_map)
        isl.push_back(l);
    json freq = json::object();
    for (int label : powersim::island_labels(state.island_map))
        if (auto w = powersim::island_coi_speed(grid, state, label))
            freq[std::to_string(label)] = *w * grid.nominal_freq;
    return json{{"t", state.t},   {"v_mag", vm}, {"v_ang", va},   {"omega", om}, {"delta", de},
                {"p_elec", pe},   {"p_mech", pm}, {"island", isl}, {"freq", freq}};
}

json outcome_to_json(const netemu::NetMessage& msg, const netemu::DeliveryOutcome& out)
{
    json j{{"seq", msg.msg_seq}, {"src", msg.src}, {"dst", msg.dst}, {"size", msg.size}, {"send", msg.send_time}};
    if (const auto* d = std::get_if<netemu::Delivered>(&out)) {
        j["outcome"] = "delivered";
        j["arrival"] = d->arrival_time;
    } else {
        const auto& x = std::get<netemu::Dropped>(out);
        j["outcome"] = "dropped";
        j["reason"] = netemu::to_string(x.reason);
        j["link"] = x.link;
    }
    return j;
}

}  // namespace gridcosim::orchestrator
