#include "gridcosim/orchestrator/replay.hpp"

#include <fstream>
#include <sstream>

#include "gridcosim/controls/controller.hpp"
#include "gridcosim/ems/wls.hpp"

namespace gridcosim::orchestrator {

using nlohmann::json;

namespace {

/// Canonical form, so integer and float encodings of the same value agree.
json canonical(const json& j)
{
    return json::parse(j.dump());
}

void diff(const std::vector<json>& expected, const std::vector<json>& actual, ReplayResult& r)
{
    r.expected = expected.size();
    r.produced = actual.size();
    const auto n = std::max(expected.size(), actual.size());
    for (std::size_t k = 0; k < n; ++k) {
        const json e = k < expected.size() ? canonical(expected[k]) : json();
        const json a = k < actual.size() ? canonical(actual[k]) : json();
        if (e.dump() != a.dump()) {
            r.first_divergence = Divergence{k, e, a};
            return;
        }
    }
}

ReplayResult replay_controller(const RunRecord& record, const ScenarioConfig& cfg, const std::string& name,
                               const json& patch)
{
    auto ccfg = cfg.controls;
    if (!ccfg.schemes.contains(name))
        throw std::invalid_argument("scenario has no '" + name + "' control scheme");
    ccfg.schemes[name].merge_patch(patch);
    auto ctrl = controls::make_controller(name, ccfg, cfg.grid);
    std::vector<std::unique_ptr<controls::Controller>> one;
    one.push_back(std::move(ctrl));
    controls::ControlsHost host(std::move(one), cfg.grid);

    const auto inputs = record.channel("control_plane");
    if (inputs.empty())
        throw MissingChannel("record has no control_plane channel");

    ReplayResult r;
    r.component = name;
    r.inputs = inputs.size();
    std::vector<json> expected, actual;
    for (const auto& e : record.entries) {
        if ((e.channel == "controls.commands" || e.channel == "controls.alarms") &&
            e.data.value("controller", std::string{}) == name)
            expected.push_back(json{{e.channel == "controls.commands" ? "command" : "alarm", e.data}});
    }
    for (const auto* in : inputs) {
        auto out = host.deliver(ems::record_from_json(in->data), in->t);
        for (const auto& c : out.commands)
            actual.push_back(json{{"command", controls::command_to_json(c)}});
        for (const auto& a : out.alarms)
            actual.push_back(json{{"alarm", controls::alarm_to_json(a)}});
    }
    diff(expected, actual, r);
    return r;
}

ReplayResult replay_wls(const RunRecord& record, const ScenarioConfig& cfg)
{
    const auto inputs = record.channel("ems.se_inputs");
    if (inputs.empty())
        throw MissingChannel("record has no ems.se_inputs channel");
    ReplayResult r;
    r.component = "wls";
    r.inputs = inputs.size();
    std::vector<json> expected, actual;
    for (const auto* e : record.channel("ems.estimate"))
        expected.push_back(e->data);
    for (const auto* in : inputs) {
        if (in->data.contains("error"))
            continue;
        auto model = cfg.grid;
        const auto& status = in->data.at("branch_status");
        for (std::size_t k = 0; k < model.branches.size() && k < status.size(); ++k)
            model.branches[k].status = status[k].get<bool>() ? powersim::BranchStatus::In : powersim::BranchStatus::Out;
        ems::MeasurementSet meas;
        for (const auto& m : in->data.at("measurements"))
            meas.push_back(ems::measurement_from_json(m));
        auto est = ems::wls_estimate(meas, model);
        est.t = in->data.at("t").get<double>();
        auto body = ems::estimate_to_json(est);
        body["kind"] = in->data.at("kind");
        actual.push_back(std::move(body));
    }
    diff(expected, actual, r);
    return r;
}

}  // namespace

ReplayResult replay(const RunRecord& record, const ScenarioConfig& cfg, const std::string& component, const json& patch)
{
    if (component == "wls")
        return replay_wls(record, cfg);
    return replay_controller(record, cfg, component, patch);
}

ScenarioConfig load_recorded_scenario(const std::filesystem::path& dir)
{
    std::ifstream in(dir / "scenario.json", std::ios::binary);
    if (!in)
        throw MissingFile("no scenario.json in " + dir.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto doc = json::parse(ss.str());
    doc["case"] = "case.json";
    return parse_scenario(doc.dump(), dir, dir / "scenario.json");
}

ReplayResult replay_directory(const std::filesystem::path& dir, const std::string& component, const json& patch)
{
    const auto record = read_record(dir);
    const auto cfg = load_recorded_scenario(dir);
    return replay(record, cfg, component, patch);
}

}  // namespace gridcosim::orchestrator
