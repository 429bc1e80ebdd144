#include "gridcosim/orchestrator/scenario.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace gridcosim::orchestrator {

using nlohmann::json;

namespace {

std::string join(const std::vector<std::string>& v)
{
    std::string out;
    for (const auto& s : v)
        out += (out.empty() ? "" : "; ") + s;
    return out;
}

/// Runs `f`, turning any exception into a problem tagged with `where`.
template <class F>
void collect(std::vector<std::string>& problems, const std::string& where, F&& f)
{
    try {
        f();
    } catch (const powersim::CaseError& e) {
        for (const auto& p : e.problems())
            problems.push_back(where + ": " + p);
    } catch (const std::exception& e) {
        problems.push_back(where + ": " + e.what());
    }
}

bool is_host(const netemu::NetTopology& topo, const std::string& id)
{
    const auto n = topo.find_node(id);
    return n && topo.nodes[*n].kind == netemu::NodeKind::Host;
}

std::vector<std::string> action_targets(const powersim::GridAction& a, const powersim::GridCase& g)
{
    std::vector<std::string> p;
    auto branch = [&](const std::string& id) {
        if (!g.find_branch(id))
            p.push_back("unknown branch '" + id + "'");
    };
    auto gen = [&](const std::string& id) {
        if (!g.find_generator(id))
            p.push_back("unknown generator '" + id + "'");
    };
    if (const auto* e = std::get_if<powersim::LineTrip>(&a))
        branch(e->branch);
    else if (const auto* e = std::get_if<powersim::LineClose>(&a))
        branch(e->branch);
    else if (const auto* e = std::get_if<powersim::Separate>(&a))
        for (const auto& b : e->branches)
            branch(b);
    else if (const auto* e = std::get_if<powersim::GenTrip>(&a))
        gen(e->generator);
    else if (const auto* e = std::get_if<powersim::GovSetpoint>(&a))
        gen(e->generator);
    else if (const auto* e = std::get_if<powersim::AvrSetpoint>(&a))
        gen(e->generator);
    else if (const auto* e = std::get_if<powersim::LoadScale>(&a)) {
        for (int b : e->buses)
            if (!g.find_bus(b))
                p.push_back("unknown bus " + std::to_string(b));
        if (!(e->factor >= 0.0) || (e->reactive_factor && !(*e->reactive_factor >= 0.0)))
            p.push_back("load_scale factors must be non-negative");
    }
    return p;
}

}  // namespace

SchemaError::SchemaError(std::vector<std::string> problems)
    : std::runtime_error("scenario schema errors: " + join(problems)), problems_(std::move(problems))
{
}

std::string to_string(RunMode m)
{
    return m == RunMode::Realtime ? "realtime" : "deterministic";
}

RunMode parse_mode(const std::string& s)
{
    if (s == "deterministic")
        return RunMode::Deterministic;
    if (s == "realtime")
        return RunMode::Realtime;
    throw std::invalid_argument("mode must be 'deterministic' or 'realtime', got '" + s + "'");
}

netemu::LinkChange link_change_from_json(const json& j)
{
    netemu::LinkChange c;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "link_up")
        c.kind = netemu::LinkChange::Kind::LinkUp;
    else if (kind == "link_down")
        c.kind = netemu::LinkChange::Kind::LinkDown;
    else if (kind == "set_impairment")
        c.kind = netemu::LinkChange::Kind::SetImpairment;
    else
        throw std::invalid_argument("unknown link change kind '" + kind + "'");
    c.link = j.at("link").get<std::string>();
    if (j.contains("latency_ms"))
        c.latency_ms = j.at("latency_ms").get<double>();
    if (j.contains("jitter_ms"))
        c.jitter_ms = j.at("jitter_ms").get<double>();
    if (j.contains("loss_prob"))
        c.loss_prob = j.at("loss_prob").get<double>();
    return c;
}

json link_change_to_json(const netemu::LinkChange& c)
{
    static const char* kinds[] = {"link_up", "link_down", "set_impairment"};
    json j{{"kind", kinds[static_cast<int>(c.kind)]}, {"link", c.link}};
    if (c.latency_ms)
        j["latency_ms"] = *c.latency_ms;
    if (c.jitter_ms)
        j["jitter_ms"] = *c.jitter_ms;
    if (c.loss_prob)
        j["loss_prob"] = *c.loss_prob;
    return j;
}

ScenarioConfig parse_scenario(const std::string& text, const std::filesystem::path& base_dir,
                              const std::filesystem::path& origin)
{
    ScenarioConfig cfg;
    cfg.path = origin;
    cfg.bytes = text;
    try {
        cfg.doc = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError({std::string("not valid JSON: ") + e.what()});
    }
    const auto& doc = cfg.doc;
    if (!doc.is_object())
        throw SchemaError({"scenario must be a JSON object"});

    std::vector<std::string> problems;

    if (!doc.contains("schema_version"))
        problems.push_back("schema_version: missing");
    else if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kSchemaVersion)
        problems.push_back("schema_version: unsupported value " + doc["schema_version"].dump() + " (expected " +
                           std::to_string(kSchemaVersion) + ")");

    bool have_case = false;
    if (!doc.contains("case") || !doc["case"].is_string()) {
        problems.push_back("case: missing path");
    } else {
        cfg.case_path = base_dir / doc["case"].get<std::string>();
        if (!std::filesystem::exists(cfg.case_path))
            problems.push_back("case: file not found: " + cfg.case_path.string());
        else
            collect(problems, "case", [&] {
                cfg.grid = powersim::load_case(cfg.case_path);
                have_case = true;
            });
    }

    bool have_topo = false;
    if (!doc.contains("topology")) {
        problems.push_back("topology: missing");
    } else {
        collect(problems, "topology", [&] {
            cfg.topology = netemu::topology_from_json(doc["topology"]);
            const auto p = netemu::check_topology(cfg.topology);
            for (const auto& s : p)
                problems.push_back("topology: " + s);
            have_topo = p.empty();
        });
    }

    if (auto it = doc.find("sim"); it != doc.end()) {
        collect(problems, "sim", [&] {
            auto& s = cfg.sim;
            s.step_h = it->value("step_h", s.step_h);
            s.duration = it->value("duration", s.duration);
            s.seed = it->value("seed", s.seed);
            s.start_soc = it->value("start_soc", s.start_soc);
            s.truth_decimation = it->value("truth_decimation", s.truth_decimation);
            if (it->contains("mode"))
                s.mode = parse_mode(it->at("mode").get<std::string>());
        });
        if (!(cfg.sim.duration > 0.0))
            problems.push_back("sim.duration: must be positive");
        if (!(cfg.sim.step_h > 0.0) || cfg.sim.step_h > 0.1)
            problems.push_back("sim.step_h: must lie in (0, 0.1]");
        if (cfg.sim.truth_decimation < 1)
            problems.push_back("sim.truth_decimation: must be at least 1");
    } else {
        problems.push_back("sim: missing");
    }

    std::set<std::uint16_t> ids;
    if (auto it = doc.find("sensors"); it != doc.end()) {
        for (std::size_t k = 0; k < it->size(); ++k) {
            const std::string where = "sensors[" + std::to_string(k) + "]";
            collect(problems, where, [&] {
                auto s = sensors::sensor_from_json(it->at(k));
                if (!ids.insert(s.id).second)
                    problems.push_back(where + ": duplicate sensor id " + std::to_string(s.id));
                if (have_case)
                    for (const auto& p : sensors::check_sensor(s, cfg.grid))
                        problems.push_back(where + ": " + p);
                if (have_topo && !is_host(cfg.topology, s.host))
                    problems.push_back(where + ": host '" + s.host + "' is not a host node of the topology");
                cfg.sensors.push_back(std::move(s));
            });
        }
    }

    collect(problems, "ems", [&] { cfg.ems = ems::ems_config_from_json(doc.value("ems", json::object())); });
    collect(problems, "controls",
            [&] { cfg.controls = controls::controls_config_from_json(doc.value("controls", json::object())); });
    if (have_topo) {
        for (const auto& [field, host] : {std::pair<std::string, std::string>{"ems.host", cfg.ems.host},
                                          {"ems.actuator_host", cfg.ems.actuator_host},
                                          {"controls.host", cfg.controls.host}})
            if (!is_host(cfg.topology, host))
                problems.push_back(field + ": '" + host + "' is not a host node of the topology");
    }
    if (cfg.ems.dnp_address == cfg.controls.dnp_address || cfg.ems.dnp_address == cfg.ems.actuator_address ||
        cfg.controls.dnp_address == cfg.ems.actuator_address)
        problems.push_back("dnp addresses of ems, controls and actuator must differ");
    for (auto id : cfg.ems.pmus)
        if (!ids.contains(id))
            problems.push_back("ems.pmus: unknown sensor id " + std::to_string(id));

    if (have_case) {
        // Building the components surfaces cross-reference errors now
        // rather than at run time.
        collect(problems, "ems", [&] {
            if (cfg.ems.agc.enabled)
                for (const auto& p : ems::check_agc(cfg.ems.agc, cfg.grid))
                    problems.push_back("ems.agc: " + p);
            ems::Ems probe(cfg.ems, cfg.grid, cfg.sensors, cfg.sim.start_soc);
        });
        collect(problems, "controls", [&] { (void)controls::make_controllers(cfg.controls, cfg.grid); });
    }

    if (auto it = doc.find("events"); it != doc.end()) {
        for (std::size_t k = 0; k < it->size(); ++k) {
            const std::string where = "events[" + std::to_string(k) + "]";
            collect(problems, where, [&] {
                const auto& je = it->at(k);
                const double t = je.at("time").get<double>();
                if (!(t >= 0.0))
                    problems.push_back(where + ".time: must be non-negative");
                if (je.contains("action")) {
                    auto a = powersim::action_from_json(je.at("action"));
                    if (have_case)
                        for (const auto& p : action_targets(a, cfg.grid))
                            problems.push_back(where + ": " + p);
                    cfg.events.push_back({t, std::move(a)});
                } else if (je.contains("net")) {
                    auto c = link_change_from_json(je.at("net"));
                    if (have_topo && !cfg.topology.find_link(c.link))
                        problems.push_back(where + ": unknown link '" + c.link + "'");
                    cfg.net_events.push_back({t, std::move(c)});
                } else {
                    problems.push_back(where + ": needs an 'action' or a 'net' entry");
                }
            });
        }
    }

    if (auto it = doc.find("outputs"); it != doc.end()) {
        collect(problems, "outputs", [&] {
            cfg.outputs.directory = it->value("directory", std::string{});
            cfg.outputs.channels = it->value("channels", std::vector<std::string>{});
            if (auto c = it->find("contour"); c != it->end()) {
                cfg.outputs.contour.enabled = c->value("enabled", false);
                cfg.outputs.contour.decimation = c->value("decimation", 1);
                cfg.outputs.contour.variable = c->value("variable", std::string("v_mag"));
                if (cfg.outputs.contour.decimation < 1)
                    problems.push_back("outputs.contour.decimation: must be at least 1");
            }
        });
    }

    if (!problems.empty())
        throw SchemaError(std::move(problems));
    return cfg;
}

ScenarioConfig load_scenario(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw MissingFile("scenario file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str(), path.parent_path(), path);
}

}  // namespace gridcosim::orchestrator
