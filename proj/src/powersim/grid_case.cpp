#include "gridcosim/powersim/grid_case.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace gridcosim::powersim {

using nlohmann::json;

namespace {

std::string join_problems(const std::vector<std::string>& problems)
{
    std::ostringstream out;
    out << "invalid case:";
    for (const auto& p : problems)
        out << "\n  - " << p;
    return out.str();
}

BusKind parse_bus_kind(const std::string& s)
{
    if (s == "slack")
        return BusKind::Slack;
    if (s == "pv" || s == "PV")
        return BusKind::PV;
    if (s == "pq" || s == "PQ")
        return BusKind::PQ;
    throw CaseError({"unknown bus kind '" + s + "'"});
}

template <typename T>
T value_or(const json& j, const char* key, T fallback)
{
    auto it = j.find(key);
    if (it == j.end() || it->is_null())
        return fallback;
    return it->get<T>();
}

}  // namespace

CaseError::CaseError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems))
{
}

std::size_t GridCase::bus_index(int id) const
{
    if (auto idx = find_bus(id))
        return *idx;
    throw UnknownTarget("unknown bus " + std::to_string(id));
}

std::optional<std::size_t> GridCase::find_bus(int id) const noexcept
{
    for (std::size_t i = 0; i < buses.size(); ++i)
        if (buses[i].id == id)
            return i;
    return std::nullopt;
}

std::optional<std::size_t> GridCase::find_branch(std::string_view id) const noexcept
{
    for (std::size_t i = 0; i < branches.size(); ++i)
        if (branches[i].id == id)
            return i;
    return std::nullopt;
}

std::optional<std::size_t> GridCase::find_generator(std::string_view id) const noexcept
{
    for (std::size_t i = 0; i < generators.size(); ++i)
        if (generators[i].id == id)
            return i;
    return std::nullopt;
}

std::unordered_map<int, std::size_t> bus_lookup(const GridCase& grid)
{
    std::unordered_map<int, std::size_t> map;
    map.reserve(grid.buses.size());
    for (std::size_t i = 0; i < grid.buses.size(); ++i)
        map.emplace(grid.buses[i].id, i);
    return map;
}

std::vector<std::string> check_case(const GridCase& grid)
{
    std::vector<std::string> problems;
    if (!(grid.base_mva > 0.0))
        problems.push_back("base_mva must be positive");
    if (!(grid.nominal_freq > 0.0))
        problems.push_back("nominal_freq must be positive");
    if (grid.buses.empty())
        problems.push_back("case has no buses");

    std::set<int> bus_ids;
    for (const auto& bus : grid.buses) {
        if (!bus_ids.insert(bus.id).second)
            problems.push_back("duplicate bus id " + std::to_string(bus.id));
        if (!(bus.v_setpoint > 0.0))
            problems.push_back("bus " + std::to_string(bus.id) + ": v_setpoint must be positive");
    }

    std::set<std::string> branch_ids;
    for (const auto& br : grid.branches) {
        if (!branch_ids.insert(br.id).second)
            problems.push_back("duplicate branch id '" + br.id + "'");
        if (!bus_ids.contains(br.from_bus))
            problems.push_back("branch '" + br.id + "': unknown from_bus " + std::to_string(br.from_bus));
        if (!bus_ids.contains(br.to_bus))
            problems.push_back("branch '" + br.id + "': unknown to_bus " + std::to_string(br.to_bus));
        if (br.from_bus == br.to_bus)
            problems.push_back("branch '" + br.id + "': from_bus equals to_bus");
        if (br.r == 0.0 && br.x == 0.0)
            problems.push_back("branch '" + br.id + "': zero series impedance");
        if (!(br.tap_ratio > 0.0))
            problems.push_back("branch '" + br.id + "': tap_ratio must be positive");
    }

    std::set<std::string> gen_ids;
    for (const auto& g : grid.generators) {
        const std::string where = "generator '" + g.id + "'";
        if (!gen_ids.insert(g.id).second)
            problems.push_back("duplicate generator id '" + g.id + "'");
        if (!bus_ids.contains(g.bus))
            problems.push_back(where + ": unknown bus " + std::to_string(g.bus));
        if (!(g.inertia_h > 0.0))
            problems.push_back(where + ": inertia_h must be positive");
        if (!(g.xd_prime > 0.0))
            problems.push_back(where + ": xd_prime must be positive");
        if (!(g.governor.droop_r > 0.0))
            problems.push_back(where + ": droop_r must be positive");
        if (!(g.governor.time_const_tg > 0.0))
            problems.push_back(where + ": time_const_tg must be positive");
        if (g.q_min > g.q_max)
            problems.push_back(where + ": q_min exceeds q_max");
        if (g.p_min > g.p_max)
            problems.push_back(where + ": p_min exceeds p_max");
        if (g.damping_d < 0.0)
            problems.push_back(where + ": damping_d must be non-negative");
    }

    int slack_count = 0;
    for (const auto& bus : grid.buses)
        slack_count += bus.kind == BusKind::Slack ? 1 : 0;
    if (!grid.buses.empty() && slack_count == 0)
        problems.push_back("case has no slack bus");

    return problems;
}

void validate_case(const GridCase& grid)
{
    auto problems = check_case(grid);
    if (!problems.empty())
        throw CaseError(std::move(problems));
}

std::string_view to_string(BusKind kind) noexcept
{
    switch (kind) {
    case BusKind::Slack:
        return "slack";
    case BusKind::PV:
        return "pv";
    case BusKind::PQ:
        return "pq";
    }
    return "pq";
}

GridCase case_from_json(const json& j)
{
    GridCase grid;
    try {
        grid.name = value_or<std::string>(j, "name", "");
        grid.base_mva = value_or(j, "base_mva", 100.0);
        grid.nominal_freq = value_or(j, "nominal_freq", 60.0);

        for (const auto& jb : j.at("buses")) {
            Bus bus;
            bus.id = jb.at("id").get<int>();
            bus.kind = parse_bus_kind(value_or<std::string>(jb, "kind", "pq"));
            bus.load_p = value_or(jb, "load_p", 0.0);
            bus.load_q = value_or(jb, "load_q", 0.0);
            bus.v_setpoint = value_or(jb, "v_setpoint", 1.0);
            if (auto it = jb.find("geo"); it != jb.end() && !it->is_null())
                bus.geo = GeoPoint{it->at("lat").get<double>(), it->at("lon").get<double>()};
            grid.buses.push_back(bus);
        }

        if (auto it = j.find("branches"); it != j.end()) {
            for (const auto& jb : *it) {
                Branch br;
                br.id = jb.at("id").get<std::string>();
                br.from_bus = jb.at("from_bus").get<int>();
                br.to_bus = jb.at("to_bus").get<int>();
                br.r = value_or(jb, "r", 0.0);
                br.x = value_or(jb, "x", 0.0);
                br.b_shunt = value_or(jb, "b_shunt", 0.0);
                br.tap_ratio = value_or(jb, "tap_ratio", 1.0);
                const auto status = value_or<std::string>(jb, "status", "in");
                if (status != "in" && status != "out")
                    throw CaseError({"branch '" + br.id + "': status must be 'in' or 'out'"});
                br.status = status == "in" ? BranchStatus::In : BranchStatus::Out;
                grid.branches.push_back(br);
            }
        }

        if (auto it = j.find("generators"); it != j.end()) {
            for (const auto& jg : *it) {
                Generator g;
                g.id = jg.at("id").get<std::string>();
                g.bus = jg.at("bus").get<int>();
                g.p_sched = value_or(jg, "p_sched", 0.0);
                g.q_min = value_or(jg, "q_min", g.q_min);
                g.q_max = value_or(jg, "q_max", g.q_max);
                g.p_min = value_or(jg, "p_min", g.p_min);
                g.p_max = value_or(jg, "p_max", g.p_max);
                g.inertia_h = value_or(jg, "inertia_h", g.inertia_h);
                g.damping_d = value_or(jg, "damping_d", g.damping_d);
                g.xd_prime = value_or(jg, "xd_prime", g.xd_prime);
                g.in_service = value_or(jg, "in_service", true);
                if (auto gov = jg.find("governor"); gov != jg.end()) {
                    g.governor.droop_r = value_or(*gov, "droop_r", g.governor.droop_r);
                    g.governor.time_const_tg = value_or(*gov, "time_const_tg", g.governor.time_const_tg);
                    g.governor.enabled = value_or(*gov, "enabled", true);
                }
                if (auto cost = jg.find("cost"); cost != jg.end()) {
                    g.cost.a = value_or(*cost, "a", 0.0);
                    g.cost.b = value_or(*cost, "b", 0.0);
                    g.cost.c = value_or(*cost, "c", 0.0);
                }
                grid.generators.push_back(g);
            }
        }
    } catch (const json::exception& e) {
        throw CaseError({std::string("malformed case json: ") + e.what()});
    }
    return grid;
}

json case_to_json(const GridCase& grid)
{
    json j;
    j["schema_version"] = 1;
    j["name"] = grid.name;
    j["base_mva"] = grid.base_mva;
    j["nominal_freq"] = grid.nominal_freq;
    j["buses"] = json::array();
    for (const auto& bus : grid.buses) {
        json jb{{"id", bus.id},
                {"kind", std::string(to_string(bus.kind))},
                {"load_p", bus.load_p},
                {"load_q", bus.load_q},
                {"v_setpoint", bus.v_setpoint}};
        if (bus.geo)
            jb["geo"] = {{"lat", bus.geo->lat}, {"lon", bus.geo->lon}};
        j["buses"].push_back(jb);
    }
    j["branches"] = json::array();
    for (const auto& br : grid.branches) {
        j["branches"].push_back({{"id", br.id},
                                 {"from_bus", br.from_bus},
                                 {"to_bus", br.to_bus},
                                 {"r", br.r},
                                 {"x", br.x},
                                 {"b_shunt", br.b_shunt},
                                 {"tap_ratio", br.tap_ratio},
                                 {"status", br.in_service() ? "in" : "out"}});
    }
    j["generators"] = json::array();
    for (const auto& g : grid.generators) {
        j["generators"].push_back(
            {{"id", g.id},
             {"bus", g.bus},
             {"p_sched", g.p_sched},
             {"q_min", g.q_min},
             {"q_max", g.q_max},
             {"p_min", g.p_min},
             {"p_max", g.p_max},
             {"inertia_h", g.inertia_h},
             {"damping_d", g.damping_d},
             {"xd_prime", g.xd_prime},
             {"in_service", g.in_service},
             {"governor",
              {{"droop_r", g.governor.droop_r},
               {"time_const_tg", g.governor.time_const_tg},
               {"enabled", g.governor.enabled}}},
             {"cost", {{"a", g.cost.a}, {"b", g.cost.b}, {"c", g.cost.c}}}});
    }
    return j;
}

GridCase load_case(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw CaseError({"cannot open case file " + path.string()});
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CaseError({path.string() + ": " + e.what()});
    }
    auto grid = case_from_json(j);
    validate_case(grid);
    return grid;
}

}  // namespace gridcosim::powersim
