#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "gridcosim/orchestrator/event_queue.hpp"
#include "gridcosim/orchestrator/export.hpp"
#include "gridcosim/orchestrator/replay.hpp"
#include "gridcosim/orchestrator/runner.hpp"
#include "oracles.hpp"

using namespace gridcosim;
using namespace gridcosim::orchestrator;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json scenario_doc(const std::string& name)
{
    std::ifstream in(oracle::scenario_path(name));
    return json::parse(in);
}

ScenarioConfig parse_doc(const json& doc)
{
    return parse_scenario(doc.dump(), oracle::data_dir() / "scenarios");
}

fs::path scratch(const std::string& name)
{
    const auto p = fs::temp_directory_path() / ("gridcosim_unit_" + name);
    fs::remove_all(p);
    return p;
}

/// Two-bus system at rest: no events, short horizon, truth recorded.
json quiet_doc()
{
    auto doc = scenario_doc("pdc_latency_50ms");
    doc["sim"]["duration"] = 3.0;
    doc["outputs"]["channels"] = {"sim.truth", "ems.aligned", "sensors.pmu"};
    return doc;
}

std::vector<std::string> schema_problems(const json& doc)
{
    try {
        parse_doc(doc);
    } catch (const SchemaError& e) {
        return e.problems();
    }
    return {};
}

bool any_contains(const std::vector<std::string>& v, const std::string& needle)
{
    for (const auto& s : v)
        if (s.find(needle) != std::string::npos)
            return true;
    return false;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("bundled scenarios load")
{
    const auto cfg = load_scenario(oracle::scenario_path("two_area_separation"));
    CHECK(cfg.grid.name == "two_area");
    CHECK(cfg.events.size() == 2);
    CHECK(cfg.sensors.size() == 7);
    CHECK_FALSE(cfg.bytes.empty());
    for (const char* name : {"case9_agc", "case9_droop", "case39_throughput", "pdc_latency_50ms", "pdc_latency_150ms",
                             "sampling_hour", "two_area_uncontrolled", "voltage_control", "voltage_uncontrolled"}) {
        CAPTURE(name);
        CHECK_NOTHROW(load_scenario(oracle::scenario_path(name)));
    }
    CHECK_THROWS_AS(load_scenario(oracle::scenario_path("no_such_scenario")), MissingFile);
}

TEST_CASE("schema errors name the offending field")
{
    auto neg = quiet_doc();
    neg["sim"]["duration"] = -1.0;
    CHECK(any_contains(schema_problems(neg), "sim.duration"));

    auto host = quiet_doc();
    host["sensors"][0]["host"] = "pmu9";
    CHECK(any_contains(schema_problems(host), "pmu9"));

    // Every problem is reported, not just the first.
    auto both = neg;
    both["sensors"][0]["host"] = "pmu9";
    both["events"] = {{{"time", 1.0}, {"action", {{"type", "line_trip"}, {"branch", "nope"}}}}};
    const auto all = schema_problems(both);
    CHECK(all.size() >= 3);
    CHECK(any_contains(all, "nope"));

    auto version = quiet_doc();
    version["schema_version"] = 99;
    CHECK_FALSE(schema_problems(version).empty());
}

TEST_CASE("event queue breaks ties by insertion order")
{
    EventQueue q;
    q.push(1.0, EventKind::GridStep, 7);
    q.push(0.5, EventKind::SensorSample, 1);
    q.push(1.0, EventKind::Delivery, 8);
    q.push(1.0, EventKind::GridEvent, 9);
    q.push(0.5, EventKind::PdcDeadline, 2);
    std::vector<std::uint64_t> order;
    while (!q.empty())
        order.push_back(q.pop().index);
    CHECK(order == std::vector<std::uint64_t>{1, 2, 7, 8, 9});
    CHECK(q.pushed() == 5);
}

TEST_CASE("quiet case keeps a constant truth")
{
    const auto cfg = parse_doc(quiet_doc());
    const auto r = run(cfg, {.write_outputs = false});
    REQUIRE(r.ok);
    const auto truth = r.record.channel("sim.truth");
    REQUIRE(truth.size() > 10);
    const auto& first = truth.front()->data;
    double worst = 0.0;
    for (const auto* e : truth) {
        for (std::size_t b = 0; b < first["v_mag"].size(); ++b) {
            worst = std::max(worst, std::abs(e->data["v_mag"][b].get<double>() - first["v_mag"][b].get<double>()));
            worst = std::max(worst, std::abs(e->data["v_ang"][b].get<double>() - first["v_ang"][b].get<double>()));
        }
        for (const auto& w : e->data["omega"])
            worst = std::max(worst, std::abs(w.get<double>() - 1.0));
    }
    CHECK(worst < 1e-9);
    CHECK(r.record.manifest["status"] == "ok");
    CHECK(r.record.manifest["counters"]["aligned_sets"].get<int>() > 0);
}

TEST_CASE("runs are deterministic and the seed matters")
{
    const auto cfg = load_scenario(oracle::scenario_path("pdc_latency_50ms"));
    const auto a = run(cfg, {.write_outputs = false});
    const auto b = run(cfg, {.write_outputs = false});
    REQUIRE(a.ok);
    CHECK(a.record.entries == b.record.entries);
    CHECK(a.record.manifest == b.record.manifest);
    const auto c = run(cfg, {.seed = 99, .write_outputs = false});
    CHECK_FALSE(a.record.entries == c.record.entries);
}

TEST_CASE("record round trip on disk")
{
    const auto cfg = parse_doc(quiet_doc());
    const auto dir = scratch("roundtrip");
    const auto r = run(cfg, {.out_dir = dir});
    REQUIRE(r.written_to);
    const auto back = read_record(dir);
    CHECK(back.entries == r.record.entries);
    CHECK(back.manifest == r.record.manifest);
    for (const char* key : {"config_hash", "duration", "mode", "seed", "status", "step_h", "version", "counters"})
        CHECK(back.manifest.contains(key));
    CHECK_FALSE(back.manifest.contains("wall_seconds"));
    CHECK_THROWS_AS(read_record(dir / "missing"), IoError);
}

TEST_CASE("csv export re-imports to the same series")
{
    const auto cfg = parse_doc(quiet_doc());
    const auto r = run(cfg, {.write_outputs = false});
    const auto dir = scratch("csv");
    export_record(r.record, dir, ExportFormat::Csv);
    const auto table = read_csv(dir / (channel_file_stem("sim.truth") + ".csv"));
    const auto truth = r.record.channel("sim.truth");
    const auto t = table.column("t");
    const auto v = table.column("v_mag[1]");
    REQUIRE(t.size() == truth.size());
    for (std::size_t k = 0; k < truth.size(); ++k) {
        CHECK(t[k] == truth[k]->t);
        CHECK(v[k] == truth[k]->data["v_mag"][1].get<double>());
    }
}

TEST_CASE("jsonl export is ordered in time and re-imports")
{
    const auto cfg = parse_doc(quiet_doc());
    const auto r = run(cfg, {.write_outputs = false});
    const auto dir = scratch("jsonl");
    const auto files = export_record(r.record, dir, ExportFormat::Jsonl);
    CHECK(files.size() == r.record.channels().size());
    for (const auto& ch : r.record.channels()) {
        const auto rows = read_jsonl(dir / (channel_file_stem(ch) + ".jsonl"));
        const auto orig = r.record.channel(ch);
        REQUIRE(rows.size() == orig.size());
        for (std::size_t k = 0; k < rows.size(); ++k) {
            CHECK(rows[k] == *orig[k]);
            if (k > 0)
                CHECK(rows[k].t >= rows[k - 1].t);
        }
    }
}

TEST_CASE("contour export has one row per bus per snapshot")
{
    auto doc = scenario_doc("two_area_separation");
    doc["sim"]["duration"] = 6.0;
    const auto cfg = parse_doc(doc);
    const auto r = run(cfg, {.write_outputs = false});
    REQUIRE(r.ok);
    const auto dir = scratch("contour");
    export_record(r.record, dir, ExportFormat::Contour, &cfg.grid, cfg.outputs.contour);
    const auto table = read_csv(dir / "contour.csv");
    const auto truth = r.record.channel("sim.truth");
    const auto dec = static_cast<std::size_t>(cfg.outputs.contour.decimation);
    const std::size_t snapshots = (truth.size() + dec - 1) / dec;
    CHECK(table.rows.size() == cfg.grid.buses.size() * snapshots);
    CHECK(table.header.size() == 6);
    CHECK_THROWS(export_record(r.record, dir, ExportFormat::Contour, nullptr));
}

TEST_CASE("replay reproduces a controller and flags a changed threshold")
{
    const auto cfg = load_scenario(oracle::scenario_path("two_area_separation"));
    const auto dir = scratch("replay");
    const auto r = run(cfg, {.out_dir = dir});
    REQUIRE(r.ok);
    const auto commands = r.record.channel("controls.commands");
    REQUIRE_FALSE(commands.empty());

    for (const char* c : {"separation", "dip_monitor", "wls"}) {
        CAPTURE(c);
        const auto same = replay_directory(dir, c);
        CHECK(same.identical());
        CHECK(same.inputs > 0);
    }

    const auto changed = replay_directory(dir, "separation", json{{"threshold", 100.0}});
    REQUIRE_FALSE(changed.identical());
    CHECK(changed.first_divergence->index == 0);
    // The recorded islands keep drifting apart, so a high threshold only fires later.
    CHECK(changed.first_divergence->actual["command"]["t"].get<double>() > commands.front()->t);

    const auto earlier = replay_directory(dir, "separation", json{{"threshold", 1.0}});
    REQUIRE_FALSE(earlier.identical());
    CHECK(earlier.first_divergence->index == 0);
    CHECK(earlier.first_divergence->actual["command"]["t"].get<double>() < commands.front()->t);

    CHECK_THROWS(replay_directory(dir, "no_such_component"));
}

TEST_CASE("negative load scale is rejected")
{
    auto doc = quiet_doc();
    doc["events"] = {{{"time", 1.0}, {"action", {{"type", "load_scale"}, {"factor", -2.0}, {"buses", {2}}}}}};
    CHECK(any_contains(schema_problems(doc), "events[0]"));
}

TEST_CASE("written records are byte-stable")
{
    const auto cfg = parse_doc(quiet_doc());
    const auto a = scratch("bytes_a"), b = scratch("bytes_b");
    run(cfg, {.out_dir = a});
    run(cfg, {.out_dir = b});
    CHECK(slurp(a / "record.jsonl") == slurp(b / "record.jsonl"));
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    CHECK_FALSE(slurp(a / "record.jsonl").empty());
}
