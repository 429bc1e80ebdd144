#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "gridcosim/orchestrator/export.hpp"
#include "gridcosim/orchestrator/replay.hpp"
#include "gridcosim/orchestrator/runner.hpp"

namespace orch = gridcosim::orchestrator;

namespace {

constexpr int kOk = 0;
constexpr int kComponentFailure = 1;
constexpr int kConfigError = 2;

int report_schema(const orch::SchemaError& e)
{
    std::cerr << "invalid scenario:\n";
    for (const auto& p : e.problems())
        std::cerr << "  " << p << '\n';
    return kConfigError;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Deterministic grid / network / EMS co-simulation"};
    app.set_version_flag("--version", GRIDCOSIM_VERSION);
    app.require_subcommand(1);

    std::string scenario, record_dir, out_dir, mode, format, component, patch;
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "Run a scenario");
    run->add_option("scenario", scenario, "Scenario file")->required();
    auto* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
    run->add_option("--mode", mode, "deterministic or realtime")->check(CLI::IsMember({"deterministic", "realtime"}));
    run->add_option("--out", out_dir, "Record directory (default: outputs.directory)");

    auto* validate = app.add_subcommand("validate", "Check a scenario and list every problem");
    validate->add_option("scenario", scenario, "Scenario file")->required();

    auto* exp = app.add_subcommand("export", "Export a record");
    exp->add_option("record", record_dir, "Record directory")->required();
    exp->add_option("--format", format, "csv, jsonl or contour")
        ->required()
        ->check(CLI::IsMember({"csv", "jsonl", "contour"}));
    exp->add_option("--out", out_dir, "Output directory (default: <record>/export)");

    auto* rep = app.add_subcommand("replay", "Re-run one component against a record");
    rep->add_option("record", record_dir, "Record directory")->required();
    rep->add_option("--component", component, "Controller scheme name or wls")->required();
    rep->add_option("--patch", patch, "JSON merged into the component config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kConfigError;
    }

    try {
        if (*validate) {
            const auto cfg = orch::load_scenario(scenario);
            std::cout << "ok: " << cfg.grid.name << ", " << cfg.sensors.size() << " sensors, " << cfg.events.size()
                      << " grid events, " << cfg.sim.duration << " s\n";
            return kOk;
        }
        if (*run) {
            const auto cfg = orch::load_scenario(scenario);
            orch::RunOptions opt;
            if (*seed_opt)
                opt.seed = seed;
            if (!mode.empty())
                opt.mode = orch::parse_mode(mode);
            if (!out_dir.empty())
                opt.out_dir = out_dir;
            const auto r = orch::run(cfg, opt);
            std::cout << (r.ok ? "completed" : "failed") << ": " << r.events << " events in " << r.wall_seconds
                      << " s wall";
            if (r.record.manifest.contains("realtime"))
                std::cout << ", max lag " << r.max_lag_ms << " ms";
            std::cout << '\n';
            if (r.written_to)
                std::cout << "record: " << r.written_to->string() << '\n';
            if (!r.ok) {
                std::cerr << "error: " << r.error << '\n';
                return kComponentFailure;
            }
            return kOk;
        }
        if (*exp) {
            const auto record = orch::read_record(record_dir);
            const auto fmt = orch::parse_format(format);
            const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(record_dir) / "export" : std::filesystem::path(out_dir);
            std::optional<orch::ScenarioConfig> cfg;
            if (fmt == orch::ExportFormat::Contour)
                cfg = orch::load_recorded_scenario(record_dir);
            const auto files = orch::export_record(record, dir, fmt, cfg ? &cfg->grid : nullptr,
                                                   cfg ? cfg->outputs.contour : orch::ContourConfig{});
            for (const auto& f : files)
                std::cout << f.string() << '\n';
            return kOk;
        }
        if (*rep) {
            const auto p = patch.empty() ? nlohmann::json::object() : nlohmann::json::parse(patch);
            const auto r = orch::replay_directory(record_dir, component, p);
            std::cout << r.component << ": " << r.inputs << " inputs, " << r.expected << " recorded outputs, "
                      << r.produced << " replayed\n";
            if (r.identical()) {
                std::cout << "identical\n";
                return kOk;
            }
            const auto& d = *r.first_divergence;
            std::cout << "diverges at output " << d.index << "\n  recorded: " << d.expected.dump()
                      << "\n  replayed: " << d.actual.dump() << '\n';
            return kComponentFailure;
        }
    } catch (const orch::SchemaError& e) {
        return report_schema(e);
    } catch (const orch::MissingFile& e) {
        std::cerr << e.what() << '\n';
        return kConfigError;
    } catch (const orch::IoError& e) {
        std::cerr << e.what() << '\n';
        return kConfigError;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "bad JSON: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kComponentFailure;
    }
    return kOk;
}
