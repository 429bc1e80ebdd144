#include "gridcosim/orchestrator/runner.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <thread>

#include "gridcosim/ems/point_map.hpp"
#include "gridcosim/orchestrator/event_queue.hpp"
#include "gridcosim/orchestrator/export.hpp"
#include "gridcosim/orchestrator/serialization.hpp"

namespace gridcosim::orchestrator {

using nlohmann::json;
using sensors::SensorKind;

namespace {

class Runner {
public:
    Runner(const ScenarioConfig& cfg, std::uint64_t seed, RunMode mode)
        : cfg_(cfg), seed_(seed), mode_(mode), h_(cfg.sim.step_h),
          steps_(static_cast<std::uint64_t>(std::llround(cfg.sim.duration / cfg.sim.step_h))), sim_(cfg.grid),
          fabric_(cfg.topology, seed), ems_(cfg.ems, cfg.grid, cfg.sensors, cfg.sim.start_soc),
          controls_(controls::make_controllers(cfg.controls, cfg.grid), cfg.grid),
          actuator_(cfg.ems.actuator_address, [this](const protocols::DnpMessage& m) { return actuate(m); }),
          rec_(cfg.outputs.channels)
    {
        for (std::size_t k = 0; k < cfg_.sensors.size(); ++k) {
            const auto& s = cfg_.sensors[k];
            if (s.kind == SensorKind::Pmu) {
                PmuStream p;
                p.config = pmu_config(s, cfg_.grid);
                pmu_[s.id] = k;
                streams_[k] = std::move(p);
            }
        }
        rtu_seq_.assign(cfg_.sensors.size(), 0);
        host_of_address_[cfg_.ems.dnp_address] = cfg_.ems.host;
        host_of_address_[cfg_.controls.dnp_address] = cfg_.controls.host;
    }

    RunResult execute();

private:
    struct PmuStream {
        protocols::C37Config config;
        bool streaming = false;
        std::uint64_t sent = 0;
        std::uint64_t suppressed = 0;
    };

    double step_time(std::uint64_t k) const { return static_cast<double>(k) * h_; }
    bool within(double t) const { return t <= cfg_.sim.duration; }
    sensors::SampleTime sample_time(const sensors::SensorSpec& s, std::uint64_t k) const;

    void schedule_initial();
    void dispatch(Event& e);
    void on_grid_step(std::uint64_t k, double now);
    void on_sample(std::size_t sensor, std::uint64_t k, double now);
    void on_delivery(netemu::NetMessage& msg, double now);
    void on_pmu_command(const netemu::NetMessage& msg, double now);
    void on_control(const ems::ControlRecord& r, double now);
    void handle(ems::EmsOutput&& out, double now);
    void send(const std::string& src, const std::string& dst, protocols::Bytes bytes, double now);
    protocols::AckStatus actuate(const protocols::DnpMessage& m);
    json manifest(const RunResult& r) const;

    const ScenarioConfig& cfg_;
    std::uint64_t seed_;
    RunMode mode_;
    double h_;
    std::uint64_t steps_;
    powersim::Simulator sim_;
    powersim::DynamicState prev_;
    powersim::DynamicState next_;
    std::vector<ScheduledAction> pending_;
    netemu::Fabric fabric_;
    ems::Ems ems_;
    controls::ControlsHost controls_;
    protocols::DnpEndpoint actuator_;
    Recorder rec_;
    EventQueue queue_;
    std::map<std::uint16_t, std::size_t> pmu_;  // idcode -> sensor position
    std::map<std::size_t, PmuStream> streams_;
    std::vector<std::uint16_t> rtu_seq_;
    std::map<std::uint16_t, std::string> host_of_address_;
    std::uint16_t controls_seq_ = 0;
    double now_ = 0.0;

    std::uint64_t commands_ = 0;
    std::uint64_t alarms_ = 0;
    std::uint64_t violations_ = 0;
    std::uint64_t applied_ = 0;
    std::uint64_t acks_ = 0;
    std::uint64_t telemetry_ = 0;
};

sensors::SampleTime Runner::sample_time(const sensors::SensorSpec& s, std::uint64_t k) const
{
    if (s.kind == SensorKind::Pmu)
        return sensors::pmu_sample_time(k, s.rate, cfg_.sim.start_soc);
    return sensors::telemetry_sample_time(k, sensors::period_ticks(s.period), cfg_.sim.start_soc);
}

void Runner::schedule_initial()
{
    queue_.push(0.0, EventKind::GridStep, 0);
    for (const auto& ev : cfg_.events)
        queue_.push(ev.time, EventKind::GridEvent, 0, 0, ScheduledAction{ev.action, "scenario"});
    for (const auto& ne : cfg_.net_events)
        queue_.push(ne.time, EventKind::NetChange, 0, 0, ne.change);
    const auto& e = cfg_.ems;
    if (!ems_.pdc().config().expected.empty()) {
        for (int a = 0; a < e.handshake_attempts; ++a)
            queue_.push(e.handshake_start + a * e.handshake_retry, EventKind::Handshake, static_cast<std::uint64_t>(a));
        queue_.push(ems_.pdc().deadline(0), EventKind::PdcDeadline, 0);
    }
    for (std::size_t k = 0; k < cfg_.sensors.size(); ++k)
        queue_.push(sample_time(cfg_.sensors[k], 0).t, EventKind::SensorSample, k, 0);
    if (e.se.hybrid)
        queue_.push(e.se.hybrid_period, EventKind::ScadaCycle, 1);
    if (e.agc.enabled)
        queue_.push(e.agc.period, EventKind::AgcCycle, 1);
    if (e.dispatch.enabled)
        queue_.push(0.0, EventKind::DispatchCycle, 0);
}

RunResult Runner::execute()
{
    RunResult result;
    const auto wall0 = std::chrono::steady_clock::now();
    try {
        const auto pf = powersim::solve_power_flow(cfg_.grid);
        prev_ = sim_.init_dynamics(pf);
        prev_.t = 0.0;
        next_ = prev_;
        rec_.add("sim.power_flow", 0.0,
                 json{{"iterations", pf.iterations}, {"max_mismatch", pf.max_mismatch},
                      {"v_mag", std::vector<double>(pf.v_mag.begin(), pf.v_mag.end())},
                      {"v_ang", std::vector<double>(pf.v_ang.begin(), pf.v_ang.end())}});
        schedule_initial();

        std::optional<double> t0;
        std::chrono::steady_clock::time_point pace0;
        while (!queue_.empty() && within(queue_.top().time)) {
            Event e = queue_.pop();
            if (mode_ == RunMode::Realtime) {
                if (!t0) {
                    t0 = e.time;
                    pace0 = std::chrono::steady_clock::now();
                }
                const auto target = pace0 + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                                std::chrono::duration<double>(e.time - *t0));
                std::this_thread::sleep_until(target);
                const double lag = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - target).count();
                result.max_lag_ms = std::max(result.max_lag_ms, lag);
            }
            now_ = e.time;
            dispatch(e);
            ++result.events;
        }
    } catch (const std::exception& ex) {
        result.ok = false;
        result.error = ex.what();
        rec_.add("run.error", now_, json{{"error", ex.what()}});
    }
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
    result.record = std::move(rec_.record());
    result.record.manifest = manifest(result);
    return result;
}

void Runner::dispatch(Event& e)
{
    switch (e.kind) {
    case EventKind::GridStep:
        on_grid_step(e.index, e.time);
        break;
    case EventKind::SensorSample:
        on_sample(static_cast<std::size_t>(e.index), e.sample, e.time);
        break;
    case EventKind::Delivery:
        on_delivery(std::get<netemu::NetMessage>(e.payload), e.time);
        break;
    case EventKind::GridEvent:
        pending_.push_back(std::get<ScheduledAction>(std::move(e.payload)));
        break;
    case EventKind::NetChange: {
        const auto& c = std::get<netemu::LinkChange>(e.payload);
        fabric_.reconfigure(c);
        rec_.add("net.changes", e.time, link_change_to_json(c));
        break;
    }
    case EventKind::PdcDeadline:
        handle(ems_.on_pdc_deadline(e.time), e.time);
        if (const double d = ems_.pdc().deadline(static_cast<std::int64_t>(e.index) + 1); within(d))
            queue_.push(d, EventKind::PdcDeadline, e.index + 1);
        break;
    case EventKind::ScadaCycle:
        handle(ems_.on_scada_cycle(e.time), e.time);
        if (const double t = cfg_.ems.se.hybrid_period * static_cast<double>(e.index + 1); within(t))
            queue_.push(t, EventKind::ScadaCycle, e.index + 1);
        break;
    case EventKind::AgcCycle:
        handle(ems_.on_agc_cycle(e.time), e.time);
        if (const double t = cfg_.ems.agc.period * static_cast<double>(e.index + 1); within(t))
            queue_.push(t, EventKind::AgcCycle, e.index + 1);
        break;
    case EventKind::DispatchCycle:
        handle(ems_.on_dispatch_cycle(e.time), e.time);
        if (const double t = cfg_.ems.dispatch.period * static_cast<double>(e.index + 1); within(t))
            queue_.push(t, EventKind::DispatchCycle, e.index + 1);
        break;
    case EventKind::Handshake:
        handle(ems_.handshake(e.time, static_cast<int>(e.index)), e.time);
        break;
    case EventKind::ControlActivation:
        on_control(std::get<ems::ControlRecord>(e.payload), e.time);
        break;
    }
}

void Runner::on_grid_step(std::uint64_t k, double now)
{
    powersim::DynamicState cur = k == 0 ? prev_ : next_;
    cur.t = step_time(k);
    for (auto& p : pending_) {
        const auto out = sim_.apply_event(cur, p.action);
        ++applied_;
        rec_.add("sim.events", now,
                 json{{"action", powersim::action_to_json(p.action)}, {"source", p.source}, {"changed", out.changed},
                      {"warnings", out.warnings}});
    }
    pending_.clear();
    if (k % static_cast<std::uint64_t>(cfg_.sim.truth_decimation) == 0 && rec_.wants("sim.truth"))
        rec_.add("sim.truth", now, truth_to_json(cfg_.grid, cur));
    prev_ = std::move(cur);
    if (k < steps_) {
        next_ = sim_.step(prev_, h_);
        next_.t = step_time(k + 1);
        queue_.push(next_.t, EventKind::GridStep, k + 1);
    } else {
        next_ = prev_;
    }
}

void Runner::on_sample(std::size_t i, std::uint64_t k, double now)
{
    const auto& spec = cfg_.sensors[i];
    const auto when = sample_time(spec, k);
    const sensors::SampleContext ctx{sim_, prev_, next_};
    auto rng = sensors::sample_stream(seed_, spec.id, k);
    if (spec.kind == SensorKind::Pmu) {
        const auto sample = sensors::corrupt(sensors::sample_pmu(spec, ctx, when), spec.noise, rng);
        if (rec_.wants("sensors.pmu"))
            rec_.add("sensors.pmu", now, pmu_sample_to_json(sample));
        auto& st = streams_[i];
        if (st.streaming) {
            ++st.sent;
            send(spec.host, cfg_.ems.host, protocols::encode_data(pmu_frame(sample), st.config), now);
        } else {
            ++st.suppressed;
        }
    } else {
        const auto record = sensors::corrupt(sensors::sample_telemetry(spec, ctx, when), spec, spec.noise, rng);
        ++telemetry_;
        if (rec_.wants("sensors.telemetry"))
            rec_.add("sensors.telemetry", now, telemetry_to_json(record));
        for (const auto& m : telemetry_messages(record, when, cfg_.ems.dnp_address, rtu_seq_[i]))
            send(spec.host, cfg_.ems.host, protocols::encode_dnp(m), now);
    }
    const auto nt = sample_time(spec, k + 1).t;
    if (nt < cfg_.sim.duration)
        queue_.push(nt, EventKind::SensorSample, i, k + 1);
}

void Runner::send(const std::string& src, const std::string& dst, protocols::Bytes bytes, double now)
{
    netemu::NetMessage msg{src, dst, std::move(bytes), now, 0, 0};
    const auto out = fabric_.submit(msg);
    if (rec_.wants("net.outcomes"))
        rec_.add("net.outcomes", now, outcome_to_json(msg, out));
    if (const auto* d = std::get_if<netemu::Delivered>(&out))
        queue_.push(d->arrival_time, EventKind::Delivery, 0, 0, std::move(msg));
}

void Runner::on_delivery(netemu::NetMessage& msg, double now)
{
    if (msg.dst == cfg_.ems.host) {
        handle(ems_.on_message(msg.src, msg.payload, now), now);
        return;
    }
    if (msg.dst == cfg_.ems.actuator_host) {
        protocols::DnpMessage m;
        try {
            m = protocols::decode_dnp(msg.payload);
        } catch (const protocols::DnpDecodeError& e) {
            rec_.add("actuator.errors", now, json{{"error", e.what()}, {"src", msg.src}});
            return;
        }
        auto ack = actuator_.receive(m);
        if (!ack)
            return;
        rec_.add("actuator.commands", now,
                 json{{"seq", m.seq}, {"src", m.src}, {"status", static_cast<int>(std::get<protocols::Ack>(ack->body).status)}});
        if (auto it = host_of_address_.find(ack->dst); it != host_of_address_.end())
            send(msg.dst, it->second, protocols::encode_dnp(*ack), now);
        return;
    }
    if (msg.dst == cfg_.controls.host) {
        ++acks_;
        return;
    }
    on_pmu_command(msg, now);
}

void Runner::on_pmu_command(const netemu::NetMessage& msg, double now)
{
    protocols::C37Command cmd;
    try {
        cmd = protocols::decode_command(msg.payload);
    } catch (const protocols::C37DecodeError&) {
        return;
    }
    const auto it = pmu_.find(cmd.prefix.idcode);
    if (it == pmu_.end() || cfg_.sensors[it->second].host != msg.dst)
        return;
    auto& st = streams_[it->second];
    switch (static_cast<protocols::CommandCode>(cmd.command)) {
    case protocols::CommandCode::SendConfig2: {
        auto cfg = st.config;
        const double wall = static_cast<double>(cfg_.sim.start_soc) + now;
        cfg.prefix.soc = static_cast<std::uint32_t>(std::floor(wall));
        send(msg.dst, msg.src, protocols::encode_config(cfg), now);
        break;
    }
    case protocols::CommandCode::DataOn:
        st.streaming = true;
        break;
    case protocols::CommandCode::DataOff:
        st.streaming = false;
        break;
    }
    rec_.add("pmu.commands", now, json{{"idcode", cmd.prefix.idcode}, {"command", cmd.command}});
}

void Runner::handle(ems::EmsOutput&& out, double now)
{
    for (auto& l : out.logs)
        rec_.add(std::move(l.channel), now, std::move(l.body));
    for (auto& m : out.messages)
        send(cfg_.ems.host, m.dst, std::move(m.bytes), now);
    for (auto& r : out.records) {
        if (rec_.wants("control_plane"))
            rec_.add("control_plane", now, ems::record_to_json(r));
        if (!controls_.controllers().empty())
            queue_.push(now, EventKind::ControlActivation, 0, 0, std::move(r));
    }
}

void Runner::on_control(const ems::ControlRecord& r, double now)
{
    auto out = controls_.deliver(r, now);
    for (const auto& c : out.commands) {
        ++commands_;
        rec_.add("controls.commands", now, controls::command_to_json(c));
        for (auto& body : ems::action_to_commands(c.action, cfg_.grid)) {
            const protocols::DnpMessage m{controls_seq_++, cfg_.controls.dnp_address, cfg_.ems.actuator_address,
                                          std::move(body)};
            send(cfg_.controls.host, cfg_.ems.actuator_host, protocols::encode_dnp(m), now);
        }
    }
    for (const auto& a : out.alarms) {
        ++alarms_;
        if (a.kind == "voltage_dip")
            ++violations_;
        rec_.add("controls.alarms", now, controls::alarm_to_json(a));
    }
}

protocols::AckStatus Runner::actuate(const protocols::DnpMessage& m)
{
    const auto action = ems::command_to_action(m.body, cfg_.grid);
    if (!action)
        return protocols::AckStatus::UnknownPoint;
    queue_.push(now_, EventKind::GridEvent, 0, 0, ScheduledAction{*action, "actuator"});
    return protocols::AckStatus::Ok;
}

json Runner::manifest(const RunResult& r) const
{
    const auto& pdc = ems_.pdc().counters();
    const auto& fab = fabric_.counters();
    const auto& ec = ems_.counters();
    std::uint64_t sent = 0, suppressed = 0;
    for (const auto& [k, s] : streams_) {
        sent += s.sent;
        suppressed += s.suppressed;
    }
    json m{{"config_hash", hex64(fnv1a64(cfg_.bytes))},
           {"seed", seed_},
           {"version", GRIDCOSIM_VERSION},
           {"mode", to_string(mode_)},
           {"duration", cfg_.sim.duration},
           {"step_h", cfg_.sim.step_h},
           {"status", r.ok ? "ok" : "failed"},
           {"events", r.events},
           {"counters",
            {{"pdc_received", pdc.received},
             {"late_frames", pdc.late},
             {"duplicate_frames", pdc.duplicates},
             {"missing_frames", pdc.missing},
             {"aligned_sets", pdc.emitted},
             {"fabric_submitted", fab.submitted},
             {"fabric_delivered", fab.delivered},
             {"drops_loss", fab.lost},
             {"drops_link_down", fab.link_down},
             {"drops_no_route", fab.no_route},
             {"pmu_frames_sent", sent},
             {"pmu_frames_suppressed", suppressed},
             {"telemetry_records", telemetry_},
             {"estimates", ec.estimates},
             {"se_failures", ec.se_failures},
             {"c37_errors", ec.c37_errors},
             {"dnp_errors", ec.dnp_errors},
             {"ems_acks", ec.acks},
             {"controls_acks", acks_},
             {"control_commands", commands_},
             {"control_alarms", alarms_},
             {"violations", violations_},
             {"grid_actions_applied", applied_}}}};
    if (!r.ok)
        m["error"] = r.error;
    if (mode_ == RunMode::Realtime)
        m["realtime"] = {{"max_lag_ms", r.max_lag_ms}};
    return m;
}

}  // namespace

RunResult run(const ScenarioConfig& cfg, const RunOptions& options)
{
    const auto seed = options.seed.value_or(cfg.sim.seed);
    const auto mode = options.mode.value_or(cfg.sim.mode);
    Runner runner(cfg, seed, mode);
    auto result = runner.execute();

    std::optional<std::filesystem::path> dir = options.out_dir;
    if (!dir && !cfg.outputs.directory.empty())
        dir = cfg.path.empty() ? std::filesystem::path(cfg.outputs.directory)
                               : cfg.path.parent_path() / cfg.outputs.directory;
    if (options.write_outputs && dir) {
        write_record(result.record, *dir);
        std::ofstream(*dir / "scenario.json", std::ios::binary) << cfg.bytes;
        std::ofstream(*dir / "case.json", std::ios::binary) << powersim::case_to_json(cfg.grid).dump(2) << '\n';
        if (cfg.outputs.contour.enabled)
            export_record(result.record, *dir / "export", ExportFormat::Contour, &cfg.grid, cfg.outputs.contour);
        result.written_to = dir;
    }
    return result;
}

}  // namespace gridcosim::orchestrator
