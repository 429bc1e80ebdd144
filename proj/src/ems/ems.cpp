#include "gridcosim/ems/ems.hpp"

#include <algorithm>
#include <cmath>

#include "gridcosim/ems/point_map.hpp"

namespace gridcosim::ems {

using nlohmann::json;
using namespace protocols;
using sensors::Quantity;
using sensors::SensorKind;
using sensors::SensorSpec;

namespace {

bool usable(const PmuData& d) noexcept
{
    // Invalid without the de-energized marker means the whole frame is bad;
    // with it, only zeroed channels are dark.
    return !(d.stat & 0x4000) || (d.stat & 0x0008);
}

std::optional<Complex> channel(const PmuData& d, std::size_t k)
{
    if (!usable(d) || k >= d.phasors.size() || d.phasors[k].magnitude == 0.0f)
        return std::nullopt;
    return std::polar(static_cast<double>(d.phasors[k].magnitude), static_cast<double>(d.phasors[k].angle));
}

/// Phasor selectors of a PMU in frame channel order.
std::vector<sensors::Selector> phasor_channels(const SensorSpec& s)
{
    std::vector<sensors::Selector> out;
    for (const auto& t : s.targets)
        if (t.is_phasor())
            out.push_back(t);
    return out;
}

}  // namespace

void EmsOutput::append(EmsOutput&& other)
{
    for (auto& m : other.messages)
        messages.push_back(std::move(m));
    for (auto& r : other.records)
        records.push_back(std::move(r));
    for (auto& l : other.logs)
        logs.push_back(std::move(l));
}

MeasurementSet phasor_measurements(const AlignedFrameSet& set, const std::vector<SensorSpec>& sensors,
                                   double min_sigma)
{
    MeasurementSet meas;
    for (const auto& e : set.entries) {
        if (!e.data)
            continue;
        const auto it = std::find_if(sensors.begin(), sensors.end(), [&](const SensorSpec& s) { return s.id == e.idcode; });
        if (it == sensors.end())
            continue;
        const auto chans = phasor_channels(*it);
        for (std::size_t k = 0; k < chans.size(); ++k) {
            if (chans[k].quantity != Quantity::VPhasor)
                continue;
            const auto ph = channel(*e.data, k);
            if (!ph)
                continue;
            Measurement m;
            m.kind = MeasKind::VPhasor;
            m.bus = chans[k].bus;
            m.value = std::abs(*ph);
            m.angle = std::arg(*ph);
            m.sigma = std::max(it->noise.mag_sigma, min_sigma);
            m.angle_sigma = std::max(it->noise.ang_sigma, min_sigma);
            meas.push_back(m);
        }
    }
    return meas;
}

Ems::Ems(EmsConfig cfg, powersim::GridCase model, std::vector<SensorSpec> sensors, std::uint32_t start_soc)
    : cfg_(std::move(cfg)), model_(std::move(model)), sensors_(std::move(sensors)), start_soc_(start_soc),
      pdc_([&] {
          PdcConfig p;
          p.wait_window = cfg_.wait_window;
          p.start_soc = start_soc;
          for (const auto& s : sensors_) {
              if (s.kind != SensorKind::Pmu)
                  continue;
              if (cfg_.pmus.empty() || std::find(cfg_.pmus.begin(), cfg_.pmus.end(), s.id) != cfg_.pmus.end()) {
                  p.expected.push_back(s.id);
                  p.rate = s.rate;
              }
          }
          return p;
      }())
{
    if (cfg_.rotor.enabled) {
        auto gens = cfg_.rotor.generators;
        if (gens.empty())
            for (const auto& g : model_.generators)
                gens.push_back(g.id);
        for (const auto& id : gens) {
            const auto g = model_.find_generator(id);
            if (!g)
                throw powersim::UnknownTarget("rotor estimator: unknown generator '" + id + "'");
            const auto& gen = model_.generators[*g];
            std::optional<RotorChannels> found;
            for (const auto& s : sensors_) {
                if (s.kind != SensorKind::Pmu || std::find(pdc_.config().expected.begin(), pdc_.config().expected.end(),
                                                            s.id) == pdc_.config().expected.end())
                    continue;
                const auto chans = phasor_channels(s);
                std::optional<std::size_t> vi, ii;
                for (std::size_t k = 0; k < chans.size(); ++k) {
                    if (chans[k].quantity == Quantity::VPhasor && chans[k].bus == gen.bus && !vi)
                        vi = k;
                    if (chans[k].quantity == Quantity::GenI && chans[k].generator == id && !ii)
                        ii = k;
                }
                if (vi && ii) {
                    found = RotorChannels{s.id, *vi, *ii};
                    break;
                }
            }
            if (!found)
                throw MissingChannel("no PMU carries terminal voltage and current of generator '" + id + "'");
            rotor_channels_.push_back(*found);
            rotor_inputs_.push_back({id, gen.xd_prime, std::nullopt, std::nullopt});
        }
    }
    agc_.commands.assign(cfg_.agc.generators.size(), 0.0);
}

const SensorSpec* Ems::sensor(std::uint16_t id) const
{
    for (const auto& s : sensors_)
        if (s.id == id)
            return &s;
    return nullptr;
}

double Ems::virtual_time(std::uint64_t ms) const
{
    const auto base = static_cast<std::int64_t>(start_soc_) * 1000;
    return static_cast<double>(static_cast<std::int64_t>(ms) - base) / 1000.0;
}

EmsOutput Ems::handshake(double now, int attempt)
{
    EmsOutput out;
    for (auto id : pdc_.config().expected) {
        if (configs_.contains(id))
            continue;
        const auto* s = sensor(id);
        C37Command cmd;
        cmd.prefix.idcode = id;
        const double wall = static_cast<double>(start_soc_) + now;
        cmd.prefix.soc = static_cast<std::uint32_t>(std::floor(wall));
        cmd.prefix.fracsec = static_cast<std::uint32_t>((wall - std::floor(wall)) * sensors::kTimeBase);
        cmd.command = static_cast<std::uint16_t>(CommandCode::SendConfig2);
        out.messages.push_back({s->host, encode_command(cmd)});
        out.logs.push_back({"ems.handshake", now, json{{"idcode", id}, {"command", 5}, {"attempt", attempt}}});
    }
    return out;
}

EmsOutput Ems::on_message(const std::string&, const Bytes& bytes, double now)
{
    if (!bytes.empty() && bytes[0] == kC37Sync)
        return on_c37(bytes, now);
    if (bytes.size() >= 2 && bytes[0] == kDnpMagic0 && bytes[1] == kDnpMagic1)
        return on_dnp(bytes, now);
    ++counters_.c37_errors;
    return {};
}

EmsOutput Ems::on_c37(const Bytes& bytes, double now)
{
    EmsOutput out;
    try {
        const auto info = inspect_frame(bytes);
        if (info.type == FrameType::Config2) {
            auto cfg = decode_config(bytes);
            const auto id = cfg.prefix.idcode;
            const bool fresh = !configs_.contains(id);
            configs_[id] = std::move(cfg);
            if (fresh) {
                C37Command cmd;
                cmd.prefix = configs_[id].prefix;
                cmd.command = static_cast<std::uint16_t>(CommandCode::DataOn);
                if (const auto* s = sensor(id))
                    out.messages.push_back({s->host, encode_command(cmd)});
                out.logs.push_back({"ems.handshake", now, json{{"idcode", id}, {"command", 2}}});
            }
            return out;
        }
        if (info.type == FrameType::Data) {
            auto it = configs_.find(info.idcode);
            const auto frame = decode_data(bytes, it == configs_.end() ? nullptr : &it->second);
            return process_aligned(pdc_.on_frame(frame, now), now);
        }
    } catch (const C37DecodeError&) {
        ++counters_.c37_errors;
    }
    return out;
}

EmsOutput Ems::on_dnp(const Bytes& bytes, double now)
{
    EmsOutput out;
    DnpMessage msg;
    try {
        msg = decode_dnp(bytes);
    } catch (const DnpDecodeError&) {
        ++counters_.dnp_errors;
        return out;
    }
    if (const auto* ack = std::get_if<Ack>(&msg.body)) {
        ++(ack->status == AckStatus::Ok ? counters_.acks : counters_.nacks);
        return out;
    }
    if (const auto* block = std::get_if<AnalogInputBlock>(&msg.body)) {
        ++counters_.telemetry_records;
        const double t = virtual_time(block->timestamp_ms);
        for (const auto& p : block->points)
            scada_[{msg.src, p.index}] = ScadaPoint{t, p.value, p.quality};
        return out;
    }
    if (const auto* block = std::get_if<BinaryInputBlock>(&msg.body)) {
        bool changed = false;
        for (const auto& p : block->points) {
            if (p.index >= model_.branches.size())
                continue;
            auto& br = model_.branches[p.index];
            const auto status = p.state ? powersim::BranchStatus::In : powersim::BranchStatus::Out;
            changed = changed || br.status != status;
            br.status = status;
        }
        if (changed)
            out.logs.push_back({"ems.topology", now, json{{"device", msg.src}}});
    }
    return out;
}

void Ems::publish(double now, ControlPayload payload, EmsOutput& out)
{
    if (auto rec = publisher_.publish(now, std::move(payload)))
        out.records.push_back(std::move(*rec));
}

std::optional<StateEstimate> Ems::run_se(const MeasurementSet& meas, const char* kind, double stamp, double now,
                                         EmsOutput& out)
{
    if (meas.empty())
        return std::nullopt;
    json inputs{{"kind", kind}, {"t", stamp}, {"measurements", json::array()}, {"branch_status", json::array()}};
    for (const auto& m : meas)
        inputs["measurements"].push_back(measurement_to_json(m));
    for (const auto& br : model_.branches)
        inputs["branch_status"].push_back(br.in_service());
    try {
        auto est = wls_estimate(meas, model_);
        est.t = stamp;
        ++counters_.estimates;
        out.logs.push_back({"ems.se_inputs", now, std::move(inputs)});
        auto body = estimate_to_json(est);
        body["kind"] = kind;
        out.logs.push_back({"ems.estimate", now, std::move(body)});
        return est;
    } catch (const std::exception& e) {
        ++counters_.se_failures;
        inputs["error"] = e.what();
        out.logs.push_back({"ems.se_inputs", now, std::move(inputs)});
        return std::nullopt;
    }
}

EmsOutput Ems::process_aligned(std::vector<AlignedFrameSet> sets, double now)
{
    EmsOutput out;
    for (auto& set : sets) {
        out.logs.push_back({"ems.aligned", now, aligned_to_json(set)});
        last_aligned_ = set;
        publish(now, set, out);

        if (!rotor_channels_.empty()) {
            for (std::size_t g = 0; g < rotor_channels_.size(); ++g) {
                const auto& rc = rotor_channels_[g];
                const auto* d = set.find(rc.pmu);
                rotor_inputs_[g].v = d ? channel(*d, rc.v) : std::nullopt;
                rotor_inputs_[g].i = d ? channel(*d, rc.i) : std::nullopt;
            }
            auto rotor = tracker_.update(set.t, rotor_inputs_);
            out.logs.push_back({"ems.rotor", now, rotor_to_json(rotor)});
            publish(now, std::move(rotor), out);
        }

        if (cfg_.se.fast) {
            const auto meas = phasor_measurements(set, sensors_, cfg_.se.min_sigma);
            if (auto est = run_se(meas, "fast", set.t, now, out))
                publish(now, std::move(*est), out);
        }
    }
    return out;
}

EmsOutput Ems::on_pdc_deadline(double now)
{
    return process_aligned(pdc_.advance(now), now);
}

EmsOutput Ems::on_scada_cycle(double now)
{
    EmsOutput out;
    if (!cfg_.se.hybrid)
        return out;
    MeasurementSet meas;
    for (const auto& [key, p] : scada_) {
        if (now - p.t > cfg_.se.scada_max_age || (p.quality & sensors::kQualityDeenergized))
            continue;
        const auto* s = sensor(key.first);
        if (!s || key.second >= s->targets.size())
            continue;
        const auto& sel = s->targets[key.second];
        Measurement m;
        m.value = p.value;
        m.sigma = std::max(s->noise.analog_sigma, cfg_.se.min_sigma);
        switch (sel.quantity) {
        case Quantity::VMag:
            m.kind = MeasKind::VMag;
            m.bus = sel.bus;
            break;
        case Quantity::PFlow:
        case Quantity::QFlow:
            m.kind = sel.quantity == Quantity::PFlow ? MeasKind::PFlow : MeasKind::QFlow;
            m.branch = sel.branch;
            m.to_end = sel.to_end;
            break;
        default:
            continue;
        }
        meas.push_back(m);
    }
    if (last_aligned_ && now - last_aligned_->t <= cfg_.se.scada_max_age) {
        auto ph = phasor_measurements(*last_aligned_, sensors_, cfg_.se.min_sigma);
        meas.insert(meas.end(), ph.begin(), ph.end());
    }
    if (auto est = run_se(meas, "hybrid", now, now, out))
        publish(now, std::move(*est), out);
    return out;
}

EmsOutput Ems::on_agc_cycle(double now)
{
    EmsOutput out;
    const auto& a = cfg_.agc;
    if (!a.enabled || !last_aligned_)
        return out;
    const auto* d = last_aligned_->find(a.freq_pmu);
    if (!d || !usable(*d) || d->freq == 0.0f)
        return out;
    const double df = static_cast<double>(d->freq) - model_.nominal_freq;

    double export_mw = 0.0;
    for (const auto& [key, p] : scada_) {
        const auto* s = sensor(key.first);
        if (!s || key.second >= s->targets.size() || now - p.t > cfg_.se.scada_max_age)
            continue;
        const auto& sel = s->targets[key.second];
        if (sel.quantity == Quantity::PFlow && !sel.to_end &&
            std::find(a.tie_branches.begin(), a.tie_branches.end(), sel.branch) != a.tie_branches.end())
            export_mw += p.value * model_.base_mva;
    }
    const double dptie = a.tie_branches.empty() ? 0.0 : export_mw - a.scheduled_export_mw;

    AgcLimits limits;
    for (const auto& id : a.generators) {
        const auto& g = model_.generators[*model_.find_generator(id)];
        limits.lo.push_back((g.p_min - g.p_sched) * model_.base_mva);
        limits.hi.push_back((g.p_max - g.p_sched) * model_.base_mva);
    }
    const double dt = agc_started_ ? now - last_agc_ : a.period;
    agc_started_ = true;
    last_agc_ = now;
    const auto delta = agc_step(df, dptie, agc_, a, dt, limits);

    for (std::size_t k = 0; k < delta.size(); ++k) {
        if (delta[k] == 0.0)
            continue;
        const powersim::GovSetpoint sp{a.generators[k], delta[k] / model_.base_mva};
        for (auto& body : action_to_commands(sp, model_)) {
            DnpMessage msg{dnp_seq_++, cfg_.dnp_address, cfg_.actuator_address, body};
            out.messages.push_back({cfg_.actuator_host, encode_dnp(msg)});
        }
    }
    out.logs.push_back({"ems.agc",
                        now,
                        json{{"delta_f", df},
                             {"delta_ptie", dptie},
                             {"ace", agc_.last_ace},
                             {"integral", agc_.ace_integral},
                             {"commands_mw", agc_.commands},
                             {"deltas_mw", delta}}});
    return out;
}

EmsOutput Ems::on_dispatch_cycle(double now)
{
    EmsOutput out;
    double demand = 0.0;
    for (const auto& b : model_.buses)
        demand += b.load_p * model_.base_mva;
    try {
        auto body = dispatch_to_json(economic_dispatch(model_, demand));
        body["demand_mw"] = demand;
        out.logs.push_back({"ems.dispatch", now, std::move(body)});
    } catch (const Infeasible& e) {
        out.logs.push_back({"ems.dispatch", now, json{{"demand_mw", demand}, {"error", e.what()}}});
    }
    return out;
}

EmsConfig ems_config_from_json(const json& j)
{
    EmsConfig c;
    c.host = j.value("host", c.host);
    c.dnp_address = j.value("dnp_address", c.dnp_address);
    c.actuator_host = j.value("actuator_host", c.actuator_host);
    c.actuator_address = j.value("actuator_address", c.actuator_address);
    c.wait_window = j.value("wait_window", c.wait_window);
    c.pmus = j.value("pmus", c.pmus);
    c.handshake_start = j.value("handshake_start", c.handshake_start);
    c.handshake_retry = j.value("handshake_retry", c.handshake_retry);
    c.handshake_attempts = j.value("handshake_attempts", c.handshake_attempts);
    if (auto it = j.find("se"); it != j.end()) {
        c.se.fast = it->value("fast", c.se.fast);
        c.se.hybrid = it->value("hybrid", c.se.hybrid);
        c.se.hybrid_period = it->value("hybrid_period", c.se.hybrid_period);
        c.se.min_sigma = it->value("min_sigma", c.se.min_sigma);
        c.se.scada_max_age = it->value("scada_max_age", c.se.scada_max_age);
    }
    if (auto it = j.find("rotor"); it != j.end()) {
        c.rotor.enabled = it->value("enabled", true);
        c.rotor.generators = it->value("generators", std::vector<std::string>{});
    }
    if (auto it = j.find("agc"); it != j.end()) {
        auto& a = c.agc;
        a.enabled = it->value("enabled", true);
        a.beta_mw_per_hz = it->value("beta_mw_per_hz", a.beta_mw_per_hz);
        a.ki = it->value("ki", a.ki);
        a.period = it->value("period", a.period);
        a.generators = it->value("generators", a.generators);
        a.participation = it->value("participation", a.participation);
        a.ramp_mw_per_s = it->value("ramp_mw_per_s", a.ramp_mw_per_s);
        a.tie_branches = it->value("tie_branches", a.tie_branches);
        a.scheduled_export_mw = it->value("scheduled_export_mw", a.scheduled_export_mw);
        a.freq_pmu = it->value("freq_pmu", a.freq_pmu);
    }
    if (auto it = j.find("dispatch"); it != j.end()) {
        c.dispatch.enabled = it->value("enabled", true);
        c.dispatch.period = it->value("period", c.dispatch.period);
    }
    return c;
}

json ems_config_to_json(const EmsConfig& c)
{
    return json{{"host", c.host},
                {"dnp_address", c.dnp_address},
                {"actuator_host", c.actuator_host},
                {"actuator_address", c.actuator_address},
                {"wait_window", c.wait_window},
                {"pmus", c.pmus},
                {"handshake_start", c.handshake_start},
                {"handshake_retry", c.handshake_retry},
                {"handshake_attempts", c.handshake_attempts},
                {"se",
                 {{"fast", c.se.fast},
                  {"hybrid", c.se.hybrid},
                  {"hybrid_period", c.se.hybrid_period},
                  {"min_sigma", c.se.min_sigma},
                  {"scada_max_age", c.se.scada_max_age}}},
                {"rotor", {{"enabled", c.rotor.enabled}, {"generators", c.rotor.generators}}},
                {"agc",
                 {{"enabled", c.agc.enabled},
                  {"beta_mw_per_hz", c.agc.beta_mw_per_hz},
                  {"ki", c.agc.ki},
                  {"period", c.agc.period},
                  {"generators", c.agc.generators},
                  {"participation", c.agc.participation},
                  {"ramp_mw_per_s", c.agc.ramp_mw_per_s},
                  {"tie_branches", c.agc.tie_branches},
                  {"scheduled_export_mw", c.agc.scheduled_export_mw},
                  {"freq_pmu", c.agc.freq_pmu}}},
                {"dispatch", {{"enabled", c.dispatch.enabled}, {"period", c.dispatch.period}}}};
}

}  // namespace gridcosim::ems
