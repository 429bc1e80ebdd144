#include "gridcosim/sensors/sensors.hpp"

#include <cmath>
#include <numbers>
#include <set>

namespace gridcosim::sensors {

using nlohmann::json;
using powersim::DynamicState;
using powersim::GridCase;
using powersim::Simulator;

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

bool island_energized(const GridCase& grid, const DynamicState& state, int label)
{
    for (std::size_t g = 0; g < grid.generators.size(); ++g) {
        if (!state.machines[g].online)
            continue;
        if (state.island_map[grid.bus_index(grid.generators[g].bus)] == label)
            return true;
    }
    return false;
}

bool bus_energized(const GridCase& grid, const DynamicState& state, int bus)
{
    return island_energized(grid, state, state.island_map[grid.bus_index(bus)]);
}

/// Bus whose island a selector belongs to, for energization checks.
int selector_bus(const Selector& s, const GridCase& grid)
{
    switch (s.quantity) {
    case Quantity::IPhasor:
    case Quantity::PFlow:
    case Quantity::QFlow: {
        const auto& br = grid.branches[*grid.find_branch(s.branch)];
        return s.to_end ? br.to_bus : br.from_bus;
    }
    case Quantity::GenI:
        return grid.generators[*grid.find_generator(s.generator)].bus;
    default:
        return s.bus;
    }
}

Complex branch_current(const Selector& s, const GridCase& grid, const DynamicState& state)
{
    const auto k = grid.find_branch(s.branch);
    if (!k)
        throw powersim::UnknownTarget("unknown branch '" + s.branch + "'");
    const auto& br = grid.branches[*k];
    if (!br.in_service())
        return {};
    const auto st = powersim::branch_stamp(br);
    const Complex vf = state.v[static_cast<Eigen::Index>(grid.bus_index(br.from_bus))];
    const Complex vt = state.v[static_cast<Eigen::Index>(grid.bus_index(br.to_bus))];
    return s.to_end ? st.tf * vf + st.tt * vt : st.ff * vf + st.ft * vt;
}

double coi_speed(const GridCase& grid, const DynamicState& state, int bus)
{
    const int label = state.island_map[grid.bus_index(bus)];
    return powersim::island_coi_speed(grid, state, label).value_or(0.0);
}

Quantity parse_quantity(const std::string& s)
{
    if (s == "v_phasor")
        return Quantity::VPhasor;
    if (s == "i_phasor")
        return Quantity::IPhasor;
    if (s == "gen_i")
        return Quantity::GenI;
    if (s == "load_i")
        return Quantity::LoadI;
    if (s == "v_mag")
        return Quantity::VMag;
    if (s == "p_flow")
        return Quantity::PFlow;
    if (s == "q_flow")
        return Quantity::QFlow;
    if (s == "freq")
        return Quantity::Freq;
    throw std::invalid_argument("unknown quantity '" + s + "'");
}

int frequency_bus(const SensorSpec& spec, const GridCase& grid)
{
    for (const auto& s : spec.targets)
        if (s.quantity == Quantity::Freq)
            return s.bus;
    for (const auto& s : spec.targets)
        if (s.is_phasor())
            return selector_bus(s, grid);
    return grid.buses.front().id;
}

}  // namespace

double wrap_angle(double a) noexcept
{
    constexpr double two_pi = 2.0 * std::numbers::pi;
    a = std::remainder(a, two_pi);
    if (a <= -std::numbers::pi)
        a += two_pi;
    return a;
}

std::string to_string(Quantity q)
{
    switch (q) {
    case Quantity::VPhasor:
        return "v_phasor";
    case Quantity::IPhasor:
        return "i_phasor";
    case Quantity::GenI:
        return "gen_i";
    case Quantity::LoadI:
        return "load_i";
    case Quantity::VMag:
        return "v_mag";
    case Quantity::PFlow:
        return "p_flow";
    case Quantity::QFlow:
        return "q_flow";
    case Quantity::Freq:
        return "freq";
    }
    return "v_mag";
}

std::int64_t period_ticks(double period_s)
{
    return std::llround(period_s * kTimeBase);
}

SampleTime pmu_sample_time(std::uint64_t k, int rate, std::uint32_t start_soc)
{
    const auto r = static_cast<std::uint64_t>(rate);
    const std::uint64_t whole = k / r;
    const std::uint64_t frame = k % r;
    SampleTime st;
    st.index = k;
    st.soc = start_soc + static_cast<std::uint32_t>(whole);
    st.fracsec = static_cast<std::uint32_t>(frame * kTimeBase / r);
    st.t = static_cast<double>(whole) + static_cast<double>(frame) / static_cast<double>(r);
    return st;
}

SampleTime telemetry_sample_time(std::uint64_t k, std::int64_t ticks, std::uint32_t start_soc)
{
    const auto total = k * static_cast<std::uint64_t>(ticks);
    SampleTime st;
    st.index = k;
    st.soc = start_soc + static_cast<std::uint32_t>(total / kTimeBase);
    st.fracsec = static_cast<std::uint32_t>(total % kTimeBase);
    st.t = static_cast<double>(total / kTimeBase) + static_cast<double>(total % kTimeBase) / kTimeBase;
    return st;
}

std::vector<SampleTime> schedule(const SensorSpec& spec, double horizon, std::uint32_t start_soc)
{
    std::vector<SampleTime> out;
    if (!(horizon > 0.0))
        return out;
    if (spec.kind == SensorKind::Pmu) {
        const auto n = static_cast<std::uint64_t>(std::ceil(horizon * spec.rate - 1e-9));
        out.reserve(n);
        for (std::uint64_t k = 0;; ++k) {
            auto st = pmu_sample_time(k, spec.rate, start_soc);
            if (st.t >= horizon)
                break;
            out.push_back(st);
        }
    } else {
        const auto ticks = period_ticks(spec.period);
        for (std::uint64_t k = 0;; ++k) {
            auto st = telemetry_sample_time(k, ticks, start_soc);
            if (st.t >= horizon)
                break;
            out.push_back(st);
        }
    }
    return out;
}

DynamicState interpolate(const DynamicState& a, const DynamicState& b, double t)
{
    if (b.t <= a.t || t <= a.t)
        return a;
    if (t >= b.t)
        return b;
    const double w = (t - a.t) / (b.t - a.t);
    DynamicState s = a;
    s.t = t;
    s.v = (1.0 - w) * a.v + w * b.v;
    for (std::size_t g = 0; g < s.machines.size(); ++g) {
        auto& m = s.machines[g];
        const auto& mb = b.machines[g];
        m.delta = (1.0 - w) * m.delta + w * mb.delta;
        m.omega = (1.0 - w) * m.omega + w * mb.omega;
        m.p_mech = (1.0 - w) * m.p_mech + w * mb.p_mech;
        m.p_elec = (1.0 - w) * m.p_elec + w * mb.p_elec;
        m.current = (1.0 - w) * m.current + w * mb.current;
    }
    return s;
}

Complex read_phasor(const Selector& s, const Simulator& sim, const DynamicState& state)
{
    const auto& grid = sim.grid();
    switch (s.quantity) {
    case Quantity::VPhasor:
        return state.v[static_cast<Eigen::Index>(grid.bus_index(s.bus))];
    case Quantity::IPhasor:
        return branch_current(s, grid, state);
    case Quantity::GenI: {
        const auto g = grid.find_generator(s.generator);
        if (!g)
            throw powersim::UnknownTarget("unknown generator '" + s.generator + "'");
        return state.machines[*g].current;
    }
    case Quantity::LoadI: {
        const auto i = static_cast<Eigen::Index>(grid.bus_index(s.bus));
        return sim.load_admittance()[i] * state.v[i];
    }
    default:
        throw std::invalid_argument("selector " + to_string(s.quantity) + " is not a phasor");
    }
}

double read_scalar(const Selector& s, const Simulator& sim, const DynamicState& state)
{
    const auto& grid = sim.grid();
    switch (s.quantity) {
    case Quantity::VMag:
        return std::abs(state.v[static_cast<Eigen::Index>(grid.bus_index(s.bus))]);
    case Quantity::PFlow:
    case Quantity::QFlow: {
        const auto& br = grid.branches[*grid.find_branch(s.branch)];
        const int bus = s.to_end ? br.to_bus : br.from_bus;
        const Complex v = state.v[static_cast<Eigen::Index>(grid.bus_index(bus))];
        const Complex sflow = v * std::conj(branch_current(s, grid, state));
        return s.quantity == Quantity::PFlow ? sflow.real() : sflow.imag();
    }
    case Quantity::Freq:
        return coi_speed(grid, state, s.bus) * grid.nominal_freq;
    default:
        return std::abs(read_phasor(s, sim, state));
    }
}

PmuSample sample_pmu(const SensorSpec& spec, const SampleContext& ctx, const SampleTime& when)
{
    const auto& grid = ctx.sim.grid();
    const DynamicState s = interpolate(ctx.a, ctx.b, when.t);

    PmuSample out;
    out.idcode = spec.id;
    out.t = when.t;
    out.soc = when.soc;
    out.fracsec = when.fracsec;

    bool any_dark = false;
    for (const auto& sel : spec.targets) {
        if (!sel.is_phasor())
            continue;
        if (!bus_energized(grid, s, selector_bus(sel, grid))) {
            any_dark = true;
            out.phasors.emplace_back(0.0, 0.0);
            continue;
        }
        out.phasors.push_back(read_phasor(sel, ctx.sim, s));
    }

    const int fbus = frequency_bus(spec, grid);
    if (bus_energized(grid, s, fbus)) {
        out.freq = coi_speed(grid, s, fbus) * grid.nominal_freq;
        const double span = ctx.b.t - ctx.a.t;
        if (span > 0.0 && bus_energized(grid, ctx.a, fbus) && bus_energized(grid, ctx.b, fbus))
            out.rocof = (coi_speed(grid, ctx.b, fbus) - coi_speed(grid, ctx.a, fbus)) * grid.nominal_freq / span;
    } else {
        any_dark = true;
    }
    out.quality.deenergized = any_dark;
    return out;
}

TelemetryRecord sample_telemetry(const SensorSpec& spec, const SampleContext& ctx, const SampleTime& when)
{
    const auto& grid = ctx.sim.grid();
    const DynamicState s = interpolate(ctx.a, ctx.b, when.t);

    TelemetryRecord rec;
    rec.device = spec.id;
    rec.timestamp = when.t;
    for (std::size_t i = 0; i < spec.targets.size(); ++i) {
        const auto& sel = spec.targets[i];
        AnalogPoint p;
        p.index = static_cast<std::uint16_t>(i);
        if (bus_energized(grid, s, selector_bus(sel, grid))) {
            p.value = read_scalar(sel, ctx.sim, s);
            p.quality = kQualityOnline;
        } else {
            p.value = 0.0;
            p.quality = kQualityOnline | kQualityDeenergized;
        }
        rec.analogs.push_back(p);
    }
    for (const auto& id : spec.breakers) {
        const auto k = *grid.find_branch(id);
        rec.binaries.push_back({static_cast<std::uint16_t>(k), grid.branches[k].in_service(), kQualityOnline});
    }
    return rec;
}

std::mt19937_64 sample_stream(std::uint64_t seed, std::uint16_t device, std::uint64_t index)
{
    std::uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ device);
    h = splitmix64(h ^ index);
    return std::mt19937_64(h);
}

PmuSample corrupt(PmuSample sample, const NoiseModel& noise, std::mt19937_64& rng)
{
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto& ph : sample.phasors) {
        // Draws happen for dark channels too so the stream layout is fixed.
        const double dm = noise.mag_sigma * unit(rng) + noise.bias.mag;
        const double da = noise.ang_sigma * unit(rng) + noise.bias.ang;
        if (ph == Complex{} || (dm == 0.0 && da == 0.0))
            continue;
        ph = std::polar(std::abs(ph) + dm, wrap_angle(std::arg(ph) + da));
    }
    const double df = noise.freq_sigma * unit(rng) + noise.bias.freq;
    if (sample.freq != 0.0)
        sample.freq += df;
    return sample;
}

TelemetryRecord corrupt(TelemetryRecord record, const SensorSpec& spec, const NoiseModel& noise,
                        std::mt19937_64& rng)
{
    std::normal_distribution<double> unit(0.0, 1.0);
    for (auto& p : record.analogs) {
        const bool is_freq = p.index < spec.targets.size() && spec.targets[p.index].quantity == Quantity::Freq;
        const double d = is_freq ? noise.freq_sigma * unit(rng) + noise.bias.freq
                                 : noise.analog_sigma * unit(rng) + noise.bias.analog;
        if (!(p.quality & kQualityDeenergized))
            p.value += d;
    }
    return record;
}

std::vector<std::string> check_sensor(const SensorSpec& spec, const GridCase& grid)
{
    std::vector<std::string> problems;
    const std::string where = "sensor " + std::to_string(spec.id);
    if (spec.kind == SensorKind::Telemetry && !(spec.period > 0.0))
        problems.push_back(where + ": period must be positive");
    if (spec.kind == SensorKind::Telemetry && period_ticks(spec.period) <= 0)
        problems.push_back(where + ": period below one tick");
    if (spec.kind == SensorKind::Pmu && (spec.rate <= 0 || spec.rate > static_cast<int>(kTimeBase)))
        problems.push_back(where + ": rate must be positive");
    const auto& n = spec.noise;
    if (n.mag_sigma < 0 || n.ang_sigma < 0 || n.analog_sigma < 0 || n.freq_sigma < 0)
        problems.push_back(where + ": noise sigmas must be non-negative");
    if (spec.targets.empty())
        problems.push_back(where + ": no targets");

    int phasors = 0;
    for (const auto& sel : spec.targets) {
        const std::string tag = where + ": target " + to_string(sel.quantity);
        if (sel.is_phasor())
            ++phasors;
        if (spec.kind == SensorKind::Telemetry && sel.is_phasor())
            problems.push_back(tag + " is a phasor; telemetry reports scalars");
        switch (sel.quantity) {
        case Quantity::IPhasor:
        case Quantity::PFlow:
        case Quantity::QFlow:
            if (!grid.find_branch(sel.branch))
                problems.push_back(tag + " references unknown branch '" + sel.branch + "'");
            break;
        case Quantity::GenI:
            if (!grid.find_generator(sel.generator))
                problems.push_back(tag + " references unknown generator '" + sel.generator + "'");
            break;
        default:
            if (!grid.find_bus(sel.bus))
                problems.push_back(tag + " references unknown bus " + std::to_string(sel.bus));
        }
    }
    if (spec.kind == SensorKind::Pmu && phasors == 0)
        problems.push_back(where + ": pmu has no phasor targets");
    for (const auto& b : spec.breakers)
        if (!grid.find_branch(b))
            problems.push_back(where + ": breaker references unknown branch '" + b + "'");
    return problems;
}

Selector selector_from_json(const json& j)
{
    Selector s;
    s.quantity = parse_quantity(j.at("quantity").get<std::string>());
    s.bus = j.value("bus", 0);
    s.branch = j.value("branch", std::string{});
    s.generator = j.value("generator", std::string{});
    const auto end = j.value("end", std::string("from"));
    if (end != "from" && end != "to")
        throw std::invalid_argument("branch end must be 'from' or 'to'");
    s.to_end = end == "to";
    return s;
}

json selector_to_json(const Selector& s)
{
    json j{{"quantity", to_string(s.quantity)}};
    switch (s.quantity) {
    case Quantity::IPhasor:
    case Quantity::PFlow:
    case Quantity::QFlow:
        j["branch"] = s.branch;
        j["end"] = s.to_end ? "to" : "from";
        break;
    case Quantity::GenI:
        j["generator"] = s.generator;
        break;
    default:
        j["bus"] = s.bus;
    }
    return j;
}

SensorSpec sensor_from_json(const json& j)
{
    SensorSpec spec;
    spec.id = j.at("id").get<std::uint16_t>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "pmu")
        spec.kind = SensorKind::Pmu;
    else if (kind == "telemetry")
        spec.kind = SensorKind::Telemetry;
    else
        throw std::invalid_argument("unknown sensor kind '" + kind + "'");
    spec.name = j.value("name", "dev" + std::to_string(spec.id));
    for (const auto& t : j.at("targets"))
        spec.targets.push_back(selector_from_json(t));
    spec.breakers = j.value("breakers", std::vector<std::string>{});
    spec.period = j.value("period", 2.0);
    spec.rate = j.value("rate", 30);
    spec.host = j.value("host", std::string{});
    if (auto it = j.find("noise"); it != j.end() && it->is_string()) {
        if (it->get<std::string>() != "none")
            throw std::invalid_argument("noise must be an object or \"none\"");
        spec.noise = NoiseModel::none();
    } else if (it != j.end()) {
        auto& n = spec.noise;
        n.mag_sigma = it->value("mag_sigma", n.mag_sigma);
        n.ang_sigma = it->value("ang_sigma", n.ang_sigma);
        n.analog_sigma = it->value("analog_sigma", n.analog_sigma);
        n.freq_sigma = it->value("freq_sigma", n.freq_sigma);
        if (auto b = it->find("bias"); b != it->end()) {
            n.bias.mag = b->value("mag", 0.0);
            n.bias.ang = b->value("ang", 0.0);
            n.bias.analog = b->value("analog", 0.0);
            n.bias.freq = b->value("freq", 0.0);
        }
    }
    return spec;
}

json sensor_to_json(const SensorSpec& spec)
{
    json j{{"id", spec.id},
           {"kind", spec.kind == SensorKind::Pmu ? "pmu" : "telemetry"},
           {"name", spec.name},
           {"host", spec.host},
           {"period", spec.period},
           {"rate", spec.rate},
           {"breakers", spec.breakers}};
    j["targets"] = json::array();
    for (const auto& s : spec.targets)
        j["targets"].push_back(selector_to_json(s));
    const auto& n = spec.noise;
    j["noise"] = {{"mag_sigma", n.mag_sigma},
                  {"ang_sigma", n.ang_sigma},
                  {"analog_sigma", n.analog_sigma},
                  {"freq_sigma", n.freq_sigma},
                  {"bias", {{"mag", n.bias.mag}, {"ang", n.bias.ang}, {"analog", n.bias.analog}, {"freq", n.bias.freq}}}};
    return j;
}

}  // namespace gridcosim::sensors
