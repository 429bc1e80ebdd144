#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridcosim/powersim/dynamics.hpp"

namespace gridcosim::sensors {

using Complex = std::complex<double>;

/// TIME_BASE ticks per second used by every timestamp in the testbed.
inline constexpr std::uint32_t kTimeBase = 1'000'000;

enum class SensorKind { Telemetry, Pmu };

/// What a channel reads. gen_i and load_i are terminal currents of a machine
/// and of a bus load; both are injected-current phasors.
enum class Quantity { VPhasor, IPhasor, GenI, LoadI, VMag, PFlow, QFlow, Freq };

struct Selector {
    Quantity quantity = Quantity::VMag;
    int bus = 0;              // v_phasor, v_mag, load_i, freq
    std::string branch;       // i_phasor, p_flow, q_flow
    bool to_end = false;      // branch quantities measured at the to bus
    std::string generator;    // gen_i

    bool is_phasor() const noexcept
    {
        return quantity == Quantity::VPhasor || quantity == Quantity::IPhasor || quantity == Quantity::GenI ||
               quantity == Quantity::LoadI;
    }
    bool operator==(const Selector&) const = default;
};

struct NoiseBias {
    double mag = 0.0;
    double ang = 0.0;
    double analog = 0.0;
    double freq = 0.0;

    bool operator==(const NoiseBias&) const = default;
};

struct NoiseModel {
    double mag_sigma = 0.002;
    double ang_sigma = 0.002;
    double analog_sigma = 0.005;
    double freq_sigma = 0.002;
    NoiseBias bias;

    static NoiseModel none() { return {0.0, 0.0, 0.0, 0.0, {}}; }
    bool operator==(const NoiseModel&) const = default;
};

struct SensorSpec {
    std::uint16_t id = 0;
    SensorKind kind = SensorKind::Pmu;
    std::string name;
    std::vector<Selector> targets;
    /// Branch ids reported as binary breaker points (telemetry only).
    std::vector<std::string> breakers;
    double period = 2.0;  // telemetry, seconds
    int rate = 30;        // pmu, frames per second
    NoiseModel noise;
    std::string host;

    bool operator==(const SensorSpec&) const = default;
};

struct Quality {
    bool valid = true;
    bool deenergized = false;

    bool operator==(const Quality&) const = default;
};

struct PmuSample {
    std::uint16_t idcode = 0;
    double t = 0.0;
    std::uint32_t soc = 0;
    std::uint32_t fracsec = 0;
    std::vector<Complex> phasors;
    double freq = 0.0;
    double rocof = 0.0;
    Quality quality;

    bool operator==(const PmuSample&) const = default;
};

struct AnalogPoint {
    std::uint16_t index = 0;
    double value = 0.0;
    std::uint8_t quality = 0;  // bit 0 online, bit 1 de-energized

    bool operator==(const AnalogPoint&) const = default;
};

struct BinaryPoint {
    std::uint16_t index = 0;  // branch position in the case
    bool closed = true;
    std::uint8_t quality = 1;

    bool operator==(const BinaryPoint&) const = default;
};

inline constexpr std::uint8_t kQualityOnline = 0x01;
inline constexpr std::uint8_t kQualityDeenergized = 0x02;

struct TelemetryRecord {
    std::uint16_t device = 0;
    double timestamp = 0.0;
    std::vector<AnalogPoint> analogs;
    std::vector<BinaryPoint> binaries;

    bool operator==(const TelemetryRecord&) const = default;
};

/// One point on a device sampling grid. `t` is virtual seconds since run start.
struct SampleTime {
    std::uint64_t index = 0;
    double t = 0.0;
    std::uint32_t soc = 0;
    std::uint32_t fracsec = 0;

    bool operator==(const SampleTime&) const = default;
};

/// Sample `k` of a `rate` frames/s grid. Seconds and sub-second frame count
/// are kept apart so nothing accumulates.
SampleTime pmu_sample_time(std::uint64_t k, int rate, std::uint32_t start_soc);
SampleTime telemetry_sample_time(std::uint64_t k, std::int64_t period_ticks, std::uint32_t start_soc);
std::int64_t period_ticks(double period_s);

/// Sampling instants in [0, horizon).
std::vector<SampleTime> schedule(const SensorSpec& spec, double horizon, std::uint32_t start_soc = 0);

/// Two consecutive simulator states bracketing the sample instant.
struct SampleContext {
    const powersim::Simulator& sim;
    const powersim::DynamicState& a;
    const powersim::DynamicState& b;
};

/// Linearly interpolated state at `t` (bus voltages, speeds, currents).
powersim::DynamicState interpolate(const powersim::DynamicState& a, const powersim::DynamicState& b, double t);

PmuSample sample_pmu(const SensorSpec& spec, const SampleContext& ctx, const SampleTime& when);
TelemetryRecord sample_telemetry(const SensorSpec& spec, const SampleContext& ctx, const SampleTime& when);

/// Deterministic stream for one sample of one device.
std::mt19937_64 sample_stream(std::uint64_t seed, std::uint16_t device, std::uint64_t index);

/// Gaussian corruption of magnitudes, angles, analogs and frequency. Flags
/// and de-energized channels are left alone.
PmuSample corrupt(PmuSample sample, const NoiseModel& noise, std::mt19937_64& rng);
TelemetryRecord corrupt(TelemetryRecord record, const SensorSpec& spec, const NoiseModel& noise,
                        std::mt19937_64& rng);

/// Wraps to (-pi, pi].
double wrap_angle(double a) noexcept;

/// Problems with a sensor against the case (empty when valid).
std::vector<std::string> check_sensor(const SensorSpec& spec, const powersim::GridCase& grid);

SensorSpec sensor_from_json(const nlohmann::json& j);
nlohmann::json sensor_to_json(const SensorSpec& spec);
Selector selector_from_json(const nlohmann::json& j);
nlohmann::json selector_to_json(const Selector& s);
std::string to_string(Quantity q);

/// Value of one scalar selector (v_mag, p_flow, q_flow, freq) on a state.
double read_scalar(const Selector& s, const powersim::Simulator& sim, const powersim::DynamicState& state);
/// Value of one phasor selector on a state.
Complex read_phasor(const Selector& s, const powersim::Simulator& sim, const powersim::DynamicState& state);

}  // namespace gridcosim::sensors
