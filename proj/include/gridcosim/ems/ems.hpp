#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridcosim/ems/control_plane.hpp"
#include "gridcosim/ems/dispatch.hpp"
#include "gridcosim/ems/pdc.hpp"
#include "gridcosim/ems/rotor_angle.hpp"
#include "gridcosim/ems/wls.hpp"
#include "gridcosim/protocols/c37118.hpp"
#include "gridcosim/protocols/dnp_lite.hpp"
#include "gridcosim/sensors/sensors.hpp"

namespace gridcosim::ems {

struct SeConfig {
    bool fast = true;     // PMU-only solve on every aligned set
    bool hybrid = true;   // SCADA + PMU solve on the SCADA cycle
    double hybrid_period = 2.0;
    double min_sigma = 1e-4;
    double scada_max_age = 4.0;
};

struct RotorConfig {
    bool enabled = false;
    std::vector<std::string> generators;  // empty means every generator
};

struct DispatchConfig {
    bool enabled = false;
    double period = 60.0;
};

struct EmsConfig {
    std::string host = "ems";
    std::uint16_t dnp_address = 1;
    std::string actuator_host = "actuator";
    std::uint16_t actuator_address = 100;
    double wait_window = 0.100;
    std::vector<std::uint16_t> pmus;  // empty means every PMU sensor
    SeConfig se;
    RotorConfig rotor;
    AgcConfig agc;
    DispatchConfig dispatch;
    double handshake_start = -1.0;
    double handshake_retry = 0.25;
    int handshake_attempts = 3;
};

EmsConfig ems_config_from_json(const nlohmann::json& j);
nlohmann::json ems_config_to_json(const EmsConfig& c);

struct Outgoing {
    std::string dst;
    protocols::Bytes bytes;
};

struct LogEntry {
    std::string channel;
    double t = 0.0;
    nlohmann::json body;
};

struct EmsOutput {
    std::vector<Outgoing> messages;
    std::vector<ControlRecord> records;
    std::vector<LogEntry> logs;

    void append(EmsOutput&& other);
};

struct EmsCounters {
    std::uint64_t c37_errors = 0;
    std::uint64_t dnp_errors = 0;
    std::uint64_t acks = 0;
    std::uint64_t nacks = 0;
    std::uint64_t estimates = 0;
    std::uint64_t se_failures = 0;
    std::uint64_t telemetry_records = 0;
};

/// Builds the v_phasor measurements carried by one aligned set.
MeasurementSet phasor_measurements(const AlignedFrameSet& set, const std::vector<sensors::SensorSpec>& sensors,
                                   double min_sigma);

/// The EMS/SCADA host: C37 client with PDC, DNP master, estimators, AGC.
/// Takes protocol bytes in and returns messages, control-plane records and
/// log lines; it never touches the clock or the fabric itself.
class Ems {
public:
    Ems(EmsConfig cfg, powersim::GridCase model, std::vector<sensors::SensorSpec> sensors, std::uint32_t start_soc);

    /// Handshake round `attempt`: command 5 to every PMU without a config.
    EmsOutput handshake(double now, int attempt);
    EmsOutput on_message(const std::string& src, const protocols::Bytes& bytes, double now);
    EmsOutput on_pdc_deadline(double now);
    EmsOutput on_scada_cycle(double now);
    EmsOutput on_agc_cycle(double now);
    EmsOutput on_dispatch_cycle(double now);

    const Pdc& pdc() const noexcept { return pdc_; }
    const EmsCounters& counters() const noexcept { return counters_; }
    const EmsConfig& config() const noexcept { return cfg_; }
    const powersim::GridCase& model() const noexcept { return model_; }
    bool bound(std::uint16_t idcode) const { return configs_.contains(idcode); }

private:
    struct ScadaPoint {
        double t = 0.0;
        double value = 0.0;
        std::uint8_t quality = 0;
    };

    EmsOutput on_c37(const protocols::Bytes& bytes, double now);
    EmsOutput on_dnp(const protocols::Bytes& bytes, double now);
    EmsOutput process_aligned(std::vector<AlignedFrameSet> sets, double now);
    std::optional<StateEstimate> run_se(const MeasurementSet& meas, const char* kind, double stamp, double now,
                                        EmsOutput& out);
    void publish(double now, ControlPayload payload, EmsOutput& out);
    const sensors::SensorSpec* sensor(std::uint16_t id) const;
    double virtual_time(std::uint64_t ms) const;

    EmsConfig cfg_;
    powersim::GridCase model_;
    std::vector<sensors::SensorSpec> sensors_;
    std::uint32_t start_soc_;
    Pdc pdc_;
    std::map<std::uint16_t, protocols::C37Config> configs_;
    std::map<std::pair<std::uint16_t, std::uint16_t>, ScadaPoint> scada_;  // (device, point)
    std::optional<AlignedFrameSet> last_aligned_;
    ControlPlanePublisher publisher_;
    RotorAngleTracker tracker_;
    std::vector<MachinePhasors> rotor_inputs_;
    struct RotorChannels {
        std::uint16_t pmu;
        std::size_t v;
        std::size_t i;
    };
    std::vector<RotorChannels> rotor_channels_;
    AgcState agc_;
    double last_agc_ = 0.0;
    bool agc_started_ = false;
    std::uint16_t dnp_seq_ = 0;
    EmsCounters counters_;
};

}  // namespace gridcosim::ems
