#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include <json.hpp>

#include "gridcosim/ems/pdc.hpp"
#include "gridcosim/ems/rotor_angle.hpp"
#include "gridcosim/ems/wls.hpp"

namespace gridcosim::ems {

enum class Topic { Aligned, Estimate, Rotor };

std::string to_string(Topic t);
Topic parse_topic(const std::string& s);

using ControlPayload = std::variant<AlignedFrameSet, StateEstimate, RotorAngleEstimate>;

struct ControlRecord {
    std::uint64_t seq = 0;
    double t = 0.0;  // virtual time of publication
    ControlPayload payload;

    Topic topic() const noexcept { return static_cast<Topic>(payload.index()); }
    bool operator==(const ControlRecord&) const = default;
};

/// Stamps EMS outputs with monotone sequence numbers. Estimates are held
/// back until the first aligned set has gone out.
class ControlPlanePublisher {
public:
    std::optional<ControlRecord> publish(double t, ControlPayload payload);

    std::uint64_t published() const noexcept { return next_seq_; }
    std::uint64_t suppressed() const noexcept { return suppressed_; }

private:
    std::uint64_t next_seq_ = 0;
    std::uint64_t suppressed_ = 0;
    bool aligned_seen_ = false;
};

nlohmann::json record_to_json(const ControlRecord& r);
ControlRecord record_from_json(const nlohmann::json& j);

}  // namespace gridcosim::ems
