#include "gridcosim/ems/control_plane.hpp"

#include <stdexcept>

namespace gridcosim::ems {

using nlohmann::json;

std::string to_string(Topic t)
{
    switch (t) {
    case Topic::Aligned:
        return "aligned";
    case Topic::Estimate:
        return "estimate";
    case Topic::Rotor:
        return "rotor";
    }
    return "aligned";
}

Topic parse_topic(const std::string& s)
{
    if (s == "aligned")
        return Topic::Aligned;
    if (s == "estimate")
        return Topic::Estimate;
    if (s == "rotor")
        return Topic::Rotor;
    throw std::invalid_argument("unknown topic '" + s + "'");
}

std::optional<ControlRecord> ControlPlanePublisher::publish(double t, ControlPayload payload)
{
    if (std::holds_alternative<AlignedFrameSet>(payload)) {
        aligned_seen_ = true;
    } else if (!aligned_seen_) {
        ++suppressed_;
        return std::nullopt;
    }
    return ControlRecord{next_seq_++, t, std::move(payload)};
}

json record_to_json(const ControlRecord& r)
{
    json body = std::visit(
        [](const auto& p) -> json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, AlignedFrameSet>)
                return aligned_to_json(p);
            else if constexpr (std::is_same_v<T, StateEstimate>)
                return estimate_to_json(p);
            else
                return rotor_to_json(p);
        },
        r.payload);
    return json{{"seq", r.seq}, {"t", r.t}, {"topic", to_string(r.topic())}, {"payload", body}};
}

ControlRecord record_from_json(const json& j)
{
    ControlRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.t = j.at("t").get<double>();
    const auto& body = j.at("payload");
    switch (parse_topic(j.at("topic").get<std::string>())) {
    case Topic::Aligned:
        r.payload = aligned_from_json(body);
        break;
    case Topic::Estimate:
        r.payload = estimate_from_json(body);
        break;
    case Topic::Rotor:
        r.payload = rotor_from_json(body);
        break;
    }
    return r;
}

}  // namespace gridcosim::ems
