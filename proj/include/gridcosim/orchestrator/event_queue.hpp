#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "gridcosim/ems/control_plane.hpp"
#include "gridcosim/netemu/fabric.hpp"
#include "gridcosim/powersim/dynamics.hpp"

namespace gridcosim::orchestrator {

enum class EventKind {
    GridStep,
    SensorSample,
    Delivery,
    GridEvent,
    NetChange,
    PdcDeadline,
    ScadaCycle,
    AgcCycle,
    DispatchCycle,
    Handshake,
    ControlActivation,
};

std::string to_string(EventKind k);

struct ScheduledAction {
    powersim::GridAction action;
    std::string source;  // "scenario" or "actuator"
};

using EventPayload =
    std::variant<std::monostate, netemu::NetMessage, ScheduledAction, netemu::LinkChange, ems::ControlRecord>;

struct Event {
    double time = 0.0;
    std::uint64_t seq = 0;
    EventKind kind = EventKind::GridStep;
    std::uint64_t index = 0;  // step number, sensor position, attempt, slot
    std::uint64_t sample = 0;
    EventPayload payload;
};

/// Min-queue on (time, insertion sequence). Equal times pop in insertion
/// order, so the event order is total.
class EventQueue {
public:
    std::uint64_t push(double time, EventKind kind, std::uint64_t index = 0, std::uint64_t sample = 0,
                       EventPayload payload = {});
    Event pop();
    const Event& top() const { return heap_.front(); }
    bool empty() const noexcept { return heap_.empty(); }
    std::size_t size() const noexcept { return heap_.size(); }
    std::uint64_t pushed() const noexcept { return next_seq_; }

private:
    std::vector<Event> heap_;
    std::uint64_t next_seq_ = 0;
};

}  // namespace gridcosim::orchestrator
