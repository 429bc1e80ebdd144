#include "gridcosim/orchestrator/event_queue.hpp"

#include <algorithm>
#include <stdexcept>

namespace gridcosim::orchestrator {

namespace {

// Heap order: the "largest" element is the earliest event.
bool later(const Event& a, const Event& b) noexcept
{
    if (a.time != b.time)
        return a.time > b.time;
    return a.seq > b.seq;
}

}  // namespace

std::string to_string(EventKind k)
{
    switch (k) {
    case EventKind::GridStep:
        return "grid_step";
    case EventKind::SensorSample:
        return "sensor_sample";
    case EventKind::Delivery:
        return "message_delivery";
    case EventKind::GridEvent:
        return "grid_event";
    case EventKind::NetChange:
        return "net_change";
    case EventKind::PdcDeadline:
        return "pdc_deadline";
    case EventKind::ScadaCycle:
        return "scada_cycle";
    case EventKind::AgcCycle:
        return "agc_cycle";
    case EventKind::DispatchCycle:
        return "dispatch_cycle";
    case EventKind::Handshake:
        return "handshake";
    case EventKind::ControlActivation:
        return "control_activation";
    }
    return "unknown";
}

std::uint64_t EventQueue::push(double time, EventKind kind, std::uint64_t index, std::uint64_t sample,
                               EventPayload payload)
{
    const auto seq = next_seq_++;
    heap_.push_back(Event{time, seq, kind, index, sample, std::move(payload)});
    std::push_heap(heap_.begin(), heap_.end(), later);
    return seq;
}

Event EventQueue::pop()
{
    if (heap_.empty())
        throw std::out_of_range("pop from an empty event queue");
    std::pop_heap(heap_.begin(), heap_.end(), later);
    Event e = std::move(heap_.back());
    heap_.pop_back();
    return e;
}

}  // namespace gridcosim::orchestrator
