#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <json.hpp>

#include "gridcosim/protocols/c37118.hpp"

namespace gridcosim::ems {

struct PdcConfig {
    std::vector<std::uint16_t> expected;  // idcodes
    double wait_window = 0.100;
    int rate = 30;
    std::uint32_t time_base = 1'000'000;
    /// SOC of virtual time zero; maps frame timestamps onto the run clock.
    std::uint32_t start_soc = 0;
    /// First slot to emit; slots below it are treated as late.
    std::int64_t first_slot = 0;
};

struct AlignedEntry {
    std::uint16_t idcode = 0;
    std::optional<protocols::PmuData> data;  // nullopt = Missing

    bool operator==(const AlignedEntry&) const = default;
};

struct AlignedFrameSet {
    std::int64_t grid_index = 0;  // frames since start_soc
    std::uint32_t soc = 0;
    std::uint32_t fracsec = 0;
    double t = 0.0;           // virtual time of the timestamp
    double emitted_at = 0.0;  // fabric time of release
    std::vector<AlignedEntry> entries;  // in expected order
    double completeness = 0.0;

    const protocols::PmuData* find(std::uint16_t idcode) const noexcept;
    bool operator==(const AlignedFrameSet&) const = default;
};

struct PdcCounters {
    std::uint64_t received = 0;
    std::uint64_t late = 0;
    std::uint64_t duplicates = 0;
    std::uint64_t unexpected = 0;
    std::uint64_t emitted = 0;
    std::uint64_t missing = 0;
};

/// Timestamp alignment with a wait window. Sets leave in strictly
/// increasing timestamp order: when complete, or at T + window, and never
/// ahead of an older pending set.
class Pdc {
public:
    explicit Pdc(PdcConfig cfg);

    /// Grid index of a timestamp (nearest frame slot).
    std::int64_t grid_index(std::uint32_t soc, std::uint32_t fracsec) const noexcept;
    double grid_time(std::int64_t k) const noexcept;
    /// Release instant for a grid slot.
    double deadline(std::int64_t k) const noexcept { return grid_time(k) + cfg_.wait_window; }

    std::vector<AlignedFrameSet> on_frame(const protocols::C37Data& frame, double now);
    /// Emits every slot whose deadline has passed, including slots no frame
    /// ever reached (completeness 0).
    std::vector<AlignedFrameSet> advance(double now);

    const PdcCounters& counters() const noexcept { return counters_; }
    const PdcConfig& config() const noexcept { return cfg_; }

private:
    using Frames = std::map<std::uint16_t, protocols::PmuData>;

    std::vector<AlignedFrameSet> release(double now);
    AlignedFrameSet finalize(std::int64_t k, const Frames* frames, double now);
    bool complete(const Frames& f) const noexcept { return f.size() == cfg_.expected.size(); }

    PdcConfig cfg_;
    std::map<std::int64_t, Frames> pending_;
    std::int64_t next_ = 0;  // oldest slot not yet emitted
    PdcCounters counters_;
};

nlohmann::json aligned_to_json(const AlignedFrameSet& s);
AlignedFrameSet aligned_from_json(const nlohmann::json& j);

}  // namespace gridcosim::ems
