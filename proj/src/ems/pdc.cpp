#include "gridcosim/ems/pdc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridcosim::ems {

using nlohmann::json;
using protocols::PmuData;

const PmuData* AlignedFrameSet::find(std::uint16_t idcode) const noexcept
{
    for (const auto& e : entries)
        if (e.idcode == idcode && e.data)
            return &*e.data;
    return nullptr;
}

Pdc::Pdc(PdcConfig cfg) : cfg_(std::move(cfg))
{
    if (!(cfg_.wait_window > 0.0))
        throw std::invalid_argument("wait_window must be positive");
    if (cfg_.rate <= 0)
        throw std::invalid_argument("rate must be positive");
    next_ = cfg_.first_slot;
}

std::int64_t Pdc::grid_index(std::uint32_t soc, std::uint32_t fracsec) const noexcept
{
    const auto ticks = static_cast<std::int64_t>(fracsec & 0x00FFFFFF);
    const auto slot = (ticks * cfg_.rate + cfg_.time_base / 2) / cfg_.time_base;
    return (static_cast<std::int64_t>(soc) - static_cast<std::int64_t>(cfg_.start_soc)) * cfg_.rate + slot;
}

double Pdc::grid_time(std::int64_t k) const noexcept
{
    // Same split as the sampler so deadlines line up bit for bit.
    const auto r = static_cast<std::int64_t>(cfg_.rate);
    const auto whole = k >= 0 ? k / r : -((-k + r - 1) / r);
    const auto frame = k - whole * r;
    return static_cast<double>(whole) + static_cast<double>(frame) / static_cast<double>(r);
}

std::vector<AlignedFrameSet> Pdc::on_frame(const protocols::C37Data& frame, double now)
{
    ++counters_.received;
    auto out = release(now);
    const auto id = frame.prefix.idcode;
    if (std::find(cfg_.expected.begin(), cfg_.expected.end(), id) == cfg_.expected.end() || frame.pmus.empty()) {
        ++counters_.unexpected;
        return out;
    }
    const auto k = grid_index(frame.prefix.soc, frame.prefix.fracsec);
    if (k < next_) {
        ++counters_.late;
        return out;
    }
    if (!pending_[k].emplace(id, frame.pmus.front()).second)
        ++counters_.duplicates;
    auto more = release(now);
    out.insert(out.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
    return out;
}

std::vector<AlignedFrameSet> Pdc::advance(double now)
{
    return release(now);
}

std::vector<AlignedFrameSet> Pdc::release(double now)
{
    std::vector<AlignedFrameSet> out;
    for (;;) {
        auto it = pending_.find(next_);
        const bool done = it != pending_.end() && complete(it->second);
        if (!done && now < deadline(next_))
            break;
        out.push_back(finalize(next_, it == pending_.end() ? nullptr : &it->second, now));
        if (it != pending_.end())
            pending_.erase(it);
        ++next_;
    }
    return out;
}

AlignedFrameSet Pdc::finalize(std::int64_t k, const Frames* frames, double now)
{
    AlignedFrameSet s;
    s.grid_index = k;
    const auto r = static_cast<std::int64_t>(cfg_.rate);
    const auto whole = k >= 0 ? k / r : -((-k + r - 1) / r);
    const auto frame = k - whole * r;
    s.soc = static_cast<std::uint32_t>(static_cast<std::int64_t>(cfg_.start_soc) + whole);
    s.fracsec = static_cast<std::uint32_t>(frame * cfg_.time_base / r);
    s.t = grid_time(k);
    const bool full = frames && frames->size() == cfg_.expected.size();
    s.emitted_at = full ? now : std::min(now, deadline(k));
    std::size_t present = 0;
    for (auto id : cfg_.expected) {
        AlignedEntry e{id, std::nullopt};
        if (frames) {
            if (auto it = frames->find(id); it != frames->end()) {
                e.data = it->second;
                ++present;
            }
        }
        if (!e.data)
            ++counters_.missing;
        s.entries.push_back(std::move(e));
    }
    s.completeness = cfg_.expected.empty() ? 1.0 : static_cast<double>(present) / cfg_.expected.size();
    ++counters_.emitted;
    return s;
}

json aligned_to_json(const AlignedFrameSet& s)
{
    json entries = json::array();
    for (const auto& e : s.entries) {
        json je{{"idcode", e.idcode}};
        if (e.data) {
            json ph = json::array();
            for (const auto& p : e.data->phasors)
                ph.push_back({p.magnitude, p.angle});
            je["stat"] = e.data->stat;
            je["phasors"] = ph;
            je["freq"] = e.data->freq;
            je["dfreq"] = e.data->dfreq;
        } else {
            je["missing"] = true;
        }
        entries.push_back(je);
    }
    return json{{"t", s.t},
                {"grid_index", s.grid_index},
                {"soc", s.soc},
                {"fracsec", s.fracsec},
                {"emitted_at", s.emitted_at},
                {"completeness", s.completeness},
                {"entries", entries}};
}

AlignedFrameSet aligned_from_json(const json& j)
{
    AlignedFrameSet s;
    s.t = j.at("t").get<double>();
    s.grid_index = j.at("grid_index").get<std::int64_t>();
    s.soc = j.at("soc").get<std::uint32_t>();
    s.fracsec = j.at("fracsec").get<std::uint32_t>();
    s.emitted_at = j.at("emitted_at").get<double>();
    s.completeness = j.at("completeness").get<double>();
    for (const auto& je : j.at("entries")) {
        AlignedEntry e;
        e.idcode = je.at("idcode").get<std::uint16_t>();
        if (!je.value("missing", false)) {
            PmuData d;
            d.stat = je.at("stat").get<std::uint16_t>();
            for (const auto& p : je.at("phasors"))
                d.phasors.push_back({p.at(0).get<float>(), p.at(1).get<float>()});
            d.freq = je.at("freq").get<float>();
            d.dfreq = je.at("dfreq").get<float>();
            e.data = d;
        }
        s.entries.push_back(std::move(e));
    }
    return s;
}

}  // namespace gridcosim::ems
