#include "gridcosim/controls/ufls.hpp"

#include <stdexcept>

namespace gridcosim::controls {

void check_ufls(const UflsScheme& s)
{
    if (s.stages.empty())
        throw std::invalid_argument("ufls scheme has no stages");
    for (std::size_t k = 0; k < s.stages.size(); ++k) {
        const auto& st = s.stages[k];
        if (!(st.shed_fraction > 0.0 && st.shed_fraction <= 1.0))
            throw std::invalid_argument("ufls stage " + std::to_string(k) + ": shed_fraction must lie in (0, 1]");
        if (!(st.delay >= 0.0))
            throw std::invalid_argument("ufls stage " + std::to_string(k) + ": delay must be non-negative");
        if (k > 0 && !(st.threshold < s.stages[k - 1].threshold))
            throw std::invalid_argument("ufls thresholds must strictly decrease");
    }
}

std::vector<powersim::LoadScale> ufls_evaluate(UflsScheme& scheme, double f, double t)
{
    std::vector<powersim::LoadScale> out;
    for (auto& st : scheme.stages) {
        if (st.fired)
            continue;
        if (f >= st.threshold) {
            st.below_since.reset();
            continue;
        }
        if (!st.below_since)
            st.below_since = t;
        if (t - *st.below_since >= st.delay) {
            st.fired = true;
            out.push_back({1.0 - st.shed_fraction, scheme.buses, std::nullopt});
        }
    }
    return out;
}

UflsController::UflsController(UflsScheme scheme, std::uint16_t freq_pmu) : scheme_(std::move(scheme)), pmu_(freq_pmu)
{
    check_ufls(scheme_);
}

Subscription UflsController::subscription() const
{
    Subscription s;
    s.topics = {ems::Topic::Aligned};
    s.pmus = {pmu_};
    return s;
}

ControlOutput UflsController::on_record(const ControlPlaneView& view, double now)
{
    ControlOutput out;
    const auto* d = view.pmu(pmu_);
    if (!d || d->stat == protocols::kStatInvalid || d->freq == 0.0f)
        return out;
    const double f = d->freq;
    for (auto& shed : ufls_evaluate(scheme_, f, view.aligned_time()))
        out.commands.push_back({now, name(), shed, "frequency " + std::to_string(f) + " Hz"});
    return out;
}

void UflsController::reset()
{
    for (auto& st : scheme_.stages) {
        st.fired = false;
        st.below_since.reset();
    }
}

}  // namespace gridcosim::controls
