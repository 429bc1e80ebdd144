#include "gridcosim/controls/vsa.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace gridcosim::controls {

VsaFit vsa_fit(const std::vector<Complex>& v, const std::vector<Complex>& i, double alarm_index)
{
    if (v.size() != i.size())
        throw std::invalid_argument("vsa window: voltage and current sample counts differ");
    if (v.size() < 2)
        throw IllConditioned("vsa window needs at least 2 samples");
    const auto n = static_cast<Eigen::Index>(v.size());

    double scale = 0.0;
    double spread = 0.0;
    for (const auto& x : i)
        scale = std::max(scale, std::abs(x));
    for (const auto& x : i)
        spread = std::max(spread, std::abs(x - i.front()));
    if (spread <= 1e-9 * std::max(scale, 1.0))
        throw IllConditioned("load current unchanged across the window");

    Eigen::MatrixXcd a(n, 2);
    Eigen::VectorXcd b(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        a(k, 0) = 1.0;
        a(k, 1) = -i[static_cast<std::size_t>(k)];
        b[k] = v[static_cast<std::size_t>(k)];
    }
    const Eigen::VectorXcd x = a.colPivHouseholderQr().solve(b);

    VsaFit fit;
    fit.e_th = x[0];
    fit.z_th = x[1];
    const Complex z_load = v.back() / i.back();
    fit.index = std::abs(fit.z_th) / std::abs(z_load);
    fit.alarm = fit.index >= alarm_index;
    return fit;
}

VsaController::VsaController(VsaConfig cfg) : cfg_(std::move(cfg)), windows_(cfg_.buses.size())
{
    if (cfg_.window < 2)
        throw std::invalid_argument("vsa window must hold at least 2 samples");
}

Subscription VsaController::subscription() const
{
    Subscription s;
    s.topics = {ems::Topic::Aligned};
    for (const auto& b : cfg_.buses)
        s.pmus.insert(b.pmu);
    return s;
}

ControlOutput VsaController::on_record(const ControlPlaneView& view, double now)
{
    ControlOutput out;
    for (std::size_t k = 0; k < cfg_.buses.size(); ++k) {
        const auto& b = cfg_.buses[k];
        auto& w = windows_[k];
        const auto* d = view.pmu(b.pmu);
        if (!d || d->stat == protocols::kStatInvalid)
            continue;
        const auto channel = [&](std::size_t c) -> std::optional<Complex> {
            if (c >= d->phasors.size() || d->phasors[c].magnitude == 0.0f)
                return std::nullopt;
            return std::polar<double>(d->phasors[c].magnitude, d->phasors[c].angle);
        };
        const auto v = channel(b.v_channel);
        const auto i = channel(b.i_channel);
        if (!v || !i)
            continue;
        w.v.push_back(*v);
        w.i.push_back(*i);
        while (w.v.size() > cfg_.window) {
            w.v.pop_front();
            w.i.pop_front();
        }
        if (w.v.size() < cfg_.window)
            continue;
        try {
            const auto fit = vsa_fit({w.v.begin(), w.v.end()}, {w.i.begin(), w.i.end()}, cfg_.alarm_index);
            if (fit.alarm && !w.alarmed)
                out.alarms.push_back({now, name(), "vsa", {{"bus", b.bus}, {"index", fit.index}}});
            w.alarmed = fit.alarm;
        } catch (const IllConditioned&) {
        }
    }
    return out;
}

void VsaController::reset()
{
    windows_.assign(cfg_.buses.size(), Window{});
}

}  // namespace gridcosim::controls
