#include "gridcosim/controls/separation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gridcosim/ems/wls.hpp"

namespace gridcosim::controls {

std::vector<std::string> check_separation(const SeparationScheme& s, const powersim::GridCase& grid)
{
    std::vector<std::string> problems;
    std::map<int, std::size_t> owner;
    for (std::size_t e = 0; e < s.epis.size(); ++e) {
        for (int bus : s.epis[e]) {
            if (!grid.find_bus(bus))
                problems.push_back("EPI " + std::to_string(e) + " names unknown bus " + std::to_string(bus));
            else if (!owner.emplace(bus, e).second)
                problems.push_back("bus " + std::to_string(bus) + " belongs to more than one EPI");
        }
    }
    for (const auto& b : grid.buses)
        if (!owner.contains(b.id))
            problems.push_back("bus " + std::to_string(b.id) + " is in no EPI");
    for (std::size_t k = 0; k < s.interfaces.size(); ++k) {
        const auto& i = s.interfaces[k];
        const std::string where = "interface " + std::to_string(k);
        if (i.a >= s.epis.size() || i.b >= s.epis.size() || i.a == i.b) {
            problems.push_back(where + ": needs two distinct EPIs");
            continue;
        }
        for (const auto& line : i.lines) {
            const auto br = grid.find_branch(line);
            if (!br) {
                problems.push_back(where + ": unknown line '" + line + "'");
                continue;
            }
            const auto f = owner.find(grid.branches[*br].from_bus);
            const auto t = owner.find(grid.branches[*br].to_bus);
            const bool joins = f != owner.end() && t != owner.end() &&
                               ((f->second == i.a && t->second == i.b) || (f->second == i.b && t->second == i.a));
            if (!joins)
                problems.push_back(where + ": line '" + line + "' does not join its two EPIs");
        }
    }
    for (auto c : s.cut)
        if (c >= s.interfaces.size())
            problems.push_back("cut names interface " + std::to_string(c) + ", which does not exist");
    const auto ng = static_cast<int>(grid.generators.size());
    if (s.k && (*s.k < 1 || 2 * *s.k > ng))
        problems.push_back("k must satisfy 1 <= k <= Ng/2");
    if (!(s.post_shed_fraction >= 0.0 && s.post_shed_fraction < 1.0))
        problems.push_back("post_shed_fraction must lie in [0, 1)");
    return problems;
}

int effective_k(const SeparationScheme& s, std::size_t generator_count)
{
    if (s.k)
        return *s.k;
    return std::max(1, std::min(10, static_cast<int>(generator_count / 2)));
}

double angle_spread(std::vector<double> angles, int k)
{
    const auto n = static_cast<std::size_t>(k);
    if (k < 1 || angles.size() < 2 * n)
        throw InsufficientEstimates("angle spread needs " + std::to_string(2 * std::max(k, 1)) + " estimates, got " +
                                    std::to_string(angles.size()));
    std::sort(angles.begin(), angles.end());
    const double bottom = std::accumulate(angles.begin(), angles.begin() + static_cast<std::ptrdiff_t>(n), 0.0);
    const double top = std::accumulate(angles.end() - static_cast<std::ptrdiff_t>(n), angles.end(), 0.0);
    return (top - bottom) / static_cast<double>(k);
}

SeparationPlan separation_plan(const SeparationScheme& s)
{
    SeparationPlan plan;
    std::set<std::size_t> cut(s.cut.begin(), s.cut.end());
    if (cut.empty())
        for (std::size_t k = 0; k < s.interfaces.size(); ++k)
            cut.insert(k);

    std::vector<std::size_t> parent(s.epis.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t k = 0; k < s.interfaces.size(); ++k) {
        const auto& i = s.interfaces[k];
        if (cut.contains(k)) {
            for (const auto& l : i.lines)
                if (std::find(plan.lines.begin(), plan.lines.end(), l) == plan.lines.end())
                    plan.lines.push_back(l);
        } else {
            parent[find(i.a)] = find(i.b);
        }
    }
    std::map<std::size_t, std::vector<int>> groups;
    for (std::size_t e = 0; e < s.epis.size(); ++e) {
        auto& g = groups[find(e)];
        g.insert(g.end(), s.epis[e].begin(), s.epis[e].end());
    }
    for (auto& [root, buses] : groups) {
        std::sort(buses.begin(), buses.end());
        plan.islands.push_back(buses);
    }
    std::sort(plan.islands.begin(), plan.islands.end());
    return plan;
}

std::vector<std::size_t> deficient_islands(const SeparationPlan& plan, const powersim::GridCase& grid,
                                           const std::map<std::string, double>& from_flow)
{
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < plan.islands.size(); ++k) {
        const auto& isl = plan.islands[k];
        auto inside = [&](int bus) { return std::binary_search(isl.begin(), isl.end(), bus); };
        double import = 0.0;
        for (const auto& line : plan.lines) {
            const auto f = from_flow.find(line);
            const auto br = grid.find_branch(line);
            if (f == from_flow.end() || !br)
                continue;
            const bool from_in = inside(grid.branches[*br].from_bus);
            const bool to_in = inside(grid.branches[*br].to_bus);
            if (from_in && !to_in)
                import -= f->second;
            else if (to_in && !from_in)
                import += f->second;
        }
        if (import > 0.0)
            out.push_back(k);
    }
    return out;
}

SeparationController::SeparationController(SeparationScheme scheme, powersim::GridCase model)
    : scheme_(std::move(scheme)), model_(std::move(model)), k_(effective_k(scheme_, model_.generators.size()))
{
    const auto problems = check_separation(scheme_, model_);
    if (!problems.empty())
        throw std::invalid_argument("separation scheme: " + problems.front());
}

Subscription SeparationController::subscription() const
{
    Subscription s;
    s.topics = {ems::Topic::Rotor, ems::Topic::Estimate};
    s.all_buses = true;
    s.all_generators = true;
    return s;
}

std::vector<std::size_t> SeparationController::importing(const SeparationPlan& plan,
                                                         const std::vector<double>& angles) const
{
    if (flows_)
        return deficient_islands(plan, model_, *flows_);
    // No estimate yet: the island whose machines lag furthest behind.
    std::optional<std::size_t> best;
    double best_mean = 0.0;
    for (std::size_t k = 0; k < plan.islands.size(); ++k) {
        double sum = 0.0;
        int n = 0;
        for (std::size_t g = 0; g < model_.generators.size() && g < angles.size(); ++g) {
            if (std::binary_search(plan.islands[k].begin(), plan.islands[k].end(), model_.generators[g].bus) &&
                !std::isnan(angles[g])) {
                sum += angles[g];
                ++n;
            }
        }
        if (n > 0 && (!best || sum / n < best_mean)) {
            best = k;
            best_mean = sum / n;
        }
    }
    if (best && plan.islands.size() > 1)
        return {*best};
    return {};
}

ControlOutput SeparationController::on_record(const ControlPlaneView& view, double now)
{
    ControlOutput out;
    if (latched_)
        return out;
    const auto plan = separation_plan(scheme_);

    if (view.topic() == ems::Topic::Estimate) {
        // Angle-difference sign of every cut line, tripped ones included;
        // they all point the same way across one interface.
        const auto& e = view.estimate();
        Eigen::VectorXcd v(e.v_mag.size());
        for (Eigen::Index k = 0; k < v.size(); ++k)
            v[k] = std::polar(e.v_mag[k], e.v_ang[k]);
        std::map<std::string, double> flows;
        for (const auto& line : plan.lines) {
            ems::Measurement m;
            m.kind = ems::MeasKind::PFlow;
            m.branch = line;
            flows[line] = ems::measurement_model(m, model_, v);
        }
        flows_ = std::move(flows);
        return out;
    }

    const auto angles = view.rotor_angles();
    if (angles.size() < 2 * static_cast<std::size_t>(k_))
        return out;
    const double spread = angle_spread(angles, k_);
    if (std::abs(spread) < scheme_.threshold)
        return out;

    latched_ = true;
    std::vector<double> per_gen;
    for (const auto& g : model_.generators)
        per_gen.push_back(view.rotor_angle(g.id).value_or(std::nan("")));
    std::vector<int> shed;
    for (auto k : importing(plan, per_gen))
        shed.insert(shed.end(), plan.islands[k].begin(), plan.islands[k].end());
    std::sort(shed.begin(), shed.end());

    const std::string reason = "angle spread " + std::to_string(spread) + " rad";
    out.commands.push_back({now, name(), powersim::Separate{plan.lines}, reason});
    if (!shed.empty() && scheme_.post_shed_fraction > 0.0)
        out.commands.push_back(
            {now, name(), powersim::LoadScale{1.0 - scheme_.post_shed_fraction, shed, std::nullopt}, reason});
    out.alarms.push_back({now, name(), "separation",
                          nlohmann::json{{"spread", spread}, {"lines", plan.lines}, {"shed_buses", shed},
                                         {"flow_source", flows_ ? "estimate" : "rotor_angles"}}});
    return out;
}

void SeparationController::reset()
{
    latched_ = false;
    flows_.reset();
}

}  // namespace gridcosim::controls
