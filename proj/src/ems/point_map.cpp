#include "gridcosim/ems/point_map.hpp"

namespace gridcosim::ems {

using namespace protocols;
using powersim::GridAction;
using powersim::GridCase;

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

std::uint16_t gen_point(const GridCase& grid, const std::string& id, std::uint16_t base)
{
    const auto g = grid.find_generator(id);
    if (!g)
        throw powersim::UnknownTarget("unknown generator '" + id + "'");
    return static_cast<std::uint16_t>(base + *g);
}

std::uint16_t branch_point(const GridCase& grid, const std::string& id)
{
    const auto k = grid.find_branch(id);
    if (!k)
        throw powersim::UnknownTarget("unknown branch '" + id + "'");
    return static_cast<std::uint16_t>(*k);
}

}  // namespace

std::vector<DnpBody> action_to_commands(const GridAction& action, const GridCase& grid)
{
    std::vector<DnpBody> out;
    std::visit(overloaded{
                   [&](const powersim::LineTrip& a) {
                       out.push_back(BinaryCommand{branch_point(grid, a.branch), BinaryOperation::Trip});
                   },
                   [&](const powersim::LineClose& a) {
                       out.push_back(BinaryCommand{branch_point(grid, a.branch), BinaryOperation::Close});
                   },
                   [&](const powersim::Separate& a) {
                       for (const auto& b : a.branches)
                           out.push_back(BinaryCommand{branch_point(grid, b), BinaryOperation::Trip});
                   },
                   [&](const powersim::GenTrip& a) {
                       out.push_back(
                           BinaryCommand{gen_point(grid, a.generator, points::kGenTripBase), BinaryOperation::Trip});
                   },
                   [&](const powersim::LoadScale& a) {
                       for (int bus : a.buses)
                           out.push_back(AnalogCommand{
                               static_cast<std::uint16_t>(points::kLoadBase + grid.bus_index(bus)), a.factor});
                   },
                   [&](const powersim::GovSetpoint& a) {
                       out.push_back(AnalogCommand{gen_point(grid, a.generator, points::kGovBase), a.delta_p});
                   },
                   [&](const powersim::AvrSetpoint& a) {
                       out.push_back(AnalogCommand{gen_point(grid, a.generator, points::kAvrBase), a.delta_v});
                   },
               },
               action);
    return out;
}

std::optional<GridAction> command_to_action(const DnpBody& body, const GridCase& grid)
{
    if (const auto* b = std::get_if<BinaryCommand>(&body)) {
        if (b->index >= points::kGenTripBase) {
            const std::size_t g = b->index - points::kGenTripBase;
            if (g >= grid.generators.size() || b->operation != BinaryOperation::Trip)
                return std::nullopt;
            return powersim::GenTrip{grid.generators[g].id};
        }
        if (b->index >= grid.branches.size())
            return std::nullopt;
        const auto& id = grid.branches[b->index].id;
        if (b->operation == BinaryOperation::Trip)
            return powersim::LineTrip{id};
        return powersim::LineClose{id};
    }
    if (const auto* a = std::get_if<AnalogCommand>(&body)) {
        const auto idx = a->index;
        if (idx >= points::kLoadBase) {
            const std::size_t b = idx - points::kLoadBase;
            if (b >= grid.buses.size())
                return std::nullopt;
            return powersim::LoadScale{a->value, {grid.buses[b].id}, std::nullopt};
        }
        if (idx >= points::kGovBase) {
            const std::size_t g = idx - points::kGovBase;
            if (g >= grid.generators.size())
                return std::nullopt;
            return powersim::GovSetpoint{grid.generators[g].id, a->value};
        }
        if (idx >= points::kAvrBase) {
            const std::size_t g = idx - points::kAvrBase;
            if (g >= grid.generators.size())
                return std::nullopt;
            return powersim::AvrSetpoint{grid.generators[g].id, a->value};
        }
    }
    return std::nullopt;
}

}  // namespace gridcosim::ems
