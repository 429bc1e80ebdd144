#include "gridcosim/powersim/ybus.hpp"

#include <vector>

namespace gridcosim::powersim {

AdmittanceMatrix build_ybus(const GridCase& grid)
{
    const auto n = static_cast<Eigen::Index>(grid.buses.size());
    const auto index = bus_lookup(grid);

    std::vector<Eigen::Triplet<Complex>> triplets;
    triplets.reserve(grid.branches.size() * 4);
    for (const auto& br : grid.branches) {
        if (!br.in_service())
            continue;
        const auto f = static_cast<Eigen::Index>(index.at(br.from_bus));
        const auto t = static_cast<Eigen::Index>(index.at(br.to_bus));
        const auto s = branch_stamp(br);
        triplets.emplace_back(f, f, s.ff);
        triplets.emplace_back(f, t, s.ft);
        triplets.emplace_back(t, f, s.tf);
        triplets.emplace_back(t, t, s.tt);
    }

    AdmittanceMatrix out;
    out.y.resize(n, n);
    out.y.setFromTriplets(triplets.begin(), triplets.end());
    out.y.makeCompressed();
    return out;
}

void stamp_branch(ComplexSparse& y, const GridCase& grid, const Branch& br, double sign)
{
    const auto f = static_cast<Eigen::Index>(grid.bus_index(br.from_bus));
    const auto t = static_cast<Eigen::Index>(grid.bus_index(br.to_bus));
    const auto s = branch_stamp(br);
    y.coeffRef(f, f) += sign * s.ff;
    y.coeffRef(f, t) += sign * s.ft;
    y.coeffRef(t, f) += sign * s.tf;
    y.coeffRef(t, t) += sign * s.tt;
}

}  // namespace gridcosim::powersim
