#include "gridcosim/powersim/islands.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace gridcosim::powersim {

namespace {

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t i)
{
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

}  // namespace

IslandMap detect_islands(const GridCase& grid)
{
    const auto n = grid.buses.size();
    const auto index = bus_lookup(grid);
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});

    for (const auto& br : grid.branches) {
        if (!br.in_service())
            continue;
        auto a = find_root(parent, index.at(br.from_bus));
        auto b = find_root(parent, index.at(br.to_bus));
        if (a != b)
            parent[std::max(a, b)] = std::min(a, b);
    }

    // Label each component with its lowest bus id, independent of bus order.
    std::vector<int> lowest(n, 0);
    std::vector<bool> seen(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = find_root(parent, i);
        if (!seen[r] || grid.buses[i].id < lowest[r]) {
            lowest[r] = grid.buses[i].id;
            seen[r] = true;
        }
    }
    IslandMap map(n);
    for (std::size_t i = 0; i < n; ++i)
        map[i] = lowest[find_root(parent, i)];
    return map;
}

std::vector<int> island_labels(const IslandMap& map)
{
    std::set<int> labels(map.begin(), map.end());
    return {labels.begin(), labels.end()};
}

}  // namespace gridcosim::powersim
