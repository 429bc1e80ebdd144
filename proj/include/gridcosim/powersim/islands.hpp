#pragma once

#include <vector>

#include "gridcosim/powersim/grid_case.hpp"

namespace gridcosim::powersim {

/// Island label per bus position: the lowest bus id in its connected
/// component over in-service branches.
using IslandMap = std::vector<int>;

IslandMap detect_islands(const GridCase& grid);

/// Distinct labels in ascending order.
std::vector<int> island_labels(const IslandMap& map);

}  // namespace gridcosim::powersim
