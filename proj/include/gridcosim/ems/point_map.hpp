#pragma once

#include <optional>
#include <vector>

#include "gridcosim/powersim/dynamics.hpp"
#include "gridcosim/protocols/dnp_lite.hpp"

namespace gridcosim::ems {

/// Actuator point numbering shared by the EMS, the controls and the
/// simulator endpoint.
///   binary  i          branch at case position i (trip / close)
///   binary  10000 + g  generator g trip
///   analog  1000 + g   excitation reference change, pu
///   analog  2000 + g   governor reference change, pu
///   analog  3000 + b   load admittance factor for the bus at position b
namespace points {
inline constexpr std::uint16_t kGenTripBase = 10000;
inline constexpr std::uint16_t kAvrBase = 1000;
inline constexpr std::uint16_t kGovBase = 2000;
inline constexpr std::uint16_t kLoadBase = 3000;
}  // namespace points

/// DNP command bodies carrying one grid action.
std::vector<protocols::DnpBody> action_to_commands(const powersim::GridAction& action, const powersim::GridCase& grid);

/// Grid action for one received command; nullopt for an unmapped point.
std::optional<powersim::GridAction> command_to_action(const protocols::DnpBody& body, const powersim::GridCase& grid);

}  // namespace gridcosim::ems
