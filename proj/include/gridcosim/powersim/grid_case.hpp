#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace gridcosim::powersim {

enum class BusKind { Slack, PV, PQ };

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool operator==(const GeoPoint&) const = default;
};

/// Bus with its aggregated load. Powers are per unit on the case base.
struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double load_p = 0.0;
    double load_q = 0.0;
    double v_setpoint = 1.0;
    std::optional<GeoPoint> geo;

    bool operator==(const Bus&) const = default;
};

enum class BranchStatus { In, Out };

/// Pi-model branch. An off-nominal tap sits on the from side.
struct Branch {
    std::string id;
    int from_bus = 0;
    int to_bus = 0;
    double r = 0.0;
    double x = 0.0;
    double b_shunt = 0.0;
    double tap_ratio = 1.0;
    BranchStatus status = BranchStatus::In;

    bool in_service() const noexcept { return status == BranchStatus::In; }
    bool operator==(const Branch&) const = default;
};

/// First-order turbine-governor. Droop is per unit on the case base.
struct Governor {
    double droop_r = 0.05;
    double time_const_tg = 0.5;
    bool enabled = true;

    bool operator==(const Governor&) const = default;
};

/// Quadratic production cost a*P^2 + b*P + c in $/h with P in MW.
struct CostCurve {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    bool operator==(const CostCurve&) const = default;
};

struct Generator {
    std::string id;
    int bus = 0;
    double p_sched = 0.0;
    double q_min = -9999.0;
    double q_max = 9999.0;
    double p_min = 0.0;
    double p_max = 9999.0;
    double inertia_h = 5.0;
    double damping_d = 0.0;
    double xd_prime = 0.3;
    Governor governor;
    CostCurve cost;
    bool in_service = true;

    bool operator==(const Generator&) const = default;
};

/// Static network description. Everything is per unit on `base_mva`.
struct GridCase {
    std::string name;
    double base_mva = 100.0;
    double nominal_freq = 60.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Generator> generators;

    std::size_t bus_count() const noexcept { return buses.size(); }

    /// Position of bus `id` in `buses`; throws UnknownTarget.
    std::size_t bus_index(int id) const;
    std::optional<std::size_t> find_bus(int id) const noexcept;
    std::optional<std::size_t> find_branch(std::string_view id) const noexcept;
    std::optional<std::size_t> find_generator(std::string_view id) const noexcept;

    bool operator==(const GridCase&) const = default;
};

/// Raised when an event or selector names something the case does not have.
class UnknownTarget : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Case structure violations, all of them collected in one pass.
class CaseError : public std::runtime_error {
public:
    explicit CaseError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    std::vector<std::string> problems_;
};

/// Every structural problem found in `grid`; empty when the case is usable.
std::vector<std::string> check_case(const GridCase& grid);

/// Throws CaseError when check_case reports anything.
void validate_case(const GridCase& grid);

/// Map from bus id to position, for loops that look buses up repeatedly.
std::unordered_map<int, std::size_t> bus_lookup(const GridCase& grid);

GridCase case_from_json(const nlohmann::json& j);
nlohmann::json case_to_json(const GridCase& grid);

/// Reads and validates a case file.
GridCase load_case(const std::filesystem::path& path);

std::string_view to_string(BusKind kind) noexcept;

}  // namespace gridcosim::powersim
