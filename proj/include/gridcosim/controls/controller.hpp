#pragma once

#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gridcosim/ems/control_plane.hpp"
#include "gridcosim/powersim/dynamics.hpp"

namespace gridcosim::controls {

using Complex = std::complex<double>;

/// Inputs a controller may read. Local schemes name a few PMUs or buses,
/// wide-area ones ask for every generator or bus.
struct Subscription {
    std::set<ems::Topic> topics;
    std::set<std::uint16_t> pmus;
    std::set<int> buses;
    std::set<std::string> generators;
    bool all_buses = false;
    bool all_generators = false;
};

class SubscriptionViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Read access to one control-plane record, checked against a subscription.
class ControlPlaneView {
public:
    ControlPlaneView(const ems::ControlRecord& record, const Subscription& sub, const powersim::GridCase& model,
                     std::string controller);

    ems::Topic topic() const noexcept { return record_.topic(); }
    double t() const noexcept { return record_.t; }

    /// Frame time of the aligned set; requires the Aligned topic.
    double aligned_time() const;
    /// Frame of one PMU in the aligned set; nullptr when missing.
    const protocols::PmuData* pmu(std::uint16_t idcode) const;

    double estimate_time() const;
    Complex bus_voltage(int bus) const;
    /// Whole estimate; requires every bus.
    const ems::StateEstimate& estimate() const;

    double rotor_time() const;
    std::optional<double> rotor_angle(const std::string& generator) const;
    /// Every observable angle; requires every generator.
    std::vector<double> rotor_angles() const;

private:
    void require(ems::Topic t) const;
    [[noreturn]] void violation(const std::string& what) const;

    const ems::ControlRecord& record_;
    const Subscription& sub_;
    const powersim::GridCase& model_;
    std::string controller_;
};

struct Command {
    double t = 0.0;
    std::string controller;
    powersim::GridAction action;
    std::string reason;
};

struct Alarm {
    double t = 0.0;
    std::string controller;
    std::string kind;
    nlohmann::json detail;
};

struct ControlOutput {
    std::vector<Command> commands;
    std::vector<Alarm> alarms;

    void append(ControlOutput&& other);
};

class Controller {
public:
    virtual ~Controller() = default;
    virtual std::string name() const = 0;
    virtual Subscription subscription() const = 0;
    virtual ControlOutput on_record(const ControlPlaneView& view, double now) = 0;
    /// Clears one-shot latches and integrator state.
    virtual void reset() {}
};

/// Sequential evaluation of a controller set over incoming records.
class ControlsHost {
public:
    ControlsHost(std::vector<std::unique_ptr<Controller>> controllers, powersim::GridCase model);

    ControlOutput deliver(const ems::ControlRecord& record, double now);

    const std::vector<std::unique_ptr<Controller>>& controllers() const noexcept { return controllers_; }

private:
    std::vector<std::unique_ptr<Controller>> controllers_;
    std::vector<Subscription> subs_;
    powersim::GridCase model_;
};

struct ControlsConfig {
    std::string host = "controls";
    std::uint16_t dnp_address = 2;
    nlohmann::json schemes = nlohmann::json::object();
};

ControlsConfig controls_config_from_json(const nlohmann::json& j);

/// Builds every scheme present in `cfg` (those without "enabled": false).
std::vector<std::unique_ptr<Controller>> make_controllers(const ControlsConfig& cfg, const powersim::GridCase& model);

/// Single controller by scheme name; nullptr when the config lacks it.
std::unique_ptr<Controller> make_controller(const std::string& name, const ControlsConfig& cfg,
                                            const powersim::GridCase& model);

nlohmann::json command_to_json(const Command& c);
Command command_from_json(const nlohmann::json& j);
nlohmann::json alarm_to_json(const Alarm& a);

}  // namespace gridcosim::controls
