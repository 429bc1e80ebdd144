#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gridcosim/controls/controller.hpp"

namespace gridcosim::controls {

class InsufficientEstimates : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Interface {
    std::size_t a = 0;  // EPI positions
    std::size_t b = 0;
    std::vector<std::string> lines;
};

struct SeparationScheme {
    std::vector<std::vector<int>> epis;  // bus ids
    std::vector<Interface> interfaces;
    /// Interfaces opened on trigger; empty means all of them.
    std::vector<std::size_t> cut;
    std::optional<int> k;  // default min(10, Ng/2)
    double threshold = 2.094;
    double post_shed_fraction = 0.10;
};

/// Collects every structural problem: EPIs not partitioning the buses,
/// interface lines that do not join their two EPIs, k out of range.
std::vector<std::string> check_separation(const SeparationScheme& s, const powersim::GridCase& grid);

int effective_k(const SeparationScheme& s, std::size_t generator_count);

/// mean(top k) - mean(bottom k). Throws InsufficientEstimates below 2k angles.
double angle_spread(std::vector<double> angles, int k);

struct SeparationPlan {
    std::vector<std::string> lines;       // to open
    std::vector<std::vector<int>> islands;  // bus ids after the cut
};

SeparationPlan separation_plan(const SeparationScheme& s);

/// Islands whose net import over the cut lines is positive. `from_flow`
/// gives the from-end active power of each cut line.
std::vector<std::size_t> deficient_islands(const SeparationPlan& plan, const powersim::GridCase& grid,
                                           const std::map<std::string, double>& from_flow);

struct SeparationDecision {
    double spread = 0.0;
    std::vector<std::string> lines;
    std::vector<int> shed_buses;
    double shed_factor = 0.9;
};

class SeparationController : public Controller {
public:
    SeparationController(SeparationScheme scheme, powersim::GridCase model);

    std::string name() const override { return "separation"; }
    Subscription subscription() const override;
    ControlOutput on_record(const ControlPlaneView& view, double now) override;
    void reset() override;

    bool latched() const noexcept { return latched_; }

private:
    std::vector<std::size_t> importing(const SeparationPlan& plan, const std::vector<double>& angles) const;

    SeparationScheme scheme_;
    powersim::GridCase model_;
    int k_;
    bool latched_ = false;
    std::optional<std::map<std::string, double>> flows_;  // from the latest estimate
};

}  // namespace gridcosim::controls
