#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "gridcosim/protocols/bytes.hpp"

namespace gridcosim::netemu {

using protocols::Bytes;

enum class NodeKind { Host, Switch };

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Host;

    bool operator==(const Node&) const = default;
};

struct Link {
    std::string id;
    std::string a;
    std::string b;
    double latency_ms = 10.0;
    double jitter_ms = 2.0;  // half-width of a uniform draw
    double loss_prob = 0.0;
    bool up = true;

    bool operator==(const Link&) const = default;
};

struct NetTopology {
    std::vector<Node> nodes;
    std::vector<Link> links;

    std::optional<std::size_t> find_node(const std::string& id) const noexcept;
    std::optional<std::size_t> find_link(const std::string& id) const noexcept;
    bool operator==(const NetTopology&) const = default;
};

std::vector<std::string> check_topology(const NetTopology& topo);
NetTopology topology_from_json(const nlohmann::json& j);
nlohmann::json topology_to_json(const NetTopology& topo);

class NoRoute : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnknownLink : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Min-hop path over up links. Only switches forward; ties go to the
/// lexicographically smallest node-id sequence. Throws NoRoute.
std::vector<std::string> route(const NetTopology& topo, const std::string& src, const std::string& dst);

struct NetMessage {
    std::string src;
    std::string dst;
    Bytes payload;
    double send_time = 0.0;
    std::size_t size = 0;
    std::uint64_t msg_seq = 0;
};

enum class DropReason { Loss, LinkDown, NoRoute };

std::string to_string(DropReason r);

struct Delivered {
    double arrival_time = 0.0;
};

struct Dropped {
    std::string link;  // empty for no_route
    DropReason reason = DropReason::Loss;
};

using DeliveryOutcome = std::variant<Delivered, Dropped>;

struct LinkChange {
    enum class Kind { LinkUp, LinkDown, SetImpairment };
    Kind kind = Kind::SetImpairment;
    std::string link;
    std::optional<double> latency_ms;
    std::optional<double> jitter_ms;
    std::optional<double> loss_prob;
};

struct FabricCounters {
    std::uint64_t submitted = 0;
    std::uint64_t delivered = 0;
    std::uint64_t lost = 0;
    std::uint64_t link_down = 0;
    std::uint64_t no_route = 0;
};

/// Seeded message fabric. Outcomes depend only on the seed, the topology
/// history and the submission sequence.
class Fabric {
public:
    Fabric(NetTopology topo, std::uint64_t seed);

    /// Stamps `msg.msg_seq` and `msg.size`, then decides its fate.
    /// Submissions must be nondecreasing in send_time.
    DeliveryOutcome submit(NetMessage& msg);

    /// Takes effect for submissions with send_time >= t.
    void schedule_change(double t, LinkChange change);
    /// Immediate change; throws UnknownLink.
    void reconfigure(const LinkChange& change);

    const NetTopology& topology() const noexcept { return topo_; }
    const FabricCounters& counters() const noexcept { return counters_; }

private:
    void apply_due(double t);

    NetTopology topo_;
    std::uint64_t seed_;
    std::uint64_t next_seq_ = 0;
    double last_send_ = -1e300;
    std::multimap<double, LinkChange> pending_;
    FabricCounters counters_;
};

}  // namespace gridcosim::netemu
