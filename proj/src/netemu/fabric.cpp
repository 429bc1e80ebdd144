#include "gridcosim/netemu/fabric.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <random>
#include <set>

namespace gridcosim::netemu {

using nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

struct Adjacent {
    std::size_t node;
    std::size_t link;
};

using Graph = std::vector<std::vector<Adjacent>>;

Graph build_graph(const NetTopology& topo, bool include_down)
{
    Graph g(topo.nodes.size());
    for (std::size_t k = 0; k < topo.links.size(); ++k) {
        const auto& l = topo.links[k];
        if (!l.up && !include_down)
            continue;
        const auto a = topo.find_node(l.a);
        const auto b = topo.find_node(l.b);
        if (!a || !b)
            continue;
        g[*a].push_back({*b, k});
        g[*b].push_back({*a, k});
    }
    return g;
}

/// Node and link index sequences of the chosen path, or nullopt.
std::optional<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>>
shortest(const NetTopology& topo, const Graph& g, std::size_t src, std::size_t dst)
{
    const auto n = topo.nodes.size();
    constexpr auto inf = std::numeric_limits<std::size_t>::max();
    auto forwards = [&](std::size_t v) { return topo.nodes[v].kind == NodeKind::Switch; };

    // Distances to dst; only the endpoints may be hosts.
    std::vector<std::size_t> dist(n, inf);
    std::deque<std::size_t> queue{dst};
    dist[dst] = 0;
    while (!queue.empty()) {
        const auto v = queue.front();
        queue.pop_front();
        if (v != dst && !forwards(v))
            continue;
        for (const auto& e : g[v]) {
            if (dist[e.node] == inf) {
                dist[e.node] = dist[v] + 1;
                queue.push_back(e.node);
            }
        }
    }
    if (dist[src] == inf)
        return std::nullopt;

    std::vector<std::size_t> nodes{src};
    std::vector<std::size_t> links;
    auto v = src;
    while (v != dst) {
        std::optional<Adjacent> best;
        for (const auto& e : g[v]) {
            if (dist[e.node] + 1 != dist[v])
                continue;
            if (e.node != dst && !forwards(e.node))
                continue;
            const auto& id = topo.nodes[e.node].id;
            if (!best || id < topo.nodes[best->node].id ||
                (e.node == best->node && topo.links[e.link].id < topo.links[best->link].id))
                best = e;
        }
        if (!best)
            return std::nullopt;
        nodes.push_back(best->node);
        links.push_back(best->link);
        v = best->node;
    }
    return std::make_pair(nodes, links);
}

}  // namespace

std::optional<std::size_t> NetTopology::find_node(const std::string& id) const noexcept
{
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id)
            return i;
    return std::nullopt;
}

std::optional<std::size_t> NetTopology::find_link(const std::string& id) const noexcept
{
    for (std::size_t i = 0; i < links.size(); ++i)
        if (links[i].id == id)
            return i;
    return std::nullopt;
}

std::vector<std::string> check_topology(const NetTopology& topo)
{
    std::vector<std::string> problems;
    std::set<std::string> ids;
    for (const auto& n : topo.nodes)
        if (!ids.insert(n.id).second)
            problems.push_back("duplicate node id '" + n.id + "'");
    std::set<std::string> link_ids;
    for (const auto& l : topo.links) {
        const std::string where = "link '" + l.id + "'";
        if (!link_ids.insert(l.id).second)
            problems.push_back("duplicate link id '" + l.id + "'");
        if (!ids.contains(l.a))
            problems.push_back(where + ": unknown endpoint '" + l.a + "'");
        if (!ids.contains(l.b))
            problems.push_back(where + ": unknown endpoint '" + l.b + "'");
        if (l.a == l.b)
            problems.push_back(where + ": endpoints are equal");
        if (!(l.latency_ms >= 0.0))
            problems.push_back(where + ": latency_ms must be non-negative");
        if (!(l.jitter_ms >= 0.0))
            problems.push_back(where + ": jitter_ms must be non-negative");
        if (!(l.loss_prob >= 0.0 && l.loss_prob <= 1.0))
            problems.push_back(where + ": loss_prob must lie in [0, 1]");
    }
    return problems;
}

NetTopology topology_from_json(const json& j)
{
    NetTopology t;
    for (const auto& jn : j.at("nodes")) {
        Node n;
        n.id = jn.at("id").get<std::string>();
        const auto kind = jn.value("kind", std::string("host"));
        if (kind != "host" && kind != "switch")
            throw std::invalid_argument("node '" + n.id + "': kind must be 'host' or 'switch'");
        n.kind = kind == "switch" ? NodeKind::Switch : NodeKind::Host;
        t.nodes.push_back(n);
    }
    for (const auto& jl : j.at("links")) {
        Link l;
        l.a = jl.at("a").get<std::string>();
        l.b = jl.at("b").get<std::string>();
        l.id = jl.value("id", l.a + "-" + l.b);
        l.latency_ms = jl.value("latency_ms", l.latency_ms);
        l.jitter_ms = jl.value("jitter_ms", l.jitter_ms);
        l.loss_prob = jl.value("loss_prob", l.loss_prob);
        l.up = jl.value("up", true);
        t.links.push_back(l);
    }
    return t;
}

json topology_to_json(const NetTopology& topo)
{
    json j{{"nodes", json::array()}, {"links", json::array()}};
    for (const auto& n : topo.nodes)
        j["nodes"].push_back({{"id", n.id}, {"kind", n.kind == NodeKind::Switch ? "switch" : "host"}});
    for (const auto& l : topo.links)
        j["links"].push_back({{"id", l.id},
                              {"a", l.a},
                              {"b", l.b},
                              {"latency_ms", l.latency_ms},
                              {"jitter_ms", l.jitter_ms},
                              {"loss_prob", l.loss_prob},
                              {"up", l.up}});
    return j;
}

std::vector<std::string> route(const NetTopology& topo, const std::string& src, const std::string& dst)
{
    const auto s = topo.find_node(src);
    const auto d = topo.find_node(dst);
    if (!s || !d)
        throw NoRoute("unknown node in route request " + src + " -> " + dst);
    if (*s == *d)
        return {src};
    const auto path = shortest(topo, build_graph(topo, false), *s, *d);
    if (!path)
        throw NoRoute("no route " + src + " -> " + dst);
    std::vector<std::string> ids;
    for (auto v : path->first)
        ids.push_back(topo.nodes[v].id);
    return ids;
}

std::string to_string(DropReason r)
{
    switch (r) {
    case DropReason::Loss:
        return "loss";
    case DropReason::LinkDown:
        return "link_down";
    case DropReason::NoRoute:
        return "no_route";
    }
    return "loss";
}

Fabric::Fabric(NetTopology topo, std::uint64_t seed) : topo_(std::move(topo)), seed_(seed)
{
    auto problems = check_topology(topo_);
    if (!problems.empty())
        throw std::invalid_argument("invalid topology: " + problems.front());
}

void Fabric::schedule_change(double t, LinkChange change)
{
    if (!topo_.find_link(change.link))
        throw UnknownLink("unknown link '" + change.link + "'");
    pending_.emplace(t, std::move(change));
}

void Fabric::reconfigure(const LinkChange& change)
{
    const auto k = topo_.find_link(change.link);
    if (!k)
        throw UnknownLink("unknown link '" + change.link + "'");
    auto& l = topo_.links[*k];
    switch (change.kind) {
    case LinkChange::Kind::LinkUp:
        l.up = true;
        break;
    case LinkChange::Kind::LinkDown:
        l.up = false;
        break;
    case LinkChange::Kind::SetImpairment:
        l.latency_ms = change.latency_ms.value_or(l.latency_ms);
        l.jitter_ms = change.jitter_ms.value_or(l.jitter_ms);
        l.loss_prob = change.loss_prob.value_or(l.loss_prob);
        break;
    }
}

void Fabric::apply_due(double t)
{
    while (!pending_.empty() && pending_.begin()->first <= t) {
        reconfigure(pending_.begin()->second);
        pending_.erase(pending_.begin());
    }
}

DeliveryOutcome Fabric::submit(NetMessage& msg)
{
    if (msg.send_time < last_send_)
        throw std::invalid_argument("fabric submissions must be nondecreasing in time");
    if (msg.payload.empty())
        throw std::invalid_argument("empty payload");
    last_send_ = msg.send_time;
    apply_due(msg.send_time);

    msg.msg_seq = next_seq_++;
    msg.size = msg.payload.size();
    ++counters_.submitted;

    const auto s = topo_.find_node(msg.src);
    const auto d = topo_.find_node(msg.dst);
    if (!s || !d) {
        ++counters_.no_route;
        return Dropped{"", DropReason::NoRoute};
    }
    if (*s == *d) {
        ++counters_.delivered;
        return Delivered{msg.send_time};
    }
    const auto path = shortest(topo_, build_graph(topo_, false), *s, *d);
    if (!path) {
        const auto any = shortest(topo_, build_graph(topo_, true), *s, *d);
        if (any) {
            for (auto k : any->second) {
                if (!topo_.links[k].up) {
                    ++counters_.link_down;
                    return Dropped{topo_.links[k].id, DropReason::LinkDown};
                }
            }
        }
        ++counters_.no_route;
        return Dropped{"", DropReason::NoRoute};
    }

    std::mt19937_64 rng(splitmix64(seed_ ^ splitmix64(msg.msg_seq)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double delay = 0.0;
    std::optional<std::size_t> lost;
    for (auto k : path->second) {
        const auto& l = topo_.links[k];
        const double u_loss = unit(rng);
        const double u_jit = unit(rng);
        if (!lost && u_loss < l.loss_prob)
            lost = k;
        const double hop_ms = std::max(0.0, l.latency_ms + l.jitter_ms * (2.0 * u_jit - 1.0));
        delay += hop_ms * 1e-3;
    }
    if (lost) {
        ++counters_.lost;
        return Dropped{topo_.links[*lost].id, DropReason::Loss};
    }
    ++counters_.delivered;
    return Delivered{msg.send_time + delay};
}

}  // namespace gridcosim::netemu
