#include <doctest.h>

#include "gridcosim/netemu/fabric.hpp"

using namespace gridcosim::netemu;

namespace {

Link link(const std::string& id, const std::string& a, const std::string& b, double lat, double jitter = 0.0,
          double loss = 0.0)
{
    return {id, a, b, lat, jitter, loss, true};
}

NetTopology chain()
{
    // a - s1 - b, 10 ms then 20 ms
    NetTopology t;
    t.nodes = {{"a", NodeKind::Host}, {"b", NodeKind::Host}, {"s1", NodeKind::Switch}};
    t.links = {link("l1", "a", "s1", 10.0), link("l2", "s1", "b", 20.0)};
    return t;
}

NetMessage msg(double t, const std::string& src = "a", const std::string& dst = "b")
{
    NetMessage m;
    m.src = src;
    m.dst = dst;
    m.payload = {1, 2, 3};
    m.send_time = t;
    return m;
}

double arrival(const DeliveryOutcome& o)
{
    REQUIRE(std::holds_alternative<Delivered>(o));
    return std::get<Delivered>(o).arrival_time;
}

}  // namespace

TEST_CASE("routing")
{
    NetTopology direct;
    direct.nodes = {{"a", NodeKind::Host}, {"b", NodeKind::Host}};
    direct.links = {link("d", "a", "b", 1.0)};
    CHECK(route(direct, "a", "b") == std::vector<std::string>{"a", "b"});

    NetTopology diamond;
    diamond.nodes = {{"a", NodeKind::Host}, {"b", NodeKind::Host}, {"S2", NodeKind::Switch}, {"S1", NodeKind::Switch}};
    diamond.links = {link("x", "a", "S2", 1), link("y", "S2", "b", 1), link("z", "a", "S1", 1), link("w", "S1", "b", 1)};
    CHECK(route(diamond, "a", "b") == std::vector<std::string>{"a", "S1", "b"});

    NetTopology split = chain();
    split.links[1].up = false;
    CHECK_THROWS_AS(route(split, "a", "b"), NoRoute);
}

TEST_CASE("hosts do not forward")
{
    NetTopology t;
    t.nodes = {{"a", NodeKind::Host}, {"m", NodeKind::Host}, {"b", NodeKind::Host}};
    t.links = {link("1", "a", "m", 1), link("2", "m", "b", 1)};
    CHECK_THROWS_AS(route(t, "a", "b"), NoRoute);
}

TEST_CASE("latency adds up along the path")
{
    Fabric f(chain(), 1);
    auto m = msg(1.0);
    CHECK(arrival(f.submit(m)) == doctest::Approx(1.030).epsilon(1e-12));
    CHECK(m.size == 3);
    auto m2 = msg(1.0);
    f.submit(m2);
    CHECK(m2.msg_seq == m.msg_seq + 1);
}

TEST_CASE("total loss drops everything")
{
    auto t = chain();
    t.links[1].loss_prob = 1.0;
    Fabric f(t, 1);
    for (int k = 0; k < 20; ++k) {
        auto m = msg(k * 0.01);
        const auto out = f.submit(m);
        REQUIRE(std::holds_alternative<Dropped>(out));
        CHECK(std::get<Dropped>(out).reason == DropReason::Loss);
        CHECK(std::get<Dropped>(out).link == "l2");
    }
}

TEST_CASE("loss rate within binomial bounds")
{
    NetTopology t;
    t.nodes = {{"a", NodeKind::Host}, {"b", NodeKind::Host}};
    t.links = {link("d", "a", "b", 1.0, 0.0, 0.1)};
    Fabric f(t, 42);
    int dropped = 0;
    for (int k = 0; k < 10000; ++k) {
        auto m = msg(k * 1e-3);
        if (std::holds_alternative<Dropped>(f.submit(m)))
            ++dropped;
    }
    // n p = 1000, sigma = sqrt(n p (1 - p)) = 30
    CHECK(dropped >= 900);
    CHECK(dropped <= 1100);
}

TEST_CASE("jitter stays inside its band and is seeded")
{
    NetTopology t;
    t.nodes = {{"a", NodeKind::Host}, {"b", NodeKind::Host}};
    t.links = {link("d", "a", "b", 50.0, 20.0)};
    Fabric f1(t, 9), f2(t, 9), f3(t, 10);
    bool differs = false;
    for (int k = 0; k < 500; ++k) {
        auto a = msg(k * 0.01), b = msg(k * 0.01), c = msg(k * 0.01);
        const double at = arrival(f1.submit(a));
        CHECK(at - a.send_time >= 0.030 - 1e-12);
        CHECK(at - a.send_time <= 0.070 + 1e-12);
        CHECK(arrival(f2.submit(b)) == at);
        differs = differs || arrival(f3.submit(c)) != at;
    }
    CHECK(differs);
}

TEST_CASE("impairment change applies from its time on")
{
    NetTopology t;
    t.nodes = {{"a", NodeKind::Host}, {"b", NodeKind::Host}};
    t.links = {link("d", "a", "b", 10.0)};
    Fabric f(t, 1);
    LinkChange c;
    c.kind = LinkChange::Kind::SetImpairment;
    c.link = "d";
    c.latency_ms = 50.0;
    f.schedule_change(2.0, c);
    auto before = msg(2.0 - 1e-9), after = msg(2.0 + 1e-9);
    CHECK(arrival(f.submit(before)) - before.send_time == doctest::Approx(0.010).epsilon(1e-9));
    CHECK(arrival(f.submit(after)) - after.send_time == doctest::Approx(0.050).epsilon(1e-9));
}

TEST_CASE("link down reroutes or drops")
{
    NetTopology t;
    t.nodes = {{"a", NodeKind::Host}, {"b", NodeKind::Host}, {"s1", NodeKind::Switch}, {"s2", NodeKind::Switch}};
    t.links = {link("a1", "a", "s1", 10), link("b1", "s1", "b", 10), link("a2", "a", "s2", 30), link("b2", "s2", "b", 30),
               link("spare", "s1", "s2", 1)};
    Fabric f(t, 1);
    auto m0 = msg(0.0);
    CHECK(arrival(f.submit(m0)) == doctest::Approx(0.020));

    // An unused link going down changes nothing.
    f.reconfigure({LinkChange::Kind::LinkDown, "spare", {}, {}, {}});
    auto m1 = msg(1.0);
    CHECK(arrival(f.submit(m1)) == doctest::Approx(1.020));

    f.reconfigure({LinkChange::Kind::LinkDown, "b1", {}, {}, {}});
    auto m2 = msg(2.0);
    CHECK(arrival(f.submit(m2)) == doctest::Approx(2.060));

    f.reconfigure({LinkChange::Kind::LinkDown, "b2", {}, {}, {}});
    auto m3 = msg(3.0);
    const auto out = f.submit(m3);
    REQUIRE(std::holds_alternative<Dropped>(out));
    // Every path is cut by a down link: blamed on the first one on the nominal route.
    CHECK(std::get<Dropped>(out).reason == DropReason::LinkDown);
    CHECK(std::get<Dropped>(out).link == "b1");
    CHECK(f.counters().link_down == 1);

    auto stray = msg(4.0, "a", "nowhere");
    const auto none = f.submit(stray);
    REQUIRE(std::holds_alternative<Dropped>(none));
    CHECK(std::get<Dropped>(none).reason == DropReason::NoRoute);

    CHECK_THROWS_AS(f.reconfigure({LinkChange::Kind::LinkUp, "nope", {}, {}, {}}), UnknownLink);
}

TEST_CASE("topology checks and json")
{
    auto t = chain();
    CHECK(check_topology(t).empty());
    CHECK(topology_from_json(topology_to_json(t)) == t);
    t.links.push_back(link("l3", "a", "ghost", 1));
    t.links.push_back(link("l4", "a", "b", -1));
    CHECK(check_topology(t).size() >= 2);
}
