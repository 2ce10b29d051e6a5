#include <doctest.h>

#include <cmath>

#include "tdmh/flood.hpp"

using namespace tdmh;

namespace {

// The four node example network: master 0, nodes 1 and 2 in range of the
// master and of each other, node 3 behind them.
NetworkGraph fourNodeGraph() {
    NetworkGraph g;
    g.addEdge(0, 1);
    g.addEdge(0, 2);
    g.addEdge(1, 2);
    g.addEdge(1, 3);
    g.addEdge(2, 3);
    return g;
}

NetworkGraph randomConnectedGraph(uint16_t nodes, double extraEdgeProbability, Rng& rng) {
    NetworkGraph g;
    for (uint16_t n = 1; n < nodes; n++) g.addEdge(n, uint16_t(rng.uniformInt(n)));
    for (uint16_t u = 0; u < nodes; u++)
        for (uint16_t v = u + 1; v < nodes; v++)
            if (!g.hasEdge(u, v) && rng.bernoulli(extraEdgeProbability)) g.addEdge(u, v);
    return g;
}

} // namespace

TEST_CASE("global time is the counter times the period") {
    CHECK(globalTimeMs(0, 10000) == 0);
    CHECK(globalTimeMs(6, 10000) == 60000);
    // largest counter must not wrap
    CHECK(globalTimeMs(0xffffffffu, 10000) == 42949672950000ull);
}

TEST_CASE("flood over the four node network assigns the expected hops") {
    Rng rng(1);
    FloodOutcome outcome = runFlood(fourNodeGraph(), 0, 6, rng);
    CHECK(outcome.hop(0) == 0);
    CHECK(outcome.hop(1) == 1);
    CHECK(outcome.hop(2) == 1);
    CHECK(outcome.hop(3) == 2);
}

TEST_CASE("flood in a single node network covers only the initiator") {
    NetworkGraph g;
    g.addNode(0);
    Rng rng(1);
    FloodOutcome outcome = runFlood(g, 0, 6, rng);
    CHECK(outcome.hops.size() == 1);
    CHECK(outcome.received(0));
}

TEST_CASE("a dead link stops the wave") {
    NetworkGraph g;
    g.addEdge(0, 1, 1.0);
    g.addEdge(1, 2, 0.0);
    Rng rng(7);
    FloodOutcome outcome = runFlood(g, 0, 6, rng);
    CHECK(outcome.received(1));
    CHECK(outcome.hop(1) == 1);
    CHECK(!outcome.received(2));
}

TEST_CASE("hops equal shortest path distances on reliable graphs") {
    Rng graphRng(42);
    for (int trial = 0; trial < 30; trial++) {
        NetworkGraph g = randomConnectedGraph(uint16_t(4 + graphRng.uniformInt(9)), 0.2, graphRng);
        Rng rng(trial);
        FloodOutcome outcome = runFlood(g, 0, 32, rng);
        auto distances = g.hopDistances(0);
        REQUIRE(outcome.hops.size() == distances.size());
        for (auto& [node, hop] : outcome.hops) CHECK(hop == distances.at(node));
    }
}

TEST_CASE("nodes beyond the hop budget never receive") {
    NetworkGraph g;
    for (uint16_t n = 0; n < 5; n++)
        if (n > 0) g.addEdge(n, n - 1);
    Rng rng(3);
    FloodOutcome outcome = runFlood(g, 0, 2, rng);
    CHECK(outcome.received(1));
    CHECK(outcome.received(2));
    CHECK(!outcome.received(3));
    CHECK(!outcome.received(4));
    for (auto& [node, hop] : outcome.hops) CHECK(hop <= 2);
}

TEST_CASE("schedule dissemination") {
    SUBCASE("one lossless repetition reaches everyone") {
        Rng rng(5);
        auto holds = disseminateSchedule(fourNodeGraph(), 0, 6, 1, rng);
        for (auto& [node, has] : holds) CHECK(has);
    }
    SUBCASE("a partitioned node never holds the schedule") {
        NetworkGraph g = fourNodeGraph();
        g.addNode(9);
        Rng rng(5);
        auto holds = disseminateSchedule(g, 0, 6, 5, rng);
        CHECK(!holds.at(9));
        CHECK(holds.at(3));
    }
    SUBCASE("hold probability follows 1-(1-q)^r") {
        // master -- node 1 over a single lossy link: per-flood reach
        // probability is exactly the link reliability
        const double q = 0.4;
        const uint32_t repetitions = 3;
        const int trials = 100000;
        NetworkGraph g;
        g.addEdge(0, 1, q);
        Rng rng(11);
        int held = 0;
        for (int t = 0; t < trials; t++) {
            auto holds = disseminateSchedule(g, 0, 6, repetitions, rng);
            if (holds.at(1)) held++;
        }
        double expected = 1.0 - std::pow(1.0 - q, repetitions);
        CHECK(std::abs(double(held) / trials - expected) < 0.02);
    }
}
