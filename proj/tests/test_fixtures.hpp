#pragma once

#include "tdmh/graph.hpp"
#include "tdmh/netconfig.hpp"
#include "tdmh/rng.hpp"
#include "tdmh/scheduler.hpp"

namespace tdmh::fixtures {

// 100 ms tiles, one downlink and one uplink tile per control superframe,
// 6 ms data slots, 32 nodes, 6 hops.
inline NetworkConfiguration referenceConfig() {
    NetworkConfiguration config;
    config.tileDurationMs = 100;
    config.controlSuperframe = {TileKind::Downlink, TileKind::Uplink};
    config.dataSlotDurationMs = 6;
    config.dataFrameSizeBytes = 125;
    config.maxHops = 6;
    config.maxNodes = 32;
    config.downlinkSlotDurationMs = defaultDownlinkSlotMs(6);
    config.uplinkFramesPerSlot = 1;
    config.uplinkFrameDurationMs = 6;
    return config;
}

// Nine node office deployment with measured link reliabilities.
inline NetworkGraph officeGraph() {
    NetworkGraph g;
    g.addEdge(0, 1, 1.0000);
    g.addEdge(0, 3, 1.0000);
    g.addEdge(0, 5, 1.0000);
    g.addEdge(0, 7, 0.9974);
    g.addEdge(1, 3, 1.0000);
    g.addEdge(1, 5, 0.9334);
    g.addEdge(1, 7, 0.5614);
    g.addEdge(2, 4, 0.9901);
    g.addEdge(2, 6, 0.9258);
    g.addEdge(2, 7, 0.0603);
    g.addEdge(2, 8, 0.9898);
    g.addEdge(3, 5, 0.5509);
    g.addEdge(4, 5, 0.9927);
    g.addEdge(4, 6, 0.1570);
    g.addEdge(4, 7, 0.9883);
    g.addEdge(4, 8, 0.9789);
    g.addEdge(5, 7, 0.9967);
    g.addEdge(5, 8, 0.9352);
    g.addEdge(6, 8, 0.8421);
    g.addEdge(7, 8, 0.9621);
    return g;
}

// The three streams of the redundancy experiment.
inline std::vector<Stream> officeStreams(uint8_t spatialRedundancy) {
    std::vector<Stream> streams;
    auto add = [&](NodeId src, NodeId dst, uint32_t period) {
        Stream s;
        s.id = uint16_t(streams.size());
        s.src = src;
        s.dst = dst;
        s.periodMs = period;
        s.spatialRedundancy = spatialRedundancy;
        s.temporalRedundancy = 1;
        streams.push_back(s);
    };
    add(3, 0, 100);
    add(6, 0, 200);
    add(4, 0, 200);
    return streams;
}

inline NetworkGraph randomConnectedGraph(uint16_t nodes, double extraEdgeProbability,
                                         Rng& rng) {
    NetworkGraph g;
    for (uint16_t n = 1; n < nodes; n++) g.addEdge(n, uint16_t(rng.uniformInt(n)));
    for (uint16_t u = 0; u < nodes; u++)
        for (uint16_t v = u + 1; v < nodes; v++)
            if (!g.hasEdge(u, v) && rng.bernoulli(extraEdgeProbability)) g.addEdge(u, v);
    return g;
}

inline std::vector<Stream> randomStreams(const NetworkGraph& graph, uint16_t count,
                                         const NetworkConfiguration& config, Rng& rng) {
    auto nodes = graph.nodes();
    std::vector<uint32_t> periods{config.tileDurationMs, 2 * config.tileDurationMs,
                                  5 * config.tileDurationMs};
    std::vector<Stream> streams;
    for (uint16_t i = 0; i < count; i++) {
        Stream s;
        s.id = i;
        s.src = NodeId(nodes[rng.uniformInt(uint32_t(nodes.size()))]);
        do {
            s.dst = NodeId(nodes[rng.uniformInt(uint32_t(nodes.size()))]);
        } while (s.dst == s.src);
        s.periodMs = periods[rng.uniformInt(uint32_t(periods.size()))];
        s.spatialRedundancy = uint8_t(1 + rng.uniformInt(2));
        s.temporalRedundancy = uint8_t(1 + rng.uniformInt(2));
        streams.push_back(s);
    }
    return streams;
}

} // namespace tdmh::fixtures
