#include "tdmh/flood.hpp"

namespace tdmh {

uint64_t globalTimeMs(uint32_t counter, uint32_t syncPeriodMs) {
    return uint64_t(counter) * uint64_t(syncPeriodMs);
}

FloodOutcome runFlood(const NetworkGraph& graph, uint16_t initiator,
                      uint32_t maxHops, Rng& rng) {
    FloodOutcome outcome;
    if (!graph.hasNode(initiator)) return outcome;
    outcome.hops[initiator] = 0;

    std::vector<uint16_t> wave{initiator};
    for (uint32_t hop = 1; hop <= maxHops && !wave.empty(); hop++) {
        // Every node that received at the previous wave rebroadcasts now.
        // Links are drawn in (sender, receiver) ascending order so a run is
        // reproducible from the seed.
        std::vector<uint16_t> next;
        for (uint16_t sender : wave) {
            for (uint16_t receiver : graph.neighbors(sender)) {
                bool arrived = rng.bernoulli(graph.reliability(sender, receiver));
                if (!arrived || outcome.hops.count(receiver)) continue;
                outcome.hops[receiver] = hop;
                next.push_back(receiver);
            }
        }
        wave = std::move(next);
    }
    return outcome;
}

std::map<uint16_t, bool> disseminateSchedule(const NetworkGraph& graph,
                                             uint16_t initiator, uint32_t maxHops,
                                             uint32_t repetitions, Rng& rng) {
    std::map<uint16_t, bool> holds;
    for (uint16_t n : graph.nodes()) holds[n] = false;
    for (uint32_t r = 0; r < repetitions; r++) {
        FloodOutcome outcome = runFlood(graph, initiator, maxHops, rng);
        for (auto& [node, hop] : outcome.hops) holds[node] = true;
    }
    return holds;
}

} // namespace tdmh
