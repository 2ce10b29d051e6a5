#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "graph.hpp"
#include "netconfig.hpp"
#include "rng.hpp"

namespace tdmh {

// Clock synchronization frame flooded by the master. The counter increments
// once per synchronization period, so counter * period is the global time.
struct SyncFrame {
    uint32_t counter = 0;
    uint32_t hopCounter = 0;
};

uint64_t globalTimeMs(uint32_t counter, uint32_t syncPeriodMs);

// Result of one constructive-interference flood: which nodes received the
// frame and at which hop of the wavefront. The initiator is hop 0.
struct FloodOutcome {
    std::map<uint16_t, uint32_t> hops;

    bool received(uint16_t node) const { return hops.count(node) != 0; }
    uint32_t hop(uint16_t node) const { return hops.at(node); }
};

// Breadth-first flood wave from the initiator. At wave k every hop-(k-1)
// holder rebroadcasts; a node receives if at least one of those transmissions
// succeeds (independent Bernoulli per link). Concurrent same-wave senders
// reinforce each other, they never collide. Stops after maxHops waves.
FloodOutcome runFlood(const NetworkGraph& graph, uint16_t initiator,
                      uint32_t maxHops, Rng& rng);

// A new schedule as it travels the downlink floods.
struct SchedulePacket {
    uint32_t scheduleId = 0;
    uint64_t activationTile = 0;
    std::vector<uint8_t> body;
};

// Floods the packet `repetitions` times; a node holds the schedule when at
// least one repetition reached it.
std::map<uint16_t, bool> disseminateSchedule(const NetworkGraph& graph,
                                             uint16_t initiator, uint32_t maxHops,
                                             uint32_t repetitions, Rng& rng);

} // namespace tdmh
