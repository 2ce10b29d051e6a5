#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "graph.hpp"
#include "netconfig.hpp"

namespace tdmh {

enum class SmeAction : uint8_t { Open, Close };

// Control record a node sends towards the master to open or close a stream.
// Travels in uplink slots like forwarded topologies.
struct StreamManagementElement {
    NodeId src = 0;
    NodeId dst = 0;
    uint32_t periodMs = 0;
    uint8_t spatialRedundancy = 1;  // routed path copies
    uint8_t temporalRedundancy = 1; // retransmissions per hop
    SmeAction action = SmeAction::Open;

    bool operator==(const StreamManagementElement&) const = default;
};

constexpr size_t smeWireSize = 9;
void encodeSme(const StreamManagementElement& sme, std::vector<uint8_t>& out);
StreamManagementElement decodeSme(std::span<const uint8_t> in, size_t& offset);

enum class StreamState : uint8_t { Requested, Scheduled, Rejected };

// Unidirectional periodic logical link between two nodes.
struct Stream {
    uint16_t id = 0;
    NodeId src = 0;
    NodeId dst = 0;
    uint32_t periodMs = 0;
    uint8_t spatialRedundancy = 1;
    uint8_t temporalRedundancy = 1;
    StreamState state = StreamState::Requested;

    bool operator==(const Stream&) const = default;
};

// One frame sent from `sender` to `receiver` in data slot `slot` of the data
// superframe.
struct Transmission {
    NodeId sender = 0;
    NodeId receiver = 0;
    uint32_t slot = 0;

    auto operator<=>(const Transmission&) const = default;
};

// Canonical in-path order.
inline bool slotOrder(const Transmission& a, const Transmission& b) {
    if (a.slot != b.slot) return a.slot < b.slot;
    if (a.sender != b.sender) return a.sender < b.sender;
    return a.receiver < b.receiver;
}

// One routed copy of a stream, index z among its redundant siblings.
struct Path {
    NodeId src = 0;
    NodeId dst = 0;
    uint32_t periodTiles = 1;
    uint8_t index = 0;
    std::vector<NodeId> nodes;              // src ... dst
    std::vector<Transmission> transmissions; // sorted by slot

    bool operator==(const Path&) const = default;
};

struct Schedule {
    uint32_t scheduleId = 0;
    uint64_t activationTile = 0;
    SlotGrid grid;
    std::vector<Stream> streams;
    std::vector<std::vector<Path>> paths;   // paths[streamIndex][z]
    std::vector<Transmission> orphans;      // not part of any path; invalid

    uint32_t superframeTiles() const { return grid.superframeTiles; }
    size_t transmissionCount() const;
    bool operator==(const Schedule&) const = default;
};

struct UnreachableError : std::runtime_error {
    UnreachableError(uint16_t src, uint16_t dst)
        : std::runtime_error("no route from " + std::to_string(src) + " to " +
                             std::to_string(dst)) {}
};

// Route node sequences from src to dst. The first is the BFS shortest path
// (lowest node id tie break); each further copy is the shortest path
// edge-disjoint from all previous ones when possible, otherwise the path
// sharing the fewest edges. Throws UnreachableError.
std::vector<std::vector<NodeId>> routePaths(const NetworkGraph& graph,
                                            NodeId src, NodeId dst,
                                            uint8_t spatialRedundancy);

// Greedy earliest-slot scheduler. Streams are processed in request order and
// are either fully placed or rejected; placements of earlier streams never
// move. Deterministic for a given input order.
Schedule scheduleStreams(const NetworkGraph& graph,
                         const std::vector<Stream>& requests,
                         const NetworkConfiguration& config);

// Schedule constraint checks, one record per breach.
struct Violation {
    int constraint = 0; // 1..7
    std::string name;
    uint32_t slot = 0;
    std::vector<NodeId> nodes;
    std::string detail;
};

const char* constraintName(int constraint);

// Checks the seven schedule constraints against the graph:
//  1 connectivity            every transmission is over an existing link
//  2 unique-sender-receiver  a node plays at most one role per slot
//  3 concurrent-coexistence  no sender is in range of another's receiver
//  4 unregistered-transmission  every transmission belongs to a path
//  5 periodicity             paths repeat identically in every period instance
//  6 causality               hops of a path happen in order within an instance
//  7 multi-path-transmission a transmission belongs to a single path
std::vector<Violation> verifySchedule(const Schedule& schedule, const NetworkGraph& graph);

// Worst-case delivery latency per stream id, measured in cumulative data slot
// widths from the period instance start to the earliest slot at which any of
// the stream's paths has completed delivery. Never exceeds the period.
std::map<uint16_t, uint32_t> latencyBoundsMs(const Schedule& schedule);

struct MalformedScheduleError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Self-delimiting binary format. Carries the slot grid so a schedule file can
// be verified without the originating configuration.
std::vector<uint8_t> encodeSchedule(const Schedule& schedule);
Schedule decodeSchedule(std::span<const uint8_t> bytes);

// One line per transmission: "slot sender->receiver stream path".
std::string dumpSchedule(const Schedule& schedule);

} // namespace tdmh
