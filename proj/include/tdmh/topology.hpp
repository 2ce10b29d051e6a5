#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "graph.hpp"
#include "netconfig.hpp"
#include "rng.hpp"
#include "scheduler.hpp"

namespace tdmh {

// Fixed-size neighbor bitmask, ceil(maxNodes/8) bytes on the wire.
class NeighborBitmask {
public:
    NeighborBitmask() = default;
    explicit NeighborBitmask(uint16_t maxNodes);

    void set(NodeId n);
    void clear(NodeId n);
    bool test(NodeId n) const;
    uint16_t maxNodes() const { return maxNodes_; }
    size_t sizeBytes() const { return bytes_.size(); }
    const std::vector<uint8_t>& bytes() const { return bytes_; }
    std::vector<NodeId> setBits() const;
    bool anySet() const;

    static NeighborBitmask fromBytes(std::span<const uint8_t> bytes, uint16_t maxNodes);

    bool operator==(const NeighborBitmask&) const = default;

private:
    uint16_t maxNodes_ = 0;
    std::vector<uint8_t> bytes_;
};

// A topology record travelling towards the master: a node id, that node's
// neighbor bitmask and the origin's version stamp. Copies of one record can
// take different forwarding routes and overtake each other; the stamp lets
// receivers ignore out-of-date rewrites.
struct ForwardedTopology {
    NodeId nodeId = 0;
    uint8_t version = 0;
    NeighborBitmask neighbors;

    bool operator==(const ForwardedTopology&) const = default;
};

// True when version a is at least as recent as b, within a wrapping window.
inline bool versionAtLeast(uint8_t a, uint8_t b) {
    return int8_t(a - b) >= 0;
}

// What a node broadcasts in its uplink slot. forwardee == nodeId means the
// node knows no neighbor with a lower hop yet. The version increments
// whenever the neighbor bitmask changes.
struct TopologyMessage {
    NodeId nodeId = 0;
    uint8_t hop = 0;
    NodeId forwardee = 0;
    uint8_t version = 0;
    NeighborBitmask neighbors;
    std::vector<ForwardedTopology> forwarded;
    std::vector<StreamManagementElement> smes;

    bool operator==(const TopologyMessage&) const = default;
};

struct OversizeMessageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MalformedMessageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NotMyTurnError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Wire format: nodeId, hop, forwardee, forwardedCount, smeCount, neighbor
// bitmask, forwarded records (id + bitmask each), SME records.
std::vector<uint8_t> encodeMessage(const TopologyMessage& msg, const NetworkConfiguration& config);
TopologyMessage decodeMessage(std::span<const uint8_t> bytes, const NetworkConfiguration& config);

// Uplink message payload budget and how many forwarded records fit in it
// beside the fixed header and own bitmask.
size_t uplinkMessageBudget(const NetworkConfiguration& config);
size_t forwardCapacity(const NetworkConfiguration& config);

// FIFO of keyed records where re-pushing an existing key refreshes its
// payload in place instead of duplicating the entry.
template <typename K, typename V>
class UpdatableQueue {
public:
    void push(const K& key, const V& value) {
        for (auto& e : entries_) {
            if (e.first == key) {
                e.second = value;
                return;
            }
        }
        entries_.emplace_back(key, value);
    }
    V* find(const K& key) {
        for (auto& e : entries_)
            if (e.first == key) return &e.second;
        return nullptr;
    }
    std::vector<V> popFront(size_t n) {
        std::vector<V> out;
        while (n-- && !entries_.empty()) {
            out.push_back(entries_.front().second);
            entries_.pop_front();
        }
        return out;
    }
    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

private:
    std::deque<std::pair<K, V>> entries_;
};

// Per-node view of the topology collection algorithm. Advanced by pure calls
// from the owner (the simulator or a test); holds no shared state.
class NodeTopologyState {
public:
    NodeTopologyState() = default;
    NodeTopologyState(NodeId id, const NetworkConfiguration& config);

    NodeId myId() const { return myId_; }
    std::optional<uint8_t> myHop() const { return myHop_; }

    // Hop learned from the latest flood. Hop 1 also implies a direct link to
    // the master, the only flood-derived adjacency.
    void onFloodReceived(uint8_t hop);

    // True when the node may use its uplink slot (it has a hop).
    bool canTransmit() const { return myHop_.has_value(); }

    // Builds this node's uplink message: own id/hop/neighbors, a randomly
    // drawn lower-hop forwardee (self if none known), up to forwardCapacity
    // queued records and as many pending SMEs as fit the budget.
    TopologyMessage buildUplinkMessage(uint64_t roundSlotIndex, Rng& rng);

    // Integrates an overheard message: refreshes the direct link to the
    // sender, rewrites the sender's claimed adjacency, and if this node is
    // the forwardee queues the sender's record, its forwarded records and
    // its SMEs.
    void processOverheard(const TopologyMessage& msg);

    // Called after every uplink slot, whether or not something was heard.
    // Direct neighbors not overheard for topologyExpiryRounds consecutive
    // turns are dropped together with every link they reported.
    void onSlotElapsed(NodeId slotOwner, bool overheard);

    // Stream requests originated by this node; re-attached to every uplink
    // message until markStreamSatisfied.
    void requestStream(const StreamManagementElement& sme);
    void markStreamSatisfied(NodeId dst);
    const std::vector<StreamManagementElement>& pendingOwnSmes() const { return ownSmes_; }

    NeighborBitmask neighborBitmask() const;
    const std::set<Link>& knownLinks() const { return knownLinks_; }
    size_t forwardQueueSize() const { return forwardQueue_.size(); }
    std::vector<NodeId> directNeighbors() const;

private:
    struct NeighborEntry {
        uint8_t hop = 0;
        uint32_t missedTurns = 0;
    };
    struct ForwardedMemo {
        uint8_t version = 0;
        uint64_t turn = 0;
    };

    void rewriteClaims(NodeId owner, const NeighborBitmask& claimed);
    void enqueueForForwarding(const ForwardedTopology& record);

    NodeId myId_ = 0;
    uint16_t maxNodes_ = 0;
    uint32_t expiryRounds_ = 3;
    size_t forwardCapacity_ = 0;
    size_t messageBudget_ = 0;
    size_t bitmaskBytes_ = 0;
    uint64_t refreshTurns_ = 6;
    uint64_t turnCounter_ = 0;
    uint8_t myVersion_ = 0;
    NeighborBitmask lastOwnBitmask_;
    std::optional<uint8_t> myHop_;
    std::map<NodeId, NeighborEntry> neighborTable_;
    std::set<Link> knownLinks_;
    UpdatableQueue<NodeId, ForwardedTopology> forwardQueue_;
    std::map<NodeId, ForwardedMemo> lastForwarded_;
    std::deque<StreamManagementElement> relayedSmes_;
    std::vector<StreamManagementElement> ownSmes_; // pending until satisfied
};

// The master's view: the collected network graph plus the SME inbox for the
// scheduler. A link is governed by the most recent report of either endpoint;
// directly overheard neighbors additionally expire after
// topologyExpiryRounds silent turns.
class MasterGraphState {
public:
    MasterGraphState() = default;
    explicit MasterGraphState(const NetworkConfiguration& config);

    void processUplink(const TopologyMessage& msg);
    void onSlotElapsed(NodeId slotOwner, bool overheard);

    const std::set<Link>& links() const { return links_; }
    NetworkGraph graph() const;
    bool hasLink(NodeId a, NodeId b) const;

    std::vector<StreamManagementElement> drainSmes();
    size_t pendingSmes() const { return smeInbox_.size(); }

private:
    void integrateClaim(NodeId owner, uint8_t version, const NeighborBitmask& claimed,
                        bool direct);
    void rewriteClaims(NodeId owner, const NeighborBitmask& claimed);

    uint16_t maxNodes_ = 0;
    uint32_t expiryRounds_ = 3;
    std::map<NodeId, uint32_t> directMisses_;    // overheard neighbors
    std::map<NodeId, uint8_t> claimVersions_;    // latest integrated record per origin
    std::set<Link> links_;
    std::vector<StreamManagementElement> smeInbox_;
};

} // namespace tdmh
