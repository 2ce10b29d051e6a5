#include "tdmh/topology.hpp"

#include <algorithm>

namespace tdmh {

NeighborBitmask::NeighborBitmask(uint16_t maxNodes)
    : maxNodes_(maxNodes), bytes_((maxNodes + 7) / 8, 0) {}

void NeighborBitmask::set(NodeId n) {
    bytes_.at(n / 8) |= uint8_t(1u << (n % 8));
}

void NeighborBitmask::clear(NodeId n) {
    bytes_.at(n / 8) &= uint8_t(~(1u << (n % 8)));
}

bool NeighborBitmask::test(NodeId n) const {
    if (n >= maxNodes_) return false;
    return bytes_[n / 8] & (1u << (n % 8));
}

std::vector<NodeId> NeighborBitmask::setBits() const {
    std::vector<NodeId> out;
    for (uint16_t n = 0; n < maxNodes_; n++)
        if (test(static_cast<NodeId>(n))) out.push_back(static_cast<NodeId>(n));
    return out;
}

bool NeighborBitmask::anySet() const {
    for (uint8_t b : bytes_)
        if (b) return true;
    return false;
}

NeighborBitmask NeighborBitmask::fromBytes(std::span<const uint8_t> bytes, uint16_t maxNodes) {
    NeighborBitmask mask(maxNodes);
    if (bytes.size() != mask.sizeBytes())
        throw MalformedMessageError("bitmask size mismatch");
    std::copy(bytes.begin(), bytes.end(), mask.bytes_.begin());
    return mask;
}

// ---- wire format ----------------------------------------------------------

void encodeSme(const StreamManagementElement& sme, std::vector<uint8_t>& out) {
    out.push_back(sme.src);
    out.push_back(sme.dst);
    out.push_back(uint8_t(sme.periodMs));
    out.push_back(uint8_t(sme.periodMs >> 8));
    out.push_back(uint8_t(sme.periodMs >> 16));
    out.push_back(uint8_t(sme.periodMs >> 24));
    out.push_back(sme.spatialRedundancy);
    out.push_back(sme.temporalRedundancy);
    out.push_back(uint8_t(sme.action));
}

StreamManagementElement decodeSme(std::span<const uint8_t> in, size_t& offset) {
    if (offset + smeWireSize > in.size())
        throw MalformedMessageError("truncated stream management element");
    const uint8_t* p = in.data() + offset;
    StreamManagementElement sme;
    sme.src = p[0];
    sme.dst = p[1];
    sme.periodMs = uint32_t(p[2]) | uint32_t(p[3]) << 8 | uint32_t(p[4]) << 16 |
                   uint32_t(p[5]) << 24;
    sme.spatialRedundancy = p[6];
    sme.temporalRedundancy = p[7];
    if (p[8] > 1) throw MalformedMessageError("bad stream action");
    sme.action = static_cast<SmeAction>(p[8]);
    offset += smeWireSize;
    return sme;
}

size_t uplinkMessageBudget(const NetworkConfiguration& config) {
    return size_t(config.uplinkFramesPerSlot) * config.dataFrameSizeBytes;
}

namespace {
// nodeId, hop, forwardee, version, fwdCount, smeCount
constexpr size_t messageHeaderSize = 6;
constexpr size_t forwardedRecordOverhead = 2; // nodeId, version
}

size_t forwardCapacity(const NetworkConfiguration& config) {
    size_t bitmaskBytes = (config.maxNodes + 7) / 8;
    size_t budget = uplinkMessageBudget(config);
    size_t fixed = messageHeaderSize + bitmaskBytes;
    if (budget <= fixed) return 0;
    return (budget - fixed) / (forwardedRecordOverhead + bitmaskBytes);
}

std::vector<uint8_t> encodeMessage(const TopologyMessage& msg,
                                   const NetworkConfiguration& config) {
    size_t bitmaskBytes = (config.maxNodes + 7) / 8;
    if (msg.forwarded.size() > 255 || msg.smes.size() > 255)
        throw OversizeMessageError("too many records for one-byte counts");

    std::vector<uint8_t> out;
    out.push_back(msg.nodeId);
    out.push_back(msg.hop);
    out.push_back(msg.forwardee);
    out.push_back(msg.version);
    out.push_back(uint8_t(msg.forwarded.size()));
    out.push_back(uint8_t(msg.smes.size()));
    if (msg.neighbors.sizeBytes() != bitmaskBytes)
        throw OversizeMessageError("own bitmask sized for a different network");
    out.insert(out.end(), msg.neighbors.bytes().begin(), msg.neighbors.bytes().end());
    for (const ForwardedTopology& fwd : msg.forwarded) {
        out.push_back(fwd.nodeId);
        out.push_back(fwd.version);
        if (fwd.neighbors.sizeBytes() != bitmaskBytes)
            throw OversizeMessageError("forwarded bitmask sized for a different network");
        out.insert(out.end(), fwd.neighbors.bytes().begin(), fwd.neighbors.bytes().end());
    }
    for (const StreamManagementElement& sme : msg.smes) encodeSme(sme, out);

    if (out.size() > uplinkMessageBudget(config))
        throw OversizeMessageError("message exceeds uplink slot budget");
    return out;
}

TopologyMessage decodeMessage(std::span<const uint8_t> bytes,
                              const NetworkConfiguration& config) {
    size_t bitmaskBytes = (config.maxNodes + 7) / 8;
    if (bytes.size() < messageHeaderSize + bitmaskBytes)
        throw MalformedMessageError("message shorter than fixed header");

    TopologyMessage msg;
    msg.nodeId = bytes[0];
    msg.hop = bytes[1];
    msg.forwardee = bytes[2];
    msg.version = bytes[3];
    uint8_t fwdCount = bytes[4];
    uint8_t smeCount = bytes[5];
    if (msg.nodeId >= config.maxNodes || msg.forwardee >= config.maxNodes)
        throw MalformedMessageError("node id outside configured range");

    size_t offset = messageHeaderSize;
    msg.neighbors = NeighborBitmask::fromBytes(bytes.subspan(offset, bitmaskBytes),
                                               config.maxNodes);
    offset += bitmaskBytes;
    for (uint8_t i = 0; i < fwdCount; i++) {
        if (offset + forwardedRecordOverhead + bitmaskBytes > bytes.size())
            throw MalformedMessageError("truncated forwarded record");
        ForwardedTopology fwd;
        fwd.nodeId = bytes[offset];
        fwd.version = bytes[offset + 1];
        if (fwd.nodeId >= config.maxNodes)
            throw MalformedMessageError("forwarded node id outside configured range");
        offset += forwardedRecordOverhead;
        fwd.neighbors = NeighborBitmask::fromBytes(bytes.subspan(offset, bitmaskBytes),
                                                   config.maxNodes);
        offset += bitmaskBytes;
        msg.forwarded.push_back(std::move(fwd));
    }
    for (uint8_t i = 0; i < smeCount; i++) msg.smes.push_back(decodeSme(bytes, offset));
    if (offset != bytes.size()) throw MalformedMessageError("trailing bytes");
    return msg;
}

// ---- per-node state -------------------------------------------------------

NodeTopologyState::NodeTopologyState(NodeId id, const NetworkConfiguration& config)
    : myId_(id),
      maxNodes_(config.maxNodes),
      expiryRounds_(config.topologyExpiryRounds),
      forwardCapacity_(forwardCapacity(config)),
      messageBudget_(uplinkMessageBudget(config)),
      bitmaskBytes_((config.maxNodes + 7) / 8) {
    // how often an unchanged record is re-forwarded anyway: long enough not
    // to crowd out first-time records, short enough to survive frame loss
    uint64_t rotation =
        forwardCapacity_ ? (uint64_t(maxNodes_) + forwardCapacity_ - 1) / forwardCapacity_ : 1;
    refreshTurns_ = std::max<uint64_t>(2 * expiryRounds_, rotation);
}

void NodeTopologyState::onFloodReceived(uint8_t hop) {
    myHop_ = hop;
    if (hop == 1) {
        // Receiving the first flood wave is direct evidence of a master link.
        neighborTable_[masterNodeId].hop = 0;
        neighborTable_[masterNodeId].missedTurns = 0;
        knownLinks_.insert(Link(myId_, masterNodeId));
    } else if (neighborTable_.count(masterNodeId)) {
        neighborTable_.erase(masterNodeId);
        knownLinks_.erase(Link(myId_, masterNodeId));
    }
}

NeighborBitmask NodeTopologyState::neighborBitmask() const {
    NeighborBitmask mask(maxNodes_);
    for (auto& [id, entry] : neighborTable_) mask.set(id);
    return mask;
}

std::vector<NodeId> NodeTopologyState::directNeighbors() const {
    std::vector<NodeId> out;
    for (auto& [id, entry] : neighborTable_) out.push_back(id);
    return out;
}

TopologyMessage NodeTopologyState::buildUplinkMessage(uint64_t roundSlotIndex, Rng& rng) {
    if (uplinkNodeForSlot(roundSlotIndex, maxNodes_) != myId_)
        throw NotMyTurnError("slot " + std::to_string(roundSlotIndex) + " is not owned by node " +
                             std::to_string(myId_));
    turnCounter_++;

    TopologyMessage msg;
    msg.nodeId = myId_;
    msg.hop = myHop_.value_or(0);
    msg.neighbors = neighborBitmask();
    if (!(msg.neighbors == lastOwnBitmask_)) {
        myVersion_++;
        lastOwnBitmask_ = msg.neighbors;
    }
    msg.version = myVersion_;

    // Forwardee: a uniformly drawn direct neighbor strictly closer to the
    // master, re-drawn at every turn. Own id when none is known yet.
    std::vector<NodeId> candidates;
    for (auto& [id, entry] : neighborTable_)
        if (entry.hop < msg.hop) candidates.push_back(id);
    msg.forwardee = candidates.empty()
                        ? myId_
                        : candidates[rng.uniformInt(uint32_t(candidates.size()))];

    msg.forwarded = forwardQueue_.popFront(forwardCapacity_);
    for (const ForwardedTopology& record : msg.forwarded)
        lastForwarded_[record.nodeId] = {record.version, turnCounter_};

    size_t used = messageHeaderSize + bitmaskBytes_ + msg.forwarded.size() * (1 + bitmaskBytes_);
    auto tryAttach = [&](const StreamManagementElement& sme) {
        if (used + smeWireSize > messageBudget_ || msg.smes.size() >= 255) return false;
        msg.smes.push_back(sme);
        used += smeWireSize;
        return true;
    };
    for (const auto& sme : ownSmes_)
        if (!tryAttach(sme)) break;
    while (!relayedSmes_.empty() && tryAttach(relayedSmes_.front()))
        relayedSmes_.pop_front();
    return msg;
}

void NodeTopologyState::rewriteClaims(NodeId owner, const NeighborBitmask& claimed) {
    // The owner's freshest report governs every link it can sense, except the
    // one to this node, which we just sensed ourselves.
    for (uint16_t z = 0; z < maxNodes_; z++) {
        if (z == owner || z == myId_) continue;
        Link link(owner, z);
        if (claimed.test(static_cast<NodeId>(z))) knownLinks_.insert(link);
        else knownLinks_.erase(link);
    }
}

void NodeTopologyState::enqueueForForwarding(const ForwardedTopology& record) {
    if (record.nodeId == myId_) return;
    if (ForwardedTopology* held = forwardQueue_.find(record.nodeId)) {
        // refresh in place, but never let a stale copy overwrite a newer one
        if (versionAtLeast(record.version, held->version)) *held = record;
        return;
    }
    // a version that went out recently would only crowd the queue
    auto memo = lastForwarded_.find(record.nodeId);
    if (memo != lastForwarded_.end() && !versionAtLeast(record.version, memo->second.version + 1) &&
        turnCounter_ - memo->second.turn < refreshTurns_)
        return;
    forwardQueue_.push(record.nodeId, record);
}

void NodeTopologyState::processOverheard(const TopologyMessage& msg) {
    if (msg.nodeId == myId_) return;
    auto& entry = neighborTable_[msg.nodeId];
    entry.hop = msg.hop;
    entry.missedTurns = 0;
    knownLinks_.insert(Link(myId_, msg.nodeId));
    rewriteClaims(msg.nodeId, msg.neighbors);

    if (msg.forwardee == myId_) {
        enqueueForForwarding(ForwardedTopology{msg.nodeId, msg.version, msg.neighbors});
        for (const ForwardedTopology& fwd : msg.forwarded) enqueueForForwarding(fwd);
        for (const StreamManagementElement& sme : msg.smes) relayedSmes_.push_back(sme);
    }
}

void NodeTopologyState::onSlotElapsed(NodeId slotOwner, bool overheard) {
    if (overheard || slotOwner == myId_) return;
    auto it = neighborTable_.find(slotOwner);
    if (it == neighborTable_.end()) return;
    if (++it->second.missedTurns < expiryRounds_) return;
    // Silent for the configured number of turns: drop the neighbor and every
    // link we attributed to it.
    neighborTable_.erase(it);
    for (auto linkIt = knownLinks_.begin(); linkIt != knownLinks_.end();) {
        if (linkIt->touches(slotOwner)) linkIt = knownLinks_.erase(linkIt);
        else ++linkIt;
    }
}

void NodeTopologyState::requestStream(const StreamManagementElement& sme) {
    for (auto& existing : ownSmes_) {
        if (existing.src == sme.src && existing.dst == sme.dst) {
            existing = sme;
            return;
        }
    }
    ownSmes_.push_back(sme);
}

void NodeTopologyState::markStreamSatisfied(NodeId dst) {
    std::erase_if(ownSmes_, [&](const StreamManagementElement& sme) { return sme.dst == dst; });
}

// ---- master state ---------------------------------------------------------

MasterGraphState::MasterGraphState(const NetworkConfiguration& config)
    : maxNodes_(config.maxNodes), expiryRounds_(config.topologyExpiryRounds) {}

void MasterGraphState::rewriteClaims(NodeId owner, const NeighborBitmask& claimed) {
    for (uint16_t z = 0; z < maxNodes_; z++) {
        if (z == owner) continue;
        if (z == masterNodeId) {
            // The master's own observations govern its links; a report can
            // only add one (hop-1 nodes list the master they hear floods from).
            if (claimed.test(masterNodeId)) links_.insert(Link(owner, masterNodeId));
            else if (!directMisses_.count(owner)) links_.erase(Link(owner, masterNodeId));
            continue;
        }
        Link link(owner, z);
        if (claimed.test(static_cast<NodeId>(z))) links_.insert(link);
        else links_.erase(link);
    }
}

void MasterGraphState::integrateClaim(NodeId owner, uint8_t version,
                                      const NeighborBitmask& claimed, bool direct) {
    // forwarded copies can arrive out of order; only the newest rewrite counts
    auto it = claimVersions_.find(owner);
    if (it != claimVersions_.end() && !direct && !versionAtLeast(version, it->second)) return;
    claimVersions_[owner] = version;
    rewriteClaims(owner, claimed);
}

void MasterGraphState::processUplink(const TopologyMessage& msg) {
    if (msg.nodeId == masterNodeId) return;
    directMisses_[msg.nodeId] = 0;
    links_.insert(Link(masterNodeId, msg.nodeId));
    // a direct reception is by definition the freshest word of the sender
    integrateClaim(msg.nodeId, msg.version, msg.neighbors, true);
    for (const ForwardedTopology& fwd : msg.forwarded) {
        if (fwd.nodeId == masterNodeId) continue;
        integrateClaim(fwd.nodeId, fwd.version, fwd.neighbors, false);
    }
    for (const StreamManagementElement& sme : msg.smes) smeInbox_.push_back(sme);
}

void MasterGraphState::onSlotElapsed(NodeId slotOwner, bool overheard) {
    if (overheard) return;
    auto it = directMisses_.find(slotOwner);
    if (it == directMisses_.end()) return;
    if (++it->second < expiryRounds_) return;
    directMisses_.erase(it);
    for (auto linkIt = links_.begin(); linkIt != links_.end();) {
        if (linkIt->touches(slotOwner)) linkIt = links_.erase(linkIt);
        else ++linkIt;
    }
}

NetworkGraph MasterGraphState::graph() const {
    NetworkGraph g;
    g.addNode(masterNodeId);
    for (const Link& link : links_) g.addEdge(link.u, link.v);
    return g;
}

bool MasterGraphState::hasLink(NodeId a, NodeId b) const {
    return links_.count(Link(a, b)) != 0;
}

std::vector<StreamManagementElement> MasterGraphState::drainSmes() {
    std::vector<StreamManagementElement> out;
    out.swap(smeInbox_);
    return out;
}

} // namespace tdmh
