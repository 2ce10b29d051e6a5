#include "tdmh/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tdmh {

// ---- power model ------------------------------------------------------------

namespace {

struct ControlDuty {
    double radioMaMs = 0;  // current * ms charge per control superframe
    double activeMs = 0;   // radio-on time per control superframe
    double superframeMs = 0;
};

ControlDuty controlDuty(const NetworkConfiguration& config, double connectivityFraction,
                        const CurrentModel& model) {
    ControlDuty duty;
    duty.superframeMs = config.controlSuperframeDurationMs();
    double ownSlotShare = 1.0 / double(config.maxNodes - 1);
    for (TileKind kind : config.controlSuperframe) {
        if (kind == TileKind::Downlink) {
            // one receive and one rebroadcast per flood
            double rx = floodPerHopMs, tx = floodPerHopMs;
            duty.radioMaMs += rx * model.iRxMa + tx * model.iTxMa;
            duty.activeMs += rx + tx;
        } else {
            double slotMs = config.uplinkSlotDurationMs();
            double senseMs = model.senseWindowFraction * config.uplinkFrameDurationMs;
            // own turn: transmit the whole slot; otherwise overhear it or give
            // up after the sense window
            double own = ownSlotShare * slotMs * model.iTxMa;
            double listen = (1.0 - ownSlotShare) *
                            (connectivityFraction * slotMs * model.iRxMa +
                             (1.0 - connectivityFraction) * senseMs * model.iRxMa);
            duty.radioMaMs += own + listen;
            duty.activeMs += ownSlotShare * slotMs +
                             (1.0 - ownSlotShare) *
                                 (connectivityFraction * slotMs +
                                  (1.0 - connectivityFraction) * senseMs);
        }
    }
    return duty;
}

double combinePower(const ControlDuty& duty, double dataMaMs, double dataActiveMs,
                    double dataHorizonMs, const CurrentModel& model) {
    double controlAvg = duty.radioMaMs / duty.superframeMs;
    double controlActiveFraction = duty.activeMs / duty.superframeMs;
    double dataAvg = dataHorizonMs > 0 ? dataMaMs / dataHorizonMs : 0.0;
    double dataActiveFraction = dataHorizonMs > 0 ? dataActiveMs / dataHorizonMs : 0.0;
    double sleepFraction = 1.0 - controlActiveFraction - dataActiveFraction;
    return model.iTimebaseMa + controlAvg + dataAvg + sleepFraction * model.iSleepMa;
}

} // namespace

double estimatePower(const NetworkConfiguration& config, double dataLoadFraction,
                     double connectivityFraction, const CurrentModel& model) {
    ControlDuty duty = controlDuty(config, connectivityFraction, model);
    double slotMs = config.dataSlotDurationMs;
    double dataSlots = 0;
    for (TileKind kind : config.controlSuperframe)
        dataSlots += slotLayout(config, kind).dataSlotCount;
    double activeSlots = dataLoadFraction * dataSlots;
    // active data slots split evenly between transmit and receive
    double dataMaMs = activeSlots * slotMs * (model.iTxMa + model.iRxMa) / 2.0;
    double dataActiveMs = activeSlots * slotMs;
    return combinePower(duty, dataMaMs, dataActiveMs, duty.superframeMs, model);
}

double estimatePower(const NetworkConfiguration& config, const NodeSlotProgram& program,
                     double connectivityFraction, const CurrentModel& model) {
    ControlDuty duty = controlDuty(config, connectivityFraction, model);
    double slotMs = config.dataSlotDurationMs;
    uint64_t txSlots = 0, rxSlots = 0;
    for (const SlotAction& a : program.actions) {
        switch (a.kind) {
            case SlotActionKind::SendFromApp:
            case SlotActionKind::Forward: txSlots++; break;
            case SlotActionKind::ReceiveAndBuffer:
            case SlotActionKind::ReceiveToApp: rxSlots++; break;
            default: break;
        }
    }
    double horizonMs = double(program.grid.superframeTiles) * program.grid.tileDurationMs;
    double dataMaMs = slotMs * (double(txSlots) * model.iTxMa + double(rxSlots) * model.iRxMa);
    double dataActiveMs = slotMs * double(txSlots + rxSlots);
    return combinePower(duty, dataMaMs, dataActiveMs, horizonMs, model);
}

// ---- hexagonal generator ----------------------------------------------------

NetworkGraph makeHexagonalGraph(uint16_t nodeCount, IdAssignment assignment) {
    if (nodeCount < 2) throw InvalidScenarioError("hexagonal graph needs at least 2 nodes");
    struct Cell {
        int x, y, z;
    };
    uint32_t radius = 0;
    while (1 + 3 * radius * (radius + 1) < nodeCount) radius++;

    Cell corner{int(radius), -int(radius), 0};
    auto dist = [](const Cell& a, const Cell& b) {
        return std::max({std::abs(a.x - b.x), std::abs(a.y - b.y), std::abs(a.z - b.z)});
    };

    std::vector<Cell> cells;
    int r = int(radius);
    for (int x = -r; x <= r; x++)
        for (int y = std::max(-r, -x - r); y <= std::min(r, -x + r); y++)
            cells.push_back({x, y, -x - y});
    std::sort(cells.begin(), cells.end(), [&](const Cell& a, const Cell& b) {
        int da = dist(a, corner), db = dist(b, corner);
        if (da != db) return da < db;
        if (a.x != b.x) return a.x < b.x;
        return a.y < b.y;
    });
    cells.resize(nodeCount);

    // ids by distance rank: Forward puts low ids near the master, Reverse
    // gives the farthest node id 1
    std::vector<uint16_t> ids(nodeCount);
    ids[0] = 0;
    for (uint16_t i = 1; i < nodeCount; i++)
        ids[i] = assignment == IdAssignment::Forward ? i : uint16_t(nodeCount - i);

    NetworkGraph graph;
    for (uint16_t i = 0; i < nodeCount; i++) graph.addNode(ids[i]);
    constexpr std::array<std::array<int, 3>, 6> dirs{
        {{1, -1, 0}, {1, 0, -1}, {0, 1, -1}, {-1, 1, 0}, {-1, 0, 1}, {0, -1, 1}}};
    auto indexOf = [&](const Cell& c) -> int {
        for (size_t i = 0; i < cells.size(); i++)
            if (cells[i].x == c.x && cells[i].y == c.y) return int(i);
        return -1;
    };
    for (uint16_t i = 0; i < nodeCount; i++) {
        for (const auto& d : dirs) {
            Cell peer{cells[i].x + d[0], cells[i].y + d[1], cells[i].z + d[2]};
            int j = indexOf(peer);
            if (j >= 0 && j > int(i)) graph.addEdge(ids[i], ids[j], 1.0);
        }
    }
    return graph;
}

// ---- simulator ---------------------------------------------------------------

namespace {

struct StreamTally {
    uint64_t delivered = 0;
    uint64_t elapsed = 0;
    bool pendingDelivered = false;
    uint64_t pendingInstance = 0;
};

class Simulator {
public:
    explicit Simulator(const Scenario& scenario)
        : sc_(scenario), config_(scenario.config), rng_(scenario.seed),
          master_(scenario.config) {}

    Metrics run();

private:
    void validateScenario() const;
    void applyFaultsUpTo(uint64_t timeMs);
    void rebuildAliveGraph();
    void downlinkTile(uint64_t tile, uint64_t timeMs);
    void uplinkTile(uint64_t tile, uint64_t timeMs);
    void dataTile(uint64_t tile, uint64_t timeMs);
    void computeSchedule(uint64_t tile, uint64_t timeMs);
    void activateSchedule(uint64_t tile, uint64_t timeMs);
    void crossPeriodBoundaries(uint64_t tile);
    void noteMasterLinks(uint64_t timeMs);
    void checkFormation(uint64_t timeMs);
    NetworkGraph trueGraph() const;
    void trace(uint64_t timeMs, const std::string& text);
    void finalize(uint64_t endMs);

    const Scenario& sc_;
    NetworkConfiguration config_;
    Rng rng_;

    std::set<uint16_t> alive_;
    NetworkGraph physical_;
    NetworkGraph aliveGraph_;
    bool aliveGraphStale_ = true;
    size_t nextFault_ = 0;

    std::map<uint16_t, NodeTopologyState> nodes_;
    MasterGraphState master_;
    std::set<Link> knownMasterLinks_;

    // master-side stream table, grown in request order and never reordered
    std::vector<Stream> streamTable_;
    std::map<std::pair<NodeId, NodeId>, size_t> streamIndex_;
    std::vector<StreamTally> tallies_;
    size_t nextStreamOpen_ = 0;
    bool topologyDirty_ = false;
    bool streamsDirty_ = false;

    uint32_t nextScheduleId_ = 1;
    std::optional<Schedule> active_;
    NetworkGraph activeGraph_; // the graph the active schedule was verified on
    uint64_t activationTile_ = 0;
    std::vector<size_t> activeTableIndex_;   // schedule stream idx -> table idx
    std::vector<uint32_t> activePeriodTiles_;
    std::map<uint16_t, NodeSlotProgram> programs_;
    std::map<uint16_t, NodeDataState> dataStates_;

    std::optional<Schedule> pending_;          // master's own copy
    NetworkGraph pendingGraph_;
    std::optional<SchedulePacket> pendingPacket_; // what the floods carry
    std::vector<size_t> pendingTableIndex_;
    uint32_t pendingRepetitions_ = 0;
    std::set<uint16_t> pendingHolders_;

    uint64_t uplinkSlotCounter_ = 0;
    uint32_t lastSyncCounter_ = uint32_t(-1);
    std::map<uint16_t, uint64_t> uplinkListened_;
    std::map<uint16_t, uint64_t> uplinkOverheard_;

    // convergence bookkeeping for the first NodeFail fault
    std::map<uint16_t, uint64_t> lastOverhearMs_;
    std::optional<uint16_t> failedNode_;
    std::optional<uint64_t> failTimeMs_;
    std::optional<uint64_t> firstExpiryOfFailedMs_;
    std::optional<uint64_t> masterCleanOfFailedMs_;

    std::map<Link, uint64_t> linkFirstSeenMs_;
    std::map<Link, uint64_t> linkPresentSinceMs_;
    std::map<Link, uint64_t> linkPresentAccumMs_;

    Metrics metrics_;
};

void Simulator::validateScenario() const {
    auto violations = validate(config_);
    if (!violations.empty())
        throw InvalidScenarioError("configuration invalid: " + violations.front().field +
                                   ": " + violations.front().rule);
    if (sc_.durationMs == 0) throw InvalidScenarioError("duration must be positive");
    for (uint16_t n : sc_.physicalGraph.nodes())
        if (n >= config_.maxNodes)
            throw InvalidScenarioError("node id " + std::to_string(n) +
                                       " outside configured max_nodes");
    if (!sc_.physicalGraph.hasNode(masterNodeId))
        throw InvalidScenarioError("graph has no master node 0");
    for (const FaultEvent& f : sc_.faults)
        if (f.timeMs > sc_.durationMs)
            throw InvalidScenarioError("fault beyond scenario duration");
    for (const StreamRequest& s : sc_.streams) {
        if (!config_.isPeriodAllowed(s.periodMs))
            throw InvalidScenarioError("stream period " + std::to_string(s.periodMs) +
                                       " not in the allowed set");
        if (s.src >= config_.maxNodes || s.dst >= config_.maxNodes || s.src == s.dst)
            throw InvalidScenarioError("bad stream endpoints");
    }
}

void Simulator::trace(uint64_t timeMs, const std::string& text) {
    if (sc_.traceEnabled) metrics_.trace.push_back({timeMs, text});
}

void Simulator::rebuildAliveGraph() {
    if (!aliveGraphStale_) return;
    aliveGraph_ = NetworkGraph();
    for (uint16_t n : alive_) aliveGraph_.addNode(n);
    for (const Link& link : physical_.links()) {
        if (!alive_.count(link.u) || !alive_.count(link.v)) continue;
        double rel = physical_.reliability(link.u, link.v);
        if (rel > 0) aliveGraph_.addEdge(link.u, link.v, rel);
    }
    aliveGraphStale_ = false;
}

NetworkGraph Simulator::trueGraph() const {
    // every live node counts: an unreachable node keeps the network unformed
    NetworkGraph g;
    g.addNode(masterNodeId);
    for (uint16_t n : alive_) g.addNode(n);
    for (const Link& link : physical_.links()) {
        if (!alive_.count(link.u) || !alive_.count(link.v)) continue;
        if (physical_.reliability(link.u, link.v) > 0) g.addEdge(link.u, link.v);
    }
    return g;
}

void Simulator::applyFaultsUpTo(uint64_t timeMs) {
    while (nextFault_ < sc_.faults.size() && sc_.faults[nextFault_].timeMs <= timeMs) {
        const FaultEvent& f = sc_.faults[nextFault_++];
        switch (f.kind) {
            case FaultKind::NodeFail:
                alive_.erase(f.node);
                nodes_.erase(uint16_t(f.node));
                dataStates_.erase(f.node);
                if (!failedNode_) {
                    failedNode_ = f.node;
                    failTimeMs_ = f.timeMs;
                    bool anyLink = false;
                    for (const Link& link : master_.links())
                        if (link.touches(f.node)) anyLink = true;
                    // nothing to unlearn: converged on the spot
                    if (!anyLink) masterCleanOfFailedMs_ = f.timeMs;
                }
                trace(f.timeMs, "node-fail " + std::to_string(f.node));
                break;
            case FaultKind::NodeJoin:
                alive_.insert(f.node);
                if (f.node != masterNodeId)
                    nodes_.emplace(f.node, NodeTopologyState(NodeId(f.node), config_));
                trace(f.timeMs, "node-join " + std::to_string(f.node));
                break;
            case FaultKind::LinkSet:
                if (f.reliability <= 0) physical_.removeEdge(f.u, f.v);
                else physical_.addEdge(f.u, f.v, f.reliability);
                trace(f.timeMs, "link-set " + std::to_string(f.u) + " " + std::to_string(f.v) +
                                    " " + std::to_string(f.reliability));
                break;
        }
        aliveGraphStale_ = true;
    }
}

void Simulator::noteMasterLinks(uint64_t timeMs) {
    const std::set<Link>& now = master_.links();
    for (const Link& link : now) {
        if (knownMasterLinks_.count(link)) continue;
        trace(timeMs, "link-add " + std::to_string(link.u) + " " + std::to_string(link.v));
        linkFirstSeenMs_.try_emplace(link, timeMs);
        linkPresentSinceMs_[link] = timeMs;
        topologyDirty_ = true;
    }
    for (auto it = knownMasterLinks_.begin(); it != knownMasterLinks_.end();) {
        if (now.count(*it)) {
            ++it;
            continue;
        }
        const Link link = *it;
        trace(timeMs, "link-remove " + std::to_string(link.u) + " " + std::to_string(link.v));
        linkPresentAccumMs_[link] += timeMs - linkPresentSinceMs_[link];
        linkPresentSinceMs_.erase(link);
        topologyDirty_ = true;
        it = knownMasterLinks_.erase(it);
    }
    knownMasterLinks_ = now;

    if (failedNode_ && failTimeMs_ && !masterCleanOfFailedMs_) {
        bool anyLeft = false;
        for (const Link& link : now)
            if (link.touches(*failedNode_)) anyLeft = true;
        if (!anyLeft && timeMs >= *failTimeMs_) masterCleanOfFailedMs_ = timeMs;
    } else if (failedNode_ && masterCleanOfFailedMs_) {
        // a stale in-flight record may momentarily resurrect a link
        for (const Link& link : now)
            if (link.touches(*failedNode_)) masterCleanOfFailedMs_.reset();
    }
}

void Simulator::checkFormation(uint64_t timeMs) {
    if (metrics_.formationMs) return;
    if (master_.graph() == trueGraph()) {
        metrics_.formationMs = timeMs - metrics_.syncCompleteMs;
        trace(timeMs, "formation");
    }
}

void Simulator::computeSchedule(uint64_t tile, uint64_t timeMs) {
    std::vector<Stream> open;
    std::vector<size_t> tableIndex;
    for (size_t i = 0; i < streamTable_.size(); i++) {
        if (streamTable_[i].periodMs == 0) continue; // closed placeholder
        Stream s = streamTable_[i];
        s.state = StreamState::Requested;
        tableIndex.push_back(i);
        open.push_back(s);
    }

    pendingGraph_ = master_.graph();
    Schedule schedule = scheduleStreams(pendingGraph_, open, config_);
    schedule.scheduleId = nextScheduleId_++;

    // activation: first superframe boundary after the last repetition flood
    uint64_t repsLeft = config_.scheduleRepetitions;
    uint64_t lastRepTile = tile;
    size_t csLen = config_.controlSuperframe.size();
    for (uint64_t t = tile; repsLeft > 0; t++) {
        if (config_.controlSuperframe[t % csLen] == TileKind::Downlink) {
            lastRepTile = t;
            repsLeft--;
        }
    }
    uint32_t sf = schedule.superframeTiles();
    schedule.activationTile = ((lastRepTile / sf) + 1) * sf;

    pendingPacket_ = SchedulePacket{schedule.scheduleId, schedule.activationTile,
                                    encodeSchedule(schedule)};
    pending_ = std::move(schedule);
    pendingTableIndex_ = std::move(tableIndex);
    pendingRepetitions_ = config_.scheduleRepetitions;
    pendingHolders_.clear();
    topologyDirty_ = false;
    streamsDirty_ = false;
    std::ostringstream note;
    note << "schedule-computed " << pending_->scheduleId << " streams "
         << pending_->streams.size() << " tx " << pending_->transmissionCount()
         << " activation " << pending_->activationTile;
    trace(timeMs, note.str());
}

void Simulator::activateSchedule(uint64_t tile, uint64_t timeMs) {
    // close out period accounting of the outgoing schedule
    crossPeriodBoundaries(tile);

    active_ = std::move(pending_);
    pending_.reset();
    activeGraph_ = std::move(pendingGraph_);
    pendingGraph_ = NetworkGraph();
    activationTile_ = tile;
    activeTableIndex_ = std::move(pendingTableIndex_);
    pendingTableIndex_.clear();

    activePeriodTiles_.assign(active_->streams.size(), 1);
    for (size_t i = 0; i < active_->streams.size(); i++)
        activePeriodTiles_[i] =
            std::max<uint32_t>(1, active_->streams[i].periodMs / config_.tileDurationMs);

    for (size_t i = 0; i < active_->streams.size(); i++) {
        size_t ti = activeTableIndex_[i];
        // a stream closed while this schedule was in flight stays closed
        if (streamTable_[ti].periodMs != 0)
            streamTable_[ti].state = active_->streams[i].state;
        tallies_[ti].pendingDelivered = false;
        std::ostringstream note;
        note << (active_->streams[i].state == StreamState::Scheduled ? "stream-scheduled "
                                                                     : "stream-rejected ")
             << unsigned(active_->streams[i].src) << " " << unsigned(active_->streams[i].dst);
        trace(timeMs, note.str());
    }

    programs_.clear();
    dataStates_.clear();
    std::optional<Schedule> decoded;
    for (uint16_t n : alive_) {
        bool holds = n == masterNodeId || pendingHolders_.count(n) || sc_.freezeSchedule;
        if (!holds) continue;
        if (n == masterNodeId || sc_.freezeSchedule) {
            programs_[n] = buildNodeProgram(*active_, NodeId(n));
        } else {
            // every other node only has the flooded packet to work from
            if (!decoded) decoded = decodeSchedule(pendingPacket_->body);
            programs_[n] = buildNodeProgram(*decoded, NodeId(n));
        }
        dataStates_[n] = NodeDataState{};
    }
    pendingPacket_.reset();
    // origin nodes stop repeating a request once the schedule reflects it
    for (auto& [n, state] : nodes_) {
        if (!alive_.count(n)) continue;
        std::vector<StreamManagementElement> smes = state.pendingOwnSmes();
        for (const StreamManagementElement& sme : smes) {
            bool present = false, scheduled = false;
            for (const Stream& s : active_->streams) {
                if (s.src != sme.src || s.dst != sme.dst) continue;
                present = true;
                scheduled = s.state == StreamState::Scheduled;
            }
            if (sme.action == SmeAction::Open && scheduled) state.markStreamSatisfied(sme.dst);
            if (sme.action == SmeAction::Close && !present) state.markStreamSatisfied(sme.dst);
        }
    }
    pendingHolders_.clear();
    trace(timeMs, "schedule-activated " + std::to_string(active_->scheduleId));
}

void Simulator::crossPeriodBoundaries(uint64_t tile) {
    if (!active_) return;
    for (size_t i = 0; i < active_->streams.size(); i++) {
        if (active_->streams[i].state != StreamState::Scheduled) continue;
        uint64_t elapsedTiles = tile - activationTile_;
        if (elapsedTiles == 0) continue;
        if (elapsedTiles % activePeriodTiles_[i] != 0) continue;
        size_t ti = activeTableIndex_[i];
        uint64_t endedInstance = elapsedTiles / activePeriodTiles_[i] - 1;
        tallies_[ti].elapsed++;
        if (tallies_[ti].pendingDelivered && tallies_[ti].pendingInstance == endedInstance) {
            tallies_[ti].delivered++;
            tallies_[ti].pendingDelivered = false;
        }
    }
}

void Simulator::downlinkTile(uint64_t tile, uint64_t timeMs) {
    rebuildAliveGraph();
    // every downlink tile floods; the frame carries the synchronization
    // counter, which advances once per synchronization period
    SyncFrame sync{uint32_t(timeMs / config_.syncPeriodMs), 0};
    if (sync.counter != lastSyncCounter_) {
        lastSyncCounter_ = sync.counter;
        trace(timeMs, "sync " + std::to_string(sync.counter));
    }
    FloodOutcome outcome = runFlood(aliveGraph_, masterNodeId, config_.maxHops, rng_);
    for (auto& [node, hop] : outcome.hops) {
        if (node == masterNodeId) continue;
        auto it = nodes_.find(node);
        if (it != nodes_.end()) it->second.onFloodReceived(uint8_t(hop));
    }
    if (tile == 0) {
        metrics_.syncCompleteMs = timeMs + config_.downlinkSlotDurationMs;
        trace(metrics_.syncCompleteMs, "sync-complete");
    }

    if (!pending_ && !sc_.freezeSchedule && (topologyDirty_ || streamsDirty_) &&
        !streamTable_.empty())
        computeSchedule(tile, timeMs);
    if (pending_ && pendingRepetitions_ > 0) {
        // the flood carries the new schedule to every node it reaches
        for (auto& [node, hop] : outcome.hops)
            if (node != masterNodeId) pendingHolders_.insert(node);
        pendingRepetitions_--;
    }
}

void Simulator::uplinkTile(uint64_t /*tile*/, uint64_t timeMs) {
    uint64_t slotIdx = uplinkSlotCounter_++;
    NodeId owner = uplinkNodeForSlot(slotIdx, config_.maxNodes);
    uint64_t slotEndMs = timeMs + config_.uplinkSlotDurationMs();

    std::map<uint16_t, TopologyMessage> deliveredTo;
    uint32_t receiverCount = 0;
    bool transmitted = false;
    auto ownerState = nodes_.find(owner);
    if (alive_.count(owner) && ownerState != nodes_.end() && ownerState->second.canTransmit()) {
        TopologyMessage msg = ownerState->second.buildUplinkMessage(slotIdx, rng_);
        // over the air and back: keeps the wire format honest
        std::vector<uint8_t> bytes = encodeMessage(msg, config_);
        TopologyMessage decoded = decodeMessage(bytes, config_);
        transmitted = true;
        for (uint16_t peer : physical_.neighbors(owner)) {
            if (!alive_.count(peer)) continue;
            if (!rng_.bernoulli(physical_.reliability(owner, peer))) continue;
            deliveredTo.emplace(peer, decoded);
            receiverCount++;
        }
    }

    for (auto& [peer, msg] : deliveredTo) {
        if (peer == masterNodeId) master_.processUplink(msg);
        else nodes_.at(peer).processOverheard(msg);
        uplinkOverheard_[peer]++;
    }
    if (transmitted && receiverCount > 0) lastOverhearMs_[owner] = slotEndMs;
    trace(slotEndMs, "uplink " + std::to_string(slotIdx) + " " + std::to_string(owner) + " " +
                         std::to_string(receiverCount));

    // silence bookkeeping at every listener, master included
    for (uint16_t n : alive_) {
        if (n == owner) continue;
        uplinkListened_[n]++;
        bool overheard = deliveredTo.count(n) != 0;
        if (n == masterNodeId) {
            master_.onSlotElapsed(owner, overheard);
        } else {
            auto it = nodes_.find(n);
            if (it == nodes_.end()) continue;
            bool hadLink = false;
            for (NodeId d : it->second.directNeighbors())
                if (d == owner) hadLink = true;
            it->second.onSlotElapsed(owner, overheard);
            bool hasLink = false;
            for (NodeId d : it->second.directNeighbors())
                if (d == owner) hasLink = true;
            if (hadLink && !hasLink) {
                trace(slotEndMs, "expire " + std::to_string(n) + " " + std::to_string(owner));
                if (failedNode_ && owner == *failedNode_ && !firstExpiryOfFailedMs_)
                    firstExpiryOfFailedMs_ = slotEndMs;
            }
        }
    }
    // master-side expiry of a direct neighbor shows up as a link change below
    bool masterHadFailedLink =
        failedNode_ && knownMasterLinks_.count(Link(masterNodeId, *failedNode_)) != 0;
    noteMasterLinks(slotEndMs);
    if (masterHadFailedLink && failedNode_ &&
        !knownMasterLinks_.count(Link(masterNodeId, *failedNode_)) && !firstExpiryOfFailedMs_)
        firstExpiryOfFailedMs_ = slotEndMs;
    checkFormation(slotEndMs);
}

void Simulator::dataTile(uint64_t tile, uint64_t timeMs) {
    if (!active_ || tile < activationTile_) return;
    const Schedule& schedule = *active_;
    const SlotGrid& grid = schedule.grid;
    uint64_t tileInSf = (tile - activationTile_) % grid.superframeTiles;
    uint32_t base = grid.firstSlotOfTile(uint32_t(tileInSf));
    uint32_t count = grid.slotsInTile(uint32_t(tileInSf));
    uint64_t elapsedTiles = tile - activationTile_;

    for (uint32_t s = 0; s < count; s++) {
        uint32_t slot = base + s;
        struct Emission {
            NodeId sender;
            NodeId receiver;
            FrameToken token;
        };
        std::vector<Emission> emissions;
        for (auto& [n, program] : programs_) {
            if (!alive_.count(n)) continue;
            const SlotAction& action = program.actions[slot];
            if (action.kind != SlotActionKind::SendFromApp &&
                action.kind != SlotActionKind::Forward)
                continue;
            uint64_t instance = elapsedTiles / activePeriodTiles_[action.streamIndex];
            SlotOutcome outcome = executeSendSlot(dataStates_[n], action, instance);
            if (outcome.emitted) {
                emissions.push_back({NodeId(n), action.peer, *outcome.emitted});
                metrics_.dataSlotsTx[n]++;
            }
        }
        // scheduled concurrency must be interference free on the graph the
        // schedule was computed from; a firing here is a scheduler bug
        for (size_t a = 0; a < emissions.size(); a++) {
            for (size_t b = a + 1; b < emissions.size(); b++) {
                const Emission& x = emissions[a];
                const Emission& y = emissions[b];
                if (activeGraph_.hasEdge(x.sender, y.receiver) ||
                    activeGraph_.hasEdge(y.sender, x.receiver))
                    throw std::logic_error("interfering concurrent transmissions scheduled");
            }
        }
        for (auto& [n, program] : programs_) {
            if (!alive_.count(n)) continue;
            const SlotAction& action = program.actions[slot];
            if (action.kind != SlotActionKind::ReceiveAndBuffer &&
                action.kind != SlotActionKind::ReceiveToApp)
                continue;
            uint64_t instance = elapsedTiles / activePeriodTiles_[action.streamIndex];
            std::optional<FrameToken> arrived;
            for (const Emission& e : emissions) {
                if (e.sender != action.peer || e.receiver != n) continue;
                if (!rng_.bernoulli(physical_.reliability(e.sender, n))) break;
                bool interfered = false;
                for (const Emission& other : emissions) {
                    if (other.sender == e.sender) continue;
                    double rel = physical_.reliability(other.sender, n);
                    if (rel > 0 && rng_.bernoulli(rel)) interfered = true;
                }
                if (!interfered) arrived = e.token;
                break;
            }
            SlotOutcome outcome = executeReceiveSlot(dataStates_[n], action, arrived, instance);
            if (outcome.energy == EnergyClass::Rx) metrics_.dataSlotsRx[n]++;
            if (outcome.deliveredToApp) {
                size_t ti = activeTableIndex_[action.streamIndex];
                tallies_[ti].pendingDelivered = true;
                tallies_[ti].pendingInstance = arrived->instance;
            }
        }
    }
    (void)timeMs;
}

Metrics Simulator::run() {
    validateScenario();
    physical_ = sc_.physicalGraph;
    for (uint16_t n : physical_.nodes()) {
        alive_.insert(n);
        if (n != masterNodeId) nodes_.emplace(n, NodeTopologyState(NodeId(n), config_));
    }
    metrics_.controlOverhead = controlOverhead(config_);

    // scenario streams reach the origin node's uplink agenda when their open
    // (or close) time passes; the request repeats until a schedule reflects it
    struct SmeEvent {
        uint64_t timeMs;
        StreamManagementElement sme;
    };
    std::vector<SmeEvent> smeEvents;
    for (const StreamRequest& r : sc_.streams) {
        StreamManagementElement sme;
        sme.src = r.src;
        sme.dst = r.dst;
        sme.periodMs = r.periodMs;
        sme.spatialRedundancy = r.spatialRedundancy;
        sme.temporalRedundancy = r.temporalRedundancy;
        sme.action = SmeAction::Open;
        smeEvents.push_back({r.openAtMs, sme});
        if (r.closeAtMs > 0) {
            sme.action = SmeAction::Close;
            smeEvents.push_back({r.closeAtMs, sme});
        }
    }
    std::stable_sort(smeEvents.begin(), smeEvents.end(),
                     [](const SmeEvent& a, const SmeEvent& b) { return a.timeMs < b.timeMs; });

    if (sc_.freezeSchedule) {
        for (const StreamRequest& r : sc_.streams) {
            Stream s;
            s.id = uint16_t(streamTable_.size());
            s.src = r.src;
            s.dst = r.dst;
            s.periodMs = r.periodMs;
            s.spatialRedundancy = r.spatialRedundancy;
            s.temporalRedundancy = r.temporalRedundancy;
            streamIndex_[{s.src, s.dst}] = streamTable_.size();
            streamTable_.push_back(s);
            tallies_.push_back({});
        }
        nextStreamOpen_ = smeEvents.size();
        std::vector<Stream> requests = streamTable_;
        pendingGraph_ = trueGraph();
        Schedule schedule = scheduleStreams(pendingGraph_, requests, config_);
        schedule.scheduleId = nextScheduleId_++;
        schedule.activationTile = 0;
        pending_ = std::move(schedule);
        pendingTableIndex_.resize(streamTable_.size());
        for (size_t i = 0; i < streamTable_.size(); i++) pendingTableIndex_[i] = i;
        activateSchedule(0, 0);
    }

    uint64_t tiles = sc_.durationMs / config_.tileDurationMs;
    size_t csLen = config_.controlSuperframe.size();
    for (uint64_t tile = 0; tile < tiles; tile++) {
        uint64_t timeMs = tile * config_.tileDurationMs;
        applyFaultsUpTo(timeMs);

        // stream opens and closes reach the origin node's uplink agenda
        while (nextStreamOpen_ < smeEvents.size() &&
               smeEvents[nextStreamOpen_].timeMs <= timeMs) {
            const SmeEvent& event = smeEvents[nextStreamOpen_++];
            if (sc_.freezeSchedule) continue;
            auto it = nodes_.find(event.sme.src);
            if (it != nodes_.end()) it->second.requestStream(event.sme);
        }

        // SMEs already at the master become table entries
        if (!sc_.freezeSchedule) {
            for (const StreamManagementElement& sme : master_.drainSmes()) {
                auto key = std::make_pair(sme.src, sme.dst);
                auto it = streamIndex_.find(key);
                if (sme.action == SmeAction::Close) {
                    if (it != streamIndex_.end() && streamTable_[it->second].periodMs != 0) {
                        streamTable_[it->second].state = StreamState::Rejected;
                        streamTable_[it->second].periodMs = 0; // closed placeholder
                        streamsDirty_ = true;
                    }
                    continue;
                }
                if (it != streamIndex_.end()) {
                    Stream& s = streamTable_[it->second];
                    if (s.periodMs != sme.periodMs ||
                        s.spatialRedundancy != sme.spatialRedundancy ||
                        s.temporalRedundancy != sme.temporalRedundancy) {
                        s.periodMs = sme.periodMs;
                        s.spatialRedundancy = sme.spatialRedundancy;
                        s.temporalRedundancy = sme.temporalRedundancy;
                        streamsDirty_ = true;
                    }
                    continue;
                }
                Stream s;
                s.id = uint16_t(streamTable_.size());
                s.src = sme.src;
                s.dst = sme.dst;
                s.periodMs = sme.periodMs;
                s.spatialRedundancy = sme.spatialRedundancy;
                s.temporalRedundancy = sme.temporalRedundancy;
                streamIndex_[key] = streamTable_.size();
                streamTable_.push_back(s);
                tallies_.push_back({});
                streamsDirty_ = true;
            }
        }

        if (pending_ && tile == pending_->activationTile) activateSchedule(tile, timeMs);
        else crossPeriodBoundaries(tile);

        TileKind kind = config_.controlSuperframe[tile % csLen];
        if (kind == TileKind::Downlink) downlinkTile(tile, timeMs);
        else uplinkTile(tile, timeMs);
        dataTile(tile, timeMs);
    }
    crossPeriodBoundaries(tiles);
    finalize(tiles * config_.tileDurationMs);
    return std::move(metrics_);
}

void Simulator::finalize(uint64_t endMs) {
    for (size_t i = 0; i < streamTable_.size(); i++) {
        StreamMetrics sm;
        sm.src = streamTable_[i].src;
        sm.dst = streamTable_[i].dst;
        sm.periodMs = streamTable_[i].periodMs;
        sm.deliveredInstances = tallies_[i].delivered;
        sm.elapsedInstances = tallies_[i].elapsed;
        metrics_.streams.push_back(sm);
    }

    for (auto& [link, since] : linkPresentSinceMs_) linkPresentAccumMs_[link] += endMs - since;
    for (auto& [link, accum] : linkPresentAccumMs_) {
        uint64_t window = endMs - linkFirstSeenMs_[link];
        metrics_.linkUptime[link] = window ? double(accum) / double(window) : 0.0;
    }

    CurrentModel model;
    for (uint16_t n : physical_.nodes()) {
        uint64_t listened = uplinkListened_.count(n) ? uplinkListened_[n] : 0;
        uint64_t heard = uplinkOverheard_.count(n) ? uplinkOverheard_[n] : 0;
        double connectivity = listened ? double(heard) / double(listened) : 0.0;
        metrics_.connectivityFraction[n] = connectivity;
        auto it = programs_.find(n);
        metrics_.nodeCurrentMa[n] =
            it != programs_.end()
                ? estimatePower(config_, it->second, connectivity, model)
                : estimatePower(config_, 0.0, connectivity, model);
    }

    if (failedNode_ && failTimeMs_ && masterCleanOfFailedMs_) {
        metrics_.convergenceTotalMs = *masterCleanOfFailedMs_ - *failTimeMs_;
        if (firstExpiryOfFailedMs_) {
            metrics_.convergencePropagationMs =
                *masterCleanOfFailedMs_ - *firstExpiryOfFailedMs_;
            auto heard = lastOverhearMs_.find(*failedNode_);
            if (heard != lastOverhearMs_.end())
                metrics_.convergenceSilentMs = *firstExpiryOfFailedMs_ - heard->second;
        }
    }
}

} // namespace

Metrics runScenario(const Scenario& scenario) {
    Simulator sim(scenario);
    return sim.run();
}

// ---- trace measurements -------------------------------------------------------

namespace {

std::vector<std::string> splitWords(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

} // namespace

std::optional<uint64_t> measureFormationTime(const std::vector<TraceEvent>& trace,
                                             const NetworkGraph& trueGraph) {
    std::vector<Link> linkList = trueGraph.links();
    std::set<Link> target(linkList.begin(), linkList.end());
    std::set<Link> current;
    std::optional<uint64_t> syncComplete;
    for (const TraceEvent& e : trace) {
        auto words = splitWords(e.text);
        if (words.empty()) continue;
        if (words[0] == "sync-complete") syncComplete = e.timeMs;
        else if (words[0] == "link-add")
            current.insert(Link(uint16_t(std::stoul(words[1])), uint16_t(std::stoul(words[2]))));
        else if (words[0] == "link-remove")
            current.erase(Link(uint16_t(std::stoul(words[1])), uint16_t(std::stoul(words[2]))));
        else continue;
        if (syncComplete && current == target) return e.timeMs - *syncComplete;
    }
    return std::nullopt;
}

std::optional<ConvergenceBreakdown> measureConvergenceAfterFailure(
    const std::vector<TraceEvent>& trace, uint16_t failedNode) {
    std::optional<uint64_t> failTime, lastOverhear, firstExpiry;
    std::set<Link> failedLinks;
    bool clean = false;
    uint64_t cleanTime = 0;
    for (const TraceEvent& e : trace) {
        auto words = splitWords(e.text);
        if (words.empty()) continue;
        if (words[0] == "node-fail" && std::stoul(words[1]) == failedNode) {
            failTime = e.timeMs;
        } else if (words[0] == "uplink" && words.size() >= 4 &&
                   std::stoul(words[2]) == failedNode && std::stoul(words[3]) > 0) {
            lastOverhear = e.timeMs;
        } else if (words[0] == "expire" && words.size() >= 3 &&
                   std::stoul(words[2]) == failedNode && failTime && !firstExpiry) {
            firstExpiry = e.timeMs;
        } else if (words[0] == "link-add" || words[0] == "link-remove") {
            Link link(uint16_t(std::stoul(words[1])), uint16_t(std::stoul(words[2])));
            if (!link.touches(failedNode)) continue;
            if (words[0] == "link-add") {
                failedLinks.insert(link);
                if (failTime) clean = false;
            } else {
                failedLinks.erase(link);
                if (failTime && failedLinks.empty()) {
                    clean = true;
                    cleanTime = e.timeMs;
                }
            }
            // the master may drop a direct link to the failed node before any
            // peer expires it; that removal is the first detection
            if (failTime && !firstExpiry && words[0] == "link-remove" &&
                (link.u == masterNodeId || link.v == masterNodeId))
                firstExpiry = e.timeMs;
        }
    }
    if (!failTime || !clean) return std::nullopt;
    ConvergenceBreakdown out;
    out.totalMs = cleanTime - *failTime;
    if (firstExpiry) {
        out.propagationMs = cleanTime - *firstExpiry;
        if (lastOverhear) out.silentMs = *firstExpiry - *lastOverhear;
    }
    return out;
}

std::map<std::pair<NodeId, NodeId>, double> measureStreamReliability(const Metrics& metrics) {
    std::map<std::pair<NodeId, NodeId>, double> out;
    for (const StreamMetrics& s : metrics.streams) out[{s.src, s.dst}] = s.reliability();
    return out;
}

// ---- scenario file ------------------------------------------------------------

Scenario parseScenario(std::istream& in) {
    Scenario scenario;
    std::string section;
    std::string line;
    IdAssignment assignment = IdAssignment::Forward;
    bool hexagonal = false;
    uint16_t hexNodes = 0;
    bool downlinkExplicit = false;

    auto trimmed = [](const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return std::string();
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    };

    std::vector<std::string> graphLines;
    while (std::getline(in, line)) {
        std::string t = trimmed(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = t.substr(1, t.size() - 2);
            continue;
        }
        if (section == "config") {
            size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw InvalidScenarioError("config line needs key = value: " + t);
            std::string key = trimmed(t.substr(0, eq));
            if (key == "downlink_slot_duration_ms") downlinkExplicit = true;
            applyConfigKey(scenario.config, key, trimmed(t.substr(eq + 1)));
        } else if (section == "graph") {
            std::istringstream ls(t);
            std::string first;
            ls >> first;
            if (first == "hexagonal") {
                hexagonal = true;
                unsigned n;
                if (!(ls >> n)) throw InvalidScenarioError("hexagonal needs a node count");
                hexNodes = uint16_t(n);
            } else {
                graphLines.push_back(t);
            }
        } else if (section == "id_assignment") {
            if (t == "reverse") assignment = IdAssignment::Reverse;
            else if (t == "forward") assignment = IdAssignment::Forward;
            else throw InvalidScenarioError("id_assignment must be forward or reverse");
        } else if (section == "streams") {
            std::istringstream ls(t);
            StreamRequest r;
            unsigned src, dst, spatial, temporal;
            if (!(ls >> src >> dst >> r.periodMs >> spatial >> temporal))
                throw InvalidScenarioError(
                    "stream line: src dst period_ms spatial temporal [open_at_ms [close_at_ms]]");
            ls >> r.openAtMs >> r.closeAtMs;
            r.src = NodeId(src);
            r.dst = NodeId(dst);
            r.spatialRedundancy = uint8_t(spatial);
            r.temporalRedundancy = uint8_t(temporal);
            scenario.streams.push_back(r);
        } else if (section == "faults") {
            std::istringstream ls(t);
            FaultEvent f;
            std::string kind;
            if (!(ls >> f.timeMs >> kind))
                throw InvalidScenarioError("fault line: time_ms FAIL|JOIN|LINK ...");
            if (kind == "FAIL") {
                unsigned id;
                ls >> id;
                f.kind = FaultKind::NodeFail;
                f.node = uint16_t(id);
            } else if (kind == "JOIN") {
                unsigned id;
                ls >> id;
                f.kind = FaultKind::NodeJoin;
                f.node = uint16_t(id);
            } else if (kind == "LINK") {
                unsigned u, v;
                ls >> u >> v >> f.reliability;
                f.kind = FaultKind::LinkSet;
                f.u = uint16_t(u);
                f.v = uint16_t(v);
            } else {
                throw InvalidScenarioError("unknown fault kind: " + kind);
            }
            scenario.faults.push_back(f);
        } else if (section == "run") {
            size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw InvalidScenarioError("run line needs key = value: " + t);
            std::string key = trimmed(t.substr(0, eq));
            std::string value = trimmed(t.substr(eq + 1));
            if (key == "duration_ms") scenario.durationMs = std::stoull(value);
            else if (key == "seed") scenario.seed = std::stoull(value);
            else if (key == "name") scenario.name = value;
            else if (key == "freeze_schedule")
                scenario.freezeSchedule = (value == "true" || value == "1");
            else if (key == "trace") scenario.traceEnabled = (value == "true" || value == "1");
            else throw InvalidScenarioError("unknown run key: " + key);
        } else {
            throw InvalidScenarioError("line outside any known section: " + t);
        }
    }
    if (!downlinkExplicit)
        scenario.config.downlinkSlotDurationMs = defaultDownlinkSlotMs(scenario.config.maxHops);

    if (hexagonal) {
        scenario.physicalGraph = makeHexagonalGraph(hexNodes, assignment);
    } else {
        std::ostringstream joined;
        for (const std::string& g : graphLines) joined << g << "\n";
        std::istringstream gs(joined.str());
        scenario.physicalGraph = parseGraph(gs);
    }
    std::stable_sort(scenario.faults.begin(), scenario.faults.end(),
                     [](const FaultEvent& a, const FaultEvent& b) { return a.timeMs < b.timeMs; });
    return scenario;
}

Scenario loadScenarioFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidScenarioError("cannot open scenario file: " + path);
    return parseScenario(in);
}

// ---- output ---------------------------------------------------------------------

namespace {

std::string formatDouble(double v) {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed << v;
    return out.str();
}

} // namespace

std::string metricsCsvHeader(const Metrics& metrics) {
    std::ostringstream out;
    out << "scenario,seed,sync_complete_ms,formation_ms,convergence_total_ms,"
        << "convergence_silent_ms,convergence_propagation_ms,control_overhead";
    for (const StreamMetrics& s : metrics.streams)
        out << ",stream_" << unsigned(s.src) << "_" << unsigned(s.dst) << "_reliability";
    out << "\n";
    return out.str();
}

std::string metricsCsvRow(const Scenario& scenario, const Metrics& metrics) {
    std::ostringstream out;
    out << scenario.name << ',' << scenario.seed << ',' << metrics.syncCompleteMs << ',';
    if (metrics.formationMs) out << *metrics.formationMs;
    out << ',';
    if (metrics.convergenceTotalMs) out << *metrics.convergenceTotalMs;
    out << ',';
    if (metrics.convergenceSilentMs) out << *metrics.convergenceSilentMs;
    out << ',';
    if (metrics.convergencePropagationMs) out << *metrics.convergencePropagationMs;
    out << ',' << formatDouble(metrics.controlOverhead);
    for (const StreamMetrics& s : metrics.streams) out << ',' << formatDouble(s.reliability());
    out << "\n";
    return out.str();
}

std::string traceToText(const Metrics& metrics) {
    std::ostringstream out;
    for (const TraceEvent& e : metrics.trace) out << e.timeMs << ' ' << e.text << "\n";
    return out.str();
}

} // namespace tdmh
