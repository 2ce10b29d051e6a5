#include "tdmh/scheduler.hpp"

#include <algorithm>
#include <deque>
#include <queue>
#include <set>
#include <sstream>

namespace tdmh {

size_t Schedule::transmissionCount() const {
    size_t n = orphans.size();
    for (const auto& streamPaths : paths)
        for (const Path& p : streamPaths) n += p.transmissions.size();
    return n;
}

// ---- routing ---------------------------------------------------------------

namespace {

// Shortest path by hop count; queue processed in insertion order with
// neighbors explored in ascending id, so ties always resolve the same way.
std::vector<NodeId> bfsPath(const NetworkGraph& graph, NodeId src, NodeId dst) {
    std::map<uint16_t, uint16_t> parent;
    std::deque<uint16_t> frontier{src};
    parent[src] = src;
    while (!frontier.empty()) {
        uint16_t n = frontier.front();
        frontier.pop_front();
        if (n == dst) break;
        for (uint16_t peer : graph.neighbors(n)) {
            if (parent.count(peer)) continue;
            parent[peer] = n;
            frontier.push_back(peer);
        }
    }
    if (!parent.count(dst)) return {};
    std::vector<NodeId> path;
    for (uint16_t n = dst; n != src; n = parent[n]) path.push_back(static_cast<NodeId>(n));
    path.push_back(src);
    std::reverse(path.begin(), path.end());
    return path;
}

// Shortest path that minimizes first the number of edges shared with `used`,
// then the hop count. A fully edge-disjoint path wins whenever one exists.
std::vector<NodeId> minSharedPath(const NetworkGraph& graph, NodeId src, NodeId dst,
                                  const std::set<Link>& used) {
    constexpr uint64_t sharedWeight = 1u << 20;
    std::map<uint16_t, uint64_t> best;
    std::map<uint16_t, uint16_t> parent;
    using Entry = std::pair<uint64_t, uint16_t>; // cost, node
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;
    best[src] = 0;
    parent[src] = src;
    heap.push({0, src});
    while (!heap.empty()) {
        auto [cost, n] = heap.top();
        heap.pop();
        if (cost != best[n]) continue;
        if (n == dst) break;
        for (uint16_t peer : graph.neighbors(n)) {
            uint64_t edgeCost = 1 + (used.count(Link(n, peer)) ? sharedWeight : 0);
            uint64_t next = cost + edgeCost;
            auto it = best.find(peer);
            if (it != best.end() && it->second <= next) continue;
            best[peer] = next;
            parent[peer] = n;
            heap.push({next, peer});
        }
    }
    if (!best.count(dst)) return {};
    std::vector<NodeId> path;
    for (uint16_t n = dst; n != src; n = parent[n]) path.push_back(static_cast<NodeId>(n));
    path.push_back(src);
    std::reverse(path.begin(), path.end());
    return path;
}

} // namespace

std::vector<std::vector<NodeId>> routePaths(const NetworkGraph& graph, NodeId src,
                                            NodeId dst, uint8_t spatialRedundancy) {
    if (!graph.hasNode(src) || !graph.hasNode(dst)) throw UnreachableError(src, dst);
    std::vector<NodeId> first = bfsPath(graph, src, dst);
    if (first.empty()) throw UnreachableError(src, dst);

    std::vector<std::vector<NodeId>> paths{first};
    std::set<Link> used;
    for (size_t i = 0; i + 1 < first.size(); i++) used.insert(Link(first[i], first[i + 1]));
    while (paths.size() < spatialRedundancy) {
        std::vector<NodeId> next = minSharedPath(graph, src, dst, used);
        if (next.empty()) throw UnreachableError(src, dst);
        for (size_t i = 0; i + 1 < next.size(); i++) used.insert(Link(next[i], next[i + 1]));
        paths.push_back(std::move(next));
    }
    return paths;
}

// ---- greedy placement ------------------------------------------------------

namespace {

struct PlacedTx {
    NodeId sender;
    NodeId receiver;
    uint16_t streamIndex;
    uint8_t pathIndex;
};

struct Occupancy {
    std::vector<std::vector<PlacedTx>> bySlot;

    explicit Occupancy(uint32_t slots) : bySlot(slots) {}

    bool conflicts(const NetworkGraph& graph, uint32_t slot, NodeId a, NodeId b) const {
        for (const PlacedTx& tx : bySlot[slot]) {
            // one role per node per slot
            if (tx.sender == a || tx.sender == b || tx.receiver == a || tx.receiver == b)
                return true;
            // a concurrent sender must not reach the other's receiver
            if (graph.hasEdge(a, tx.receiver) || graph.hasEdge(tx.sender, b)) return true;
        }
        return false;
    }
};

} // namespace

Schedule scheduleStreams(const NetworkGraph& graph, const std::vector<Stream>& requests,
                         const NetworkConfiguration& config) {
    Schedule schedule;
    schedule.streams = requests;
    schedule.paths.resize(requests.size());

    std::vector<uint32_t> periods;
    for (const Stream& s : requests)
        if (config.isPeriodAllowed(s.periodMs)) periods.push_back(s.periodMs);
    uint32_t superframeTiles = dataSuperframeLengthTiles(config, periods);
    schedule.grid = SlotGrid::fromConfig(config, superframeTiles);

    const SlotGrid& grid = schedule.grid;
    Occupancy occupancy(grid.totalDataSlots());

    for (size_t si = 0; si < schedule.streams.size(); si++) {
        Stream& stream = schedule.streams[si];
        stream.state = StreamState::Rejected;
        if (stream.src == stream.dst) continue;
        if (!config.isPeriodAllowed(stream.periodMs)) continue;

        uint32_t periodTiles = stream.periodMs / config.tileDurationMs;
        uint32_t instances = grid.instanceCount(periodTiles);

        std::vector<std::vector<NodeId>> skeletons;
        try {
            skeletons = routePaths(graph, stream.src, stream.dst, stream.spatialRedundancy);
        } catch (const UnreachableError&) {
            continue;
        }

        // A position is usable only if it exists and is conflict free in
        // every period instance; the whole stream is placed or none of it is.
        std::vector<std::pair<uint32_t, PlacedTx>> placed;
        auto rollback = [&] {
            for (auto& [slot, tx] : placed) {
                auto& v = occupancy.bySlot[slot];
                v.erase(std::find_if(v.begin(), v.end(), [&](const PlacedTx& e) {
                    return e.sender == tx.sender && e.receiver == tx.receiver &&
                           e.streamIndex == tx.streamIndex && e.pathIndex == tx.pathIndex;
                }));
            }
            placed.clear();
        };

        bool feasible = true;
        std::vector<Path> streamPaths;
        uint32_t maxPositions = grid.slotsInInstance(0, periodTiles);
        for (uint32_t k = 1; k < instances; k++)
            maxPositions = std::min(maxPositions, grid.slotsInInstance(k, periodTiles));

        for (uint8_t z = 0; z < skeletons.size() && feasible; z++) {
            Path path;
            path.src = stream.src;
            path.dst = stream.dst;
            path.periodTiles = periodTiles;
            path.index = z;
            path.nodes = skeletons[z];

            int64_t cursor = -1;
            for (size_t hop = 0; hop + 1 < skeletons[z].size() && feasible; hop++) {
                NodeId a = skeletons[z][hop];
                NodeId b = skeletons[z][hop + 1];
                for (uint8_t copy = 0; copy < stream.temporalRedundancy && feasible; copy++) {
                    bool done = false;
                    for (uint32_t pos = uint32_t(cursor + 1); pos < maxPositions && !done; pos++) {
                        bool free = true;
                        for (uint32_t k = 0; k < instances && free; k++) {
                            int64_t slot = grid.slotAtPosition(k, periodTiles, pos);
                            if (slot < 0 || occupancy.conflicts(graph, uint32_t(slot), a, b))
                                free = false;
                        }
                        if (!free) continue;
                        for (uint32_t k = 0; k < instances; k++) {
                            uint32_t slot = uint32_t(grid.slotAtPosition(k, periodTiles, pos));
                            PlacedTx tx{a, b, uint16_t(si), z};
                            occupancy.bySlot[slot].push_back(tx);
                            placed.push_back({slot, tx});
                            path.transmissions.push_back({a, b, slot});
                        }
                        cursor = pos;
                        done = true;
                    }
                    if (!done) feasible = false;
                }
            }
            streamPaths.push_back(std::move(path));
        }

        if (!feasible) {
            rollback();
            continue;
        }
        for (Path& p : streamPaths)
            std::sort(p.transmissions.begin(), p.transmissions.end(), slotOrder);
        schedule.paths[si] = std::move(streamPaths);
        stream.state = StreamState::Scheduled;
    }
    return schedule;
}

// ---- verification ----------------------------------------------------------

const char* constraintName(int constraint) {
    switch (constraint) {
        case 1: return "connectivity";
        case 2: return "unique-sender-receiver";
        case 3: return "concurrent-coexistence";
        case 4: return "unregistered-transmission";
        case 5: return "periodicity";
        case 6: return "causality";
        case 7: return "multi-path-transmission";
        default: return "unknown";
    }
}

std::vector<Violation> verifySchedule(const Schedule& schedule, const NetworkGraph& graph) {
    std::vector<Violation> out;
    auto flag = [&](int c, uint32_t slot, std::vector<NodeId> nodes, std::string detail) {
        out.push_back({c, constraintName(c), slot, std::move(nodes), std::move(detail)});
    };

    const SlotGrid& grid = schedule.grid;
    uint32_t totalSlots = grid.totalDataSlots();

    // Transmissions are set-valued: the same (sender, receiver, slot) named by
    // two paths is one event, owned by both.
    std::set<Transmission> distinct(schedule.orphans.begin(), schedule.orphans.end());
    std::map<Transmission, std::set<std::pair<int, int>>> owners;
    for (size_t si = 0; si < schedule.paths.size(); si++)
        for (const Path& p : schedule.paths[si])
            for (const Transmission& tx : p.transmissions) {
                distinct.insert(tx);
                owners[tx].insert({int(si), int(p.index)});
            }

    // 1: links must exist
    for (const Transmission& tx : distinct) {
        if (tx.slot >= totalSlots)
            flag(1, tx.slot, {tx.sender, tx.receiver}, "slot outside superframe");
        else if (!graph.hasEdge(tx.sender, tx.receiver))
            flag(1, tx.slot, {tx.sender, tx.receiver}, "no such link");
    }

    // 4: every transmission belongs to some path
    for (const Transmission& tx : distinct)
        if (owners.find(tx) == owners.end())
            flag(4, tx.slot, {tx.sender, tx.receiver}, "transmission belongs to no path");

    // 2 and 3: per-slot role and coexistence checks
    std::map<uint32_t, std::vector<Transmission>> bySlot;
    for (const Transmission& tx : distinct)
        if (tx.slot < totalSlots) bySlot[tx.slot].push_back(tx);
    for (auto& [slot, txs] : bySlot) {
        std::map<NodeId, int> roleCount;
        for (const Transmission& tx : txs) {
            roleCount[tx.sender]++;
            roleCount[tx.receiver]++;
        }
        for (auto& [node, count] : roleCount)
            if (count > 1)
                flag(2, slot, {node}, "node plays " + std::to_string(count) + " roles in one slot");
        for (size_t a = 0; a < txs.size(); a++) {
            for (size_t b = a + 1; b < txs.size(); b++) {
                NodeId i = txs[a].sender, j = txs[a].receiver;
                NodeId k = txs[b].sender, l = txs[b].receiver;
                if (i == k || j == l) continue; // constraint 2 territory
                if (graph.hasEdge(i, l))
                    flag(3, slot, {i, l}, "sender in range of a concurrent receiver");
                if (graph.hasEdge(k, j))
                    flag(3, slot, {k, j}, "sender in range of a concurrent receiver");
            }
        }
    }

    // 5 and 6 are per-path properties
    for (size_t si = 0; si < schedule.paths.size(); si++) {
        for (const Path& p : schedule.paths[si]) {
            uint32_t periodTiles = p.periodTiles;
            if (periodTiles == 0 || grid.superframeTiles % periodTiles != 0) {
                if (!p.transmissions.empty())
                    flag(5, p.transmissions.front().slot, {p.src, p.dst},
                         "period does not divide the superframe");
                continue;
            }
            uint32_t instances = grid.instanceCount(periodTiles);
            std::set<Transmission> unique(p.transmissions.begin(), p.transmissions.end());

            // every (sender, receiver, position) must recur in every instance
            std::set<std::tuple<NodeId, NodeId, uint32_t>> pattern;
            bool slotsValid = true;
            for (const Transmission& tx : unique) {
                if (tx.slot >= totalSlots) {
                    slotsValid = false;
                    continue;
                }
                pattern.insert({tx.sender, tx.receiver,
                                grid.positionInInstance(tx.slot, periodTiles)});
            }
            if (slotsValid) {
                for (auto& [s, r, pos] : pattern) {
                    for (uint32_t k = 0; k < instances; k++) {
                        int64_t slot = grid.slotAtPosition(k, periodTiles, pos);
                        bool present = slot >= 0 &&
                                       unique.count({s, r, uint32_t(slot)}) != 0;
                        if (!present)
                            flag(5, slot < 0 ? 0 : uint32_t(slot), {s, r},
                                 "transmission missing from instance " + std::to_string(k));
                    }
                }
            }

            // each transmission needs a predecessor towards the source and a
            // successor towards the destination inside its own instance
            for (const Transmission& tx : unique) {
                if (tx.slot >= totalSlots) continue;
                uint32_t instance = grid.instanceOfSlot(tx.slot, periodTiles);
                bool needPred = tx.sender != p.src;
                bool needSucc = tx.receiver != p.dst;
                bool hasPred = false, hasSucc = false;
                for (const Transmission& other : unique) {
                    if (other.slot >= totalSlots) continue;
                    if (grid.instanceOfSlot(other.slot, periodTiles) != instance) continue;
                    if (other.receiver == tx.sender && other.slot < tx.slot) hasPred = true;
                    if (other.sender == tx.receiver && other.slot > tx.slot) hasSucc = true;
                }
                if (needPred && !hasPred)
                    flag(6, tx.slot, {tx.sender, tx.receiver},
                         "no earlier hop delivers to the sender in this instance");
                if (needSucc && !hasSucc)
                    flag(6, tx.slot, {tx.sender, tx.receiver},
                         "no later hop carries on towards the destination");
            }
        }
    }

    // 7: a transmission may belong to one path only
    for (auto& [tx, list] : owners) {
        if (list.size() > 1)
            flag(7, tx.slot, {tx.sender, tx.receiver},
                 "shared by " + std::to_string(list.size()) + " paths");
    }

    return out;
}

// ---- latency ---------------------------------------------------------------

std::map<uint16_t, uint32_t> latencyBoundsMs(const Schedule& schedule) {
    std::map<uint16_t, uint32_t> bounds;
    const SlotGrid& grid = schedule.grid;
    for (size_t si = 0; si < schedule.streams.size(); si++) {
        const Stream& stream = schedule.streams[si];
        if (stream.state != StreamState::Scheduled) continue;
        uint32_t periodTiles = grid.tileDurationMs ? stream.periodMs / grid.tileDurationMs : 1;
        uint32_t instances = grid.instanceCount(periodTiles);
        uint32_t worst = 0;
        for (uint32_t k = 0; k < instances; k++) {
            // earliest final-hop slot of any path in this instance
            uint32_t earliest = UINT32_MAX;
            for (const Path& p : schedule.paths[si]) {
                for (const Transmission& tx : p.transmissions) {
                    if (tx.receiver != stream.dst) continue;
                    if (grid.instanceOfSlot(tx.slot, periodTiles) != k) continue;
                    earliest = std::min(earliest, grid.positionInInstance(tx.slot, periodTiles));
                }
            }
            if (earliest != UINT32_MAX)
                worst = std::max(worst, (earliest + 1) * grid.dataSlotDurationMs);
        }
        bounds[stream.id] = worst;
    }
    return bounds;
}

// ---- wire format -----------------------------------------------------------

namespace {

void put8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }
void put16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v));
    out.push_back(uint8_t(v >> 8));
}
void put32(std::vector<uint8_t>& out, uint32_t v) {
    put16(out, uint16_t(v));
    put16(out, uint16_t(v >> 16));
}
void put64(std::vector<uint8_t>& out, uint64_t v) {
    put32(out, uint32_t(v));
    put32(out, uint32_t(v >> 32));
}

struct Reader {
    std::span<const uint8_t> bytes;
    size_t offset = 0;

    void need(size_t n) const {
        if (offset + n > bytes.size()) throw MalformedScheduleError("truncated schedule");
    }
    uint8_t get8() {
        need(1);
        return bytes[offset++];
    }
    uint16_t get16() {
        need(2);
        uint16_t v = uint16_t(bytes[offset]) | uint16_t(bytes[offset + 1]) << 8;
        offset += 2;
        return v;
    }
    uint32_t get32() {
        uint32_t lo = get16(), hi = get16();
        return lo | hi << 16;
    }
    uint64_t get64() {
        uint64_t lo = get32(), hi = get32();
        return lo | hi << 32;
    }
};

constexpr uint16_t orphanStreamIndex = 0xffff;

// Reconstructs the hop sequence of a path from its transmissions: follow the
// first outgoing transmission of each node in slot order, first instance.
std::vector<NodeId> deriveNodes(NodeId src, NodeId dst,
                                const std::vector<Transmission>& txs) {
    std::vector<NodeId> nodes{src};
    NodeId cur = src;
    size_t from = 0;
    std::vector<Transmission> sorted = txs;
    std::sort(sorted.begin(), sorted.end(),
              [](const Transmission& a, const Transmission& b) { return a.slot < b.slot; });
    while (cur != dst) {
        bool advanced = false;
        for (size_t i = from; i < sorted.size(); i++) {
            if (sorted[i].sender == cur) {
                cur = sorted[i].receiver;
                nodes.push_back(cur);
                from = i + 1;
                advanced = true;
                break;
            }
        }
        if (!advanced) break;
    }
    return nodes;
}

} // namespace

std::vector<uint8_t> encodeSchedule(const Schedule& schedule) {
    std::vector<uint8_t> out;
    put32(out, schedule.scheduleId);
    put64(out, schedule.activationTile);
    put32(out, schedule.grid.superframeTiles);
    put32(out, schedule.grid.tileDurationMs);
    put32(out, schedule.grid.dataSlotDurationMs);
    put16(out, uint16_t(schedule.grid.dataSlotsDownlink));
    put16(out, uint16_t(schedule.grid.dataSlotsUplink));
    if (schedule.grid.controlSuperframe.size() > 255)
        throw MalformedScheduleError("control superframe too long to encode");
    put8(out, uint8_t(schedule.grid.controlSuperframe.size()));
    for (TileKind k : schedule.grid.controlSuperframe)
        put8(out, k == TileKind::Downlink ? 0 : 1);

    if (schedule.streams.size() > 0xfffe) throw MalformedScheduleError("too many streams");
    put16(out, uint16_t(schedule.streams.size()));
    for (const Stream& s : schedule.streams) {
        put16(out, s.id);
        put8(out, s.src);
        put8(out, s.dst);
        put32(out, s.periodMs);
        put8(out, s.spatialRedundancy);
        put8(out, s.temporalRedundancy);
        put8(out, uint8_t(s.state));
    }

    std::vector<std::tuple<Transmission, uint16_t, uint8_t>> txs;
    for (size_t si = 0; si < schedule.paths.size(); si++)
        for (const Path& p : schedule.paths[si])
            for (const Transmission& tx : p.transmissions)
                txs.push_back({tx, uint16_t(si), p.index});
    for (const Transmission& tx : schedule.orphans)
        txs.push_back({tx, orphanStreamIndex, 0});

    put32(out, uint32_t(txs.size()));
    for (auto& [tx, si, z] : txs) {
        put8(out, tx.sender);
        put8(out, tx.receiver);
        put32(out, tx.slot);
        put16(out, si);
        put8(out, z);
    }
    return out;
}

Schedule decodeSchedule(std::span<const uint8_t> bytes) {
    Reader in{bytes};
    Schedule schedule;
    schedule.scheduleId = in.get32();
    schedule.activationTile = in.get64();
    schedule.grid.superframeTiles = in.get32();
    schedule.grid.tileDurationMs = in.get32();
    schedule.grid.dataSlotDurationMs = in.get32();
    schedule.grid.dataSlotsDownlink = in.get16();
    schedule.grid.dataSlotsUplink = in.get16();
    uint8_t patternLen = in.get8();
    if (patternLen == 0) throw MalformedScheduleError("empty control superframe");
    for (uint8_t i = 0; i < patternLen; i++) {
        uint8_t k = in.get8();
        if (k > 1) throw MalformedScheduleError("bad tile kind");
        schedule.grid.controlSuperframe.push_back(k == 0 ? TileKind::Downlink : TileKind::Uplink);
    }
    if (schedule.grid.superframeTiles == 0 ||
        schedule.grid.superframeTiles % patternLen != 0)
        throw MalformedScheduleError("superframe not a multiple of the control superframe");

    uint16_t streamCount = in.get16();
    for (uint16_t i = 0; i < streamCount; i++) {
        Stream s;
        s.id = in.get16();
        s.src = in.get8();
        s.dst = in.get8();
        s.periodMs = in.get32();
        s.spatialRedundancy = in.get8();
        s.temporalRedundancy = in.get8();
        uint8_t state = in.get8();
        if (state > 2) throw MalformedScheduleError("bad stream state");
        s.state = static_cast<StreamState>(state);
        schedule.streams.push_back(s);
    }
    schedule.paths.resize(streamCount);

    uint32_t txCount = in.get32();
    for (uint32_t i = 0; i < txCount; i++) {
        Transmission tx;
        tx.sender = in.get8();
        tx.receiver = in.get8();
        tx.slot = in.get32();
        uint16_t si = in.get16();
        uint8_t z = in.get8();
        if (si == orphanStreamIndex) {
            schedule.orphans.push_back(tx);
            continue;
        }
        if (si >= streamCount) throw MalformedScheduleError("transmission for unknown stream");
        auto& streamPaths = schedule.paths[si];
        while (streamPaths.size() <= z) {
            Path p;
            p.src = schedule.streams[si].src;
            p.dst = schedule.streams[si].dst;
            p.periodTiles = schedule.grid.tileDurationMs
                                ? schedule.streams[si].periodMs / schedule.grid.tileDurationMs
                                : 1;
            p.index = uint8_t(streamPaths.size());
            streamPaths.push_back(std::move(p));
        }
        streamPaths[z].transmissions.push_back(tx);
    }
    if (in.offset != bytes.size()) throw MalformedScheduleError("trailing bytes");

    for (size_t si = 0; si < schedule.paths.size(); si++) {
        for (Path& p : schedule.paths[si]) {
            std::sort(p.transmissions.begin(), p.transmissions.end(), slotOrder);
            p.nodes = deriveNodes(p.src, p.dst, p.transmissions);
        }
    }
    return schedule;
}

std::string dumpSchedule(const Schedule& schedule) {
    std::ostringstream out;
    out << "# schedule " << schedule.scheduleId << " superframe_tiles "
        << schedule.grid.superframeTiles << " activation_tile " << schedule.activationTile
        << "\n";
    std::vector<std::tuple<uint32_t, NodeId, NodeId, uint16_t, uint8_t>> rows;
    for (size_t si = 0; si < schedule.paths.size(); si++)
        for (const Path& p : schedule.paths[si])
            for (const Transmission& tx : p.transmissions)
                rows.push_back({tx.slot, tx.sender, tx.receiver, schedule.streams[si].id,
                                p.index});
    std::sort(rows.begin(), rows.end());
    for (auto& [slot, s, r, stream, z] : rows)
        out << slot << ' ' << unsigned(s) << "->" << unsigned(r) << " stream " << stream
            << " path " << unsigned(z) << "\n";
    return out.str();
}

} // namespace tdmh
