#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "datalink.hpp"
#include "flood.hpp"
#include "graph.hpp"
#include "netconfig.hpp"
#include "scheduler.hpp"
#include "topology.hpp"

namespace tdmh {

enum class FaultKind : uint8_t { NodeFail, NodeJoin, LinkSet };

struct FaultEvent {
    uint64_t timeMs = 0;
    FaultKind kind = FaultKind::NodeFail;
    uint16_t node = 0; // NodeFail / NodeJoin
    uint16_t u = 0, v = 0;
    double reliability = 0.0; // LinkSet
};

struct StreamRequest {
    NodeId src = 0;
    NodeId dst = 0;
    uint32_t periodMs = 0;
    uint8_t spatialRedundancy = 1;
    uint8_t temporalRedundancy = 1;
    uint64_t openAtMs = 0;
    uint64_t closeAtMs = 0; // 0 = never closed
};

enum class IdAssignment : uint8_t { Forward, Reverse };

struct Scenario {
    std::string name = "scenario";
    NetworkConfiguration config;
    NetworkGraph physicalGraph; // node ids are final protocol ids
    std::vector<FaultEvent> faults;
    std::vector<StreamRequest> streams;
    uint64_t durationMs = 0;
    uint64_t seed = 0;
    // Compute one schedule from the full physical graph at time zero, hand it
    // to every node and never reschedule. Used for data-plane reliability
    // campaigns where topology churn must not move streams around.
    bool freezeSchedule = false;
    bool traceEnabled = true;
};

struct InvalidScenarioError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Radio currents of the modeled transceiver plus the always-on timebase that
// keeps synchronization in deep sleep.
struct CurrentModel {
    double iTxMa = 10.0;
    double iRxMa = 8.0;
    double iSleepMa = 0.002;
    double iTimebaseMa = 0.1;
    // Share of an uplink frame spent sensing before giving up on a silent slot.
    double senseWindowFraction = 0.1;
};

struct TraceEvent {
    uint64_t timeMs = 0;
    std::string text;
};

struct StreamMetrics {
    NodeId src = 0;
    NodeId dst = 0;
    uint32_t periodMs = 0;
    uint64_t deliveredInstances = 0;
    uint64_t elapsedInstances = 0;

    double reliability() const {
        return elapsedInstances ? double(deliveredInstances) / double(elapsedInstances) : 0.0;
    }
};

struct Metrics {
    uint64_t syncCompleteMs = 0;
    std::optional<uint64_t> formationMs; // from sync complete
    std::optional<uint64_t> convergenceTotalMs;
    std::optional<uint64_t> convergenceSilentMs;
    std::optional<uint64_t> convergencePropagationMs;
    double controlOverhead = 0.0;
    std::vector<StreamMetrics> streams;
    std::map<Link, double> linkUptime;
    std::map<uint16_t, double> nodeCurrentMa;
    std::map<uint16_t, double> connectivityFraction;
    // Per-node data-plane slot tallies over the whole run.
    std::map<uint16_t, uint64_t> dataSlotsTx;
    std::map<uint16_t, uint64_t> dataSlotsRx;
    std::vector<TraceEvent> trace;
};

// Runs the whole protocol stack over the scenario, tile by tile, driven by a
// single seeded random stream. Identical (scenario, seed) gives identical
// metrics and trace.
Metrics runScenario(const Scenario& scenario);

// Post-hoc measurements over a run's trace (link-add/link-remove/uplink/...
// events). They recompute what runScenario also tracks, from the trace alone.
std::optional<uint64_t> measureFormationTime(const std::vector<TraceEvent>& trace,
                                             const NetworkGraph& trueGraph);
struct ConvergenceBreakdown {
    uint64_t silentMs = 0;      // last overheard transmission -> first local expiry
    uint64_t propagationMs = 0; // first local expiry -> master graph clean
    uint64_t totalMs = 0;       // failure -> master graph clean
};
std::optional<ConvergenceBreakdown> measureConvergenceAfterFailure(
    const std::vector<TraceEvent>& trace, uint16_t failedNode);

// Per-stream delivered fraction, straight from metrics.
std::map<std::pair<NodeId, NodeId>, double> measureStreamReliability(const Metrics& metrics);

// Average node current from duty cycling: downlink floods, the node's own
// uplink slot, overhearing (or sensing) the others, data slots, sleep, plus
// the timebase floor. Affine in the fraction of data slots used.
double estimatePower(const NetworkConfiguration& config, double dataLoadFraction,
                     double connectivityFraction, const CurrentModel& model);
// Same, with the data term taken from a concrete per-node program.
double estimatePower(const NetworkConfiguration& config, const NodeSlotProgram& program,
                     double connectivityFraction, const CurrentModel& model);

// Triangular-lattice patch where interior nodes have six neighbors and the
// master sits at a corner. Nodes are numbered by distance from the master;
// Reverse assignment gives the farthest node id 1 (the worst case for the
// round robin), Forward gives it the highest id.
NetworkGraph makeHexagonalGraph(uint16_t nodeCount, IdAssignment assignment);

// Scenario file: [config] / [graph] / [id_assignment] / [streams] / [faults]
// / [run] sections.
Scenario parseScenario(std::istream& in);
Scenario loadScenarioFile(const std::string& path);

// Stable CSV rendering (header + one row per run) and the line-oriented trace.
std::string metricsCsvHeader(const Metrics& metrics);
std::string metricsCsvRow(const Scenario& scenario, const Metrics& metrics);
std::string traceToText(const Metrics& metrics);

} // namespace tdmh
