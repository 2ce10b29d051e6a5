#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "netconfig.hpp"
#include "scheduler.hpp"

namespace tdmh {

enum class SlotActionKind : uint8_t {
    Sleep,
    SendFromApp,
    ReceiveAndBuffer,
    Forward,
    ReceiveToApp,
};

const char* slotActionName(SlotActionKind kind);

constexpr uint16_t noBuffer = 0xffff;

// What one node does in one data slot.
struct SlotAction {
    SlotActionKind kind = SlotActionKind::Sleep;
    NodeId peer = 0;          // receiver when sending, sender when receiving
    uint16_t streamIndex = 0; // index into the schedule's stream table
    uint8_t pathIndex = 0;
    uint16_t buffer = noBuffer;

    bool operator==(const SlotAction&) const = default;
};

// One node's repeating data-superframe program, one action per data slot.
struct NodeSlotProgram {
    NodeId node = 0;
    SlotGrid grid;
    std::vector<SlotAction> actions;

    bool operator==(const NodeSlotProgram&) const = default;
};

// The part of the global schedule that concerns one node. Buffers are not
// assigned yet (allocateBuffers does that).
NodeSlotProgram extractNodeSchedule(const Schedule& schedule, NodeId node);

// Forwarding buffer reuse by liveness analysis: a buffered frame is live from
// its first receive slot (exclusive) to its last forward slot (inclusive),
// cyclic over the superframe. Redundant copies of one stream within a period
// share a single buffer and overwrite each other; holds of unrelated streams
// may reuse a buffer when their live ranges are disjoint. Greedy lowest-free
// assignment in slot order, which is optimal for these intervals: the buffer
// count equals the maximum number of simultaneously live frames.
struct BufferAssignment {
    uint16_t bufferCount = 0;
    struct LiveRange {
        uint16_t streamIndex = 0;
        uint32_t receiveSlot = 0; // exclusive; first receive of the hold
        uint32_t forwardSlot = 0; // inclusive; forwardSlot < receiveSlot wraps
        uint16_t buffer = 0;
    };
    std::vector<LiveRange> ranges;
};

BufferAssignment allocateBuffers(const NodeSlotProgram& program);

// Writes the assignment's buffer indices into the program's actions.
void applyBuffers(NodeSlotProgram& program, const BufferAssignment& assignment);

// extract + allocate + apply.
NodeSlotProgram buildNodeProgram(const Schedule& schedule, NodeId node);

// "slot action peer buffer" lines.
std::string dumpProgram(const NodeSlotProgram& program);

// An application frame travelling the network; payload is opaque.
struct FrameToken {
    uint16_t streamIndex = 0;
    uint64_t instance = 0; // period instance number since activation

    bool operator==(const FrameToken&) const = default;
};

enum class EnergyClass : uint8_t { Tx, Rx, Sleep };

// Per-node runtime state for the data plane.
struct NodeDataState {
    std::vector<std::optional<FrameToken>> buffers;
    // stream index -> latest period instance already received (listen-skip)
    std::map<uint16_t, uint64_t> receivedInstance;
};

struct SlotOutcome {
    std::optional<FrameToken> emitted;
    EnergyClass energy = EnergyClass::Sleep;
    bool deliveredToApp = false;
};

// Sender half of a data slot: decides what (if anything) leaves the antenna.
// A forward with no valid buffered frame stays silent.
SlotOutcome executeSendSlot(NodeDataState& state, const SlotAction& action,
                            uint64_t currentInstance);

// Receiver half: `arrived` carries the frame if the radio delivered one.
// A receiver that already holds this period's frame skips listening and the
// slot costs sleep energy.
SlotOutcome executeReceiveSlot(NodeDataState& state, const SlotAction& action,
                               const std::optional<FrameToken>& arrived,
                               uint64_t currentInstance);

} // namespace tdmh
