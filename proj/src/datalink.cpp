#include "tdmh/datalink.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace tdmh {

const char* slotActionName(SlotActionKind kind) {
    switch (kind) {
        case SlotActionKind::Sleep: return "sleep";
        case SlotActionKind::SendFromApp: return "send-from-app";
        case SlotActionKind::ReceiveAndBuffer: return "receive-and-buffer";
        case SlotActionKind::Forward: return "forward";
        case SlotActionKind::ReceiveToApp: return "receive-to-app";
    }
    return "?";
}

NodeSlotProgram extractNodeSchedule(const Schedule& schedule, NodeId node) {
    NodeSlotProgram program;
    program.node = node;
    program.grid = schedule.grid;
    program.actions.assign(schedule.grid.totalDataSlots(), SlotAction{});

    for (size_t si = 0; si < schedule.paths.size(); si++) {
        for (const Path& p : schedule.paths[si]) {
            for (const Transmission& tx : p.transmissions) {
                SlotAction action;
                action.streamIndex = uint16_t(si);
                action.pathIndex = p.index;
                if (tx.sender == node) {
                    action.kind = tx.sender == p.src ? SlotActionKind::SendFromApp
                                                     : SlotActionKind::Forward;
                    action.peer = tx.receiver;
                } else if (tx.receiver == node) {
                    action.kind = tx.receiver == p.dst ? SlotActionKind::ReceiveToApp
                                                       : SlotActionKind::ReceiveAndBuffer;
                    action.peer = tx.sender;
                } else {
                    continue;
                }
                program.actions.at(tx.slot) = action;
            }
        }
    }
    return program;
}

namespace {

// Slots of one live range, respecting the superframe wrap.
bool rangeCovers(const BufferAssignment::LiveRange& r, uint32_t slot) {
    if (r.receiveSlot <= r.forwardSlot) return slot > r.receiveSlot && slot <= r.forwardSlot;
    return slot > r.receiveSlot || slot <= r.forwardSlot; // wraps
}

bool rangesOverlap(const BufferAssignment::LiveRange& a,
                   const BufferAssignment::LiveRange& b, uint32_t slots) {
    for (uint32_t s = 0; s < slots; s++)
        if (rangeCovers(a, s) && rangeCovers(b, s)) return true;
    return false;
}

} // namespace

BufferAssignment allocateBuffers(const NodeSlotProgram& program) {
    BufferAssignment assignment;
    uint32_t slots = uint32_t(program.actions.size());

    // One hold per stream per period repetition: a run of receives followed by
    // the forwards that drain it. A fresh receive after a forward opens the
    // next repetition's hold.
    std::map<uint16_t, std::vector<BufferAssignment::LiveRange>> byStream;
    std::map<uint16_t, std::vector<uint32_t>> leadingForwards; // before any receive
    for (uint32_t slot = 0; slot < slots; slot++) {
        const SlotAction& action = program.actions[slot];
        bool isRecv = action.kind == SlotActionKind::ReceiveAndBuffer;
        bool isFwd = action.kind == SlotActionKind::Forward;
        if (!isRecv && !isFwd) continue;
        auto& ranges = byStream[action.streamIndex];
        if (isFwd) {
            if (ranges.empty()) {
                // forward before the first receive: the hold wraps from the
                // previous superframe; attach once the last hold is known
                leadingForwards[action.streamIndex].push_back(slot);
            } else {
                ranges.back().forwardSlot = slot;
            }
        } else {
            bool startNew = ranges.empty() || ranges.back().forwardSlot != ranges.back().receiveSlot;
            if (startNew)
                ranges.push_back({action.streamIndex, slot, slot, 0});
            // further receives of the same hold overwrite the same buffer
        }
    }
    for (auto& [stream, fwds] : leadingForwards) {
        auto& ranges = byStream[stream];
        if (ranges.empty()) continue; // forwards with no receive at all: empty buffer, silent
        ranges.back().forwardSlot = fwds.back(); // wrapping hold
    }

    std::vector<BufferAssignment::LiveRange> all;
    for (auto& [stream, ranges] : byStream)
        for (auto& r : ranges) all.push_back(r);
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.receiveSlot != b.receiveSlot ? a.receiveSlot < b.receiveSlot
                                              : a.streamIndex < b.streamIndex;
    });

    for (size_t i = 0; i < all.size(); i++) {
        uint16_t buffer = 0;
        for (bool taken = true; taken; buffer++) {
            taken = false;
            for (size_t j = 0; j < i && !taken; j++)
                if (all[j].buffer == buffer && rangesOverlap(all[i], all[j], slots)) taken = true;
            if (!taken) break;
        }
        all[i].buffer = buffer;
        assignment.bufferCount = std::max<uint16_t>(assignment.bufferCount, buffer + 1);
    }
    assignment.ranges = std::move(all);
    return assignment;
}

void applyBuffers(NodeSlotProgram& program, const BufferAssignment& assignment) {
    for (const auto& range : assignment.ranges) {
        for (uint32_t slot = 0; slot < program.actions.size(); slot++) {
            SlotAction& action = program.actions[slot];
            if (action.streamIndex != range.streamIndex) continue;
            bool isHoldSlot = slot == range.receiveSlot || rangeCovers(range, slot);
            if (!isHoldSlot) continue;
            if (action.kind == SlotActionKind::ReceiveAndBuffer ||
                action.kind == SlotActionKind::Forward)
                action.buffer = range.buffer;
        }
    }
}

NodeSlotProgram buildNodeProgram(const Schedule& schedule, NodeId node) {
    NodeSlotProgram program = extractNodeSchedule(schedule, node);
    BufferAssignment assignment = allocateBuffers(program);
    applyBuffers(program, assignment);
    return program;
}

std::string dumpProgram(const NodeSlotProgram& program) {
    std::ostringstream out;
    for (size_t slot = 0; slot < program.actions.size(); slot++) {
        const SlotAction& a = program.actions[slot];
        out << slot << ' ' << slotActionName(a.kind);
        if (a.kind != SlotActionKind::Sleep) out << ' ' << unsigned(a.peer);
        if (a.buffer != noBuffer) out << " buffer " << a.buffer;
        out << "\n";
    }
    return out.str();
}

SlotOutcome executeSendSlot(NodeDataState& state, const SlotAction& action,
                            uint64_t currentInstance) {
    SlotOutcome outcome;
    switch (action.kind) {
        case SlotActionKind::SendFromApp:
            outcome.emitted = FrameToken{action.streamIndex, currentInstance};
            outcome.energy = EnergyClass::Tx;
            break;
        case SlotActionKind::Forward: {
            if (action.buffer != noBuffer && action.buffer < state.buffers.size()) {
                auto& buffer = state.buffers[action.buffer];
                if (buffer && buffer->streamIndex == action.streamIndex &&
                    buffer->instance == currentInstance) {
                    outcome.emitted = *buffer;
                    outcome.energy = EnergyClass::Tx;
                    break;
                }
            }
            // nothing valid to forward: stay silent
            outcome.energy = EnergyClass::Sleep;
            break;
        }
        default:
            outcome.energy = EnergyClass::Sleep;
            break;
    }
    return outcome;
}

SlotOutcome executeReceiveSlot(NodeDataState& state, const SlotAction& action,
                               const std::optional<FrameToken>& arrived,
                               uint64_t currentInstance) {
    SlotOutcome outcome;
    if (action.kind != SlotActionKind::ReceiveAndBuffer &&
        action.kind != SlotActionKind::ReceiveToApp) {
        outcome.energy = EnergyClass::Sleep;
        return outcome;
    }

    // Listen-skip: once this period's frame is in, redundant receive slots
    // cost no radio time.
    auto flagIt = state.receivedInstance.find(action.streamIndex);
    if (flagIt != state.receivedInstance.end() && flagIt->second == currentInstance) {
        outcome.energy = EnergyClass::Sleep;
        return outcome;
    }

    outcome.energy = EnergyClass::Rx;
    if (!arrived || arrived->streamIndex != action.streamIndex ||
        arrived->instance != currentInstance)
        return outcome;

    state.receivedInstance[action.streamIndex] = currentInstance;
    if (action.kind == SlotActionKind::ReceiveAndBuffer) {
        if (action.buffer != noBuffer) {
            if (state.buffers.size() <= action.buffer) state.buffers.resize(action.buffer + 1);
            state.buffers[action.buffer] = *arrived;
        }
    } else {
        outcome.deliveredToApp = true;
    }
    return outcome;
}

} // namespace tdmh
