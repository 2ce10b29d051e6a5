#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace tdmh {

using NodeId = uint8_t;
constexpr NodeId masterNodeId = 0;

enum class TileKind : uint8_t { Downlink, Uplink };

// Rough duration of a single flooded-frame rebroadcast, used to derive a
// default downlink slot length from the hop budget.
constexpr uint32_t floodBaseMs = 2;
constexpr uint32_t floodPerHopMs = 2;

uint32_t defaultDownlinkSlotMs(uint32_t maxHops);

// 1-2-5 series multiples of the tile duration, used when a network does not
// restrict stream periods explicitly. Keeps data superframe LCMs small.
std::vector<uint32_t> defaultAllowedPeriodsMs(uint32_t tileDurationMs);

// Every parameter a node needs to join and operate a network. All durations
// are integral milliseconds.
struct NetworkConfiguration {
    uint16_t panId = 0xcafe;
    uint8_t channel = 11; // informational in simulation
    uint32_t syncPeriodMs = 10000;
    bool propagationDelayCompensation = false;

    uint32_t tileDurationMs = 100;
    std::vector<TileKind> controlSuperframe = {TileKind::Downlink, TileKind::Uplink};
    uint32_t dataSlotDurationMs = 6;
    uint32_t dataFrameSizeBytes = 125;

    uint32_t downlinkSlotDurationMs = defaultDownlinkSlotMs(6);
    uint32_t uplinkFramesPerSlot = 1;
    uint32_t uplinkFrameDurationMs = 6;

    uint32_t maxHops = 6;
    uint16_t maxNodes = 32;
    uint32_t topologyExpiryRounds = 3;
    uint32_t scheduleRepetitions = 3;

    // Empty means "use defaultAllowedPeriodsMs(tileDurationMs)".
    std::vector<uint32_t> allowedPeriodsMs;

    // The propagation delay compensation reply occupies one extra uplink
    // frame per slot when enabled.
    uint32_t effectiveUplinkFrames() const {
        return uplinkFramesPerSlot + (propagationDelayCompensation ? 1 : 0);
    }
    uint32_t uplinkSlotDurationMs() const {
        return effectiveUplinkFrames() * uplinkFrameDurationMs;
    }
    uint32_t controlSuperframeDurationMs() const {
        return static_cast<uint32_t>(controlSuperframe.size()) * tileDurationMs;
    }
    std::vector<uint32_t> periodsOrDefault() const;

    bool isPeriodAllowed(uint32_t periodMs) const;
};

struct ConfigViolation {
    std::string field;
    std::string rule;
};

// Empty result means the configuration is well formed. Violations are data,
// not errors.
std::vector<ConfigViolation> validate(const NetworkConfiguration& config);

struct SlotLayout {
    TileKind kind;
    uint32_t controlSlotMs = 0;
    uint32_t dataSlotCount = 0;
    uint32_t slackMs = 0;
};

// Splits a tile into control slot, data slots and trailing slack.
// controlSlotMs + dataSlotCount * dataSlotDurationMs + slackMs == tileDurationMs.
SlotLayout slotLayout(const NetworkConfiguration& config, TileKind kind);

// Round-robin owner of an uplink slot. Counts down from maxNodes-1 to 1 and
// repeats; the master never owns a slot.
NodeId uplinkNodeForSlot(uint64_t roundSlotIndex, uint16_t maxNodes);

// Fraction of the raw slot capacity of one control superframe that is not
// available for data, computable from the configuration alone.
double controlOverhead(const NetworkConfiguration& config);

// Length, in tiles, of the data superframe accommodating the given stream
// periods: lcm of the periods and the control superframe duration. With no
// periods this is exactly one control superframe.
uint32_t dataSuperframeLengthTiles(const NetworkConfiguration& config,
                                   const std::vector<uint32_t>& periodsMs);

// Precomputed slot arithmetic for one data superframe. Derived from a
// configuration but self-contained, so an encoded schedule can carry it and
// be verified without the originating configuration.
struct SlotGrid {
    std::vector<TileKind> controlSuperframe;
    uint32_t dataSlotsDownlink = 0;
    uint32_t dataSlotsUplink = 0;
    uint32_t dataSlotDurationMs = 0;
    uint32_t tileDurationMs = 0;
    uint32_t superframeTiles = 0;

    static SlotGrid fromConfig(const NetworkConfiguration& config, uint32_t superframeTiles);

    uint32_t slotsInTile(uint32_t tileIndex) const;
    uint32_t totalDataSlots() const;
    // First data slot of the given tile, counting from superframe start.
    uint32_t firstSlotOfTile(uint32_t tileIndex) const;
    uint32_t tileOfSlot(uint32_t slot) const;

    // Period instances: the superframe divides into superframeTiles/periodTiles
    // windows of periodTiles tiles each.
    uint32_t instanceCount(uint32_t periodTiles) const;
    uint32_t instanceOfSlot(uint32_t slot, uint32_t periodTiles) const;
    // Position of a slot within its instance, counting data slots from the
    // instance start.
    uint32_t positionInInstance(uint32_t slot, uint32_t periodTiles) const;
    uint32_t slotsInInstance(uint32_t instance, uint32_t periodTiles) const;
    // Global slot at (instance, position), or -1 if the instance is too short.
    int64_t slotAtPosition(uint32_t instance, uint32_t periodTiles, uint32_t position) const;

    bool operator==(const SlotGrid&) const = default;
};

const char* tileKindName(TileKind kind);

// Flat key = value configuration file.
NetworkConfiguration parseConfigFile(std::istream& in);
NetworkConfiguration loadConfigFile(const std::string& path);
std::string configToText(const NetworkConfiguration& config);
void applyConfigKey(NetworkConfiguration& config, const std::string& key,
                    const std::string& value);

} // namespace tdmh
