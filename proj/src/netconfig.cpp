#include "tdmh/netconfig.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace tdmh {

uint32_t defaultDownlinkSlotMs(uint32_t maxHops) {
    return floodBaseMs + maxHops * floodPerHopMs;
}

std::vector<uint32_t> defaultAllowedPeriodsMs(uint32_t tileDurationMs) {
    std::vector<uint32_t> periods;
    for (uint32_t multiple : {1, 2, 5, 10, 20, 50, 100})
        periods.push_back(multiple * tileDurationMs);
    return periods;
}

std::vector<uint32_t> NetworkConfiguration::periodsOrDefault() const {
    if (!allowedPeriodsMs.empty()) return allowedPeriodsMs;
    return defaultAllowedPeriodsMs(tileDurationMs);
}

bool NetworkConfiguration::isPeriodAllowed(uint32_t periodMs) const {
    auto periods = periodsOrDefault();
    return std::find(periods.begin(), periods.end(), periodMs) != periods.end();
}

const char* tileKindName(TileKind kind) {
    return kind == TileKind::Downlink ? "DOWNLINK" : "UPLINK";
}

std::vector<ConfigViolation> validate(const NetworkConfiguration& config) {
    std::vector<ConfigViolation> out;
    auto flag = [&](const char* field, const std::string& rule) {
        out.push_back({field, rule});
    };

    bool hasDown = false, hasUp = false;
    for (TileKind k : config.controlSuperframe) {
        if (k == TileKind::Downlink) hasDown = true;
        else hasUp = true;
    }
    if (config.controlSuperframe.empty())
        flag("control_superframe", "must not be empty");
    if (!hasDown)
        flag("control_superframe", "missing DOWNLINK tile");
    if (!hasUp)
        flag("control_superframe", "missing UPLINK tile");

    if (config.tileDurationMs == 0)
        flag("tile_duration_ms", "must be positive");
    if (config.dataSlotDurationMs == 0)
        flag("data_slot_duration_ms", "must be positive");
    if (config.dataFrameSizeBytes < 1 || config.dataFrameSizeBytes > 125)
        flag("data_frame_size_bytes", "frame exceeds physical maximum of 125 bytes");
    if (config.downlinkSlotDurationMs >= config.tileDurationMs)
        flag("downlink_slot_duration_ms", "control slot must be shorter than the tile");
    if (config.uplinkFramesPerSlot < 1)
        flag("uplink_frames_per_slot", "must be at least 1");
    if (config.uplinkSlotDurationMs() >= config.tileDurationMs)
        flag("uplink_frame_duration_ms", "control slot must be shorter than the tile");
    if (config.maxHops < 1)
        flag("max_hops", "must be at least 1");
    if (config.maxNodes < 2)
        flag("max_nodes", "must be at least 2");
    if (config.maxNodes > 256)
        flag("max_nodes", "node ids are one byte, at most 256 nodes");
    if (config.topologyExpiryRounds < 1)
        flag("topology_expiry_rounds", "must be at least 1");
    if (config.scheduleRepetitions < 1)
        flag("schedule_repetitions", "must be at least 1");

    if (config.tileDurationMs > 0) {
        for (uint32_t p : config.periodsOrDefault()) {
            if (p == 0 || p % config.tileDurationMs != 0) {
                flag("allowed_periods_ms",
                     "period " + std::to_string(p) + " is not a positive multiple of the tile duration");
            }
        }
    }
    return out;
}

SlotLayout slotLayout(const NetworkConfiguration& config, TileKind kind) {
    SlotLayout layout;
    layout.kind = kind;
    layout.controlSlotMs = kind == TileKind::Downlink ? config.downlinkSlotDurationMs
                                                      : config.uplinkSlotDurationMs();
    uint32_t remaining = config.tileDurationMs - std::min(config.tileDurationMs, layout.controlSlotMs);
    layout.dataSlotCount = remaining / config.dataSlotDurationMs;
    layout.slackMs = remaining - layout.dataSlotCount * config.dataSlotDurationMs;
    return layout;
}

NodeId uplinkNodeForSlot(uint64_t roundSlotIndex, uint16_t maxNodes) {
    uint16_t cycle = maxNodes - 1;
    return static_cast<NodeId>(cycle - (roundSlotIndex % cycle));
}

double controlOverhead(const NetworkConfiguration& config) {
    uint64_t dataSlots = 0;
    uint64_t capacity = 0;
    uint32_t rawPerTile = config.tileDurationMs / config.dataSlotDurationMs;
    for (TileKind kind : config.controlSuperframe) {
        dataSlots += slotLayout(config, kind).dataSlotCount;
        capacity += rawPerTile;
    }
    if (capacity == 0) return 1.0;
    return 1.0 - double(dataSlots) / double(capacity);
}

uint32_t dataSuperframeLengthTiles(const NetworkConfiguration& config,
                                   const std::vector<uint32_t>& periodsMs) {
    uint64_t lcmMs = config.controlSuperframeDurationMs();
    for (uint32_t p : periodsMs) lcmMs = std::lcm(lcmMs, uint64_t(p));
    return static_cast<uint32_t>(lcmMs / config.tileDurationMs);
}

SlotGrid SlotGrid::fromConfig(const NetworkConfiguration& config, uint32_t superframeTiles) {
    SlotGrid grid;
    grid.controlSuperframe = config.controlSuperframe;
    grid.dataSlotsDownlink = slotLayout(config, TileKind::Downlink).dataSlotCount;
    grid.dataSlotsUplink = slotLayout(config, TileKind::Uplink).dataSlotCount;
    grid.dataSlotDurationMs = config.dataSlotDurationMs;
    grid.tileDurationMs = config.tileDurationMs;
    grid.superframeTiles = superframeTiles;
    return grid;
}

uint32_t SlotGrid::slotsInTile(uint32_t tileIndex) const {
    TileKind kind = controlSuperframe[tileIndex % controlSuperframe.size()];
    return kind == TileKind::Downlink ? dataSlotsDownlink : dataSlotsUplink;
}

uint32_t SlotGrid::totalDataSlots() const {
    uint32_t total = 0;
    for (uint32_t t = 0; t < superframeTiles; t++) total += slotsInTile(t);
    return total;
}

uint32_t SlotGrid::firstSlotOfTile(uint32_t tileIndex) const {
    uint32_t perSuperframe = 0;
    size_t len = controlSuperframe.size();
    std::vector<uint32_t> prefix(len + 1, 0);
    for (size_t i = 0; i < len; i++) {
        uint32_t slots = controlSuperframe[i] == TileKind::Downlink ? dataSlotsDownlink
                                                                    : dataSlotsUplink;
        prefix[i + 1] = prefix[i] + slots;
    }
    perSuperframe = prefix[len];
    return (tileIndex / len) * perSuperframe + prefix[tileIndex % len];
}

uint32_t SlotGrid::tileOfSlot(uint32_t slot) const {
    for (uint32_t t = 0; t < superframeTiles; t++) {
        uint32_t first = firstSlotOfTile(t);
        if (slot >= first && slot < first + slotsInTile(t)) return t;
    }
    throw std::out_of_range("slot outside superframe");
}

uint32_t SlotGrid::instanceCount(uint32_t periodTiles) const {
    return superframeTiles / periodTiles;
}

uint32_t SlotGrid::instanceOfSlot(uint32_t slot, uint32_t periodTiles) const {
    return tileOfSlot(slot) / periodTiles;
}

uint32_t SlotGrid::positionInInstance(uint32_t slot, uint32_t periodTiles) const {
    uint32_t instance = instanceOfSlot(slot, periodTiles);
    return slot - firstSlotOfTile(instance * periodTiles);
}

uint32_t SlotGrid::slotsInInstance(uint32_t instance, uint32_t periodTiles) const {
    uint32_t total = 0;
    for (uint32_t t = instance * periodTiles; t < (instance + 1) * periodTiles; t++)
        total += slotsInTile(t);
    return total;
}

int64_t SlotGrid::slotAtPosition(uint32_t instance, uint32_t periodTiles,
                                 uint32_t position) const {
    if (position >= slotsInInstance(instance, periodTiles)) return -1;
    return int64_t(firstSlotOfTile(instance * periodTiles)) + position;
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<TileKind> parseSuperframe(const std::string& value) {
    std::vector<TileKind> pattern;
    for (char c : value) {
        if (c == 'D' || c == 'd') pattern.push_back(TileKind::Downlink);
        else if (c == 'U' || c == 'u') pattern.push_back(TileKind::Uplink);
        else if (c == ' ' || c == ',') continue;
        else throw std::runtime_error("bad control_superframe char: " + std::string(1, c));
    }
    return pattern;
}

std::vector<uint32_t> parseNumberList(const std::string& value) {
    std::vector<uint32_t> out;
    std::string item;
    std::istringstream in(value);
    while (in >> item) {
        if (!item.empty() && item.back() == ',') item.pop_back();
        if (!item.empty()) out.push_back(static_cast<uint32_t>(std::stoul(item)));
    }
    return out;
}

} // namespace

void applyConfigKey(NetworkConfiguration& config, const std::string& key,
                    const std::string& value) {
    if (key == "pan_id") config.panId = static_cast<uint16_t>(std::stoul(value, nullptr, 0));
    else if (key == "channel") config.channel = static_cast<uint8_t>(std::stoul(value));
    else if (key == "sync_period_ms") config.syncPeriodMs = std::stoul(value);
    else if (key == "propagation_delay_compensation")
        config.propagationDelayCompensation = (value == "true" || value == "1");
    else if (key == "tile_duration_ms") config.tileDurationMs = std::stoul(value);
    else if (key == "control_superframe") config.controlSuperframe = parseSuperframe(value);
    else if (key == "data_slot_duration_ms") config.dataSlotDurationMs = std::stoul(value);
    else if (key == "data_frame_size_bytes") config.dataFrameSizeBytes = std::stoul(value);
    else if (key == "downlink_slot_duration_ms") config.downlinkSlotDurationMs = std::stoul(value);
    else if (key == "uplink_frames_per_slot") config.uplinkFramesPerSlot = std::stoul(value);
    else if (key == "uplink_frame_duration_ms") config.uplinkFrameDurationMs = std::stoul(value);
    else if (key == "max_hops") config.maxHops = std::stoul(value);
    else if (key == "max_nodes") config.maxNodes = static_cast<uint16_t>(std::stoul(value));
    else if (key == "topology_expiry_rounds") config.topologyExpiryRounds = std::stoul(value);
    else if (key == "schedule_repetitions") config.scheduleRepetitions = std::stoul(value);
    else if (key == "allowed_periods_ms") config.allowedPeriodsMs = parseNumberList(value);
    else throw std::runtime_error("unknown configuration key: " + key);
}

NetworkConfiguration parseConfigFile(std::istream& in) {
    NetworkConfiguration config;
    bool downlinkExplicit = false;
    std::string line;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("expected key = value, got: " + t);
        std::string key = trim(t.substr(0, eq));
        if (key == "downlink_slot_duration_ms") downlinkExplicit = true;
        applyConfigKey(config, key, trim(t.substr(eq + 1)));
    }
    // The downlink slot scales with the hop budget unless pinned explicitly.
    if (!downlinkExplicit)
        config.downlinkSlotDurationMs = defaultDownlinkSlotMs(config.maxHops);
    return config;
}

NetworkConfiguration loadConfigFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return parseConfigFile(in);
}

std::string configToText(const NetworkConfiguration& c) {
    std::ostringstream out;
    out << "pan_id = " << c.panId << "\n";
    out << "channel = " << unsigned(c.channel) << "\n";
    out << "sync_period_ms = " << c.syncPeriodMs << "\n";
    out << "propagation_delay_compensation = " << (c.propagationDelayCompensation ? "true" : "false") << "\n";
    out << "tile_duration_ms = " << c.tileDurationMs << "\n";
    out << "control_superframe = ";
    for (TileKind k : c.controlSuperframe) out << (k == TileKind::Downlink ? 'D' : 'U');
    out << "\n";
    out << "data_slot_duration_ms = " << c.dataSlotDurationMs << "\n";
    out << "data_frame_size_bytes = " << c.dataFrameSizeBytes << "\n";
    out << "downlink_slot_duration_ms = " << c.downlinkSlotDurationMs << "\n";
    out << "uplink_frames_per_slot = " << c.uplinkFramesPerSlot << "\n";
    out << "uplink_frame_duration_ms = " << c.uplinkFrameDurationMs << "\n";
    out << "max_hops = " << c.maxHops << "\n";
    out << "max_nodes = " << c.maxNodes << "\n";
    out << "topology_expiry_rounds = " << c.topologyExpiryRounds << "\n";
    out << "schedule_repetitions = " << c.scheduleRepetitions << "\n";
    if (!c.allowedPeriodsMs.empty()) {
        out << "allowed_periods_ms =";
        for (uint32_t p : c.allowedPeriodsMs) out << ' ' << p;
        out << "\n";
    }
    return out.str();
}

} // namespace tdmh
