#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tdmh/datalink.hpp"
#include "tdmh/graph.hpp"
#include "tdmh/netconfig.hpp"
#include "tdmh/scheduler.hpp"
#include "tdmh/sim.hpp"

using namespace tdmh;

namespace {

constexpr int exitOk = 0;
constexpr int exitIoError = 1;
constexpr int exitViolations = 2;
constexpr int exitUsage = 64;

std::vector<uint8_t> readBinary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return std::vector<uint8_t>(std::istreambuf_iterator<char>(in),
                                std::istreambuf_iterator<char>());
}

void writeFile(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

void writeBinary(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

std::vector<Stream> loadStreamsFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<Stream> streams;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first) || first[0] == '#') continue;
        unsigned src = std::stoul(first);
        unsigned dst, spatial, temporal;
        uint32_t period;
        if (!(ls >> dst >> period >> spatial >> temporal))
            throw std::runtime_error("stream line: src dst period_ms spatial temporal");
        Stream s;
        s.id = uint16_t(streams.size());
        s.src = NodeId(src);
        s.dst = NodeId(dst);
        s.periodMs = period;
        s.spatialRedundancy = uint8_t(spatial);
        s.temporalRedundancy = uint8_t(temporal);
        streams.push_back(s);
    }
    return streams;
}

int cmdValidate(const std::string& configPath) {
    NetworkConfiguration config = loadConfigFile(configPath);
    auto violations = validate(config);
    for (const ConfigViolation& v : violations)
        std::cout << v.field << ": " << v.rule << "\n";
    if (violations.empty()) {
        std::cout << "configuration ok\n";
        return exitOk;
    }
    return exitViolations;
}

struct Sweep {
    std::string key;
    std::vector<std::string> values;
};

Sweep parseSweep(const std::string& spec) {
    size_t eq = spec.find('=');
    if (eq == std::string::npos) throw std::runtime_error("sweep needs key=v1,v2,...");
    Sweep sweep;
    sweep.key = spec.substr(0, eq);
    std::string rest = spec.substr(eq + 1);
    std::string item;
    std::istringstream in(rest);
    while (std::getline(in, item, ','))
        if (!item.empty()) sweep.values.push_back(item);
    if (sweep.values.empty()) throw std::runtime_error("sweep has no values");
    return sweep;
}

int cmdOverhead(const std::string& configPath, const std::vector<std::string>& sweepSpecs,
                const std::string& outPath) {
    NetworkConfiguration base = loadConfigFile(configPath);
    std::vector<Sweep> sweeps;
    for (const std::string& s : sweepSpecs) sweeps.push_back(parseSweep(s));
    bool sweepsHops = false, sweepsDownlink = false;
    for (const Sweep& s : sweeps) {
        if (s.key == "max_hops") sweepsHops = true;
        if (s.key == "downlink_slot_duration_ms") sweepsDownlink = true;
    }

    std::ostringstream csv;
    for (const Sweep& s : sweeps) csv << s.key << ',';
    csv << "overhead,data_slots_downlink,data_slots_uplink\n";

    std::vector<size_t> idx(sweeps.size(), 0);
    bool done = false;
    while (!done) {
        NetworkConfiguration config = base;
        for (size_t i = 0; i < sweeps.size(); i++)
            applyConfigKey(config, sweeps[i].key, sweeps[i].values[idx[i]]);
        // the hop budget drives the downlink slot length unless pinned
        if (sweepsHops && !sweepsDownlink)
            config.downlinkSlotDurationMs = defaultDownlinkSlotMs(config.maxHops);
        auto violations = validate(config);
        if (!violations.empty())
            throw std::runtime_error("swept configuration invalid: " + violations.front().field +
                                     ": " + violations.front().rule);
        for (size_t i = 0; i < sweeps.size(); i++) csv << sweeps[i].values[idx[i]] << ',';
        std::ostringstream value;
        value.precision(6);
        value << std::fixed << controlOverhead(config);
        csv << value.str() << ',' << slotLayout(config, TileKind::Downlink).dataSlotCount << ','
            << slotLayout(config, TileKind::Uplink).dataSlotCount << "\n";

        done = true;
        for (size_t i = sweeps.size(); i-- > 0;) {
            if (++idx[i] < sweeps[i].values.size()) {
                done = false;
                break;
            }
            idx[i] = 0;
        }
        if (sweeps.empty()) break;
    }

    if (outPath.empty()) std::cout << csv.str();
    else writeFile(outPath, csv.str());
    return exitOk;
}

int cmdSchedule(const std::string& graphPath, const std::string& streamsPath,
                const std::string& configPath, const std::string& outPath, bool dump) {
    NetworkConfiguration config = loadConfigFile(configPath);
    auto violations = validate(config);
    if (!violations.empty()) {
        for (const ConfigViolation& v : violations)
            std::cerr << v.field << ": " << v.rule << "\n";
        return exitViolations;
    }
    NetworkGraph graph = loadGraphFile(graphPath);
    std::vector<Stream> requests = loadStreamsFile(streamsPath);
    Schedule schedule = scheduleStreams(graph, requests, config);
    schedule.scheduleId = 1;

    for (const Stream& s : schedule.streams)
        std::cout << "stream " << unsigned(s.src) << "->" << unsigned(s.dst) << " period "
                  << s.periodMs << " "
                  << (s.state == StreamState::Scheduled ? "scheduled" : "rejected") << "\n";
    auto bounds = latencyBoundsMs(schedule);
    for (auto& [id, ms] : bounds) std::cout << "latency-bound stream " << id << " " << ms << " ms\n";

    if (!outPath.empty()) writeBinary(outPath, encodeSchedule(schedule));
    if (dump) std::cout << dumpSchedule(schedule);
    return exitOk;
}

int cmdVerify(const std::string& schedulePath, const std::string& graphPath) {
    Schedule schedule = decodeSchedule(readBinary(schedulePath));
    NetworkGraph graph = loadGraphFile(graphPath);
    auto violations = verifySchedule(schedule, graph);
    for (const Violation& v : violations) {
        std::cout << v.name << " slot " << v.slot << " nodes";
        for (NodeId n : v.nodes) std::cout << ' ' << unsigned(n);
        std::cout << ": " << v.detail << "\n";
    }
    if (violations.empty()) {
        std::cout << "schedule ok: " << schedule.transmissionCount() << " transmissions\n";
        return exitOk;
    }
    return exitViolations;
}

int cmdSimulate(const std::string& scenarioPath, uint64_t seed, bool seedSet,
                const std::string& outDir, bool traceFlag) {
    Scenario scenario = loadScenarioFile(scenarioPath);
    if (seedSet) scenario.seed = seed;
    if (traceFlag) scenario.traceEnabled = true;
    Metrics metrics = runScenario(scenario);

    std::filesystem::create_directories(outDir);
    std::string csv = metricsCsvHeader(metrics) + metricsCsvRow(scenario, metrics);
    writeFile((std::filesystem::path(outDir) / "metrics.csv").string(), csv);
    if (scenario.traceEnabled)
        writeFile((std::filesystem::path(outDir) / "trace.log").string(), traceToText(metrics));

    std::cout << csv;
    return exitOk;
}

int cmdPower(const std::string& configPath, const std::string& loadSpec,
             const std::string& connectivitySpec, const std::string& outPath) {
    NetworkConfiguration config = loadConfigFile(configPath);
    auto parseList = [](const std::string& spec) {
        std::vector<double> out;
        std::istringstream in(spec);
        std::string item;
        while (std::getline(in, item, ','))
            if (!item.empty()) out.push_back(std::stod(item));
        return out;
    };
    std::vector<double> loads = parseList(loadSpec);
    std::vector<double> connectivities = parseList(connectivitySpec);
    CurrentModel model;

    std::ostringstream csv;
    csv << "data_load_fraction,connectivity_fraction,current_ma\n";
    csv.precision(6);
    csv << std::fixed;
    for (double c : connectivities)
        for (double f : loads)
            csv << f << ',' << c << ',' << estimatePower(config, f, c, model) << "\n";

    if (outPath.empty()) std::cout << csv.str();
    else writeFile(outPath, csv.str());
    return exitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"TDMA mesh MAC toolkit: configuration checks, stream scheduling, "
                 "schedule verification and deterministic network simulation"};
    app.require_subcommand(1);

    std::string configPath, graphPath, streamsPath, schedulePath, scenarioPath;
    std::string outPath, outDir = ".";
    std::vector<std::string> sweepSpecs;
    std::string loadSpec = "0,0.1,0.2,0.5,1";
    std::string connectivitySpec = "0.1,0.5,1";
    uint64_t seed = 0;
    bool dump = false, traceFlag = false;

    CLI::App* validateCmd = app.add_subcommand("validate", "check a configuration file");
    validateCmd->add_option("--config", configPath, "configuration file")->required();

    CLI::App* overheadCmd =
        app.add_subcommand("overhead", "control overhead table for a configuration");
    overheadCmd->add_option("--config", configPath, "configuration file")->required();
    overheadCmd->add_option("--sweep", sweepSpecs, "key=v1,v2,... (repeatable)");
    overheadCmd->add_option("--out", outPath, "CSV output file (default stdout)");

    CLI::App* scheduleCmd = app.add_subcommand("schedule", "compute a stream schedule");
    scheduleCmd->add_option("--graph", graphPath, "graph edge list file")->required();
    scheduleCmd->add_option("--streams", streamsPath, "stream request file")->required();
    scheduleCmd->add_option("--config", configPath, "configuration file")->required();
    scheduleCmd->add_option("--out", outPath, "binary schedule output file");
    scheduleCmd->add_flag("--dump", dump, "print the human readable schedule");

    CLI::App* verifyCmd = app.add_subcommand("verify", "check a schedule against a graph");
    verifyCmd->add_option("--schedule", schedulePath, "binary schedule file")->required();
    verifyCmd->add_option("--graph", graphPath, "graph edge list file")->required();

    CLI::App* simulateCmd = app.add_subcommand("simulate", "run a scenario");
    simulateCmd->add_option("--scenario", scenarioPath, "scenario file")->required();
    CLI::Option* seedOpt = simulateCmd->add_option("--seed", seed, "random seed (default 0)");
    simulateCmd->add_option("--out", outDir, "output directory (default .)");
    simulateCmd->add_flag("--trace", traceFlag, "write the event trace");

    CLI::App* powerCmd = app.add_subcommand("power", "average current table");
    powerCmd->add_option("--config", configPath, "configuration file")->required();
    powerCmd->add_option("--load", loadSpec, "data load fractions, comma separated");
    powerCmd->add_option("--connectivity", connectivitySpec,
                         "uplink overhear fractions, comma separated");
    powerCmd->add_option("--out", outPath, "CSV output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exitUsage;
    }

    try {
        if (app.got_subcommand(validateCmd)) return cmdValidate(configPath);
        if (app.got_subcommand(overheadCmd)) return cmdOverhead(configPath, sweepSpecs, outPath);
        if (app.got_subcommand(scheduleCmd))
            return cmdSchedule(graphPath, streamsPath, configPath, outPath, dump);
        if (app.got_subcommand(verifyCmd)) return cmdVerify(schedulePath, graphPath);
        if (app.got_subcommand(simulateCmd))
            return cmdSimulate(scenarioPath, seed, seedOpt->count() > 0, outDir, traceFlag);
        if (app.got_subcommand(powerCmd))
            return cmdPower(configPath, loadSpec, connectivitySpec, outPath);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exitIoError;
    }
    return exitUsage;
}
