#include <doctest.h>

#include <array>
#include <cstdio>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "test_fixtures.hpp"
#include "tdmh/graph.hpp"
#include "tdmh/scheduler.hpp"

using namespace tdmh;
using namespace tdmh::fixtures;

namespace {

struct RunResult {
    int exitCode;
    std::string output;
};

RunResult runCli(const std::string& args) {
    std::string command = std::string(TDMH_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buffer;
    std::string output;
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buffer.data(), int(buffer.size()), pipe)) output += buffer.data();
    int status = pclose(pipe);
    return {WEXITSTATUS(status), output};
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("tdmh_cli_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const {
        std::string p = (path / name).string();
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p;
    }
    std::string file(const std::string& name, const std::vector<uint8_t>& bytes) const {
        std::string p = (path / name).string();
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
        return p;
    }
};

const char* goodConfig = R"(tile_duration_ms = 100
control_superframe = DU
data_slot_duration_ms = 6
max_hops = 6
max_nodes = 32
)";

} // namespace

TEST_CASE("cli usage errors exit with 64") {
    CHECK(runCli("").exitCode == 64);
    CHECK(runCli("frobnicate").exitCode == 64);
    CHECK(runCli("validate").exitCode == 64); // missing --config
}

TEST_CASE("cli validate") {
    TempDir dir;
    SUBCASE("well formed configuration") {
        auto result = runCli("validate --config " + dir.file("good.conf", goodConfig));
        CHECK(result.exitCode == 0);
        CHECK(result.output.find("configuration ok") != std::string::npos);
    }
    SUBCASE("violations exit with 2, one line each") {
        auto result = runCli("validate --config " +
                             dir.file("bad.conf", "control_superframe = D\n"
                                                  "data_frame_size_bytes = 126\n"));
        CHECK(result.exitCode == 2);
        CHECK(result.output.find("missing UPLINK tile") != std::string::npos);
        CHECK(result.output.find("data_frame_size_bytes") != std::string::npos);
    }
    SUBCASE("missing file exits with 1") {
        CHECK(runCli("validate --config /nonexistent.conf").exitCode == 1);
    }
}

TEST_CASE("cli overhead sweep is monotone in tile duration") {
    TempDir dir;
    auto result = runCli("overhead --config " + dir.file("c.conf", goodConfig) +
                         " --sweep tile_duration_ms=50,100,200,500");
    CHECK(result.exitCode == 0);
    std::istringstream lines(result.output);
    std::string line;
    std::getline(lines, line); // header
    CHECK(line.find("tile_duration_ms") != std::string::npos);
    CHECK(line.find("overhead") != std::string::npos);
    double previous = 2.0;
    int rows = 0;
    while (std::getline(lines, line)) {
        auto firstComma = line.find(',');
        auto secondComma = line.find(',', firstComma + 1);
        double overhead = std::stod(line.substr(firstComma + 1, secondComma - firstComma - 1));
        CHECK(overhead <= previous);
        previous = overhead;
        rows++;
    }
    CHECK(rows == 4);
}

TEST_CASE("cli overhead responds to a swept hop budget") {
    TempDir dir;
    auto result = runCli("overhead --config " + dir.file("c.conf", goodConfig) +
                         " --sweep max_hops=2,10");
    CHECK(result.exitCode == 0);
    std::istringstream lines(result.output);
    std::string header, rowA, rowB;
    std::getline(lines, header);
    std::getline(lines, rowA);
    std::getline(lines, rowB);
    auto overheadOf = [](const std::string& row) {
        auto first = row.find(',');
        auto second = row.find(',', first + 1);
        return std::stod(row.substr(first + 1, second - first - 1));
    };
    // a larger hop budget means a longer downlink slot and more overhead
    CHECK(overheadOf(rowA) < overheadOf(rowB));
}

TEST_CASE("cli schedule then verify round trips clean") {
    TempDir dir;
    std::string graphPath = dir.file("net.graph", graphToText(officeGraph()));
    std::string streamsPath = dir.file("req.streams",
                                       "3 0 100 2 1\n"
                                       "6 0 200 2 1\n"
                                       "4 0 200 2 1\n");
    std::string configPath = dir.file("c.conf", goodConfig);
    std::string schedulePath = (dir.path / "out.schedule").string();

    auto scheduled = runCli("schedule --graph " + graphPath + " --streams " + streamsPath +
                            " --config " + configPath + " --out " + schedulePath + " --dump");
    CHECK(scheduled.exitCode == 0);
    CHECK(scheduled.output.find("3->0 period 100 scheduled") != std::string::npos);
    CHECK(scheduled.output.find("latency-bound") != std::string::npos);

    auto verified = runCli("verify --schedule " + schedulePath + " --graph " + graphPath);
    CHECK(verified.exitCode == 0);
    CHECK(verified.output.find("schedule ok") != std::string::npos);
}

TEST_CASE("cli verify names the broken constraint") {
    TempDir dir;
    NetworkGraph line;
    line.addEdge(0, 1);
    line.addEdge(1, 2);

    NetworkConfiguration config = referenceConfig();
    Schedule schedule;
    schedule.grid = SlotGrid::fromConfig(config, 2);
    Stream s;
    s.id = 0;
    s.src = 2;
    s.dst = 0;
    s.periodMs = 200;
    s.state = StreamState::Scheduled;
    schedule.streams = {s};
    Path p;
    p.src = 2;
    p.dst = 0;
    p.periodTiles = 2;
    p.nodes = {2, 1, 0};
    p.transmissions = {{2, 1, 0}, {1, 0, 0}}; // node 1 sends and receives at slot 0
    schedule.paths = {{p}};

    std::string schedulePath = dir.file("bad.schedule", encodeSchedule(schedule));
    std::string graphPath = dir.file("line.graph", graphToText(line));
    auto result = runCli("verify --schedule " + schedulePath + " --graph " + graphPath);
    CHECK(result.exitCode == 2);
    CHECK(result.output.find("unique-sender-receiver") != std::string::npos);
    CHECK(result.output.find("slot 0") != std::string::npos);
    CHECK(result.output.find("1") != std::string::npos);
}

TEST_CASE("cli simulate is deterministic for a fixed seed") {
    TempDir dir;
    std::string scenarioPath = dir.file("s.scenario", R"([config]
tile_duration_ms = 100
control_superframe = DU
max_nodes = 8
max_hops = 3

[graph]
0 1 0.9
0 2 0.9
1 2 0.9
1 3 0.9
2 3 0.9

[streams]
3 0 200 2 1 0

[run]
name = cli-demo
duration_ms = 20000
)");
    auto runA = runCli("simulate --scenario " + scenarioPath + " --seed 7 --out " +
                       (dir.path / "a").string() + " --trace");
    auto runB = runCli("simulate --scenario " + scenarioPath + " --seed 7 --out " +
                       (dir.path / "b").string() + " --trace");
    CHECK(runA.exitCode == 0);
    CHECK(runB.exitCode == 0);

    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    std::string csvA = slurp(dir.path / "a" / "metrics.csv");
    std::string csvB = slurp(dir.path / "b" / "metrics.csv");
    CHECK(!csvA.empty());
    CHECK(csvA == csvB);
    CHECK(slurp(dir.path / "a" / "trace.log") == slurp(dir.path / "b" / "trace.log"));
    CHECK(csvA.find("cli-demo,7,") != std::string::npos);

    auto runC = runCli("simulate --scenario " + scenarioPath + " --seed 8 --out " +
                       (dir.path / "c").string() + " --trace");
    CHECK(slurp(dir.path / "c" / "trace.log") != slurp(dir.path / "a" / "trace.log"));
}

TEST_CASE("cli power table") {
    TempDir dir;
    auto result = runCli("power --config " + dir.file("c.conf", goodConfig) +
                         " --load 0,0.1,0.2 --connectivity 0.1,1");
    CHECK(result.exitCode == 0);
    std::istringstream lines(result.output);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "data_load_fraction,connectivity_fraction,current_ma");
    int rows = 0;
    std::string line;
    std::vector<double> currents;
    while (std::getline(lines, line)) {
        rows++;
        currents.push_back(std::stod(line.substr(line.rfind(',') + 1)));
    }
    CHECK(rows == 6);
    // affine in load within each connectivity block
    CHECK(std::abs((currents[2] - currents[1]) - (currents[1] - currents[0])) < 1e-9);
}
