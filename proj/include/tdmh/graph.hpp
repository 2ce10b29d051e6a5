#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace tdmh {

// Undirected link between two nodes, stored with u < v.
struct Link {
    uint16_t u;
    uint16_t v;

    Link(uint16_t a, uint16_t b) : u(a < b ? a : b), v(a < b ? b : a) {}
    bool touches(uint16_t n) const { return u == n || v == n; }
    auto operator<=>(const Link&) const = default;
};

// Undirected graph with optional per-link reliability in [0, 1].
// Iteration order is deterministic (sorted by node id).
class NetworkGraph {
public:
    NetworkGraph() = default;

    void addNode(uint16_t n);
    void addEdge(uint16_t a, uint16_t b, double reliability = 1.0);
    void removeEdge(uint16_t a, uint16_t b);
    void removeNode(uint16_t n);

    bool hasNode(uint16_t n) const;
    bool hasEdge(uint16_t a, uint16_t b) const;
    double reliability(uint16_t a, uint16_t b) const; // 0 if absent

    std::vector<uint16_t> nodes() const;
    std::vector<uint16_t> neighbors(uint16_t n) const;
    std::vector<Link> links() const;
    size_t nodeCount() const { return adjacency_.size(); }
    size_t edgeCount() const { return reliabilities_.size(); }
    bool empty() const { return adjacency_.empty(); }

    bool operator==(const NetworkGraph& other) const;

    // Breadth-first hop distances from a source; unreachable nodes absent.
    // Neighbor expansion in ascending id order.
    std::map<uint16_t, uint32_t> hopDistances(uint16_t source) const;

private:
    std::map<uint16_t, std::vector<uint16_t>> adjacency_; // sorted neighbor lists
    std::map<Link, double> reliabilities_;
};

// Edge list text format, one link per line: "u v reliability".
NetworkGraph parseGraph(std::istream& in);
NetworkGraph loadGraphFile(const std::string& path);
std::string graphToText(const NetworkGraph& graph);

} // namespace tdmh
