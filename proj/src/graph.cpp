#include "tdmh/graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tdmh {

void NetworkGraph::addNode(uint16_t n) {
    adjacency_.try_emplace(n);
}

void NetworkGraph::addEdge(uint16_t a, uint16_t b, double reliability) {
    if (a == b) throw std::invalid_argument("self loop");
    addNode(a);
    addNode(b);
    Link link(a, b);
    bool fresh = reliabilities_.find(link) == reliabilities_.end();
    reliabilities_[link] = reliability;
    if (fresh) {
        auto insertSorted = [](std::vector<uint16_t>& v, uint16_t x) {
            v.insert(std::lower_bound(v.begin(), v.end(), x), x);
        };
        insertSorted(adjacency_[a], b);
        insertSorted(adjacency_[b], a);
    }
}

void NetworkGraph::removeEdge(uint16_t a, uint16_t b) {
    Link link(a, b);
    if (reliabilities_.erase(link) == 0) return;
    auto drop = [](std::vector<uint16_t>& v, uint16_t x) {
        v.erase(std::remove(v.begin(), v.end(), x), v.end());
    };
    drop(adjacency_[a], b);
    drop(adjacency_[b], a);
}

void NetworkGraph::removeNode(uint16_t n) {
    auto it = adjacency_.find(n);
    if (it == adjacency_.end()) return;
    std::vector<uint16_t> peers = it->second;
    for (uint16_t p : peers) removeEdge(n, p);
    adjacency_.erase(n);
}

bool NetworkGraph::hasNode(uint16_t n) const {
    return adjacency_.count(n) != 0;
}

bool NetworkGraph::hasEdge(uint16_t a, uint16_t b) const {
    if (a == b) return false;
    return reliabilities_.count(Link(a, b)) != 0;
}

double NetworkGraph::reliability(uint16_t a, uint16_t b) const {
    auto it = reliabilities_.find(Link(a, b));
    return it == reliabilities_.end() ? 0.0 : it->second;
}

std::vector<uint16_t> NetworkGraph::nodes() const {
    std::vector<uint16_t> out;
    out.reserve(adjacency_.size());
    for (auto& [n, _] : adjacency_) out.push_back(n);
    return out;
}

std::vector<uint16_t> NetworkGraph::neighbors(uint16_t n) const {
    auto it = adjacency_.find(n);
    if (it == adjacency_.end()) return {};
    return it->second;
}

std::vector<Link> NetworkGraph::links() const {
    std::vector<Link> out;
    out.reserve(reliabilities_.size());
    for (auto& [link, _] : reliabilities_) out.push_back(link);
    return out;
}

bool NetworkGraph::operator==(const NetworkGraph& other) const {
    return adjacency_ == other.adjacency_ && reliabilities_ == other.reliabilities_;
}

std::map<uint16_t, uint32_t> NetworkGraph::hopDistances(uint16_t source) const {
    std::map<uint16_t, uint32_t> dist;
    if (!hasNode(source)) return dist;
    std::deque<uint16_t> frontier{source};
    dist[source] = 0;
    while (!frontier.empty()) {
        uint16_t n = frontier.front();
        frontier.pop_front();
        for (uint16_t peer : neighbors(n)) {
            if (dist.count(peer)) continue;
            dist[peer] = dist[n] + 1;
            frontier.push_back(peer);
        }
    }
    return dist;
}

NetworkGraph parseGraph(std::istream& in) {
    NetworkGraph graph;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first[0] == '#') continue;
        uint16_t u = static_cast<uint16_t>(std::stoul(first));
        uint16_t v;
        double reliability = 1.0;
        if (!(ls >> v)) throw std::runtime_error("graph line needs two node ids: " + line);
        ls >> reliability;
        graph.addEdge(u, v, reliability);
    }
    return graph;
}

NetworkGraph loadGraphFile(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open graph file: " + path);
    return parseGraph(in);
}

std::string graphToText(const NetworkGraph& graph) {
    std::ostringstream out;
    for (const Link& link : graph.links())
        out << link.u << ' ' << link.v << ' ' << graph.reliability(link.u, link.v) << "\n";
    return out.str();
}

} // namespace tdmh
