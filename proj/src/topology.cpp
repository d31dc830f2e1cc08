#include "scenariofuzz/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

namespace sf {

bool TopologyGraph::has_edge(int from, int to) const {
    for (int ei : out_edges.at(static_cast<size_t>(from))) {
        if (edges[static_cast<size_t>(ei)].to == to) return true;
    }
    return false;
}

namespace {

// Arc length along a lane center over reference interval [s_a, s_b]. For arcs
// a lane at lateral offset t runs on a circle of radius |1/k - t|.
double lane_arc_length(const Road& road, double s_a, double s_b, double t_offset) {
    double total = 0.0;
    for (size_t i = 0; i < road.geometry.size(); ++i) {
        const auto& g = road.geometry[i];
        double g_end = (i + 1 < road.geometry.size()) ? road.geometry[i + 1].s : road.length;
        double lo = std::max(s_a, g.s);
        double hi = std::min(s_b, g_end);
        if (hi <= lo) continue;
        double ds = hi - lo;
        if (g.kind == GeometrySegment::Kind::Arc) {
            total += ds * std::abs(1.0 - t_offset * g.curvature);
        } else {
            total += ds;
        }
    }
    return total;
}

struct LaneChain {
    int road_id;
    int lane_id;
    std::vector<int> node_ids;  // provisional ids, travel order
};

struct Builder {
    std::vector<Waypoint> nodes;
    std::vector<int> parent;  // union-find for coincident boundary nodes

    int find(int a) {
        while (parent[static_cast<size_t>(a)] != a) {
            parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
            a = parent[static_cast<size_t>(a)];
        }
        return a;
    }

    void merge(int keep, int drop) {
        keep = find(keep);
        drop = find(drop);
        if (keep == drop) return;
        if (keep > drop) std::swap(keep, drop);
        parent[static_cast<size_t>(drop)] = keep;
    }

    int add_node(Waypoint wp) {
        wp.id = static_cast<int>(nodes.size());
        nodes.push_back(wp);
        parent.push_back(wp.id);
        return wp.id;
    }
};

}  // namespace

TopologyGraph build_topology(const RoadNetwork& net, double spacing) {
    if (spacing <= 0.0) throw Error("spacing must be positive");

    Builder b;
    std::vector<LaneChain> chains;
    std::map<std::pair<int, int>, const LaneChain*> chain_by_lane;

    for (const auto& road : net.roads) {
        for (size_t si = 0; si < road.sections.size(); ++si) {
            const auto& sec = road.sections[si];
            double s_lo = sec.s0;
            double s_hi = (si + 1 < road.sections.size()) ? road.sections[si + 1].s0
                                                          : road.length;
            double length = s_hi - s_lo;
            if (length <= 0.0) continue;
            int n_seg = std::max(1, static_cast<int>(std::ceil(length / spacing - 1e-9)));
            for (const auto& lane : sec.lanes) {
                LaneChain chain{road.id, lane.id, {}};
                for (int i = 0; i <= n_seg; ++i) {
                    // left lanes travel against the reference direction
                    int k = lane.id < 0 ? i : n_seg - i;
                    double s = s_lo + length * k / n_seg;
                    Waypoint wp;
                    wp.position = road.position_at(s, lane.id);
                    wp.road_id = road.id;
                    wp.lane_id = lane.id;
                    wp.s = s;
                    double h = road.heading_at(s);
                    wp.heading = normalize_angle(lane.id < 0 ? h : h + M_PI);
                    chain.node_ids.push_back(b.add_node(wp));
                }
                chains.push_back(std::move(chain));
            }
        }
    }
    for (const auto& c : chains) chain_by_lane[{c.road_id, c.lane_id}] = &c;

    struct RawEdge {
        int from, to;
        double length;
    };
    std::vector<RawEdge> raw_edges;

    // consecutive samples within a lane
    for (const auto& chain : chains) {
        const Road* road = net.find_road(chain.road_id);
        double t = road->lane_offset(road->length / 2.0, chain.lane_id);
        for (size_t i = 0; i + 1 < chain.node_ids.size(); ++i) {
            const auto& a = b.nodes[static_cast<size_t>(chain.node_ids[i])];
            const auto& c = b.nodes[static_cast<size_t>(chain.node_ids[i + 1])];
            double s_a = std::min(a.s, c.s);
            double s_b = std::max(a.s, c.s);
            raw_edges.push_back({chain.node_ids[i], chain.node_ids[i + 1],
                                 lane_arc_length(*road, s_a, s_b, t)});
        }
    }

    // links across roads and junctions
    auto connect = [&](int from_node, const LaneChain* target) {
        if (!target || target->node_ids.empty()) return;
        int to_node = target->node_ids.front();
        double gap = distance(b.nodes[static_cast<size_t>(from_node)].position,
                              b.nodes[static_cast<size_t>(to_node)].position);
        if (gap < 0.05) {
            b.merge(from_node, to_node);
        } else {
            raw_edges.push_back({from_node, to_node, gap});
        }
    };

    for (const auto& chain : chains) {
        const Road* road = net.find_road(chain.road_id);
        const Lane* lane = road->find_lane(road->length / 2.0, chain.lane_id);
        if (!lane) continue;
        const RoadLink& link = chain.lane_id < 0 ? road->successor : road->predecessor;
        std::optional<int> target_lane =
            chain.lane_id < 0 ? lane->successor : lane->predecessor;
        int last = chain.node_ids.back();

        if (link.kind == RoadLink::Kind::Road && target_lane) {
            auto it = chain_by_lane.find({link.id, *target_lane});
            if (it != chain_by_lane.end()) connect(last, it->second);
        } else if (link.kind == RoadLink::Kind::Junction) {
            const Junction* junction = net.find_junction(link.id);
            if (!junction) continue;
            for (const auto& conn : junction->connections) {
                if (conn.incoming_road != chain.road_id) continue;
                for (auto [from_lane, to_lane] : conn.lane_links) {
                    if (from_lane != chain.lane_id) continue;
                    auto it = chain_by_lane.find({conn.connecting_road, to_lane});
                    if (it != chain_by_lane.end()) connect(last, it->second);
                }
            }
        }
    }

    // compact merged nodes into final ids, preserving provisional order
    TopologyGraph g;
    std::vector<int> final_id(b.nodes.size(), -1);
    for (size_t i = 0; i < b.nodes.size(); ++i) {
        int rep = b.find(static_cast<int>(i));
        if (final_id[static_cast<size_t>(rep)] < 0) {
            Waypoint wp = b.nodes[static_cast<size_t>(rep)];
            wp.id = static_cast<int>(g.nodes.size());
            final_id[static_cast<size_t>(rep)] = wp.id;
            g.nodes.push_back(wp);
        }
        final_id[i] = final_id[static_cast<size_t>(rep)];
    }

    std::map<std::pair<int, int>, double> dedup;
    for (const auto& e : raw_edges) {
        int from = final_id[static_cast<size_t>(e.from)];
        int to = final_id[static_cast<size_t>(e.to)];
        if (from == to) continue;
        auto key = std::make_pair(from, to);
        auto it = dedup.find(key);
        if (it == dedup.end() || e.length < it->second) dedup[key] = e.length;
    }
    g.out_edges.assign(g.nodes.size(), {});
    g.in_edges.assign(g.nodes.size(), {});
    for (const auto& [key, length] : dedup) {
        int ei = static_cast<int>(g.edges.size());
        g.edges.push_back({key.first, key.second, length});
        g.out_edges[static_cast<size_t>(key.first)].push_back(ei);
        g.in_edges[static_cast<size_t>(key.second)].push_back(ei);
    }
    return g;
}

const Waypoint& nearest_waypoint(const TopologyGraph& g, const Vec3& pos) {
    if (g.nodes.empty()) throw EmptyGraph("nearest_waypoint on empty graph");
    const Waypoint* best = &g.nodes.front();
    double best_d = distance(best->position, pos);
    for (const auto& wp : g.nodes) {
        double d = distance(wp.position, pos);
        if (d < best_d - 1e-9) {  // near-ties keep the lowest id (scan order)
            best = &wp;
            best_d = d;
        }
    }
    return *best;
}

std::vector<int> shortest_path(const TopologyGraph& g, int from, int to) {
    size_t n = g.nodes.size();
    if (from < 0 || to < 0 || static_cast<size_t>(from) >= n || static_cast<size_t>(to) >= n) {
        throw Error("shortest_path: waypoint not in graph");
    }
    if (from == to) return {from};

    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<int> prev(n, -1);
    // (distance, node); node id orders equal-cost pops deterministically
    std::priority_queue<std::pair<double, int>, std::vector<std::pair<double, int>>,
                        std::greater<>> pq;
    dist[static_cast<size_t>(from)] = 0.0;
    pq.emplace(0.0, from);
    while (!pq.empty()) {
        auto [d, u] = pq.top();
        pq.pop();
        if (d > dist[static_cast<size_t>(u)] + 1e-15) continue;
        if (u == to) break;
        for (int ei : g.out_edges[static_cast<size_t>(u)]) {
            const auto& e = g.edges[static_cast<size_t>(ei)];
            double nd = d + e.length;
            size_t v = static_cast<size_t>(e.to);
            if (nd < dist[v] - 1e-12 ||
                (std::abs(nd - dist[v]) <= 1e-12 && prev[v] >= 0 && u < prev[v])) {
                dist[v] = std::min(nd, dist[v]);
                prev[v] = u;
                pq.emplace(nd, e.to);
            }
        }
    }
    if (prev[static_cast<size_t>(to)] < 0) {
        throw NotReachable("no path from " + std::to_string(from) + " to " +
                           std::to_string(to));
    }
    std::vector<int> path;
    for (int v = to; v != -1; v = prev[static_cast<size_t>(v)]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace sf
