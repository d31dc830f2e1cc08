#pragma once

#include <map>
#include <vector>

#include "scenariofuzz/road_network.hpp"

namespace sf {

struct Waypoint {
    int id = 0;
    Vec3 position;
    int road_id = 0;
    int lane_id = 0;
    double heading = 0.0;  // travel direction, [-pi, pi)
    double s = 0.0;        // offset along the road reference line
};

struct TopoEdge {
    int from = 0;
    int to = 0;
    double length = 0.0;  // arc length along the lane center
};

// Directed waypoint graph. Immutable after build_topology; shared freely.
struct TopologyGraph {
    std::vector<Waypoint> nodes;
    std::vector<TopoEdge> edges;
    std::vector<std::vector<int>> out_edges;  // node id -> edge indices
    std::vector<std::vector<int>> in_edges;

    const Waypoint& node(int id) const { return nodes.at(static_cast<size_t>(id)); }
    bool has_edge(int from, int to) const;
};

struct EmptyGraph : Error {
    using Error::Error;
};
struct NotReachable : Error {
    using Error::Error;
};

// Sample waypoints per drivable lane every `spacing` meters and connect them
// in travel direction, including lane links across roads and junctions.
TopologyGraph build_topology(const RoadNetwork& net, double spacing = 5.0);

const Waypoint& nearest_waypoint(const TopologyGraph& g, const Vec3& pos);

// Minimum arc-length path; deterministic tie break toward lower node ids.
std::vector<int> shortest_path(const TopologyGraph& g, int from, int to);

}  // namespace sf
