#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scenariofuzz/topology.hpp"

namespace sf {

enum class RoadType { StraightRoad, CrossRoad, TIntersection };
enum class Direction { Left, Right, Straight, Unknown };

std::string to_string(RoadType t);
std::string to_string(Direction d);
RoadType road_type_from_string(const std::string& s);
Direction direction_from_string(const std::string& s);

struct SeedPath {
    std::vector<int> waypoints;
    Direction direction = Direction::Unknown;
    double length = 0.0;
};

struct LanePermission {
    int road_id = 0;
    int lane_id = 0;
    bool lane_change_allowed = false;
};

struct SeedExtras {
    std::vector<std::string> sign_kinds;       // sorted, unique
    std::vector<LanePermission> lane_changes;  // per member lane
};

struct ScenarioSeed {
    int id = 0;
    std::string map_name;
    std::vector<int> waypoints;       // node ids, sorted
    std::vector<int> traffic_lights;  // signal ids, empty when unlighted
    RoadType road_type = RoadType::StraightRoad;
    std::vector<SeedPath> paths;
    Vec3 center;
    SeedExtras extras;
};

struct CorpusParams {
    double spacing = 5.0;
    double light_cluster_radius = 25.0;
    double node_cluster_radius = 30.0;
    double near_node_radius = 40.0;
    double sign_radius = 50.0;
    int max_hops = 60;
};

struct SeedCorpus {
    std::string map_name;
    std::vector<ScenarioSeed> seeds;
    CorpusParams params;
    double build_seconds = 0.0;

    const ScenarioSeed& seed_by_id(int id) const;
};

struct NoMatch : Error {
    using Error::Error;
};

// Single-linkage agglomeration: two points share a cluster iff they are
// connected by a chain of pairwise distances <= radius. Returns clusters of
// point indices, each sorted, ordered by lowest member index.
std::vector<std::vector<int>> cluster_points(const std::vector<Vec3>& points,
                                             double radius);

RoadType classify_road_type(const RoadNetwork& net, const TopologyGraph& g,
                            const std::vector<int>& nodes);

// All simple directed paths between entry and exit waypoints of the region,
// labeled by net heading change.
std::vector<SeedPath> enumerate_paths(const TopologyGraph& g,
                                      const std::vector<int>& nodes, int max_hops);

SeedCorpus build_corpus(const RoadNetwork& net, const TopologyGraph& g,
                        const CorpusParams& params, const std::string& map_name);

struct SeedFilter {
    std::optional<std::string> map_name;
    std::optional<RoadType> road_type;
    std::optional<bool> has_traffic_lights;
};

const ScenarioSeed& select_seed(const SeedCorpus& corpus, const SeedFilter& filter,
                                Rng& rng);

Json corpus_to_json(const SeedCorpus& corpus);
SeedCorpus corpus_from_json(const Json& j);

}  // namespace sf
