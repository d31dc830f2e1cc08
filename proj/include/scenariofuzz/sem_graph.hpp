#pragma once

#include <array>

#include <Eigen/Dense>

#include "scenariofuzz/mutation.hpp"

namespace sf {

// node_type codes
enum class NodeType { Default = 0, TrafficLight, EgoStart, EgoEnd, Vehicle, Pedestrian };
// edge_type codes
enum class EdgeType { Default = 0, EgoMission, VehiclePath, PedestrianPath };

// sign_type codes (0 = none)
int sign_type_code(const std::string& kind);
constexpr int kNumSignTypes = 8;

struct GraphNode {
    Vec3 rel_pos;        // relative to ego start
    int node_type = 0;   // NodeType
    int sign_type = 0;   // 0 = none
    int appearance = 0;  // 0 = none, else appearance_id + 1 (1..26)
};

struct GraphEdge {
    int from = 0;
    int to = 0;
    double dist = 0.0;  // m, > 0
    int edge_type = 0;  // EdgeType
    int direction = 3;  // 0 Left, 1 Right, 2 Straight, 3 Unknown
};

struct ScenarioGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    std::array<double, 8> weather = {};
    int warnings = 0;  // node-type conflicts resolved at load time
};

struct InconsistentSeed : Error {
    using Error::Error;
};

int direction_code(Direction d);

ScenarioGraph scenario_to_graph(const ConcreteScenario& sc, const ScenarioSeed& seed,
                                const RoadNetwork& net, const TopologyGraph& g);

// Batch statistics kept so preprocessing can be undone exactly.
struct BatchStats {
    Eigen::Vector3d pos_mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d pos_std = Eigen::Vector3d::Zero();
    Eigen::Matrix<double, 8, 1> weather_mean = Eigen::Matrix<double, 8, 1>::Zero();
    Eigen::Matrix<double, 8, 1> weather_std = Eigen::Matrix<double, 8, 1>::Zero();
    double max_dist = 0.0;
};

// edge feature layout: [d_norm, onehot edge_type(4), onehot direction(4)]
constexpr int kEdgeFeatDim = 9;

struct PreparedBatch {
    Eigen::MatrixXd pos;            // N x 3, standardized
    std::vector<int> node_type;     // N
    std::vector<int> sign_type;     // N
    std::vector<int> appearance;    // N
    std::vector<int> graph_of;      // N, graph index per node
    std::vector<int> edge_from;     // E (global node ids)
    std::vector<int> edge_to;       // E
    Eigen::MatrixXd edge_feat;      // E x kEdgeFeatDim
    Eigen::MatrixXd weather;        // G x 8, standardized
    int n_graphs = 0;
    BatchStats stats;
};

PreparedBatch preprocess_batch(const std::vector<ScenarioGraph>& graphs);

}  // namespace sf
