#include "scenariofuzz/sem_graph.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace sf {

int sign_type_code(const std::string& kind) {
    if (kind == "speedLimit") return 1;
    if (kind == "stop") return 2;
    if (kind == "yield") return 3;
    if (kind == "crosswalk") return 4;
    if (kind == "noEntry") return 5;
    if (kind == "priority") return 6;
    return 7;  // unrecognized sign kinds share one bucket
}

int direction_code(Direction d) {
    switch (d) {
        case Direction::Left: return 0;
        case Direction::Right: return 1;
        case Direction::Straight: return 2;
        case Direction::Unknown: return 3;
    }
    return 3;
}

ScenarioGraph scenario_to_graph(const ConcreteScenario& sc, const ScenarioSeed& seed,
                                const RoadNetwork& net, const TopologyGraph& g) {
    ScenarioGraph out;
    out.weather = {sc.weather.cloud, sc.weather.rain,     sc.weather.ponding,
                   sc.weather.wind,  sc.weather.fog,      sc.weather.wetness,
                   sc.weather.sun_angle, sc.weather.sun_altitude};

    // node layout: seed waypoints first (in seed order), then traffic lights
    std::map<int, int> wp_index;
    for (size_t i = 0; i < seed.waypoints.size(); ++i) {
        wp_index[seed.waypoints[i]] = static_cast<int>(i);
    }
    auto require_member = [&](int wp) {
        auto it = wp_index.find(wp);
        if (it == wp_index.end()) {
            throw InconsistentSeed("scenario references waypoint " + std::to_string(wp) +
                                   " outside seed " + std::to_string(seed.id));
        }
        return it->second;
    };
    if (sc.mission.path.empty()) throw InconsistentSeed("scenario has empty mission path");

    require_member(sc.mission.path.front());
    Vec3 ego_pos = g.node(sc.mission.path.front()).position;

    for (int wp : seed.waypoints) {
        GraphNode n;
        n.rel_pos = g.node(wp).position - ego_pos;
        out.nodes.push_back(n);
    }

    // object and mission overlays; EgoStart/EgoEnd win conflicts with a warning
    for (const auto& ob : sc.objects) {
        int i = require_member(ob.spawn_waypoint);
        out.nodes[static_cast<size_t>(i)].node_type = static_cast<int>(
            ob.kind == ObjectKind::Pedestrian ? NodeType::Pedestrian : NodeType::Vehicle);
        out.nodes[static_cast<size_t>(i)].appearance = ob.appearance_id + 1;
        for (int wp : ob.path) require_member(wp);
    }
    {
        int s = require_member(sc.mission.path.front());
        int e = require_member(sc.mission.path.back());
        if (out.nodes[static_cast<size_t>(s)].node_type != static_cast<int>(NodeType::Default)) ++out.warnings;
        if (out.nodes[static_cast<size_t>(e)].node_type != static_cast<int>(NodeType::Default)) ++out.warnings;
        out.nodes[static_cast<size_t>(s)].node_type = static_cast<int>(NodeType::EgoStart);
        out.nodes[static_cast<size_t>(e)].node_type = static_cast<int>(NodeType::EgoEnd);
    }

    // traffic light nodes, linked to their nearest waypoint with Default edges
    for (int sig_id : seed.traffic_lights) {
        const Signal* sig = nullptr;
        for (const auto& s : net.signals) {
            if (s.id == sig_id) sig = &s;
        }
        if (sig == nullptr) {
            throw InconsistentSeed("seed references unknown signal " + std::to_string(sig_id));
        }
        GraphNode n;
        n.rel_pos = sig->position - ego_pos;
        n.node_type = static_cast<int>(NodeType::TrafficLight);
        int light_node = static_cast<int>(out.nodes.size());
        out.nodes.push_back(n);

        int nearest = -1;
        double best = 1e300;
        for (size_t i = 0; i < seed.waypoints.size(); ++i) {
            double d = distance(g.node(seed.waypoints[i]).position, sig->position);
            if (d < best - 1e-9) {
                best = d;
                nearest = static_cast<int>(i);
            }
        }
        if (nearest >= 0 && best > 0) {
            out.edges.push_back({light_node, nearest, best,
                                 static_cast<int>(EdgeType::Default),
                                 direction_code(Direction::Unknown)});
        }
    }

    // non-light signs near the seed mark their nearest waypoint node
    for (const auto& s : net.signals) {
        if (s.kind == "trafficLight") continue;
        if (distance(s.position, seed.center) > 50.0) continue;
        int nearest = -1;
        double best = 1e300;
        for (size_t i = 0; i < seed.waypoints.size(); ++i) {
            double d = distance(g.node(seed.waypoints[i]).position, s.position);
            if (d < best - 1e-9) {
                best = d;
                nearest = static_cast<int>(i);
            }
        }
        if (nearest >= 0) out.nodes[static_cast<size_t>(nearest)].sign_type = sign_type_code(s.kind);
    }

    // path edges: one per consecutive waypoint pair, deduplicated
    std::set<std::tuple<int, int, int>> seen;
    auto add_path = [&](const std::vector<int>& path, EdgeType type, int dir) {
        for (size_t i = 0; i + 1 < path.size(); ++i) {
            int a = require_member(path[i]);
            int b = require_member(path[i + 1]);
            if (!seen.insert({a, b, static_cast<int>(type)}).second) continue;
            double d = distance(g.node(path[i]).position, g.node(path[i + 1]).position);
            if (d <= 0) continue;
            out.edges.push_back({a, b, d, static_cast<int>(type), dir});
        }
    };
    add_path(sc.mission.path, EdgeType::EgoMission, direction_code(sc.mission.direction));
    for (const auto& ob : sc.objects) {
        if (ob.path.empty()) continue;
        if (ob.kind == ObjectKind::Pedestrian) {
            add_path(ob.path, EdgeType::PedestrianPath, direction_code(Direction::Unknown));
        } else {
            // recover the corpus path's direction label
            int dir = direction_code(Direction::Unknown);
            for (const auto& p : seed.paths) {
                if (p.waypoints == ob.path) dir = direction_code(p.direction);
            }
            add_path(ob.path, EdgeType::VehiclePath, dir);
        }
    }
    return out;
}

PreparedBatch preprocess_batch(const std::vector<ScenarioGraph>& graphs) {
    if (graphs.empty()) throw Error("preprocess_batch: empty batch");
    PreparedBatch b;
    b.n_graphs = static_cast<int>(graphs.size());

    int n_nodes = 0, n_edges = 0;
    for (const auto& gr : graphs) {
        n_nodes += static_cast<int>(gr.nodes.size());
        n_edges += static_cast<int>(gr.edges.size());
    }
    b.pos.resize(n_nodes, 3);
    b.node_type.reserve(static_cast<size_t>(n_nodes));
    b.sign_type.reserve(static_cast<size_t>(n_nodes));
    b.appearance.reserve(static_cast<size_t>(n_nodes));
    b.graph_of.reserve(static_cast<size_t>(n_nodes));
    b.edge_feat.resize(n_edges, kEdgeFeatDim);
    b.weather.resize(b.n_graphs, 8);

    int node_off = 0, e = 0;
    std::vector<double> dists;
    dists.reserve(static_cast<size_t>(n_edges));
    for (int gi = 0; gi < b.n_graphs; ++gi) {
        const auto& gr = graphs[static_cast<size_t>(gi)];
        for (const auto& n : gr.nodes) {
            int row = node_off + static_cast<int>(&n - gr.nodes.data());
            b.pos(row, 0) = n.rel_pos.x;
            b.pos(row, 1) = n.rel_pos.y;
            b.pos(row, 2) = n.rel_pos.z;
            b.node_type.push_back(n.node_type);
            b.sign_type.push_back(n.sign_type);
            b.appearance.push_back(n.appearance);
            b.graph_of.push_back(gi);
        }
        for (const auto& ed : gr.edges) {
            b.edge_from.push_back(node_off + ed.from);
            b.edge_to.push_back(node_off + ed.to);
            b.edge_feat.row(e).setZero();
            b.edge_feat(e, 0) = ed.dist;
            b.edge_feat(e, 1 + ed.edge_type) = 1.0;
            b.edge_feat(e, 5 + ed.direction) = 1.0;
            dists.push_back(ed.dist);
            ++e;
        }
        for (int k = 0; k < 8; ++k) b.weather(gi, k) = gr.weather[static_cast<size_t>(k)];
        node_off += static_cast<int>(gr.nodes.size());
    }

    // z-score rel_pos over nodes and weather over graphs; sigma = 0 -> 0
    auto standardize = [](Eigen::MatrixXd& m, Eigen::Ref<Eigen::VectorXd> mean,
                          Eigen::Ref<Eigen::VectorXd> stddev) {
        for (int c = 0; c < m.cols(); ++c) {
            double mu = m.col(c).mean();
            double var = (m.col(c).array() - mu).square().mean();
            double sd = std::sqrt(var);
            mean(c) = mu;
            stddev(c) = sd;
            if (sd > 0) {
                m.col(c) = (m.col(c).array() - mu) / sd;
            } else {
                m.col(c).setZero();
            }
        }
    };
    Eigen::VectorXd pm(3), ps(3), wm(8), ws(8);
    standardize(b.pos, pm, ps);
    standardize(b.weather, wm, ws);
    b.stats.pos_mean = pm;
    b.stats.pos_std = ps;
    b.stats.weather_mean = wm;
    b.stats.weather_std = ws;

    b.stats.max_dist = dists.empty() ? 0.0 : *std::max_element(dists.begin(), dists.end());
    if (b.stats.max_dist > 0) b.edge_feat.col(0) /= b.stats.max_dist;
    return b;
}

}  // namespace sf
