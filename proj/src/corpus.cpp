#include "scenariofuzz/corpus.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <numeric>
#include <set>

namespace sf {

std::string to_string(RoadType t) {
    switch (t) {
        case RoadType::StraightRoad: return "StraightRoad";
        case RoadType::CrossRoad: return "CrossRoad";
        case RoadType::TIntersection: return "TIntersection";
    }
    return "StraightRoad";
}

std::string to_string(Direction d) {
    switch (d) {
        case Direction::Left: return "Left";
        case Direction::Right: return "Right";
        case Direction::Straight: return "Straight";
        case Direction::Unknown: return "Unknown";
    }
    return "Unknown";
}

RoadType road_type_from_string(const std::string& s) {
    if (s == "CrossRoad") return RoadType::CrossRoad;
    if (s == "TIntersection") return RoadType::TIntersection;
    if (s == "StraightRoad") return RoadType::StraightRoad;
    throw Error("unknown road type: " + s);
}

Direction direction_from_string(const std::string& s) {
    if (s == "Left") return Direction::Left;
    if (s == "Right") return Direction::Right;
    if (s == "Straight") return Direction::Straight;
    if (s == "Unknown") return Direction::Unknown;
    throw Error("unknown direction: " + s);
}

const ScenarioSeed& SeedCorpus::seed_by_id(int id) const {
    for (const auto& s : seeds) {
        if (s.id == id) return s;
    }
    throw Error("no seed with id " + std::to_string(id));
}

std::vector<std::vector<int>> cluster_points(const std::vector<Vec3>& points,
                                             double radius) {
    int n = static_cast<int>(points.size());
    std::vector<int> parent(static_cast<size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int a) {
        while (parent[static_cast<size_t>(a)] != a) {
            parent[static_cast<size_t>(a)] = parent[static_cast<size_t>(parent[static_cast<size_t>(a)])];
            a = parent[static_cast<size_t>(a)];
        }
        return a;
    };
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            if (distance(points[static_cast<size_t>(i)], points[static_cast<size_t>(j)]) <=
                radius) {
                int a = find(i), b = find(j);
                if (a != b) parent[static_cast<size_t>(std::max(a, b))] = std::min(a, b);
            }
        }
    }
    std::map<int, std::vector<int>> groups;  // keyed by lowest member = representative
    for (int i = 0; i < n; ++i) groups[find(i)].push_back(i);
    std::vector<std::vector<int>> out;
    for (auto& [rep, members] : groups) out.push_back(std::move(members));
    return out;
}

RoadType classify_road_type(const RoadNetwork& net, const TopologyGraph& g,
                            const std::vector<int>& nodes) {
    if (nodes.empty()) throw Error("classify_road_type: empty node set");
    // junctions touched by this region, via connecting-road waypoints
    std::set<int> junction_ids;
    for (int id : nodes) {
        const Road* road = net.find_road(g.node(id).road_id);
        if (road && road->junction >= 0) junction_ids.insert(road->junction);
    }
    int max_branches = 0;
    for (int jid : junction_ids) {
        const Junction* junction = net.find_junction(jid);
        if (!junction) continue;
        std::set<int> branches;
        for (const auto& conn : junction->connections) {
            branches.insert(conn.incoming_road);
            const Road* c = net.find_road(conn.connecting_road);
            if (c && c->successor.kind == RoadLink::Kind::Road) {
                branches.insert(c->successor.id);
            }
        }
        max_branches = std::max(max_branches, static_cast<int>(branches.size()));
    }
    if (max_branches >= 4) return RoadType::CrossRoad;
    if (max_branches == 3) return RoadType::TIntersection;
    return RoadType::StraightRoad;
}

namespace {

Direction label_path(const TopologyGraph& g, const std::vector<int>& path,
                     double length) {
    double delta = normalize_angle(g.node(path.back()).heading -
                                   g.node(path.front()).heading);
    if (delta > deg2rad(20.0)) return Direction::Left;
    if (delta < -deg2rad(20.0)) return Direction::Right;
    if (length <= 100.0) return Direction::Straight;
    return Direction::Unknown;
}

}  // namespace

std::vector<SeedPath> enumerate_paths(const TopologyGraph& g,
                                      const std::vector<int>& nodes, int max_hops) {
    if (max_hops < 1) throw Error("max_hops must be >= 1");
    std::set<int> in_region(nodes.begin(), nodes.end());

    auto is_entry = [&](int id) {
        const auto& in = g.in_edges[static_cast<size_t>(id)];
        if (in.empty()) return true;
        for (int ei : in) {
            if (!in_region.count(g.edges[static_cast<size_t>(ei)].from)) return true;
        }
        return false;
    };
    auto is_exit = [&](int id) {
        const auto& out = g.out_edges[static_cast<size_t>(id)];
        if (out.empty()) return true;
        for (int ei : out) {
            if (!in_region.count(g.edges[static_cast<size_t>(ei)].to)) return true;
        }
        return false;
    };

    std::vector<SeedPath> result;
    std::vector<int> stack;
    std::set<int> on_path;

    std::function<void(int, double)> dfs = [&](int u, double length) {
        if (stack.size() > 1 && is_exit(u)) {
            SeedPath p;
            p.waypoints = stack;
            p.length = length;
            p.direction = label_path(g, stack, length);
            result.push_back(std::move(p));
        }
        if (static_cast<int>(stack.size()) > max_hops) return;
        for (int ei : g.out_edges[static_cast<size_t>(u)]) {
            const auto& e = g.edges[static_cast<size_t>(ei)];
            if (!in_region.count(e.to) || on_path.count(e.to)) continue;
            stack.push_back(e.to);
            on_path.insert(e.to);
            dfs(e.to, length + e.length);
            on_path.erase(e.to);
            stack.pop_back();
        }
    };

    for (int id : nodes) {
        if (!is_entry(id)) continue;
        stack = {id};
        on_path = {id};
        dfs(id, 0.0);
    }
    return result;
}

SeedCorpus build_corpus(const RoadNetwork& net, const TopologyGraph& g,
                        const CorpusParams& params, const std::string& map_name) {
    auto t0 = std::chrono::steady_clock::now();
    SeedCorpus corpus;
    corpus.map_name = map_name;
    corpus.params = params;

    std::vector<const Signal*> lights;
    for (const auto& sig : net.signals) {
        if (sig.kind == "trafficLight") lights.push_back(&sig);
    }
    std::vector<Vec3> light_positions;
    for (const auto* l : lights) light_positions.push_back(l->position);
    auto light_clusters = cluster_points(light_positions, params.light_cluster_radius);

    struct LightedRegion {
        std::vector<int> signal_ids;
        Vec3 center;
    };
    std::vector<LightedRegion> regions;
    for (const auto& cluster : light_clusters) {
        LightedRegion region;
        Vec3 sum;
        for (int idx : cluster) {
            region.signal_ids.push_back(lights[static_cast<size_t>(idx)]->id);
            sum = sum + lights[static_cast<size_t>(idx)]->position;
        }
        region.center = sum * (1.0 / static_cast<double>(cluster.size()));
        regions.push_back(region);
    }

    // Assign each waypoint to at most one lighted region (nearest center in range).
    std::vector<std::vector<int>> region_nodes(regions.size());
    std::vector<int> unused;
    for (const auto& wp : g.nodes) {
        int best = -1;
        double best_d = params.near_node_radius;
        for (size_t ri = 0; ri < regions.size(); ++ri) {
            double d = distance(wp.position, regions[ri].center);
            if (d <= best_d) {
                best = static_cast<int>(ri);
                best_d = d;
            }
        }
        if (best >= 0) {
            region_nodes[static_cast<size_t>(best)].push_back(wp.id);
        } else {
            unused.push_back(wp.id);
        }
    }

    auto finish_seed = [&](ScenarioSeed seed) {
        if (seed.waypoints.empty()) return;
        Vec3 sum;
        for (int id : seed.waypoints) sum = sum + g.node(id).position;
        seed.center = sum * (1.0 / static_cast<double>(seed.waypoints.size()));
        seed.road_type = classify_road_type(net, g, seed.waypoints);
        seed.paths = enumerate_paths(g, seed.waypoints, params.max_hops);
        std::set<std::string> kinds;
        for (const auto& sig : net.signals) {
            if (sig.kind == "trafficLight") continue;
            if (distance(sig.position, seed.center) <= params.sign_radius) {
                kinds.insert(sig.kind);
            }
        }
        seed.extras.sign_kinds.assign(kinds.begin(), kinds.end());
        std::set<std::pair<int, int>> lanes_seen;
        for (int id : seed.waypoints) {
            const auto& wp = g.node(id);
            if (!lanes_seen.insert({wp.road_id, wp.lane_id}).second) continue;
            const Road* road = net.find_road(wp.road_id);
            const Lane* lane = road ? road->find_lane(wp.s, wp.lane_id) : nullptr;
            seed.extras.lane_changes.push_back(
                {wp.road_id, wp.lane_id, lane ? lane->lane_change_allowed : false});
        }
        seed.id = static_cast<int>(corpus.seeds.size());
        seed.map_name = map_name;
        corpus.seeds.push_back(std::move(seed));
    };

    for (size_t ri = 0; ri < regions.size(); ++ri) {
        ScenarioSeed seed;
        seed.waypoints = region_nodes[ri];
        seed.traffic_lights = regions[ri].signal_ids;
        std::sort(seed.traffic_lights.begin(), seed.traffic_lights.end());
        finish_seed(std::move(seed));
    }

    std::vector<Vec3> unused_positions;
    for (int id : unused) unused_positions.push_back(g.node(id).position);
    for (const auto& cluster : cluster_points(unused_positions, params.node_cluster_radius)) {
        ScenarioSeed seed;
        for (int idx : cluster) seed.waypoints.push_back(unused[static_cast<size_t>(idx)]);
        finish_seed(std::move(seed));
    }

    corpus.build_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return corpus;
}

const ScenarioSeed& select_seed(const SeedCorpus& corpus, const SeedFilter& filter,
                                Rng& rng) {
    std::vector<const ScenarioSeed*> matches;
    for (const auto& seed : corpus.seeds) {
        if (filter.map_name && seed.map_name != *filter.map_name) continue;
        if (filter.road_type && seed.road_type != *filter.road_type) continue;
        if (filter.has_traffic_lights &&
            seed.traffic_lights.empty() == *filter.has_traffic_lights) {
            continue;
        }
        matches.push_back(&seed);
    }
    if (matches.empty()) throw NoMatch("no seed matches the filter");
    return *matches[static_cast<size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(matches.size()) - 1))];
}

Json corpus_to_json(const SeedCorpus& corpus) {
    Json j;
    j["schema"] = "scenariofuzz-corpus/1";
    j["map_name"] = corpus.map_name;
    j["metadata"] = Json{{"spacing", corpus.params.spacing},
                         {"light_cluster_radius", corpus.params.light_cluster_radius},
                         {"node_cluster_radius", corpus.params.node_cluster_radius},
                         {"near_node_radius", corpus.params.near_node_radius},
                         {"sign_radius", corpus.params.sign_radius},
                         {"max_hops", corpus.params.max_hops},
                         {"build_seconds", corpus.build_seconds}};
    j["seeds"] = Json::array();
    for (const auto& s : corpus.seeds) {
        Json js;
        js["id"] = s.id;
        js["map_name"] = s.map_name;
        js["waypoints"] = s.waypoints;
        js["traffic_lights"] = s.traffic_lights;
        js["road_type"] = to_string(s.road_type);
        js["paths"] = Json::array();
        for (const auto& p : s.paths) {
            js["paths"].push_back(Json{{"waypoints", p.waypoints},
                                       {"direction", to_string(p.direction)},
                                       {"length", p.length}});
        }
        js["center"] = Json{{"x", s.center.x}, {"y", s.center.y}, {"z", s.center.z}};
        Json lanes = Json::array();
        for (const auto& lp : s.extras.lane_changes) {
            lanes.push_back(Json{{"road_id", lp.road_id},
                                 {"lane_id", lp.lane_id},
                                 {"lane_change_allowed", lp.lane_change_allowed}});
        }
        js["extras"] = Json{{"sign_kinds", s.extras.sign_kinds}, {"lane_changes", lanes}};
        j["seeds"].push_back(js);
    }
    return j;
}

SeedCorpus corpus_from_json(const Json& j) {
    SeedCorpus corpus;
    corpus.map_name = j.at("map_name");
    const auto& m = j.at("metadata");
    corpus.params.spacing = m.at("spacing");
    corpus.params.light_cluster_radius = m.at("light_cluster_radius");
    corpus.params.node_cluster_radius = m.at("node_cluster_radius");
    corpus.params.near_node_radius = m.at("near_node_radius");
    corpus.params.sign_radius = m.at("sign_radius");
    corpus.params.max_hops = m.at("max_hops");
    corpus.build_seconds = m.at("build_seconds");
    for (const auto& js : j.at("seeds")) {
        ScenarioSeed s;
        s.id = js.at("id");
        s.map_name = js.at("map_name");
        s.waypoints = js.at("waypoints").get<std::vector<int>>();
        s.traffic_lights = js.at("traffic_lights").get<std::vector<int>>();
        s.road_type = road_type_from_string(js.at("road_type"));
        for (const auto& jp : js.at("paths")) {
            SeedPath p;
            p.waypoints = jp.at("waypoints").get<std::vector<int>>();
            p.direction = direction_from_string(jp.at("direction"));
            p.length = jp.at("length");
            s.paths.push_back(std::move(p));
        }
        s.center = {js.at("center").at("x"), js.at("center").at("y"),
                    js.at("center").at("z")};
        for (const auto& k : js.at("extras").at("sign_kinds")) {
            s.extras.sign_kinds.push_back(k.get<std::string>());
        }
        for (const auto& jl : js.at("extras").at("lane_changes")) {
            s.extras.lane_changes.push_back({jl.at("road_id"), jl.at("lane_id"),
                                             jl.at("lane_change_allowed")});
        }
        corpus.seeds.push_back(std::move(s));
    }
    return corpus;
}

}  // namespace sf
