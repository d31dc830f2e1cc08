#include "scenariofuzz/mutation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace sf {

std::string to_string(ObjectKind k) {
    return k == ObjectKind::Pedestrian ? "Pedestrian" : "Vehicle";
}

std::string to_string(ActionType a) {
    switch (a) {
        case ActionType::Immobile: return "Immobile";
        case ActionType::Linear: return "Linear";
        case ActionType::Maneuver: return "Maneuver";
        case ActionType::Autopilot: return "Autopilot";
    }
    return "Immobile";
}

const std::array<AppearanceInfo, 26>& appearance_table() {
    static const std::array<AppearanceInfo, 26> table = {{
        {0, "sedan", ObjectKind::Vehicle, 4.70, 1.80, 1.45, true},
        {1, "hatchback", ObjectKind::Vehicle, 4.10, 1.75, 1.50, true},
        {2, "suv", ObjectKind::Vehicle, 4.80, 1.90, 1.75, true},
        {3, "van", ObjectKind::Vehicle, 5.20, 1.95, 2.10, true},
        {4, "pickup", ObjectKind::Vehicle, 5.30, 1.95, 1.90, true},
        {5, "bus", ObjectKind::Vehicle, 11.00, 2.50, 3.20, false},
        {6, "truck", ObjectKind::Vehicle, 8.50, 2.50, 3.40, true},
        {7, "police_car", ObjectKind::Vehicle, 4.90, 1.85, 1.50, false},
        {8, "taxi", ObjectKind::Vehicle, 4.70, 1.80, 1.45, false},
        {9, "ambulance", ObjectKind::Vehicle, 5.50, 2.00, 2.50, false},
        {10, "bicycle_rider", ObjectKind::Vehicle, 1.80, 0.60, 1.70, false},
        {11, "motorcycle_rider", ObjectKind::Vehicle, 2.20, 0.80, 1.60, true},
        {12, "scooter_rider", ObjectKind::Vehicle, 1.90, 0.70, 1.60, true},
        {13, "adult_male", ObjectKind::Pedestrian, 0.50, 0.50, 1.80, false},
        {14, "adult_female", ObjectKind::Pedestrian, 0.50, 0.50, 1.70, false},
        {15, "adult_worker", ObjectKind::Pedestrian, 0.50, 0.50, 1.80, false},
        {16, "adult_business", ObjectKind::Pedestrian, 0.50, 0.50, 1.75, false},
        {17, "adult_runner", ObjectKind::Pedestrian, 0.50, 0.50, 1.75, false},
        {18, "elderly_man", ObjectKind::Pedestrian, 0.50, 0.50, 1.65, false},
        {19, "elderly_woman", ObjectKind::Pedestrian, 0.50, 0.50, 1.60, false},
        {20, "teenager", ObjectKind::Pedestrian, 0.45, 0.45, 1.60, false},
        {21, "child_schoolkid", ObjectKind::Pedestrian, 0.40, 0.40, 1.20, false},
        // low-height actors: small child and lying-pose adult
        {22, "child_small", ObjectKind::Pedestrian, 0.35, 0.35, 0.90, false},
        {23, "adult_lying", ObjectKind::Pedestrian, 1.80, 0.60, 0.40, false},
        {24, "adult_sitting", ObjectKind::Pedestrian, 0.60, 0.60, 1.00, false},
        {25, "wheelchair_user", ObjectKind::Pedestrian, 1.10, 0.70, 1.30, false},
    }};
    return table;
}

const AppearanceInfo& appearance(int id) {
    if (id < 0 || id >= 26) throw Error("appearance id out of range: " + std::to_string(id));
    return appearance_table()[static_cast<size_t>(id)];
}

namespace {

// Vehicle color palette; index 0 is red so the weak agent's color blindspot
// has a stable target.
const std::array<std::array<int, 3>, 8> kColors = {{
    {200, 0, 0},     // red
    {20, 20, 20},    // black
    {240, 240, 240}, // white
    {170, 170, 175}, // silver
    {20, 60, 180},   // blue
    {20, 120, 50},   // green
    {230, 200, 30},  // yellow
    {235, 120, 20},  // orange
}};

constexpr double kPedSpeedMin = 1.0, kPedSpeedMax = 4.0;
constexpr double kVehSpeedMin = 3.0, kVehSpeedMax = 10.0;

}  // namespace

double sample_attribute(const AttrMeta& m, SampleMode mode, double current, Rng& rng) {
    if (m.discrete) {
        if (m.n_choices <= 0) throw Error("discrete attribute with no choices: " + m.name);
        std::int64_t n = m.n_choices;
        if (mode == SampleMode::Random) {
            return static_cast<double>(rng.uniform_int(0, n - 1));
        }
        std::int64_t cur = std::llround(current);
        cur = std::clamp<std::int64_t>(cur, 0, n - 1);
        std::int64_t lo = std::max<std::int64_t>(0, cur - 5);
        std::int64_t hi = std::min(n - 1, cur + 5);
        return static_cast<double>(rng.uniform_int(lo, hi));
    }
    if (mode == SampleMode::Random) return rng.uniform(m.lo, m.hi);
    double cur = std::clamp(current, m.lo, m.hi);
    double lo = std::max(m.lo, cur - 5.0 * m.step);
    double hi = std::min(m.hi, cur + 5.0 * m.step);
    return rng.uniform(lo, hi);
}

namespace {

// Geometry-only pass: segment boundaries and nominal heading changes; the
// random perturbations are filled in by the callers.
std::vector<ManeuverSegment> maneuver_geometry(const std::vector<Vec3>& pts) {
    std::vector<ManeuverSegment> out;
    if (pts.size() < 2) {
        out.push_back({});
        return out;
    }
    std::vector<double> cum(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) {
        cum[i] = cum[i - 1] + distance2d(pts[i - 1], pts[i]);
    }
    double total = cum.back();
    if (total <= 0.0) {
        out.push_back({});
        return out;
    }
    int n = total >= 8.0 ? static_cast<int>(std::floor(total / 8.0)) : 1;

    // chord heading covering arc position s; `before` picks the chord ending
    // at s when s falls on a vertex
    auto heading_at = [&](double s, bool before) {
        size_t j = 0;
        while (j + 2 < pts.size() &&
               (before ? cum[j + 1] < s : cum[j + 1] <= s)) {
            ++j;
        }
        return std::atan2(pts[j + 1].y - pts[j].y, pts[j + 1].x - pts[j].x);
    };

    for (int i = 0; i < n; ++i) {
        double s0 = total * i / n;
        double s1 = total * (i + 1) / n;
        double dh = rad2deg(normalize_angle(heading_at(s1, true) - heading_at(s0, false)));
        ManeuverSegment seg;
        seg.nominal_angle_deg = dh;
        seg.length = s1 - s0;
        if (dh > 5.0) {
            seg.kind = Direction::Left;
        } else if (dh < -5.0) {
            seg.kind = Direction::Right;
        } else {
            seg.kind = Direction::Straight;
        }
        out.push_back(seg);
    }
    return out;
}

}  // namespace

std::vector<ManeuverSegment> segment_maneuver_path(const std::vector<Vec3>& points,
                                                   Rng& rng,
                                                   const MutationParams& params) {
    (void)params;
    auto segs = maneuver_geometry(points);
    for (auto& seg : segs) {
        seg.angle_offset_deg = rng.uniform(-20.0, 20.0);
        seg.speed = rng.uniform(kVehSpeedMin, kVehSpeedMax);
    }
    return segs;
}

namespace {

// Draws attributes in a fixed order, records each one, and supplies the
// Neighbor reference by attribute name (missing names fall back to Random).
struct Sampler {
    SampleMode mode;
    Rng& rng;
    std::map<std::string, double> ref;
    std::vector<AttributeValue>* out;

    double cont(const std::string& name, double lo, double hi, double step) {
        AttrMeta m{name, false, lo, hi, step, 0};
        auto it = ref.find(name);
        SampleMode use = (mode == SampleMode::Neighbor && it != ref.end())
                             ? SampleMode::Neighbor
                             : SampleMode::Random;
        double v = sample_attribute(m, use, it == ref.end() ? 0.0 : it->second, rng);
        out->push_back({name, v, lo, hi, step, false});
        return v;
    }

    int disc(const std::string& name, int n_choices) {
        AttrMeta m{name, true, 0.0, static_cast<double>(n_choices - 1), 1.0, n_choices};
        auto it = ref.find(name);
        SampleMode use = (mode == SampleMode::Neighbor && it != ref.end())
                             ? SampleMode::Neighbor
                             : SampleMode::Random;
        double v = sample_attribute(m, use, it == ref.end() ? 0.0 : it->second, rng);
        out->push_back({name, v, 0.0, static_cast<double>(n_choices - 1), 1.0, true});
        return static_cast<int>(std::llround(v));
    }
};

std::vector<Vec3> path_points(const TopologyGraph& g, const std::vector<int>& path) {
    std::vector<Vec3> pts;
    pts.reserve(path.size());
    for (int id : path) pts.push_back(g.node(id).position);
    return pts;
}

// Crossing partner: nearest seed waypoint on the same road but an
// opposite-sign lane; lowest id on ties.
int crossing_partner(const TopologyGraph& g, const std::vector<int>& members, int from) {
    const auto& w = g.node(from);
    int best = -1;
    double best_d = 1e300;
    for (int id : members) {
        if (id == from) continue;
        const auto& u = g.node(id);
        if (u.road_id != w.road_id) continue;
        if ((u.lane_id < 0) == (w.lane_id < 0)) continue;
        double d = distance2d(u.position, w.position);
        if (d < best_d - 1e-9 || (std::abs(d - best_d) <= 1e-9 && id < best)) {
            best = id;
            best_d = d;
        }
    }
    return best;
}

// Deterministically resolve a drawn spawn to a free waypoint: scan the seed's
// sorted waypoint list cyclically from the drawn index. Returns -1 when every
// waypoint is occupied.
int resolve_spawn(const std::vector<int>& members, int idx, const std::set<int>& used) {
    int n = static_cast<int>(members.size());
    for (int k = 0; k < n; ++k) {
        int cand = members[(idx + k) % n];
        if (!used.count(cand)) return cand;
    }
    return -1;
}

}  // namespace

ConcreteScenario mutate_scenario(const ScenarioSeed& seed, const TopologyGraph& g,
                                 SampleMode strategy,
                                 const ConcreteScenario* reference,
                                 const MutationParams& params, Rng& rng) {
    if (seed.paths.empty()) {
        throw SeedHasNoPaths("seed " + std::to_string(seed.id) + " has no paths");
    }
    if (strategy == SampleMode::Neighbor && reference == nullptr) {
        throw Error("Neighbor strategy requires a reference scenario");
    }

    ConcreteScenario sc;
    sc.source_seed_id = seed.id;
    sc.map_name = seed.map_name;

    Sampler sampler{strategy, rng, {}, &sc.attributes};
    if (reference != nullptr) {
        for (const auto& a : reference->attributes) sampler.ref[a.name] = a.value;
    }

    // mission: path choice, optionally direction filtered
    std::vector<int> mission_candidates;
    for (size_t i = 0; i < seed.paths.size(); ++i) {
        if (params.mission_direction &&
            seed.paths[i].direction != *params.mission_direction) {
            continue;
        }
        mission_candidates.push_back(static_cast<int>(i));
    }
    if (mission_candidates.empty()) {
        throw SeedHasNoPaths("seed " + std::to_string(seed.id) +
                             " has no path with the requested direction");
    }
    int mi = sampler.disc("mission.path", static_cast<int>(mission_candidates.size()));
    const SeedPath& mission_path = seed.paths[static_cast<size_t>(mission_candidates[static_cast<size_t>(mi)])];
    sc.mission.path = mission_path.waypoints;
    sc.mission.start_waypoint = mission_path.waypoints.front();
    sc.mission.direction = mission_path.direction;

    std::set<int> used = {sc.mission.start_waypoint};
    const int nw = static_cast<int>(seed.waypoints.size());
    const int np = static_cast<int>(seed.paths.size());

    // puddles
    int n_puddles = sampler.disc("puddles.count", params.max_puddles + 1);
    for (int i = 0; i < n_puddles; ++i) {
        std::string p = "puddle" + std::to_string(i) + ".";
        PuddleSpec pd;
        pd.center_waypoint = seed.waypoints[static_cast<size_t>(sampler.disc(p + "center", nw))];
        pd.radius = sampler.cont(p + "radius", 0.5, 3.0, params.radius_step);
        pd.friction = sampler.cont(p + "friction", 0.1, 1.0, params.friction_step);
        sc.puddles.push_back(pd);
    }

    // objects
    int n_objects = sampler.disc("objects.count", params.max_objects + 1);
    for (int i = 0; i < n_objects; ++i) {
        std::string p = "object" + std::to_string(i) + ".";
        ObjectSpec ob;
        ob.appearance_id = sampler.disc(p + "appearance", 26);
        const auto& info = appearance(ob.appearance_id);
        ob.kind = info.kind;
        if (info.colorable) {
            int ci = sampler.disc(p + "color", static_cast<int>(kColors.size()));
            ob.color = kColors[static_cast<size_t>(ci)];
        }

        bool dropped = false;
        if (ob.kind == ObjectKind::Pedestrian) {
            // pedestrians: Immobile or Linear road-crossing walk
            ob.action = sampler.disc(p + "action", 2) == 0 ? ActionType::Immobile
                                                           : ActionType::Linear;
            int spawn = resolve_spawn(seed.waypoints, sampler.disc(p + "spawn", nw), used);
            if (spawn < 0) {
                dropped = true;
            } else {
                ob.spawn_waypoint = spawn;
                if (ob.action == ActionType::Linear) {
                    ob.speed = sampler.cont(p + "speed", kPedSpeedMin, kPedSpeedMax,
                                            params.speed_step);
                    int partner = crossing_partner(g, seed.waypoints, spawn);
                    if (partner >= 0) {
                        ob.path = {spawn, partner};
                        ob.crossing = true;
                    } else {
                        ob.action = ActionType::Immobile;
                    }
                }
            }
        } else {
            ob.action = static_cast<ActionType>(sampler.disc(p + "action", 4));
            if (ob.action == ActionType::Immobile) {
                int spawn = resolve_spawn(seed.waypoints, sampler.disc(p + "spawn", nw), used);
                if (spawn < 0) dropped = true;
                ob.spawn_waypoint = spawn;
            } else {
                // moving vehicles follow a corpus path; scan for one whose
                // start is still free
                int pi = sampler.disc(p + "path", np);
                int chosen = -1;
                for (int k = 0; k < np; ++k) {
                    int cand = (pi + k) % np;
                    if (!used.count(seed.paths[static_cast<size_t>(cand)].waypoints.front())) {
                        chosen = cand;
                        break;
                    }
                }
                if (ob.action == ActionType::Linear || ob.action == ActionType::Autopilot) {
                    ob.speed = sampler.cont(p + "speed", kVehSpeedMin, kVehSpeedMax,
                                            params.speed_step);
                }
                if (chosen < 0) {
                    // every path start occupied: park it instead
                    int spawn = resolve_spawn(seed.waypoints, 0, used);
                    if (spawn < 0) dropped = true;
                    ob.action = ActionType::Immobile;
                    ob.spawn_waypoint = spawn;
                    ob.segments.clear();
                } else {
                    const auto& sp = seed.paths[static_cast<size_t>(chosen)];
                    ob.path = sp.waypoints;
                    ob.spawn_waypoint = sp.waypoints.front();
                    if (ob.action == ActionType::Maneuver) {
                        auto segs = maneuver_geometry(path_points(g, sp.waypoints));
                        for (size_t si = 0; si < segs.size(); ++si) {
                            std::string sp_name = p + "seg" + std::to_string(si) + ".";
                            segs[si].angle_offset_deg = sampler.cont(
                                sp_name + "angle", -20.0, 20.0, params.angle_step);
                            segs[si].speed = sampler.cont(sp_name + "speed", kVehSpeedMin,
                                                          kVehSpeedMax, params.speed_step);
                        }
                        ob.segments = std::move(segs);
                    }
                }
            }
        }
        if (dropped) continue;
        used.insert(ob.spawn_waypoint);
        sc.objects.push_back(std::move(ob));
    }

    // weather
    auto pct = [&](const char* name, double& field) {
        field = sampler.cont(std::string("weather.") + name, 0.0, 100.0,
                             params.weather_step);
    };
    pct("cloud", sc.weather.cloud);
    pct("rain", sc.weather.rain);
    pct("ponding", sc.weather.ponding);
    pct("wind", sc.weather.wind);
    pct("fog", sc.weather.fog);
    pct("wetness", sc.weather.wetness);
    sc.weather.sun_angle =
        sampler.cont("weather.sun_angle", 0.0, 360.0, params.angle_step);
    sc.weather.sun_altitude =
        sampler.cont("weather.sun_altitude", -90.0, 90.0, params.angle_step);

    return sc;
}

namespace {

Json weather_to_json(const WeatherParams& w) {
    return Json{{"cloud", w.cloud},     {"rain", w.rain},
                {"ponding", w.ponding}, {"wind", w.wind},
                {"fog", w.fog},         {"wetness", w.wetness},
                {"sun_angle", w.sun_angle}, {"sun_altitude", w.sun_altitude}};
}

WeatherParams weather_from_json(const Json& j) {
    WeatherParams w;
    w.cloud = j.at("cloud");
    w.rain = j.at("rain");
    w.ponding = j.at("ponding");
    w.wind = j.at("wind");
    w.fog = j.at("fog");
    w.wetness = j.at("wetness");
    w.sun_angle = j.at("sun_angle");
    w.sun_altitude = j.at("sun_altitude");
    return w;
}

std::string dir_str(Direction d) { return to_string(d); }

}  // namespace

Json scenario_to_json(const ConcreteScenario& sc) {
    Json j;
    j["schema"] = "scenariofuzz-scenario/1";
    j["source_seed_id"] = sc.source_seed_id;
    j["map_name"] = sc.map_name;
    j["mission"] = {{"start_waypoint", sc.mission.start_waypoint},
                    {"path", sc.mission.path},
                    {"direction", dir_str(sc.mission.direction)}};
    j["objects"] = Json::array();
    for (const auto& ob : sc.objects) {
        Json o;
        o["kind"] = to_string(ob.kind);
        o["appearance_id"] = ob.appearance_id;
        if (ob.color) o["color"] = *ob.color;
        o["action"] = to_string(ob.action);
        o["speed"] = ob.speed;
        o["path"] = ob.path;
        o["crossing"] = ob.crossing;
        o["spawn_waypoint"] = ob.spawn_waypoint;
        o["segments"] = Json::array();
        for (const auto& s : ob.segments) {
            o["segments"].push_back({{"kind", dir_str(s.kind)},
                                     {"nominal_angle_deg", s.nominal_angle_deg},
                                     {"angle_offset_deg", s.angle_offset_deg},
                                     {"speed", s.speed},
                                     {"length", s.length}});
        }
        j["objects"].push_back(std::move(o));
    }
    j["puddles"] = Json::array();
    for (const auto& pd : sc.puddles) {
        j["puddles"].push_back({{"center_waypoint", pd.center_waypoint},
                                {"radius", pd.radius},
                                {"friction", pd.friction}});
    }
    j["weather"] = weather_to_json(sc.weather);
    j["attributes"] = Json::array();
    for (const auto& a : sc.attributes) {
        j["attributes"].push_back({{"name", a.name},
                                   {"value", a.value},
                                   {"lo", a.lo},
                                   {"hi", a.hi},
                                   {"step", a.step},
                                   {"discrete", a.discrete}});
    }
    return j;
}

ConcreteScenario scenario_from_json(const Json& j) {
    if (j.value("schema", "") != "scenariofuzz-scenario/1") {
        throw Error("unsupported scenario schema");
    }
    ConcreteScenario sc;
    sc.source_seed_id = j.at("source_seed_id");
    sc.map_name = j.at("map_name");
    const auto& jm = j.at("mission");
    sc.mission.start_waypoint = jm.at("start_waypoint");
    sc.mission.path = jm.at("path").get<std::vector<int>>();
    sc.mission.direction = direction_from_string(jm.at("direction"));
    for (const auto& o : j.at("objects")) {
        ObjectSpec ob;
        ob.kind = o.at("kind") == "Pedestrian" ? ObjectKind::Pedestrian
                                               : ObjectKind::Vehicle;
        ob.appearance_id = o.at("appearance_id");
        if (o.contains("color")) {
            auto c = o.at("color").get<std::vector<int>>();
            ob.color = std::array<int, 3>{c.at(0), c.at(1), c.at(2)};
        }
        std::string act = o.at("action");
        if (act == "Linear") {
            ob.action = ActionType::Linear;
        } else if (act == "Maneuver") {
            ob.action = ActionType::Maneuver;
        } else if (act == "Autopilot") {
            ob.action = ActionType::Autopilot;
        } else {
            ob.action = ActionType::Immobile;
        }
        ob.speed = o.at("speed");
        ob.path = o.at("path").get<std::vector<int>>();
        ob.crossing = o.at("crossing");
        ob.spawn_waypoint = o.at("spawn_waypoint");
        for (const auto& s : o.at("segments")) {
            ManeuverSegment seg;
            seg.kind = direction_from_string(s.at("kind"));
            seg.nominal_angle_deg = s.at("nominal_angle_deg");
            seg.angle_offset_deg = s.at("angle_offset_deg");
            seg.speed = s.at("speed");
            seg.length = s.at("length");
            ob.segments.push_back(seg);
        }
        sc.objects.push_back(std::move(ob));
    }
    for (const auto& p : j.at("puddles")) {
        PuddleSpec pd;
        pd.center_waypoint = p.at("center_waypoint");
        pd.radius = p.at("radius");
        pd.friction = p.at("friction");
        sc.puddles.push_back(pd);
    }
    sc.weather = weather_from_json(j.at("weather"));
    for (const auto& a : j.at("attributes")) {
        sc.attributes.push_back({a.at("name"), a.at("value"), a.at("lo"), a.at("hi"),
                                 a.at("step"), a.at("discrete")});
    }
    return sc;
}

std::uint64_t scenario_hash(const ConcreteScenario& sc) {
    return fnv1a(scenario_to_json(sc).dump());
}

std::string attributes_to_csv(const ConcreteScenario& sc) {
    std::string out = "name,value,lo,hi,step,discrete\n";
    for (const auto& a : sc.attributes) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%.17g,%.17g,%d\n",
                      a.name.c_str(), a.value, a.lo, a.hi, a.step,
                      a.discrete ? 1 : 0);
        out += buf;
    }
    return out;
}

}  // namespace sf
