#include "scenariofuzz/sim.hpp"

#include <algorithm>
#include <cmath>

namespace sf {

std::string to_string(LightPhase p) {
    switch (p) {
        case LightPhase::Red: return "Red";
        case LightPhase::Yellow: return "Yellow";
        case LightPhase::Green: return "Green";
    }
    return "Red";
}

std::string to_string(OutcomeKind k) {
    switch (k) {
        case OutcomeKind::Misbehavior: return "Misbehavior";
        case OutcomeKind::Completed: return "Completed";
        case OutcomeKind::HorizonExpired: return "HorizonExpired";
        case OutcomeKind::AgentFault: return "AgentFault";
    }
    return "HorizonExpired";
}

LightPhase light_phase_at(double time, int signal_id) {
    double offset = (signal_id % 2) * 15.0;
    double t = std::fmod(time + offset, 30.0);
    if (t < 0) t += 30.0;
    if (t < 12.0) return LightPhase::Green;
    if (t < 15.0) return LightPhase::Yellow;
    return LightPhase::Red;
}

namespace {

std::array<std::pair<double, double>, 4> obb_corners(const Obb& o) {
    double c = std::cos(o.heading), s = std::sin(o.heading);
    std::array<std::pair<double, double>, 4> out;
    int k = 0;
    for (double sl : {1.0, -1.0}) {
        for (double sw : {1.0, -1.0}) {
            double lx = sl * o.half_len, ly = sw * o.half_wid;
            out[static_cast<size_t>(k++)] = {o.cx + lx * c - ly * s, o.cy + lx * s + ly * c};
        }
    }
    // order as a proper quad: (+,+), (+,-), (-,-), (-,+)
    std::swap(out[2], out[3]);
    return out;
}

double seg_point_dist(double ax, double ay, double bx, double by, double px, double py) {
    double vx = bx - ax, vy = by - ay;
    double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(px - (ax + t * vx), py - (ay + t * vy));
}

double seg_seg_dist(double ax, double ay, double bx, double by, double cx, double cy,
                    double dx, double dy) {
    return std::min(
        std::min(seg_point_dist(ax, ay, bx, by, cx, cy), seg_point_dist(ax, ay, bx, by, dx, dy)),
        std::min(seg_point_dist(cx, cy, dx, dy, ax, ay), seg_point_dist(cx, cy, dx, dy, bx, by)));
}

}  // namespace

bool obb_overlap(const Obb& a, const Obb& b) {
    auto ca = obb_corners(a), cb = obb_corners(b);
    // SAT over both boxes' edge normals
    for (double h : {a.heading, a.heading + M_PI / 2, b.heading, b.heading + M_PI / 2}) {
        double ax_ = std::cos(h), ay_ = std::sin(h);
        double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
        for (const auto& [x, y] : ca) {
            double p = x * ax_ + y * ay_;
            amin = std::min(amin, p);
            amax = std::max(amax, p);
        }
        for (const auto& [x, y] : cb) {
            double p = x * ax_ + y * ay_;
            bmin = std::min(bmin, p);
            bmax = std::max(bmax, p);
        }
        if (amax < bmin || bmax < amin) return false;
    }
    return true;
}

double obb_distance(const Obb& a, const Obb& b) {
    if (obb_overlap(a, b)) return 0.0;
    auto ca = obb_corners(a), cb = obb_corners(b);
    double best = 1e300;
    for (int i = 0; i < 4; ++i) {
        auto [ax, ay] = ca[static_cast<size_t>(i)];
        auto [bx, by] = ca[static_cast<size_t>((i + 1) % 4)];
        for (int j = 0; j < 4; ++j) {
            auto [cx, cy] = cb[static_cast<size_t>(j)];
            auto [dx, dy] = cb[static_cast<size_t>((j + 1) % 4)];
            best = std::min(best, seg_seg_dist(ax, ay, bx, by, cx, cy, dx, dy));
        }
    }
    return best;
}

World::World(const ConcreteScenario& sc, const RoadNetwork& net, const TopologyGraph& g)
    : sc_(&sc), net_(&net), g_(&g) {
    for (int wp : sc.mission.path) mission_pts_.push_back(g.node(wp).position);
    mission_cum_.assign(mission_pts_.size(), 0.0);
    for (size_t i = 1; i < mission_pts_.size(); ++i) {
        mission_cum_[i] = mission_cum_[i - 1] + distance2d(mission_pts_[i - 1], mission_pts_[i]);
    }

    for (const auto& ob : sc.objects) {
        Plan p;
        for (int wp : ob.path) p.points.push_back(g.node(wp).position);
        p.cum.assign(p.points.size(), 0.0);
        for (size_t i = 1; i < p.points.size(); ++i) {
            p.cum[i] = p.cum[i - 1] + distance2d(p.points[i - 1], p.points[i]);
        }
        p.length = p.cum.empty() ? 0.0 : p.cum.back();
        plans_.push_back(std::move(p));
    }

    for (const auto& sig : net.signals) {
        if (sig.kind != "trafficLight") continue;
        light_ids_.push_back(sig.id);
        // the governed lane: side of the road the light stands on; its stop
        // line is the approach lane's last waypoint before the junction
        bool right_side = sig.t < 0;
        const Waypoint* stop = nullptr;
        for (const auto& wp : g.nodes) {
            if (wp.road_id != sig.road_id) continue;
            if (right_side != (wp.lane_id < 0)) continue;
            if (stop == nullptr || (right_side ? wp.s > stop->s : wp.s < stop->s)) {
                stop = &wp;
            }
        }
        if (stop != nullptr) {
            stop_lines_.push_back({sig.id, stop->position, stop->heading});
        }
    }

    if (!sc.mission.path.empty()) {
        const auto& wp = g.node(sc.mission.path.front());
        const Road* road = net.find_road(wp.road_id);
        if (road != nullptr) {
            const Lane* lane = road->find_lane(wp.s, wp.lane_id);
            if (lane != nullptr) lane_half_width_ = lane->width / 2.0;
        }
    }
}

WorldState World::initial_state() const {
    WorldState ws;
    if (mission_pts_.empty()) throw Error("scenario has an empty mission path");
    const auto& start = g_->node(sc_->mission.path.front());
    ws.ego.pose = {start.position.x, start.position.y, start.heading};

    for (size_t i = 0; i < sc_->objects.size(); ++i) {
        const auto& ob = sc_->objects[i];
        const auto& spawn = g_->node(ob.spawn_waypoint);
        ObjectState os;
        double heading = spawn.heading;
        const auto& plan = plans_[i];
        if (plan.points.size() >= 2) {
            heading = std::atan2(plan.points[1].y - plan.points[0].y,
                                 plan.points[1].x - plan.points[0].x);
        }
        os.pose = {spawn.position.x, spawn.position.y, heading};
        os.speed = 0.0;
        ws.objects.push_back(os);
    }

    // defensive overlap check: the mutation engine forbids shared spawns but
    // long bodies can still touch across close waypoints
    Obb ego = ego_box(ws.ego);
    for (size_t i = 0; i < ws.objects.size(); ++i) {
        Obb bi = object_box(static_cast<int>(i), ws.objects[i]);
        if (obb_overlap(ego, bi)) {
            throw SpawnCollision("object " + std::to_string(i) + " overlaps ego at spawn");
        }
        for (size_t j = i + 1; j < ws.objects.size(); ++j) {
            if (obb_overlap(bi, object_box(static_cast<int>(j), ws.objects[j]))) {
                throw SpawnCollision("objects " + std::to_string(i) + " and " +
                                     std::to_string(j) + " overlap at spawn");
            }
        }
    }

    for (int id : light_ids_) ws.lights.push_back(light_phase_at(0.0, id));
    return ws;
}

double World::friction_at(double x, double y) const {
    double mu = 1.0;
    for (const auto& pd : sc_->puddles) {
        const auto& c = g_->node(pd.center_waypoint).position;
        if (std::hypot(x - c.x, y - c.y) <= pd.radius) mu = std::min(mu, pd.friction);
    }
    return mu;
}

double World::speed_limit_at(double x, double y) const {
    const auto& wp = nearest_waypoint(*g_, {x, y, 0});
    const Road* road = net_->find_road(wp.road_id);
    return road != nullptr ? road->speed_limit : 13.89;
}

double World::mission_offset(double x, double y) const {
    double best = 1e300;
    for (size_t i = 0; i + 1 < mission_pts_.size(); ++i) {
        best = std::min(best, seg_point_dist(mission_pts_[i].x, mission_pts_[i].y,
                                             mission_pts_[i + 1].x, mission_pts_[i + 1].y, x, y));
    }
    if (mission_pts_.size() == 1) {
        best = std::hypot(x - mission_pts_[0].x, y - mission_pts_[0].y);
    }
    return best;
}

Obb World::ego_box(const EgoState& e) const {
    return {e.pose.x, e.pose.y, e.pose.heading, kEgoLength / 2, kEgoWidth / 2};
}

Obb World::object_box(int index, const ObjectState& os) const {
    const auto& info = appearance(sc_->objects[static_cast<size_t>(index)].appearance_id);
    return {os.pose.x, os.pose.y, os.pose.heading, info.length / 2, info.width / 2};
}

namespace {

// point and direction at arc position s on a polyline
void polyline_at(const std::vector<Vec3>& pts, const std::vector<double>& cum, double s,
                 double* x, double* y, double* heading) {
    if (pts.size() < 2) {
        *x = pts.empty() ? 0 : pts[0].x;
        *y = pts.empty() ? 0 : pts[0].y;
        *heading = 0;
        return;
    }
    s = std::clamp(s, 0.0, cum.back());
    size_t j = 1;
    while (j + 1 < pts.size() && cum[j] < s) ++j;
    double seg = cum[j] - cum[j - 1];
    double t = seg > 0 ? (s - cum[j - 1]) / seg : 0.0;
    *x = pts[j - 1].x + t * (pts[j].x - pts[j - 1].x);
    *y = pts[j - 1].y + t * (pts[j].y - pts[j - 1].y);
    *heading = std::atan2(pts[j].y - pts[j - 1].y, pts[j].x - pts[j - 1].x);
}

}  // namespace

void World::advance_object(int index, ObjectState& os, const WorldState& ws) const {
    const auto& ob = sc_->objects[static_cast<size_t>(index)];
    const auto& plan = plans_[static_cast<size_t>(index)];
    if (ob.action == ActionType::Immobile || os.done || plan.points.size() < 2) return;

    double target_speed = 0.0;
    switch (ob.action) {
        case ActionType::Linear:
            target_speed = ob.speed;
            os.speed = target_speed;
            break;
        case ActionType::Maneuver: {
            // segment index from progress against the per-segment lengths
            double acc_len = 0.0;
            size_t si = 0;
            for (; si + 1 < ob.segments.size(); ++si) {
                acc_len += ob.segments[si].length;
                if (os.progress < acc_len) break;
            }
            os.speed = ob.segments.empty() ? ob.speed : ob.segments[si].speed;
            break;
        }
        case ActionType::Autopilot: {
            double desired = speed_limit_at(os.pose.x, os.pose.y);
            // 8 m headway against ego and the other objects
            bool blocked = false;
            double ch = std::cos(os.pose.heading), sh = std::sin(os.pose.heading);
            auto ahead = [&](double px, double py) {
                double lon = (px - os.pose.x) * ch + (py - os.pose.y) * sh;
                double lat = -(px - os.pose.x) * sh + (py - os.pose.y) * ch;
                return lon > 0 && lon <= 8.0 && std::abs(lat) < 2.0;
            };
            if (ahead(ws.ego.pose.x, ws.ego.pose.y)) blocked = true;
            for (size_t j = 0; j < ws.objects.size(); ++j) {
                if (static_cast<int>(j) != index &&
                    ahead(ws.objects[j].pose.x, ws.objects[j].pose.y)) {
                    blocked = true;
                }
            }
            // stop at a red stop line within 10 m ahead
            for (const auto& sl : stop_lines_) {
                double lon = (sl.position.x - os.pose.x) * ch + (sl.position.y - os.pose.y) * sh;
                double lat = -(sl.position.x - os.pose.x) * sh + (sl.position.y - os.pose.y) * ch;
                if (lon > 0 && lon < 10.0 && std::abs(lat) < 3.0 &&
                    light_phase_at(ws.time, sl.signal_id) == LightPhase::Red) {
                    blocked = true;
                }
            }
            if (blocked) desired = 0.0;
            double dv = std::clamp(desired - os.speed, -4.0 * kDt, 4.0 * kDt);
            os.speed = std::max(0.0, os.speed + dv);
            break;
        }
        default:
            break;
    }

    os.progress += os.speed * kDt;
    if (os.progress >= plan.length) {
        os.progress = plan.length;
        os.done = true;
        os.speed = 0.0;
    }
    double heading = 0.0;
    polyline_at(plan.points, plan.cum, os.progress, &os.pose.x, &os.pose.y, &heading);
    if (ob.action == ActionType::Maneuver && !ob.segments.empty()) {
        double acc_len = 0.0;
        size_t si = 0;
        for (; si + 1 < ob.segments.size(); ++si) {
            acc_len += ob.segments[si].length;
            if (os.progress < acc_len) break;
        }
        heading += deg2rad(ob.segments[si].angle_offset_deg);
    }
    os.pose.heading = normalize_angle(heading);
}

void World::step(WorldState& ws, const AgentControl& raw) const {
    AgentControl c;
    c.throttle = std::clamp(raw.throttle, 0.0, 1.0);
    c.brake = std::clamp(raw.brake, 0.0, 1.0);
    c.steer = std::clamp(raw.steer, -1.0, 1.0);

    // objects move against the pre-step world
    WorldState prev = ws;
    for (size_t i = 0; i < ws.objects.size(); ++i) {
        advance_object(static_cast<int>(i), ws.objects[i], prev);
    }

    double mu = friction_at(ws.ego.pose.x, ws.ego.pose.y);
    double a = 4.0 * c.throttle - 8.0 * c.brake * mu;
    double v = ws.ego.speed + a * kDt;
    if (v < 0) {
        v = 0;
        a = ws.ego.speed > 0 ? -ws.ego.speed / kDt : 0.0;
    }
    ws.ego.speed = v;
    ws.ego.accel = a;
    ws.ego.pose.heading = normalize_angle(
        ws.ego.pose.heading + (v / kWheelbase) * std::tan(c.steer * kMaxSteerRad) * kDt);
    ws.ego.pose.x += v * kDt * std::cos(ws.ego.pose.heading);
    ws.ego.pose.y += v * kDt * std::sin(ws.ego.pose.heading);

    ws.tick += 1;
    ws.time = ws.tick * kDt;
    for (size_t i = 0; i < light_ids_.size(); ++i) {
        ws.lights[i] = light_phase_at(ws.time, light_ids_[i]);
    }
}

WorldState instantiate_scenario(const ConcreteScenario& sc, const RoadNetwork& net,
                                const TopologyGraph& g) {
    return World(sc, net, g).initial_state();
}

}  // namespace sf
