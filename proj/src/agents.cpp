#include "scenariofuzz/agents.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sf {

AgentObservation build_observation(const World& world, const WorldState& ws,
                                   const PerceptionModel& pm) {
    AgentObservation obs;
    obs.ego = ws.ego.pose;
    obs.speed = ws.ego.speed;
    obs.speed_limit = world.speed_limit_at(ws.ego.pose.x, ws.ego.pose.y);

    // remaining mission: from the nearest mission point onward
    const auto& pts = world.mission_points();
    size_t nearest = 0;
    double best = 1e300;
    for (size_t i = 0; i < pts.size(); ++i) {
        double d = std::hypot(pts[i].x - ws.ego.pose.x, pts[i].y - ws.ego.pose.y);
        if (d < best) {
            best = d;
            nearest = i;
        }
    }
    // skip points already behind the ego
    double ch = std::cos(ws.ego.pose.heading), sh = std::sin(ws.ego.pose.heading);
    while (nearest + 1 < pts.size()) {
        double lon = (pts[nearest].x - ws.ego.pose.x) * ch + (pts[nearest].y - ws.ego.pose.y) * sh;
        if (lon > -0.5) break;
        ++nearest;
    }
    for (size_t i = nearest; i < pts.size(); ++i) obs.path_remaining.push_back(pts[i]);

    double range = pm.range;
    if (pm.weather_degraded) {
        const auto& w = world.scenario().weather;
        range *= (1.0 - 0.6 * w.fog / 100.0) * (1.0 - 0.3 * w.rain / 100.0);
    }
    for (size_t i = 0; i < ws.objects.size(); ++i) {
        const auto& spec = world.scenario().objects[i];
        const auto& info = appearance(spec.appearance_id);
        double d = std::hypot(ws.objects[i].pose.x - ws.ego.pose.x,
                              ws.objects[i].pose.y - ws.ego.pose.y);
        if (d > range) continue;
        if (info.height < pm.height_cutoff) continue;
        if (pm.red_blindspot && spec.color && (*spec.color)[0] > 150 &&
            (*spec.color)[1] < 80 && (*spec.color)[2] < 80) {
            continue;
        }
        DetectedObject det;
        det.index = static_cast<int>(i);
        det.position = {ws.objects[i].pose.x, ws.objects[i].pose.y, 0};
        det.heading = ws.objects[i].pose.heading;
        det.speed = ws.objects[i].speed;
        det.kind = spec.kind;
        det.appearance_id = spec.appearance_id;
        det.color = spec.color;
        det.height = info.height;
        obs.objects.push_back(det);
    }

    // governing light: nearest stop line ahead in the ego's half plane
    for (size_t i = 0; i < world.stop_lines().size(); ++i) {
        const auto& sl = world.stop_lines()[i];
        double lon = (sl.position.x - ws.ego.pose.x) * ch + (sl.position.y - ws.ego.pose.y) * sh;
        double lat = -(sl.position.x - ws.ego.pose.x) * sh + (sl.position.y - ws.ego.pose.y) * ch;
        if (lon > -2.0 && lon < obs.light_distance && std::abs(lat) < 3.0) {
            obs.light_distance = lon;
            obs.light = ws.lights.empty() ? light_phase_at(ws.time, sl.signal_id)
                                          : ws.lights[i];
        }
    }
    if (obs.light && obs.light_distance < 14.0) obs.near_junction = true;
    const auto& wp = nearest_waypoint(world.graph(), {ws.ego.pose.x, ws.ego.pose.y, 0});
    const Road* road = world.network().find_road(wp.road_id);
    if (road != nullptr && road->junction >= 0) obs.near_junction = true;
    return obs;
}

namespace {

class PurePursuitAgent : public Agent {
public:
    PurePursuitAgent(std::string name, std::string spec, PerceptionModel pm)
        : name_(std::move(name)), spec_(std::move(spec)), pm_(pm) {}

    std::string name() const override { return name_; }
    std::string spec() const override { return spec_; }
    const PerceptionModel& perception() const override { return pm_; }

    AgentControl act(const AgentObservation& obs) override {
        AgentControl c;
        if (obs.path_remaining.empty()) {
            c.brake = 1.0;
            return c;
        }

        // pure pursuit toward a speed-scaled lookahead point
        double ld = std::clamp(1.5 * obs.speed, 4.0, 12.0);
        Vec3 target = obs.path_remaining.back();
        double acc = 0.0;
        for (size_t i = 0; i + 1 < obs.path_remaining.size(); ++i) {
            acc += distance2d(obs.path_remaining[i], obs.path_remaining[i + 1]);
            if (acc >= ld) {
                target = obs.path_remaining[i + 1];
                break;
            }
        }
        double alpha = normalize_angle(
            std::atan2(target.y - obs.ego.y, target.x - obs.ego.x) - obs.ego.heading);
        double dist = std::max(1.0, distance2d(target, {obs.ego.x, obs.ego.y, 0}));
        double steer_angle = std::atan2(2.0 * kWheelbase * std::sin(alpha), dist);
        c.steer = std::clamp(steer_angle / kMaxSteerRad, -1.0, 1.0);

        double target_speed = 0.9 * obs.speed_limit;

        // slow down approaching the mission end
        double remaining = 0.0;
        for (size_t i = 0; i + 1 < obs.path_remaining.size(); ++i) {
            remaining += distance2d(obs.path_remaining[i], obs.path_remaining[i + 1]);
        }
        remaining += distance2d(obs.path_remaining[0], {obs.ego.x, obs.ego.y, 0});
        if (remaining < 15.0) {
            target_speed = std::min(target_speed, std::max(0.0, (remaining - 2.0) * 0.6));
        }

        // stop for anything inside the forward corridor
        double ch = std::cos(obs.ego.heading), sh = std::sin(obs.ego.heading);
        double stop_dist = obs.speed * obs.speed / (2.0 * 6.0) + 7.0;
        bool hard_stop = false;
        for (const auto& det : obs.objects) {
            double lon = (det.position.x - obs.ego.x) * ch + (det.position.y - obs.ego.y) * sh;
            double lat = -(det.position.x - obs.ego.x) * sh + (det.position.y - obs.ego.y) * ch;
            if (lon > 0 && lon < stop_dist && std::abs(lat) < 2.0) {
                target_speed = 0.0;
                if (lon < 6.0) hard_stop = true;
            }
            // lateral yield: anything moving near the junction area
            if (pm_.lateral_yield && obs.near_junction && det.speed > 0.5 &&
                std::hypot(lon, lat) < 14.0) {
                target_speed = 0.0;
            }
        }

        // red or yellow light: stop short of the line
        if (obs.light && (*obs.light == LightPhase::Red || *obs.light == LightPhase::Yellow)) {
            double margin = obs.speed * obs.speed / (2.0 * 5.0) + 5.0;
            if (obs.light_distance > -1.0 && obs.light_distance < margin) {
                target_speed = 0.0;
                if (obs.light_distance < 6.0) hard_stop = true;
            }
        }

        if (obs.speed < target_speed) {
            c.throttle = std::clamp(0.4 * (target_speed - obs.speed), 0.0, 1.0);
        } else {
            c.brake = hard_stop ? 1.0 : std::clamp(0.5 * (obs.speed - target_speed), 0.0, 1.0);
            if (target_speed == 0.0 && obs.speed > 0.0) c.brake = std::max(c.brake, 0.6);
        }
        return c;
    }

private:
    std::string name_;
    std::string spec_;
    PerceptionModel pm_;
};

}  // namespace

std::unique_ptr<Agent> make_agent(const std::string& spec) {
    std::string kind = spec;
    std::string opts;
    auto colon = spec.find(':');
    if (colon != std::string::npos) {
        kind = spec.substr(0, colon);
        opts = spec.substr(colon + 1);
    }
    PerceptionModel pm;
    if (kind == "basic") {
        return std::make_unique<PurePursuitAgent>("basic", spec, pm);
    }
    if (kind != "weak") throw Error("unknown agent: " + spec);

    pm.height_cutoff = 1.0;
    pm.red_blindspot = true;
    pm.weather_degraded = true;
    pm.lateral_yield = false;
    std::stringstream ss(opts);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos) continue;
        std::string key = item.substr(0, eq);
        std::string val = item.substr(eq + 1);
        if (key == "height") {
            pm.height_cutoff = std::stod(val);
        } else if (key == "red") {
            pm.red_blindspot = val != "0";
        } else if (key == "weather") {
            pm.weather_degraded = val != "0";
        } else if (key == "yield") {
            pm.lateral_yield = val != "0";
        } else if (key == "range") {
            pm.range = std::stod(val);
        } else {
            throw Error("unknown weak-agent option: " + key);
        }
    }
    return std::make_unique<PurePursuitAgent>("weak", spec, pm);
}

std::pair<Trace, Outcome> run_scenario(const World& world, Agent& agent,
                                       const SimLimits& limits, std::uint64_t rng_seed) {
    Trace trace;
    trace.rng_seed = rng_seed;
    trace.scenario_hash = scenario_hash(world.scenario());
    Outcome outcome;

    WorldState ws = world.initial_state();
    trace.frames.push_back({ws, {}});

    DetectorBank bank(world, limits);
    const Vec3& goal = world.mission_points().back();
    int max_ticks = static_cast<int>(std::llround(limits.horizon / kDt));

    while (ws.tick < max_ticks) {
        AgentControl control;
        try {
            control = agent.act(build_observation(world, ws, agent.perception()));
        } catch (const std::exception& e) {
            outcome.kind = OutcomeKind::AgentFault;
            outcome.fault_message = e.what();
            return {trace, outcome};
        }
        world.step(ws, control);
        TraceFrame frame{ws, control};

        auto fired = bank.observe(frame, trace.events);
        trace.frames.push_back(std::move(frame));
        if (!fired.empty()) {
            outcome.kind = OutcomeKind::Misbehavior;
            outcome.misbehaviors = std::move(fired);
            return {trace, outcome};  // halt at the first misbehavior tick
        }
        if (std::hypot(ws.ego.pose.x - goal.x, ws.ego.pose.y - goal.y) < 3.0) {
            outcome.kind = OutcomeKind::Completed;
            return {trace, outcome};
        }
    }
    outcome.kind = OutcomeKind::HorizonExpired;
    return {trace, outcome};
}

}  // namespace sf
