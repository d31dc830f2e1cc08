#include <algorithm>
#include <cmath>

#include "scenariofuzz/sim.hpp"

namespace sf {

DetectorBank::DetectorBank(const World& world, const SimLimits& limits)
    : world_(&world), limits_(limits) {
    prev_stop_lon_.assign(world.stop_lines().size(), -1e9);
    // seed the stop-line progress from the ego's spawn position so a spawn
    // past the line never counts as a crossing
    auto ws = world.initial_state();
    for (size_t i = 0; i < world.stop_lines().size(); ++i) {
        const auto& sl = world.stop_lines()[i];
        double ch = std::cos(sl.heading), sh = std::sin(sl.heading);
        prev_stop_lon_[i] =
            (ws.ego.pose.x - sl.position.x) * ch + (ws.ego.pose.y - sl.position.y) * sh;
    }
}

std::vector<Misbehavior> DetectorBank::observe(const TraceFrame& f,
                                               std::vector<TraceEvent>& events) {
    std::vector<Misbehavior> out;
    const WorldState& ws = f.state;
    Obb ego = world_->ego_box(ws.ego);

    // Crash: exact SAT overlap against every object box
    for (size_t i = 0; i < ws.objects.size(); ++i) {
        if (obb_overlap(ego, world_->object_box(static_cast<int>(i), ws.objects[i]))) {
            Json d{{"entity", static_cast<int>(i)}};
            events.push_back({"collision", ws.tick, d});
            out.push_back({"Crash", ws.tick, d});
        }
    }

    // RedLight: stop-line crossing while the governing light shows Red
    for (size_t i = 0; i < world_->stop_lines().size(); ++i) {
        const auto& sl = world_->stop_lines()[i];
        double ch = std::cos(sl.heading), sh = std::sin(sl.heading);
        double lon = (ws.ego.pose.x - sl.position.x) * ch + (ws.ego.pose.y - sl.position.y) * sh;
        double lat = -(ws.ego.pose.x - sl.position.x) * sh + (ws.ego.pose.y - sl.position.y) * ch;
        if (prev_stop_lon_[i] <= 0 && lon > 0 && std::abs(lat) <= 2.0) {
            LightPhase phase = light_phase_at(ws.time, sl.signal_id);
            Json d{{"signal", sl.signal_id}, {"phase", to_string(phase)}};
            events.push_back({"light_crossing", ws.tick, d});
            if (phase == LightPhase::Red) out.push_back({"RedLight", ws.tick, d});
        }
        prev_stop_lon_[i] = lon;
    }

    // Speeding: > 1.05 * limit sustained for >= 1 s
    double limit = world_->speed_limit_at(ws.ego.pose.x, ws.ego.pose.y);
    if (ws.ego.speed > 1.05 * limit) {
        if (!speeding_event_open_) {
            speeding_event_open_ = true;
            events.push_back({"speed_exceedance", ws.tick,
                              Json{{"speed", ws.ego.speed}, {"limit", limit}}});
        }
        ++speeding_run_;
        if (!speeding_fired_ && speeding_run_ * kDt >= 1.0) {
            speeding_fired_ = true;
            out.push_back({"Speeding", ws.tick,
                           Json{{"speed", ws.ego.speed}, {"limit", limit}}});
        }
    } else {
        speeding_run_ = 0;
        speeding_event_open_ = false;
    }

    // LaneInvasion: ego center leaves the mission lane corridor
    double off = world_->mission_offset(ws.ego.pose.x, ws.ego.pose.y);
    if (off > world_->mission_lane_half_width()) {
        if (!lane_fired_) {
            lane_fired_ = true;
            Json d{{"offset", off}, {"half_width", world_->mission_lane_half_width()}};
            events.push_back({"lane_crossing", ws.tick, d});
            out.push_back({"LaneInvasion", ws.tick, d});
        }
    } else {
        lane_fired_ = false;
    }

    // Stuck: < 0.1 m/s continuously for stuck_timeout
    if (ws.ego.speed < 0.1) {
        ++stuck_run_;
        if (stuck_run_ * kDt >= limits_.stuck_timeout) {
            out.push_back({"Stuck", ws.tick, Json{{"seconds", stuck_run_ * kDt}}});
            stuck_run_ = 0;
        }
    } else {
        stuck_run_ = 0;
    }
    return out;
}

std::vector<Misbehavior> detect_misbehavior(const World& world, const Trace& trace,
                                            const SimLimits& limits) {
    DetectorBank bank(world, limits);
    std::vector<Misbehavior> out;
    std::vector<TraceEvent> events;
    for (const auto& f : trace.frames) {
        if (f.state.tick == 0) continue;  // spawn frame is the baseline
        auto fired = bank.observe(f, events);
        out.insert(out.end(), fired.begin(), fired.end());
        if (!fired.empty()) break;  // simulation halts at the first misbehavior
    }
    return out;
}

double driving_score(const World& world, const Trace& trace) {
    if (trace.frames.empty()) throw EmptyTrace("driving_score: empty trace");

    int hard_accel = 0, hard_brake = 0, reversals = 0;
    bool in_accel = false, in_brake = false;
    int steer_sign = 0;
    double min_clear = 1e300;

    for (const auto& f : trace.frames) {
        double a = f.state.ego.accel;
        if (a > 3.0) {
            if (!in_accel) ++hard_accel;
            in_accel = true;
        } else {
            in_accel = false;
        }
        if (a < -3.0) {
            if (!in_brake) ++hard_brake;
            in_brake = true;
        } else {
            in_brake = false;
        }
        if (std::abs(f.control.steer) > 0.1) {
            int s = f.control.steer > 0 ? 1 : -1;
            if (steer_sign != 0 && s != steer_sign) ++reversals;
            steer_sign = s;
        }
        Obb ego = world.ego_box(f.state.ego);
        for (size_t i = 0; i < f.state.objects.size(); ++i) {
            min_clear = std::min(
                min_clear, obb_distance(ego, world.object_box(static_cast<int>(i),
                                                              f.state.objects[i])));
        }
    }

    double clearance_term =
        min_clear > 1e200 ? 0.0 : 50.0 * std::max(0.0, 1.0 - min_clear / 5.0);
    double penalty =
        5.0 * hard_accel + 5.0 * hard_brake + 2.0 * reversals + clearance_term;
    return 100.0 - std::min(100.0, penalty);
}

}  // namespace sf
