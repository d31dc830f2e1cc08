#include <fstream>

#include "scenariofuzz/sim.hpp"

namespace sf {

Json world_state_to_json(const WorldState& ws) {
    Json j;
    j["tick"] = ws.tick;
    j["time"] = ws.time;
    j["ego"] = {ws.ego.pose.x, ws.ego.pose.y, ws.ego.pose.heading, ws.ego.speed,
                ws.ego.accel};
    Json objs = Json::array();
    for (const auto& o : ws.objects) {
        objs.push_back({o.pose.x, o.pose.y, o.pose.heading, o.speed, o.progress, o.done});
    }
    j["objects"] = std::move(objs);
    Json lights = Json::array();
    for (auto p : ws.lights) lights.push_back(static_cast<int>(p));
    j["lights"] = std::move(lights);
    return j;
}

namespace {

WorldState world_state_from_json(const Json& j) {
    WorldState ws;
    ws.tick = j.at("tick");
    ws.time = j.at("time");
    const auto& e = j.at("ego");
    ws.ego.pose = {e.at(0), e.at(1), e.at(2)};
    ws.ego.speed = e.at(3);
    ws.ego.accel = e.at(4);
    for (const auto& o : j.at("objects")) {
        ObjectState os;
        os.pose = {o.at(0), o.at(1), o.at(2)};
        os.speed = o.at(3);
        os.progress = o.at(4);
        os.done = o.at(5);
        ws.objects.push_back(os);
    }
    for (const auto& p : j.at("lights")) {
        ws.lights.push_back(static_cast<LightPhase>(p.get<int>()));
    }
    return ws;
}

}  // namespace

Json frame_to_json(const TraceFrame& f) {
    Json j = world_state_to_json(f.state);
    j["control"] = {f.control.throttle, f.control.brake, f.control.steer};
    return j;
}

TraceFrame frame_from_json(const Json& j) {
    TraceFrame f;
    f.state = world_state_from_json(j);
    const auto& c = j.at("control");
    f.control = {c.at(0), c.at(1), c.at(2)};
    return f;
}

Json trace_events_to_json(const Trace& t) {
    Json j;
    j["schema"] = "scenariofuzz-trace-events/1";
    j["rng_seed"] = t.rng_seed;
    j["scenario_hash"] = t.scenario_hash;
    Json events = Json::array();
    for (const auto& e : t.events) {
        events.push_back({{"kind", e.kind}, {"tick", e.tick}, {"detail", e.detail}});
    }
    j["events"] = std::move(events);
    return j;
}

void write_trace_files(const Trace& t, const std::string& frames_path,
                       const std::string& events_path) {
    std::ofstream out(frames_path);
    if (!out) throw Error("cannot write trace: " + frames_path);
    for (const auto& f : t.frames) out << frame_to_json(f).dump() << "\n";
    std::ofstream ev(events_path);
    ev << trace_events_to_json(t).dump(1) << "\n";
}

void write_trace(const Trace& t, const std::string& path) {
    write_trace_files(t, path, path + ".events.json");
}

Trace read_trace_files(const std::string& frames_path, const std::string& events_path) {
    std::ifstream in(frames_path);
    if (!in) throw Error("cannot read trace: " + frames_path);
    Trace t;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        t.frames.push_back(frame_from_json(Json::parse(line)));
    }
    std::ifstream ev(events_path);
    if (ev) {
        Json j = Json::parse(ev);
        t.rng_seed = j.at("rng_seed");
        t.scenario_hash = j.at("scenario_hash");
        for (const auto& e : j.at("events")) {
            t.events.push_back({e.at("kind"), e.at("tick"), e.at("detail")});
        }
    }
    return t;
}

Trace read_trace(const std::string& path) {
    return read_trace_files(path, path + ".events.json");
}

bool traces_identical(const Trace& a, const Trace& b) {
    if (a.frames.size() != b.frames.size()) return false;
    for (size_t i = 0; i < a.frames.size(); ++i) {
        if (frame_to_json(a.frames[i]).dump() != frame_to_json(b.frames[i]).dump()) {
            return false;
        }
    }
    return trace_events_to_json(a).dump() == trace_events_to_json(b).dump();
}

}  // namespace sf
