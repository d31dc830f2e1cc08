#include "scenariofuzz/road_network.hpp"

#include <algorithm>

namespace sf {

const LaneSection& Road::section_at(double s) const {
    if (sections.empty()) throw Error("road " + std::to_string(id) + " has no lane sections");
    const LaneSection* best = &sections.front();
    for (const auto& sec : sections) {
        if (sec.s0 <= s + 1e-9) best = &sec;
    }
    return *best;
}

const Lane* Road::find_lane(double s, int lane_id) const {
    const auto& sec = section_at(s);
    for (const auto& l : sec.lanes) {
        if (l.id == lane_id) return &l;
    }
    return nullptr;
}

double Road::lane_offset(double s, int lane_id) const {
    if (lane_id == 0) return 0.0;
    const auto& sec = section_at(s);
    // Offset of the lane center from the reference line. Lanes are stacked
    // outward from the reference in order of |id|.
    double offset = 0.0;
    int step = lane_id > 0 ? 1 : -1;
    for (int i = step; i != lane_id + step; i += step) {
        double w = 3.5;
        for (const auto& l : sec.lanes) {
            if (l.id == i) w = l.width;
        }
        if (i == lane_id) {
            offset += step * w / 2.0;
        } else {
            offset += step * w;
        }
    }
    return offset;
}

static const GeometrySegment& segment_at(const Road& road, double s) {
    if (road.geometry.empty()) {
        throw MissingGeometry("road " + std::to_string(road.id) + " has no plan view");
    }
    const GeometrySegment* best = &road.geometry.front();
    for (const auto& g : road.geometry) {
        if (g.s <= s + 1e-9) best = &g;
    }
    return *best;
}

double Road::heading_at(double s) const {
    const auto& g = segment_at(*this, s);
    double ds = s - g.s;
    if (g.kind == GeometrySegment::Kind::Arc) {
        return normalize_angle(g.heading + g.curvature * ds);
    }
    return normalize_angle(g.heading);
}

Vec3 Road::position_at(double s, int lane_id) const {
    const auto& g = segment_at(*this, s);
    double ds = std::max(0.0, s - g.s);
    double x, y, h;
    if (g.kind == GeometrySegment::Kind::Arc && std::abs(g.curvature) > 1e-12) {
        double r = 1.0 / g.curvature;
        double dh = g.curvature * ds;
        // Circle center is at distance r to the left of the start heading.
        double cx = g.x - r * std::sin(g.heading);
        double cy = g.y + r * std::cos(g.heading);
        h = g.heading + dh;
        x = cx + r * std::sin(h);
        y = cy - r * std::cos(h);
    } else {
        x = g.x + ds * std::cos(g.heading);
        y = g.y + ds * std::sin(g.heading);
        h = g.heading;
    }
    // Lateral offset: positive t is to the left of the reference direction.
    double t = lane_offset(s, lane_id);
    return {x - t * std::sin(h), y + t * std::cos(h), 0.0};
}

const Road* RoadNetwork::find_road(int id) const {
    for (const auto& r : roads) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

const Junction* RoadNetwork::find_junction(int id) const {
    for (const auto& j : junctions) {
        if (j.id == id) return &j;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// JSON round trip. Key order is fixed so corpus artifacts diff cleanly.

static Json link_to_json(const RoadLink& l) {
    Json j;
    switch (l.kind) {
        case RoadLink::Kind::None: j["kind"] = "none"; break;
        case RoadLink::Kind::Road: j["kind"] = "road"; break;
        case RoadLink::Kind::Junction: j["kind"] = "junction"; break;
    }
    j["id"] = l.id;
    j["contact"] = l.contact == RoadLink::Contact::Start ? "start" : "end";
    return j;
}

static RoadLink link_from_json(const Json& j) {
    RoadLink l;
    std::string kind = j.at("kind");
    l.kind = kind == "road"       ? RoadLink::Kind::Road
             : kind == "junction" ? RoadLink::Kind::Junction
                                  : RoadLink::Kind::None;
    l.id = j.at("id");
    l.contact = j.at("contact") == "end" ? RoadLink::Contact::End : RoadLink::Contact::Start;
    return l;
}

Json road_network_to_json(const RoadNetwork& net) {
    Json j;
    j["schema"] = "scenariofuzz-road-network/1";
    j["name"] = net.name;
    j["warning_count"] = net.warning_count;
    j["roads"] = Json::array();
    for (const auto& r : net.roads) {
        Json jr;
        jr["id"] = r.id;
        jr["name"] = r.name;
        jr["length"] = r.length;
        jr["speed_limit"] = r.speed_limit;
        jr["junction"] = r.junction;
        jr["geometry"] = Json::array();
        for (const auto& g : r.geometry) {
            Json jg;
            jg["kind"] = g.kind == GeometrySegment::Kind::Line ? "line" : "arc";
            jg["s"] = g.s;
            jg["x"] = g.x;
            jg["y"] = g.y;
            jg["heading"] = g.heading;
            jg["length"] = g.length;
            jg["curvature"] = g.curvature;
            jr["geometry"].push_back(jg);
        }
        jr["sections"] = Json::array();
        for (const auto& sec : r.sections) {
            Json js;
            js["s0"] = sec.s0;
            js["lanes"] = Json::array();
            for (const auto& l : sec.lanes) {
                Json jl;
                jl["id"] = l.id;
                jl["width"] = l.width;
                jl["lane_change_allowed"] = l.lane_change_allowed;
                if (l.predecessor) jl["predecessor"] = *l.predecessor;
                if (l.successor) jl["successor"] = *l.successor;
                js["lanes"].push_back(jl);
            }
            jr["sections"].push_back(js);
        }
        jr["predecessor"] = link_to_json(r.predecessor);
        jr["successor"] = link_to_json(r.successor);
        j["roads"].push_back(jr);
    }
    j["junctions"] = Json::array();
    for (const auto& jn : net.junctions) {
        Json jj;
        jj["id"] = jn.id;
        jj["name"] = jn.name;
        jj["connections"] = Json::array();
        for (const auto& c : jn.connections) {
            Json jc;
            jc["id"] = c.id;
            jc["incoming_road"] = c.incoming_road;
            jc["connecting_road"] = c.connecting_road;
            jc["contact"] = c.contact == RoadLink::Contact::Start ? "start" : "end";
            jc["lane_links"] = Json::array();
            for (auto [from, to] : c.lane_links) {
                jc["lane_links"].push_back(Json{{"from", from}, {"to", to}});
            }
            jj["connections"].push_back(jc);
        }
        j["junctions"].push_back(jj);
    }
    j["signals"] = Json::array();
    for (const auto& s : net.signals) {
        Json js;
        js["id"] = s.id;
        js["road_id"] = s.road_id;
        js["kind"] = s.kind;
        js["s"] = s.s;
        js["t"] = s.t;
        js["value"] = s.value;
        js["position"] = Json{{"x", s.position.x}, {"y", s.position.y}, {"z", s.position.z}};
        j["signals"].push_back(js);
    }
    return j;
}

RoadNetwork road_network_from_json(const Json& j) {
    RoadNetwork net;
    net.name = j.at("name");
    net.warning_count = j.value("warning_count", 0);
    for (const auto& jr : j.at("roads")) {
        Road r;
        r.id = jr.at("id");
        r.name = jr.value("name", "");
        r.length = jr.at("length");
        r.speed_limit = jr.at("speed_limit");
        r.junction = jr.at("junction");
        for (const auto& jg : jr.at("geometry")) {
            GeometrySegment g;
            g.kind = jg.at("kind") == "arc" ? GeometrySegment::Kind::Arc
                                            : GeometrySegment::Kind::Line;
            g.s = jg.at("s");
            g.x = jg.at("x");
            g.y = jg.at("y");
            g.heading = jg.at("heading");
            g.length = jg.at("length");
            g.curvature = jg.at("curvature");
            r.geometry.push_back(g);
        }
        for (const auto& js : jr.at("sections")) {
            LaneSection sec;
            sec.s0 = js.at("s0");
            for (const auto& jl : js.at("lanes")) {
                Lane l;
                l.id = jl.at("id");
                l.width = jl.at("width");
                l.lane_change_allowed = jl.value("lane_change_allowed", false);
                if (jl.contains("predecessor")) l.predecessor = jl.at("predecessor").get<int>();
                if (jl.contains("successor")) l.successor = jl.at("successor").get<int>();
                sec.lanes.push_back(l);
            }
            r.sections.push_back(sec);
        }
        r.predecessor = link_from_json(jr.at("predecessor"));
        r.successor = link_from_json(jr.at("successor"));
        net.roads.push_back(r);
    }
    for (const auto& jj : j.at("junctions")) {
        Junction jn;
        jn.id = jj.at("id");
        jn.name = jj.value("name", "");
        for (const auto& jc : jj.at("connections")) {
            JunctionConnection c;
            c.id = jc.at("id");
            c.incoming_road = jc.at("incoming_road");
            c.connecting_road = jc.at("connecting_road");
            c.contact = jc.at("contact") == "end" ? RoadLink::Contact::End
                                                  : RoadLink::Contact::Start;
            for (const auto& jl : jc.at("lane_links")) {
                c.lane_links.emplace_back(jl.at("from").get<int>(), jl.at("to").get<int>());
            }
            jn.connections.push_back(c);
        }
        net.junctions.push_back(jn);
    }
    for (const auto& js : j.at("signals")) {
        Signal s;
        s.id = js.at("id");
        s.road_id = js.at("road_id");
        s.kind = js.at("kind");
        s.s = js.at("s");
        s.t = js.at("t");
        s.value = js.at("value");
        s.position = {js.at("position").at("x"), js.at("position").at("y"),
                      js.at("position").at("z")};
        net.signals.push_back(s);
    }
    return net;
}

}  // namespace sf
