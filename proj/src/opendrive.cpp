#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "scenariofuzz/road_network.hpp"

namespace sf {

namespace pt = boost::property_tree;

namespace {

RoadLink parse_link_element(const pt::ptree& el) {
    RoadLink link;
    std::string type = el.get<std::string>("<xmlattr>.elementType", "");
    if (type == "road") {
        link.kind = RoadLink::Kind::Road;
    } else if (type == "junction") {
        link.kind = RoadLink::Kind::Junction;
    }
    link.id = el.get<int>("<xmlattr>.elementId", -1);
    link.contact = el.get<std::string>("<xmlattr>.contactPoint", "start") == "end"
                       ? RoadLink::Contact::End
                       : RoadLink::Contact::Start;
    return link;
}

void parse_lane(const pt::ptree& el, LaneSection& section, int* warnings) {
    Lane lane;
    lane.id = el.get<int>("<xmlattr>.id");
    if (lane.id == 0) return;  // center lane carries no width
    std::string type = el.get<std::string>("<xmlattr>.type", "driving");
    if (type != "driving") return;
    bool have_width = false;
    for (const auto& [name, child] : el) {
        if (name == "width") {
            lane.width = child.get<double>("<xmlattr>.a");
            if (lane.width <= 0.0) {
                throw MalformedXml("lane width must be positive (lane " +
                                   std::to_string(lane.id) + ")");
            }
            have_width = true;
        } else if (name == "link") {
            if (auto p = child.get_optional<int>("predecessor.<xmlattr>.id")) {
                lane.predecessor = *p;
            }
            if (auto s = child.get_optional<int>("successor.<xmlattr>.id")) {
                lane.successor = *s;
            }
        } else if (name == "roadMark") {
            lane.lane_change_allowed =
                child.get<std::string>("<xmlattr>.type", "solid") == "broken";
        } else if (name != "<xmlattr>") {
            ++*warnings;
        }
    }
    if (!have_width) ++*warnings;
    section.lanes.push_back(lane);
}

void parse_lanes(const pt::ptree& el, Road& road, int* warnings) {
    for (const auto& [name, child] : el) {
        if (name != "laneSection") {
            if (name != "<xmlattr>") ++*warnings;
            continue;
        }
        LaneSection section;
        section.s0 = child.get<double>("<xmlattr>.s", 0.0);
        for (const auto& [side_name, side] : child) {
            if (side_name != "left" && side_name != "right" && side_name != "center") {
                if (side_name != "<xmlattr>") ++*warnings;
                continue;
            }
            for (const auto& [lane_name, lane_el] : side) {
                if (lane_name == "lane") parse_lane(lane_el, section, warnings);
            }
        }
        std::sort(section.lanes.begin(), section.lanes.end(),
                  [](const Lane& a, const Lane& b) { return a.id < b.id; });
        road.sections.push_back(section);
    }
}

Road parse_road(const pt::ptree& el, int* warnings) {
    Road road;
    road.id = el.get<int>("<xmlattr>.id");
    road.name = el.get<std::string>("<xmlattr>.name", "");
    road.length = el.get<double>("<xmlattr>.length");
    if (road.length <= 0.0) {
        throw MalformedXml("road " + std::to_string(road.id) + " length must be positive");
    }
    road.junction = el.get<int>("<xmlattr>.junction", -1);

    for (const auto& [name, child] : el) {
        if (name == "link") {
            if (auto pred = child.get_child_optional("predecessor")) {
                road.predecessor = parse_link_element(*pred);
            }
            if (auto succ = child.get_child_optional("successor")) {
                road.successor = parse_link_element(*succ);
            }
        } else if (name == "planView") {
            for (const auto& [gname, gel] : child) {
                if (gname != "geometry") continue;
                GeometrySegment seg;
                seg.s = gel.get<double>("<xmlattr>.s");
                seg.x = gel.get<double>("<xmlattr>.x");
                seg.y = gel.get<double>("<xmlattr>.y");
                seg.heading = gel.get<double>("<xmlattr>.hdg");
                seg.length = gel.get<double>("<xmlattr>.length");
                if (gel.get_child_optional("arc")) {
                    seg.kind = GeometrySegment::Kind::Arc;
                    seg.curvature = gel.get<double>("arc.<xmlattr>.curvature");
                } else if (gel.get_child_optional("line")) {
                    seg.kind = GeometrySegment::Kind::Line;
                } else {
                    // spirals, polynomials etc. are outside the subset
                    ++*warnings;
                    seg.kind = GeometrySegment::Kind::Line;
                }
                road.geometry.push_back(seg);
            }
        } else if (name == "lanes") {
            parse_lanes(child, road, warnings);
        } else if (name == "type") {
            if (auto speed = child.get_optional<double>("speed.<xmlattr>.max")) {
                std::string unit = child.get<std::string>("speed.<xmlattr>.unit", "m/s");
                double v = *speed;
                if (unit == "km/h") v /= 3.6;
                if (unit == "mph") v *= 0.44704;
                road.speed_limit = v;
            }
        } else if (name != "<xmlattr>" && name != "signals" && name != "elevationProfile") {
            ++*warnings;
        }
    }
    if (road.geometry.empty()) {
        throw MissingGeometry("road " + std::to_string(road.id) + " has no plan view");
    }
    return road;
}

Junction parse_junction(const pt::ptree& el) {
    Junction junction;
    junction.id = el.get<int>("<xmlattr>.id");
    junction.name = el.get<std::string>("<xmlattr>.name", "");
    for (const auto& [name, child] : el) {
        if (name != "connection") continue;
        JunctionConnection c;
        c.id = child.get<int>("<xmlattr>.id");
        c.incoming_road = child.get<int>("<xmlattr>.incomingRoad");
        c.connecting_road = child.get<int>("<xmlattr>.connectingRoad");
        c.contact = child.get<std::string>("<xmlattr>.contactPoint", "start") == "end"
                        ? RoadLink::Contact::End
                        : RoadLink::Contact::Start;
        for (const auto& [lname, lel] : child) {
            if (lname != "laneLink") continue;
            c.lane_links.emplace_back(lel.get<int>("<xmlattr>.from"),
                                      lel.get<int>("<xmlattr>.to"));
        }
        junction.connections.push_back(c);
    }
    return junction;
}

void parse_signals(const pt::ptree& el, int road_id, std::vector<Signal>& out,
                   int* warnings) {
    static const std::set<std::string> known_kinds = {"trafficLight", "speedLimit",
                                                      "stop", "yield"};
    for (const auto& [name, child] : el) {
        if (name != "signal") {
            if (name != "<xmlattr>") ++*warnings;
            continue;
        }
        Signal sig;
        sig.id = child.get<int>("<xmlattr>.id");
        sig.road_id = road_id;
        sig.kind = child.get<std::string>("<xmlattr>.type");
        sig.s = child.get<double>("<xmlattr>.s");
        sig.t = child.get<double>("<xmlattr>.t", 0.0);
        sig.value = child.get<double>("<xmlattr>.value", 0.0);
        if (!known_kinds.count(sig.kind)) {
            ++*warnings;
            continue;
        }
        out.push_back(sig);
    }
}

void validate_links(const RoadNetwork& net) {
    auto check = [&](const RoadLink& link, int road_id, const char* which) {
        if (link.kind == RoadLink::Kind::Road && !net.find_road(link.id)) {
            throw DanglingLink("road " + std::to_string(road_id) + " " + which +
                               " names nonexistent road " + std::to_string(link.id));
        }
        if (link.kind == RoadLink::Kind::Junction && !net.find_junction(link.id)) {
            throw DanglingLink("road " + std::to_string(road_id) + " " + which +
                               " names nonexistent junction " + std::to_string(link.id));
        }
    };
    for (const auto& r : net.roads) {
        check(r.predecessor, r.id, "predecessor");
        check(r.successor, r.id, "successor");
    }
    for (const auto& j : net.junctions) {
        for (const auto& c : j.connections) {
            if (!net.find_road(c.incoming_road) || !net.find_road(c.connecting_road)) {
                throw DanglingLink("junction " + std::to_string(j.id) + " connection " +
                                   std::to_string(c.id) + " names a nonexistent road");
            }
        }
    }
}

}  // namespace

RoadNetwork parse_opendrive(const std::string& xml_text) {
    pt::ptree tree;
    try {
        std::istringstream in(xml_text);
        pt::read_xml(in, tree);
    } catch (const pt::xml_parser_error& e) {
        throw MalformedXml(e.what());
    }
    auto root = tree.get_child_optional("OpenDRIVE");
    if (!root) throw MalformedXml("missing OpenDRIVE root element");

    RoadNetwork net;
    net.name = root->get<std::string>("header.<xmlattr>.name", "");
    int warnings = 0;
    for (const auto& [name, child] : *root) {
        if (name == "road") {
            Road road = parse_road(child, &warnings);
            if (auto signals = child.get_child_optional("signals")) {
                parse_signals(*signals, road.id, net.signals, &warnings);
            }
            net.roads.push_back(std::move(road));
        } else if (name == "junction") {
            net.junctions.push_back(parse_junction(child));
        } else if (name != "header" && name != "<xmlattr>") {
            ++warnings;
        }
    }
    net.warning_count = warnings;
    validate_links(net);

    // Resolve signal positions from (road, s, t).
    for (auto& sig : net.signals) {
        const Road* road = net.find_road(sig.road_id);
        if (!road) throw DanglingLink("signal " + std::to_string(sig.id) + " has no road");
        double h = road->heading_at(sig.s);
        Vec3 p = road->position_at(sig.s, 0);
        sig.position = {p.x - sig.t * std::sin(h), p.y + sig.t * std::cos(h), 0.0};
    }
    return net;
}

RoadNetwork load_opendrive_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open map file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_opendrive(ss.str());
}

}  // namespace sf
