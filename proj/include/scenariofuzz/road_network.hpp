#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scenariofuzz/common.hpp"

namespace sf {

// Plan-view geometry segment. Arcs use signed curvature (positive = left).
struct GeometrySegment {
    enum class Kind { Line, Arc };
    Kind kind = Kind::Line;
    double s = 0.0;        // start offset along the reference line
    double x = 0.0;        // inertial start position
    double y = 0.0;
    double heading = 0.0;  // rad
    double length = 0.0;
    double curvature = 0.0;  // 1/m, arcs only
};

struct Lane {
    int id = 0;  // OPENDRIVE convention: negative right of reference, positive left
    double width = 3.5;
    bool lane_change_allowed = false;  // broken road mark
    std::optional<int> predecessor;    // lane id in the linked road
    std::optional<int> successor;
};

struct LaneSection {
    double s0 = 0.0;
    std::vector<Lane> lanes;
};

struct RoadLink {
    enum class Kind { None, Road, Junction };
    enum class Contact { Start, End };
    Kind kind = Kind::None;
    int id = -1;
    Contact contact = Contact::Start;
};

struct Road {
    int id = 0;
    std::string name;
    double length = 0.0;
    double speed_limit = 13.89;  // m/s (50 km/h) unless the map says otherwise
    int junction = -1;           // id of the enclosing junction, -1 for normal roads
    std::vector<GeometrySegment> geometry;
    std::vector<LaneSection> sections;
    RoadLink predecessor;
    RoadLink successor;

    // Position/heading of the lane center at (s, lane). Lane 0 means the
    // reference line itself.
    Vec3 position_at(double s, int lane_id = 0) const;
    double heading_at(double s) const;
    double lane_offset(double s, int lane_id) const;
    const LaneSection& section_at(double s) const;
    const Lane* find_lane(double s, int lane_id) const;
};

struct JunctionConnection {
    int id = 0;
    int incoming_road = -1;
    int connecting_road = -1;
    RoadLink::Contact contact = RoadLink::Contact::Start;
    std::vector<std::pair<int, int>> lane_links;  // (from lane on incoming, to lane on connecting)
};

struct Junction {
    int id = 0;
    std::string name;
    std::vector<JunctionConnection> connections;
};

struct Signal {
    int id = 0;
    int road_id = -1;
    std::string kind;  // trafficLight, speedLimit, stop, yield
    double s = 0.0;
    double t = 0.0;
    double value = 0.0;  // speedLimit value in m/s
    Vec3 position;       // resolved inertial position
};

struct RoadNetwork {
    std::string name;
    std::vector<Road> roads;
    std::vector<Junction> junctions;
    std::vector<Signal> signals;
    int warning_count = 0;  // unknown elements skipped during parsing

    const Road* find_road(int id) const;
    const Junction* find_junction(int id) const;
};

struct MalformedXml : Error {
    using Error::Error;
};
struct MissingGeometry : Error {
    using Error::Error;
};
struct DanglingLink : Error {
    using Error::Error;
};

// Parse the OPENDRIVE subset (line/arc plan views, constant lane widths,
// links, junctions, trafficLight/speedLimit/stop/yield signals).
RoadNetwork parse_opendrive(const std::string& xml_text);
RoadNetwork load_opendrive_file(const std::string& path);

Json road_network_to_json(const RoadNetwork& net);
RoadNetwork road_network_from_json(const Json& j);

}  // namespace sf
