#include "scenariofuzz/config.hpp"

#include <fstream>
#include <sstream>

namespace sf {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": " + v);
    }
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": " + v);
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("bad boolean for " + key + ": " + v);
}

}  // namespace

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto cut = line.find_first_of("#;");
        if (cut != std::string::npos) line = line.substr(0, cut);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("unterminated section at line " + std::to_string(lineno));
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("expected key = value at line " + std::to_string(lineno));
        }
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("empty key at line " + std::to_string(lineno));
        }
        if (!section.empty()) key = section + "." + key;
        out[key] = val;
    }
    return out;
}

FuzzConfig parse_fuzz_config(const std::string& text) {
    auto kv = parse_key_values(text);
    FuzzConfig cfg;
    for (const auto& [key, val] : kv) {
        if (key == "strategy") {
            cfg.strategy = strategy_from_string(val);
        } else if (key == "n_c") {
            cfg.n_c = to_int(key, val);
        } else if (key == "n_m") {
            cfg.n_m = to_int(key, val);
        } else if (key == "n_e") {
            cfg.n_e = to_int(key, val);
        } else if (key == "tr") {
            cfg.tr = to_int(key, val);
        } else if (key == "rng_seed") {
            cfg.rng_seed = static_cast<std::uint64_t>(std::stoull(val));
        } else if (key == "horizon") {
            cfg.limits.horizon = to_double(key, val);
        } else if (key == "stuck_timeout") {
            cfg.limits.stuck_timeout = to_double(key, val);
        } else if (key == "sem_epochs") {
            cfg.sem_epochs = to_int(key, val);
        } else if (key == "load_history") {
            cfg.load_history = to_bool(key, val);
        } else if (key == "map") {
            cfg.filter.map_name = val;
        } else if (key == "road_type") {
            cfg.filter.road_type = road_type_from_string(val);
        } else if (key == "traffic_lights") {
            cfg.filter.has_traffic_lights = to_bool(key, val);
        } else if (key == "max_objects") {
            cfg.mutation.max_objects = to_int(key, val);
        } else if (key == "max_puddles") {
            cfg.mutation.max_puddles = to_int(key, val);
        } else if (key == "mission_direction") {
            cfg.mutation.mission_direction = direction_from_string(val);
        } else if (key == "sem.hidden") {
            cfg.sem.hidden = to_int(key, val);
        } else if (key == "sem.heads") {
            cfg.sem.heads = to_int(key, val);
        } else if (key == "sem.dropout") {
            cfg.sem.dropout = to_double(key, val);
        } else if (key == "sem.lr") {
            cfg.sem.lr = to_double(key, val);
        } else if (key == "sem.head_hidden") {
            cfg.sem.head_hidden = to_int(key, val);
        } else if (key == "sem.type_dim") {
            cfg.sem.type_dim = to_int(key, val);
        } else if (key == "sem.sign_dim") {
            cfg.sem.sign_dim = to_int(key, val);
        } else if (key == "sem.app_dim") {
            cfg.sem.app_dim = to_int(key, val);
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
    cfg.validate();
    return cfg;
}

FuzzConfig load_fuzz_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_fuzz_config(ss.str());
}

}  // namespace sf
