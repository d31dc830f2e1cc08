#pragma once

#include <map>

#include "scenariofuzz/fuzz.hpp"

namespace sf {

struct ConfigError : Error {
    using Error::Error;
};

// Flat `key = value` lines with optional [section] headers (flattened to
// "section.key"); '#' and ';' start comments. Unknown keys are rejected by
// the consumers, not the parser.
std::map<std::string, std::string> parse_key_values(const std::string& text);

// Campaign config file mirroring FuzzConfig; [sem] keys feed the SEM config.
FuzzConfig parse_fuzz_config(const std::string& text);
FuzzConfig load_fuzz_config(const std::string& path);

}  // namespace sf
