#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "facelab/run_config.hpp"

namespace facelab {

// Sectioned text format:
//
//   # comment
//   [schedule]
//   preset = msceleb18
//   lr = 0.1
//
// Keys are addressed as section.key. Precedence: built-in defaults < file
// < overrides. `schedule.preset` and `head.variant` first reset their
// section to the preset / variant defaults; explicit keys then apply on top
// regardless of their position.

inline constexpr const char* kConfigPathEnv = "FACELAB_CONFIG_PATH";

struct ConfigKeyInfo {
  std::string key;  // section.key
  std::string type;  // int, real, bool, string, int-list, real3
  std::string help;
};

const std::vector<ConfigKeyInfo>& config_keys();

std::size_t levenshtein(const std::string& a, const std::string& b);
// Closest valid dotted key.
std::string nearest_config_key(const std::string& key);

// Overrides are "section.key=value" strings.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file,
                         const std::vector<std::string>& overrides = {});
RunConfig resolve_config_text(const std::string& text, const std::vector<std::string>& overrides = {},
                              const std::string& origin = "<config>");

// Every key with its resolved value; parsing the result reproduces config.
std::string config_to_text(const RunConfig& config);
void write_config_echo(const std::filesystem::path& path, const RunConfig& config);

// A path that exists as given is returned unchanged; a relative path is
// otherwise looked up in each directory of $FACELAB_CONFIG_PATH
// (colon-separated). Throws IoError if nothing matches.
std::filesystem::path find_config_file(const std::filesystem::path& name);

}  // namespace facelab
