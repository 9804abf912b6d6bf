#pragma once

// YAML experiment configuration. Every mapping is checked against its schema;
// unknown keys and bad values raise ConfigError with the offending line.

#include <filesystem>
#include <string>

#include "rsmc/experiment.hpp"

namespace rsmc {

inline constexpr int kConfigSchemaVersion = 1;

const char* library_version();

ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace rsmc
