#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ralu/pipeline.hpp"

namespace ralu {

/// Everything one CLI invocation needs besides the subcommand.
struct AppConfig {
  std::optional<std::string> preset;
  RunConfig run;
  double target_sigma = 0.5;  // Gaussian backend spread
  std::string target_mean;    // LAT1 path of the HIGH mean field; empty for the synthetic field
  std::size_t samples = 100000;
  std::string out = "out";

  bool operator==(const AppConfig&) const = default;
};

struct Preset {
  std::string name;
  std::vector<StageConfig> stages;
  double h_ori = 3.0;
  double ratio = 0.3;
};

const std::vector<Preset>& presets();
/// Throws ConfigError for an unknown name.
const Preset& find_preset(const std::string& name);

/// Default config with the preset's stages, shift and ratio applied.
AppConfig config_from_preset(const std::string& name);

/// Parses a config document. A "preset" key seeds the defaults and the other
/// keys override it. Unknown keys and out-of-range values throw ConfigError.
AppConfig parse_config(const nlohmann::json& doc);
AppConfig load_config(const std::string& path);

nlohmann::json to_json(const AppConfig& config);

}  // namespace ralu
