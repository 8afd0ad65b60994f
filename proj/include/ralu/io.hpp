#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "ralu/cost.hpp"
#include "ralu/latent_grid.hpp"
#include "ralu/pipeline.hpp"
#include "ralu/region_select.hpp"
#include "ralu/schedule.hpp"

namespace ralu {

/// LAT1 container: "LAT1", then u32 LE height, width, channels, level
/// (0 LOW, 1 HIGH), then float32 LE values in LatentGrid order.
std::vector<std::uint8_t> encode_lat1(const LatentGrid& grid);
LatentGrid decode_lat1(const std::vector<std::uint8_t>& bytes);
void write_lat1(const std::string& path, const LatentGrid& grid);
LatentGrid read_lat1(const std::string& path);

/// Binary PGM (P5, maxval 255); pixel values are clamped to [0, 1] and rounded.
std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::string& bytes);
void write_pgm(const std::string& path, const GrayImage& image);
GrayImage edge_image(const EdgeMap& edges);

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

/// Two-column CSV "t,density".
std::string density_csv(const Density& density);
std::string cost_csv(const CostBreakdown& breakdown);

nlohmann::json schedule_to_json(const SchedulePlan& plan, const nlohmann::json& config);
/// Parses a schedule document back into a plan. Throws ConfigError on
/// missing or malformed fields.
SchedulePlan schedule_from_json(const nlohmann::json& doc);

nlohmann::json report_to_json(const RunReport& report);
RunReport report_from_json(const nlohmann::json& doc);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);
/// Creates the directory (and parents); throws IoError on failure.
void ensure_directory(const std::string& path);

}  // namespace ralu
