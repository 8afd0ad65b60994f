#include "ralu/config.hpp"

#include <fstream>
#include <set>

#include "ralu/errors.hpp"

namespace ralu {

using nlohmann::json;

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"flux4x", {{5, 0.3}, {6, 0.45}, {7, 1.0}}, flux_base_shift(4096), 0.3},
      {"flux7x", {{2, 0.2}, {3, 0.3}, {5, 1.0}}, flux_base_shift(4096), 0.3},
      {"sd3-2x", {{5, 0.2}, {6, 0.3}, {9, 1.0}}, 3.0, 0.3},
      {"sd3-3x", {{3, 0.25}, {3, 0.3}, {6, 1.0}}, 3.0, 0.3},
  };
  return table;
}

const Preset& find_preset(const std::string& name) {
  for (const Preset& p : presets()) {
    if (p.name == name) return p;
  }
  std::string known;
  for (const Preset& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
  throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

AppConfig config_from_preset(const std::string& name) {
  const Preset& p = find_preset(name);
  AppConfig cfg;
  cfg.preset = p.name;
  cfg.run.stages = p.stages;
  cfg.run.h_ori = p.h_ori;
  cfg.run.ratio = p.ratio;
  return cfg;
}

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

double number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
  return v.get<double>();
}

std::size_t count(const json& v, const std::string& key, std::size_t min = 0) {
  if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
    throw ConfigError("'" + key + "' must be an integer >= " + std::to_string(min));
  }
  return v.get<std::size_t>();
}

void in_range(double v, double lo, double hi, const std::string& key) {
  if (!(v >= lo && v <= hi)) {
    throw ConfigError("'" + key + "' = " + std::to_string(v) + " is outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  }
}

}  // namespace

AppConfig parse_config(const json& doc) {
  static const std::set<std::string> top = {"preset",   "base_height", "base_width", "channels",     "stages",
                                            "ratio",    "h_ori",       "c",          "seed",         "decoder",
                                            "footprint", "canny",      "caching",    "skip_injection",
                                            "baseline_steps", "target_sigma", "target_mean", "samples", "out"};
  reject_unknown(doc, top, "config");

  AppConfig cfg;
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) throw ConfigError("'preset' must be a string");
    cfg = config_from_preset(doc["preset"].get<std::string>());
  }
  RunConfig& run = cfg.run;
  if (doc.contains("base_height")) run.base_height = count(doc["base_height"], "base_height", 1);
  if (doc.contains("base_width")) run.base_width = count(doc["base_width"], "base_width", 1);
  if (doc.contains("channels")) run.channels = count(doc["channels"], "channels", 1);
  if (doc.contains("stages")) {
    const json& st = doc["stages"];
    if (!st.is_array() || st.empty()) throw ConfigError("'stages' must be a nonempty array");
    run.stages.clear();
    for (const json& s : st) {
      reject_unknown(s, {"steps", "end"}, "stage");
      if (!s.contains("steps") || !s.contains("end")) throw ConfigError("each stage needs 'steps' and 'end'");
      run.stages.push_back({static_cast<int>(count(s["steps"], "steps", 1)), number(s["end"], "end")});
    }
  }
  if (doc.contains("ratio")) {
    run.ratio = number(doc["ratio"], "ratio");
    in_range(run.ratio, 0.0, 1.0, "ratio");
  }
  if (doc.contains("h_ori")) {
    run.h_ori = number(doc["h_ori"], "h_ori");
    if (!(run.h_ori > 0.0)) throw ConfigError("'h_ori' must be positive");
  }
  if (doc.contains("c") && !doc["c"].is_null()) {
    run.c = number(doc["c"], "c");
    if (!(*run.c > 0.0 && *run.c <= 0.25)) throw ConfigError("'c' must lie in (0, 0.25]");
  }
  if (doc.contains("seed")) {
    if (!doc["seed"].is_number_unsigned() && !(doc["seed"].is_number_integer() && doc["seed"].get<long long>() >= 0)) {
      throw ConfigError("'seed' must be a nonnegative integer");
    }
    run.seed = doc["seed"].get<std::uint64_t>();
  }
  if (doc.contains("decoder")) {
    const json& d = doc["decoder"];
    if (d == "norm") {
      run.decoder = DecoderKind::Norm;
    } else if (d == "mean") {
      run.decoder = DecoderKind::Mean;
    } else {
      throw ConfigError("'decoder' must be \"norm\" or \"mean\"");
    }
  }
  if (doc.contains("footprint")) run.footprint = count(doc["footprint"], "footprint", 1);
  if (doc.contains("canny")) {
    const json& c = doc["canny"];
    reject_unknown(c, {"sigma", "low", "high"}, "canny");
    if (c.contains("sigma")) run.canny.blur_sigma = number(c["sigma"], "canny.sigma");
    if (c.contains("low")) run.canny.low_threshold = number(c["low"], "canny.low");
    if (c.contains("high")) run.canny.high_threshold = number(c["high"], "canny.high");
    if (!(run.canny.blur_sigma >= 0.0)) throw ConfigError("'canny.sigma' must be nonnegative");
    if (!(run.canny.low_threshold > 0.0 && run.canny.low_threshold < run.canny.high_threshold)) {
      throw ConfigError("canny thresholds must satisfy 0 < low < high");
    }
  }
  if (doc.contains("caching")) {
    const json& c = doc["caching"];
    if (c.is_null()) {
      run.caching.reset();
    } else {
      reject_unknown(c, {"ratio", "stages"}, "caching");
      CachePolicy policy;
      if (c.contains("ratio")) policy.ratio = number(c["ratio"], "caching.ratio");
      if (!(policy.ratio >= 0.0 && policy.ratio < 1.0)) throw ConfigError("'caching.ratio' must lie in [0, 1)");
      if (c.contains("stages")) {
        if (!c["stages"].is_array()) throw ConfigError("'caching.stages' must be an array");
        policy.stages.clear();
        for (const json& s : c["stages"]) policy.stages.insert(static_cast<int>(count(s, "caching.stages", 2)));
      }
      run.caching = policy;
    }
  }
  if (doc.contains("skip_injection")) {
    if (!doc["skip_injection"].is_boolean()) throw ConfigError("'skip_injection' must be a boolean");
    run.skip_injection = doc["skip_injection"].get<bool>();
  }
  if (doc.contains("baseline_steps")) run.baseline_steps = static_cast<int>(count(doc["baseline_steps"], "baseline_steps", 1));
  if (doc.contains("target_sigma")) {
    cfg.target_sigma = number(doc["target_sigma"], "target_sigma");
    if (!(cfg.target_sigma > 0.0)) throw ConfigError("'target_sigma' must be positive");
  }
  if (doc.contains("target_mean")) {
    if (!doc["target_mean"].is_string()) throw ConfigError("'target_mean' must be a string path");
    cfg.target_mean = doc["target_mean"].get<std::string>();
  }
  if (doc.contains("samples")) cfg.samples = count(doc["samples"], "samples", 1);
  if (doc.contains("out")) {
    if (!doc["out"].is_string()) throw ConfigError("'out' must be a string");
    cfg.out = doc["out"].get<std::string>();
  }
  validate(run);
  return cfg;
}

AppConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const AppConfig& cfg) {
  const RunConfig& run = cfg.run;
  json doc;
  if (cfg.preset) doc["preset"] = *cfg.preset;
  doc["base_height"] = run.base_height;
  doc["base_width"] = run.base_width;
  doc["channels"] = run.channels;
  doc["stages"] = json::array();
  for (const StageConfig& s : run.stages) doc["stages"].push_back({{"steps", s.steps}, {"end", s.end}});
  doc["ratio"] = run.ratio;
  doc["h_ori"] = run.h_ori;
  doc["c"] = run.c ? json(*run.c) : json(nullptr);
  doc["seed"] = run.seed;
  doc["decoder"] = run.decoder == DecoderKind::Mean ? "mean" : "norm";
  doc["footprint"] = run.footprint;
  doc["canny"] = {{"sigma", run.canny.blur_sigma}, {"low", run.canny.low_threshold}, {"high", run.canny.high_threshold}};
  if (run.caching) {
    doc["caching"] = {{"ratio", run.caching->ratio}, {"stages", run.caching->stages}};
  } else {
    doc["caching"] = nullptr;
  }
  doc["skip_injection"] = run.skip_injection;
  doc["baseline_steps"] = run.baseline_steps;
  doc["target_sigma"] = cfg.target_sigma;
  if (!cfg.target_mean.empty()) doc["target_mean"] = cfg.target_mean;
  doc["samples"] = cfg.samples;
  doc["out"] = cfg.out;
  return doc;
}

}  // namespace ralu
