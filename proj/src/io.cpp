#include "ralu/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ralu/errors.hpp"

namespace ralu {

using nlohmann::json;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xffffffffu) throw ShapeError(std::string("LAT1: ") + what + " does not fit in 32 bits");
  return static_cast<std::uint32_t>(v);
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <class T>
T field(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) throw ConfigError(std::string("missing field '") + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed field '") + key + "': " + e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_lat1(const LatentGrid& grid) {
  std::vector<std::uint8_t> out = {'L', 'A', 'T', '1'};
  out.reserve(20 + 4 * grid.size());
  put_u32(out, checked_u32(grid.height(), "height"));
  put_u32(out, checked_u32(grid.width(), "width"));
  put_u32(out, checked_u32(grid.channels(), "channels"));
  put_u32(out, grid.level() == Level::High ? 1u : 0u);
  for (double v : grid.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

LatentGrid decode_lat1(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 20 || !std::equal(bytes.begin(), bytes.begin() + 4, "LAT1")) {
    throw IoError("not a LAT1 file");
  }
  const std::size_t h = get_u32(bytes, 4);
  const std::size_t w = get_u32(bytes, 8);
  const std::size_t c = get_u32(bytes, 12);
  const std::uint32_t level = get_u32(bytes, 16);
  if (level > 1) throw IoError("LAT1: unknown level " + std::to_string(level));
  const std::size_t n = h * w * c;
  if (bytes.size() != 20 + 4 * n) {
    throw IoError("LAT1: expected " + std::to_string(20 + 4 * n) + " bytes, found " + std::to_string(bytes.size()));
  }
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<float>(get_u32(bytes, 20 + 4 * i));
  return LatentGrid(h, w, c, level ? Level::High : Level::Low, std::move(values));
}

void write_lat1(const std::string& path, const LatentGrid& grid) {
  const std::vector<std::uint8_t> bytes = encode_lat1(grid);
  write_text(path, std::string(bytes.begin(), bytes.end()));
}

LatentGrid read_lat1(const std::string& path) { return decode_lat1(read_bytes(path)); }

std::string encode_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) {
    const double c = std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w = 0, h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (!in || magic != "P5" || maxval != 255) throw IoError("not an 8-bit P5 PGM");
  in.get();
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() != offset + w * h) throw IoError("PGM: pixel data has the wrong length");
  GrayImage img(h, w);
  for (std::size_t i = 0; i < w * h; ++i) {
    img.pixels[i] = static_cast<unsigned char>(bytes[offset + i]) / 255.0;
  }
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) { write_text(path, encode_pgm(image)); }

GrayImage edge_image(const EdgeMap& edges) {
  GrayImage img(edges.height, edges.width);
  for (std::size_t i = 0; i < edges.edges.size(); ++i) img.pixels[i] = edges.edges[i] ? 1.0 : 0.0;
  return img;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string density_csv(const Density& density) {
  std::string out = "t,density\n";
  for (std::size_t i = 0; i < density.size(); ++i) {
    out += format_double(density.t(i)) + "," + format_double(density.values[i]) + "\n";
  }
  return out;
}

std::string cost_csv(const CostBreakdown& breakdown) {
  std::string out = "stage,steps,tokens,cost,share\n";
  for (const CostRow& r : breakdown.rows) {
    out += r.stage + "," + std::to_string(r.steps) + "," + std::to_string(r.tokens) + "," + format_double(r.cost) +
           "," + format_double(r.share) + "\n";
  }
  out += "total,,," + format_double(breakdown.total) + ",1\n";
  return out;
}

json schedule_to_json(const SchedulePlan& plan, const json& config) {
  json doc;
  doc["stages"] = json::array();
  for (const StagePlan& s : plan.stages) {
    doc["stages"].push_back({{"N", s.steps}, {"s", s.start}, {"e", s.end}, {"h", s.shift}, {"timesteps", s.timesteps}});
  }
  doc["c"] = plan.c;
  doc["coefficients"] = json::array();
  for (const InjectionCoefficients& k : plan.coefficients) doc["coefficients"].push_back({{"a", k.a}, {"b", k.b}});
  doc["jsd"] = plan.jsd;
  doc["h_ori"] = plan.h_ori;
  doc["config"] = config;
  return doc;
}

SchedulePlan schedule_from_json(const json& doc) {
  SchedulePlan plan;
  const json stages = field<json>(doc, "stages");
  if (!stages.is_array() || stages.empty()) throw ConfigError("schedule needs a nonempty 'stages' array");
  for (const json& s : stages) {
    StagePlan st;
    st.steps = field<int>(s, "N");
    st.start = field<double>(s, "s");
    st.end = field<double>(s, "e");
    st.shift = field<double>(s, "h");
    st.timesteps = field<std::vector<double>>(s, "timesteps");
    if (st.timesteps.size() != static_cast<std::size_t>(st.steps) + 1) {
      throw ConsistencyError("stage timesteps do not match N");
    }
    plan.stages.push_back(std::move(st));
  }
  plan.c = field<double>(doc, "c");
  const json coefs = field<json>(doc, "coefficients");
  if (!coefs.is_array() || coefs.size() + 1 != plan.stages.size()) {
    throw ConsistencyError("schedule needs one coefficient pair per stage transition");
  }
  for (std::size_t k = 0; k < coefs.size(); ++k) {
    plan.coefficients.push_back({plan.stages[k + 1].start, field<double>(coefs[k], "a"), field<double>(coefs[k], "b")});
  }
  plan.jsd = field<double>(doc, "jsd");
  plan.h_ori = field<double>(doc, "h_ori");
  return plan;
}

json report_to_json(const RunReport& r) {
  json doc;
  doc["mode"] = r.mode;
  doc["seed"] = r.seed;
  doc["init_seed"] = r.init_seed;
  doc["base_height"] = r.base_height;
  doc["base_width"] = r.base_width;
  doc["channels"] = r.channels;
  doc["ratio"] = r.ratio;
  doc["c"] = r.c;
  doc["h_ori"] = r.h_ori;
  doc["jsd"] = r.jsd;
  doc["injection_skipped"] = r.injection_skipped;
  doc["coefficients"] = json::array();
  for (const InjectionCoefficients& k : r.coefficients) {
    doc["coefficients"].push_back({{"s", k.s_next}, {"a", k.a}, {"b", k.b}});
  }
  doc["stages"] = json::array();
  for (const StageReport& s : r.stages) {
    doc["stages"].push_back({{"steps", s.steps},
                             {"start", s.start},
                             {"end", s.end},
                             {"shift", s.shift},
                             {"timesteps", s.timesteps},
                             {"tokens", s.tokens},
                             {"high_tokens", s.high_tokens},
                             {"computed_per_step", s.computed_per_step},
                             {"cached", s.cached},
                             {"note", s.note},
                             {"noise_seed", s.noise_seed}});
  }
  doc["selected"] = r.selected;
  doc["selection_tokens"] = r.selection_tokens;
  doc["token_steps"] = r.token_steps;
  return doc;
}

RunReport report_from_json(const json& doc) {
  RunReport r;
  r.mode = field<std::string>(doc, "mode");
  r.seed = field<std::uint64_t>(doc, "seed");
  r.init_seed = field<std::uint64_t>(doc, "init_seed");
  r.base_height = field<std::size_t>(doc, "base_height");
  r.base_width = field<std::size_t>(doc, "base_width");
  r.channels = field<std::size_t>(doc, "channels");
  r.ratio = field<double>(doc, "ratio");
  r.c = field<double>(doc, "c");
  r.h_ori = field<double>(doc, "h_ori");
  r.jsd = field<double>(doc, "jsd");
  r.injection_skipped = field<bool>(doc, "injection_skipped");
  for (const json& k : field<json>(doc, "coefficients")) {
    r.coefficients.push_back({field<double>(k, "s"), field<double>(k, "a"), field<double>(k, "b")});
  }
  for (const json& s : field<json>(doc, "stages")) {
    StageReport st;
    st.steps = field<int>(s, "steps");
    st.start = field<double>(s, "start");
    st.end = field<double>(s, "end");
    st.shift = field<double>(s, "shift");
    st.timesteps = field<std::vector<double>>(s, "timesteps");
    st.tokens = field<std::size_t>(s, "tokens");
    st.high_tokens = field<std::size_t>(s, "high_tokens");
    st.computed_per_step = field<std::vector<std::size_t>>(s, "computed_per_step");
    st.cached = field<bool>(s, "cached");
    st.note = field<std::string>(s, "note");
    st.noise_seed = field<std::uint64_t>(s, "noise_seed");
    r.stages.push_back(std::move(st));
  }
  r.selected = field<std::vector<std::size_t>>(doc, "selected");
  r.selection_tokens = field<std::size_t>(doc, "selection_tokens");
  r.token_steps = field<double>(doc, "token_steps");
  return r;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed for " + path);
}

std::string read_text(const std::string& path) {
  const std::vector<std::uint8_t> bytes = read_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec || !std::filesystem::is_directory(path)) throw IoError("cannot create directory " + path);
}

}  // namespace ralu
