#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ralu/config.hpp"
#include "ralu/errors.hpp"
#include "ralu/io.hpp"

using namespace ralu;
using nlohmann::json;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ralu_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("LAT1 layout and round trip") {
  LatentGrid g(2, 3, 2, Level::High);
  for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] = static_cast<float>(0.1 * static_cast<double>(i) - 0.4);
  const auto bytes = encode_lat1(g);
  REQUIRE(bytes.size() == 20 + 4 * 12);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LAT1");
  CHECK(bytes[4] == 2);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 2);
  CHECK(bytes[16] == 1);
  // 1.0f little endian is 00 00 80 3f
  LatentGrid one(1, 1, 1, Level::Low, {1.0});
  const auto ob = encode_lat1(one);
  CHECK(std::vector<std::uint8_t>(ob.begin() + 20, ob.end()) == std::vector<std::uint8_t>{0x00, 0x00, 0x80, 0x3f});

  CHECK(decode_lat1(bytes) == g);
  const std::string path = temp_path("g.lat1");
  write_lat1(path, g);
  CHECK(read_lat1(path) == g);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_lat1(bad), IoError);
  auto cut = bytes;
  cut.pop_back();
  CHECK_THROWS_AS(decode_lat1(cut), IoError);
  CHECK_THROWS_AS(read_lat1(temp_path("missing.lat1")), IoError);
}

TEST_CASE("PGM round trip") {
  GrayImage img(3, 4);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i * 20) / 255.0;
  const std::string enc = encode_pgm(img);
  CHECK(enc.rfind("P5\n4 3\n255\n", 0) == 0);
  const GrayImage back = decode_pgm(enc);
  REQUIRE(back.pixels.size() == img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(back.pixels[i] == doctest::Approx(img.pixels[i]));
  GrayImage out_of_range(1, 2);
  out_of_range.pixels = {-1.0, 3.0};
  CHECK(decode_pgm(encode_pgm(out_of_range)).pixels == std::vector<double>{0.0, 1.0});
}

TEST_CASE("decimal formatting round-trips doubles") {
  std::mt19937_64 gen(4);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(gen) * std::pow(10.0, static_cast<double>(i % 40) - 20.0);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
}

TEST_CASE("density CSV rows") {
  Density d{{1.0, 2.0, 0.5}};
  CHECK(density_csv(d) == "t,density\n0,1\n0.5,2\n1,0.5\n");
}

TEST_CASE("schedule document round trip") {
  const std::vector<StageConfig> cfg = {{5, 0.3}, {6, 0.45}, {7, 1.0}};
  const SchedulePlan plan = make_plan(cfg, std::vector<double>{5.02, 2.59, 2.23}, 0.0251, 3.158);
  const json doc = schedule_to_json(plan, to_json(config_from_preset("flux4x")));
  CHECK(doc["stages"][1]["N"] == 6);
  CHECK(doc.contains("config"));
  CHECK(schedule_from_json(json::parse(doc.dump())) == plan);

  json broken = doc;
  broken["stages"][0].erase("h");
  CHECK_THROWS_AS(schedule_from_json(broken), ConfigError);
}

TEST_CASE("run report round trip") {
  RunReport r;
  r.mode = "ralu";
  r.seed = 0xfedcba9876543210ull;
  r.init_seed = 7;
  r.base_height = 4;
  r.base_width = 5;
  r.channels = 2;
  r.ratio = 0.3;
  r.c = 0.0251;
  r.h_ori = 3.1;
  r.jsd = 1.5e-4;
  r.coefficients = {injection_coefficients(0.3, 0.0251)};
  StageReport s;
  s.steps = 2;
  s.timesteps = {0.0, 0.1, 0.3};
  s.computed_per_step = {20, 20};
  s.tokens = 20;
  s.note = "x";
  s.noise_seed = 99;
  r.stages = {s, s};
  r.selected = {3, 1};
  r.selection_tokens = 20;
  r.token_steps = 80;
  CHECK(report_from_json(json::parse(report_to_json(r).dump())) == r);
}

TEST_CASE("cost CSV") {
  CostBreakdown b;
  b.rows = {{"stage1", 5, 1024, 5120, 0.5}, {"decoder", 1, 0, 5120, 0.5}};
  b.total = 10240;
  CHECK(cost_csv(b) == "stage,steps,tokens,cost,share\nstage1,5,1024,5120,0.5\ndecoder,1,0,5120,0.5\ntotal,,,10240,1\n");
}

TEST_CASE("presets") {
  CHECK(presets().size() == 4);
  CHECK(find_preset("flux4x").stages == std::vector<StageConfig>{{5, 0.3}, {6, 0.45}, {7, 1.0}});
  CHECK(find_preset("flux7x").stages == std::vector<StageConfig>{{2, 0.2}, {3, 0.3}, {5, 1.0}});
  CHECK(find_preset("sd3-2x").stages == std::vector<StageConfig>{{5, 0.2}, {6, 0.3}, {9, 1.0}});
  CHECK(find_preset("sd3-3x").stages == std::vector<StageConfig>{{3, 0.25}, {3, 0.3}, {6, 1.0}});
  CHECK_THROWS_AS(find_preset("flux9x"), ConfigError);
}

TEST_CASE("config parse and round trip") {
  const json doc = json::parse(R"({
    "preset": "sd3-3x", "seed": 12, "ratio": 0.4, "c": 0.03,
    "caching": {"ratio": 0.4, "stages": [3]}, "canny": {"sigma": 1.0},
    "decoder": "mean", "out": "x"
  })");
  const AppConfig cfg = parse_config(doc);
  CHECK(cfg.run.stages == find_preset("sd3-3x").stages);
  CHECK(cfg.run.seed == 12);
  CHECK(cfg.run.ratio == 0.4);
  CHECK(*cfg.run.c == 0.03);
  CHECK(cfg.run.caching->stages == std::set<int>{3});
  CHECK(cfg.run.canny.blur_sigma == 1.0);
  CHECK(cfg.run.decoder == DecoderKind::Mean);
  CHECK(parse_config(json::parse(to_json(cfg).dump())) == cfg);
  CHECK(parse_config(to_json(AppConfig{})) == AppConfig{});
}

TEST_CASE("config rejects unknown keys and bad ranges") {
  CHECK_THROWS_AS(parse_config(json::parse(R"({"ratioo": 0.3})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"canny": {"sigma": 1, "hi": 2}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"ratio": 1.3})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"c": 0.3})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"c": 0})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"seed": -1})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"stages": [{"steps": 2, "end": 0.5}]})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"stages": [{"steps": 0, "end": 1.0}]})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"caching": {"ratio": 1.0}})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"decoder": "vae"})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse(R"({"channels": 0})")), ConfigError);
  CHECK_THROWS_AS(parse_config(json::parse("[1, 2]")), ConfigError);
}
