#include <string>

#include "doctest.h"
#include "json.hpp"
#include "neat/config.hpp"
#include "neat/errors.hpp"

using namespace neat;
using nlohmann::json;

namespace {

std::string config_error(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("scaling resolves from alpha over r") {
  CHECK(parse_config(json{{"adapter", {{"r", 32}, {"alpha", 32}}}}).adapter.adapter.scaling == 1.0);
  CHECK(parse_config(json{{"adapter", {{"r", 8}}}}).adapter.adapter.scaling == 4.0);
  CHECK(parse_config(json{{"adapter", {{"r", 8}, {"scaling", 0.5}}}}).adapter.adapter.scaling == 0.5);
  CHECK(config_error(json{{"adapter", {{"alpha", 1}, {"scaling", 1}}}}) != "");
}

TEST_CASE("unknown keys are rejected with their path") {
  CHECK(config_error(json{{"adapter", {{"rank", 4}}}}).find("adapter.rank") != std::string::npos);
  CHECK(config_error(json{{"bogus", 1}}).find("bogus") != std::string::npos);
}

TEST_CASE("bad values name the field") {
  CHECK(config_error(json{{"adapter", {{"r", 0}}}}).find("adapter.r") != std::string::npos);
  CHECK(config_error(json{{"adapter", {{"depth", 1}}}}).find("adapter.depth") != std::string::npos);
  CHECK(config_error(json{{"adapter", {{"kind", "lora"}, {"depth", 3}}}}) != "");
  CHECK(config_error(json{{"task", {{"kind", "mystery"}}}}).find("task.kind") != std::string::npos);
  CHECK(config_error(json{{"optimizer", {{"lr", "fast"}}}}).find("optimizer.lr") != std::string::npos);
  CHECK(config_error(json{{"experiment", "train"}}) != "");
}

TEST_CASE("resolved config round-trips") {
  json doc = {{"experiment", "depth_sweep"},
              {"task", {{"kind", "invariant_shift"}, {"d_in", 12}, {"d_out", 5}}},
              {"adapter", {{"r", 3}, {"depth", 4}, {"activation", "sine"}, {"target_layers", {0}}}},
              {"seeds", {3, 1}},
              {"sweep", {{"depths", {2, 3}}}}};
  const ExperimentConfig c = parse_config(doc);
  CHECK(to_json(parse_config(to_json(c))) == to_json(c));
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 1});
  CHECK(c.sweep.depths == std::vector<std::size_t>{2, 3});
}

TEST_CASE("missing config file names the path") {
  try {
    load_config("/nonexistent/neat.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/neat.json") != std::string::npos);
  }
}
