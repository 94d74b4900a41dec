#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>

#include "doctest.h"
#include "neat/checkpoint.hpp"
#include "neat/errors.hpp"

using namespace neat;

namespace {

Checkpoint sample() {
  std::mt19937_64 rng(10);
  Checkpoint ck;
  ck.seed = 42;
  ck.note = "unit";
  NeatAdapter n;
  n.theta_in = gaussian(4, 2, 1.0, rng);
  n.intermediates.push_back(gaussian(2, 2, 1.0, rng));
  n.theta_out = gaussian(2, 4, 1.0, rng);
  n.activation = ad::Activation::sine;
  n.scaling = 0.25;
  n.residual = true;
  ck.model.layers.push_back({FrozenLinear{gaussian(3, 4, 1.0, rng)}, n, 0});
  ck.model.layers.push_back({FrozenLinear{gaussian(2, 3, 1.0, rng)},
                             LoraAdapter{gaussian(2, 1, 1.0, rng), gaussian(1, 3, 1.0, rng), 2.0, 0.1}, 1});
  ck.model.layers.push_back({FrozenLinear{gaussian(2, 2, 1.0, rng)}, std::nullopt, 2});
  return ck;
}

std::string path_for(const char* name) {
  return (std::filesystem::temp_directory_path() / (std::string("neat_test_") + name + ".ckpt")).string();
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::string& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint round-trips bit for bit") {
  const std::string p = path_for("roundtrip");
  const Checkpoint ck = sample();
  save_checkpoint(ck, p);
  const Checkpoint back = load_checkpoint(p);
  CHECK(back.seed == 42);
  CHECK(back.note == "unit");
  REQUIRE(back.model.layers.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.model.layers[i].base.weight == ck.model.layers[i].base.weight);
    CHECK(back.model.layers[i].adapter.has_value() == ck.model.layers[i].adapter.has_value());
  }
  const auto& n = std::get<NeatAdapter>(*back.model.layers[0].adapter);
  const auto& n0 = std::get<NeatAdapter>(*ck.model.layers[0].adapter);
  CHECK(n.theta_in == n0.theta_in);
  CHECK(n.intermediates == n0.intermediates);
  CHECK(n.theta_out == n0.theta_out);
  CHECK(n.activation == ad::Activation::sine);
  CHECK(n.residual);
  CHECK(std::get<LoraAdapter>(*back.model.layers[1].adapter).dropout_p == 0.1);
  std::remove(p.c_str());
}

TEST_CASE("tampering, truncation and version skew are detected") {
  const std::string p = path_for("tamper");
  save_checkpoint(sample(), p);
  const std::string good = slurp(p);

  std::string flipped = good;
  flipped[good.size() - 20] ^= 0x01;
  spit(p, flipped);
  CHECK_THROWS_AS(load_checkpoint(p), IntegrityError);

  spit(p, good.substr(0, good.size() - 9));
  CHECK_THROWS_AS(load_checkpoint(p), IntegrityError);

  spit(p, good + "x");
  CHECK_THROWS_AS(load_checkpoint(p), IntegrityError);

  std::string bumped = good;
  bumped[8] = static_cast<char>(kCheckpointVersion + 1);
  spit(p, bumped);
  CHECK_THROWS_AS(load_checkpoint(p), VersionError);

  spit(p, "not a checkpoint");
  CHECK_THROWS_AS(load_checkpoint(p), IntegrityError);
  std::remove(p.c_str());
}
