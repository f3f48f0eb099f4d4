#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "aoseg/io.hpp"
#include "aoseg/unet.hpp"

using namespace aoseg;

namespace {

std::filesystem::path tmp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f);
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("image sequence round-trips bitwise") {
  Rng rng(1);
  ImageSequence seq;
  seq.frames = 3;
  seq.height = 6;
  seq.width = 5;
  seq.spacing_y = 1.6f;
  seq.spacing_x = 1.6f;
  seq.data.resize(90);
  for (auto& v : seq.data) v = static_cast<float>(rng.uniform(0, 1));

  const auto p1 = tmp_file("roundtrip.aosq"), p2 = tmp_file("roundtrip2.aosq");
  save_sequence(seq, p1);
  ImageSequence back = load_sequence(p1);
  CHECK(back.frames == 3);
  CHECK(back.spacing_y == 1.6f);
  CHECK(back.data == seq.data);
  save_sequence(back, p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("label sequence round-trips bitwise and validates classes") {
  Rng rng(2);
  LabelSequence lab;
  lab.frames = 4;
  lab.height = 5;
  lab.width = 5;
  lab.num_classes = 3;
  lab.provenance = {1, 0, 0, 1};
  lab.data.resize(100);
  for (auto& v : lab.data) v = static_cast<std::uint8_t>(rng.uniform_int(3));

  const auto p1 = tmp_file("roundtrip.aolb"), p2 = tmp_file("roundtrip2.aolb");
  save_labels(lab, p1);
  LabelSequence back = load_labels(p1);
  CHECK(back.provenance == lab.provenance);
  CHECK(back.data == lab.data);
  save_labels(back, p2);
  CHECK(slurp(p1) == slurp(p2));

  // corrupt one class byte past the header
  std::string bytes = slurp(p1);
  bytes[bytes.size() - 1] = 7;
  std::ofstream(p1, std::ios::binary) << bytes;
  CHECK_THROWS_WITH_AS(load_labels(p1), doctest::Contains("out of range"), Error);
}

TEST_CASE("displacement field round-trips bitwise") {
  Rng rng(3);
  DisplacementField f(7, 4);
  for (auto& v : f.d) v = static_cast<float>(rng.uniform(-3, 3));
  const auto p1 = tmp_file("roundtrip.aodf"), p2 = tmp_file("roundtrip2.aodf");
  save_field(f, p1);
  DisplacementField back = load_field(p1);
  CHECK(back.height == 7);
  CHECK(back.width == 4);
  CHECK(back.d == f.d);
  save_field(back, p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("bad magic is rejected") {
  const auto p = tmp_file("badmagic.aosq");
  std::ofstream(p, std::ios::binary) << "NOPE. . . . . . . . . . .";
  CHECK_THROWS_WITH_AS(load_sequence(p), doctest::Contains("magic"), Error);
}

TEST_CASE("truncated files are rejected") {
  Rng rng(4);
  ImageSequence seq;
  seq.frames = 2;
  seq.height = 4;
  seq.width = 4;
  seq.data.resize(32, 0.5f);
  const auto p = tmp_file("trunc.aosq");
  save_sequence(seq, p);
  std::string bytes = slurp(p);
  std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() - 10);
  CHECK_THROWS_WITH_AS(load_sequence(p), doctest::Contains("truncated"), Error);
}

TEST_CASE("checkpoints round-trip bitwise with manifest-ordered payloads") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.feature_channels = 4;
  UNetParams<float> params = build_unet<float>(cfg, 17);

  Checkpoint ckpt{"unet", {{"note", "demo"}}, params.named_params()};
  const auto p1 = tmp_file("roundtrip.aock"), p2 = tmp_file("roundtrip2.aock");
  save_checkpoint(ckpt, p1);
  Checkpoint back = load_checkpoint(p1);
  CHECK(back.kind == "unet");
  CHECK(back.config.at("note") == "demo");
  REQUIRE(back.tensors.size() == ckpt.tensors.size());
  for (std::size_t i = 0; i < back.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == ckpt.tensors[i].name);
    CHECK(back.tensors[i].tensor.shape() == ckpt.tensors[i].tensor.shape());
    CHECK((back.tensors[i].tensor.values() == ckpt.tensors[i].tensor.values()).all());
  }
  save_checkpoint(back, p2);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("restore rejects shape and name mismatches") {
  UNetConfig small;
  small.depth = 2;
  small.base_channels = 4;
  small.feature_channels = 4;
  UNetParams<float> params = build_unet<float>(small, 18);
  Checkpoint ckpt{"unet", {}, params.named_params()};
  const auto p = tmp_file("mismatch.aock");
  save_checkpoint(ckpt, p);
  Checkpoint loaded = load_checkpoint(p);

  UNetConfig bigger = small;
  bigger.base_channels = 8;
  bigger.feature_channels = 8;
  UNetParams<float> other = build_unet<float>(bigger, 18);
  CHECK_THROWS_WITH_AS(restore_named_tensors(loaded, other.named_params()),
                       doctest::Contains("shape"), Error);

  UNetConfig deeper = small;
  deeper.depth = 3;
  UNetParams<float> third = build_unet<float>(deeper, 18);
  CHECK_THROWS_AS(restore_named_tensors(loaded, third.named_params()), Error);

  // happy path: values land in the target tensors
  UNetParams<float> same = build_unet<float>(small, 99);
  restore_named_tensors(loaded, same.named_params());
  CHECK((same.enc[0][0].kernel.values() == params.enc[0][0].kernel.values()).all());
}

TEST_CASE("checkpoint with trailing bytes is rejected") {
  UNetConfig cfg;
  cfg.depth = 2;
  cfg.base_channels = 4;
  cfg.feature_channels = 4;
  UNetParams<float> params = build_unet<float>(cfg, 19);
  const auto p = tmp_file("trailing.aock");
  save_checkpoint({"unet", {}, params.named_params()}, p);
  std::ofstream(p, std::ios::binary | std::ios::app) << "XX";
  CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("beyond"), Error);
}
