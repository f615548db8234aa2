#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "saliq/checkpoint.hpp"
#include "saliq/quant.hpp"
#include "test_util.hpp"

using namespace saliq;
namespace fs = std::filesystem;

namespace {

Model random_model(uint64_t seed, const std::string& arch = default_arch(8), int res = 32) {
  Rng rng(seed);
  Model m(arch, 3, res, 6.0f);
  m.init_params(rng);
  return m;
}

bool same_forward(const Model& a, const Model& b, uint64_t seed) {
  Rng rng(seed);
  Tensor x = testutil::random_tensor({2, 3, a.resolution(), a.resolution()}, rng, 0.0, 1.0);
  const bool qa = a.quant_spec().has_value();
  const bool qb = b.quant_spec().has_value();
  if (qa != qb) return false;
  Tensor ya = a.forward(x, qa);
  Tensor yb = b.forward(x, qb);
  return ya.numel() == yb.numel() &&
         std::memcmp(ya.data(), yb.data(), sizeof(float) * static_cast<size_t>(ya.numel())) == 0;
}

}  // namespace

TEST_CASE("checkpoint: float round-trip reproduces the forward bit-exactly") {
  testutil::TempDir tmp("ckpt");
  Model m = random_model(301);
  m.layers()[1].alpha = 1.2345678f;  // non-default alpha must survive

  CheckpointMeta meta;
  meta.class_names = {"a", "b", "c", "d", "e", "f", "g", "h"};
  meta.extra.emplace_back("config_mode", "float_baseline");
  save_checkpoint(m, tmp.str("m.sqck"), false, &meta);

  LoadedCheckpoint loaded = load_checkpoint(tmp.str("m.sqck"));
  CHECK_FALSE(loaded.packed);
  CHECK(loaded.class_names.size() == 8);
  CHECK(loaded.header.at("config_mode") == "float_baseline");
  CHECK(loaded.model.layers()[1].alpha == m.layers()[1].alpha);
  CHECK(same_forward(m, loaded.model, 99));
}

TEST_CASE("checkpoint: packed round-trip of a PTQ model is bit-exact") {
  testutil::TempDir tmp("ckptq");
  for (int bits : {2, 4, 8}) {
    Model q = quantize_weights_ptq(random_model(311 + bits), bits);
    save_checkpoint(q, tmp.str("q.sqck"), true);
    LoadedCheckpoint loaded = load_checkpoint(tmp.str("q.sqck"));
    CHECK(loaded.packed);
    REQUIRE(loaded.model.quant_spec().has_value());
    CHECK(loaded.model.quant_spec()->bits == bits);
    const auto pa = q.parameters();
    const auto pb = loaded.model.parameters();
    for (size_t i = 0; i < pa.size(); ++i) {
      CHECK(std::memcmp(pa[i]->data(), pb[i]->data(), sizeof(float) * static_cast<size_t>(pa[i]->numel())) == 0);
    }
    CHECK(same_forward(q, loaded.model, 100 + bits));
  }
}

TEST_CASE("checkpoint: packed sizes beat the float baseline") {
  testutil::TempDir tmp("sizes");
  Model m = random_model(321, default_arch(8), 64);
  save_checkpoint(m, tmp.str("f.sqck"), false);
  save_checkpoint(quantize_weights_ptq(m, 8), tmp.str("q8.sqck"), true);
  save_checkpoint(quantize_weights_ptq(m, 4), tmp.str("q4.sqck"), true);

  const double f = static_cast<double>(fs::file_size(tmp.str("f.sqck")));
  CHECK(static_cast<double>(fs::file_size(tmp.str("q8.sqck"))) / f <= 0.30);
  CHECK(static_cast<double>(fs::file_size(tmp.str("q4.sqck"))) / f <= 0.17);
}

TEST_CASE("checkpoint: corrupt magic and version carry offsets") {
  testutil::TempDir tmp("corrupt");
  Model m = random_model(331, "flatten|dense:8", 4);
  save_checkpoint(m, tmp.str("m.sqck"), false);

  auto bytes = testutil::read_file_bytes(tmp.str("m.sqck"));
  bytes[0] = 'X';
  std::ofstream(tmp.str("bad_magic.sqck"), std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_WITH_AS(load_checkpoint(tmp.str("bad_magic.sqck")), doctest::Contains("magic"), std::runtime_error);

  bytes[0] = 'S';
  bytes[4] = 9;  // version
  std::ofstream(tmp.str("bad_version.sqck"), std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_WITH_AS(load_checkpoint(tmp.str("bad_version.sqck")), doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("checkpoint: truncated file fails cleanly") {
  testutil::TempDir tmp("trunc");
  Model m = random_model(341, "flatten|dense:8", 4);
  save_checkpoint(m, tmp.str("m.sqck"), false);
  auto bytes = testutil::read_file_bytes(tmp.str("m.sqck"));
  REQUIRE(bytes.size() > 40);
  bytes.resize(bytes.size() - 17);
  std::ofstream(tmp.str("t.sqck"), std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_WITH_AS(load_checkpoint(tmp.str("t.sqck")), doctest::Contains("offset"), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(tmp.str("nonexistent.sqck")), std::runtime_error);
}

TEST_CASE("checkpoint: packed storage without quant spec is rejected") {
  testutil::TempDir tmp("noquant");
  Model m = random_model(351, "flatten|dense:8", 4);
  CHECK_THROWS_AS(save_checkpoint(m, tmp.str("x.sqck"), true), std::invalid_argument);
}
