#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "test_util.hpp"

namespace fs = std::filesystem;
using testutil::run_command;

namespace {

const std::string kCli = SALIQ_CLI_PATH;

std::string q(const std::string& s) { return "'" + s + "'"; }

int count_lines(const std::string& path) {
  std::ifstream in(path);
  int n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_CASE("cli: unknown flags and bad values are usage errors") {
  CHECK(run_command(kCli + " train --does-not-exist").exit_code == 2);
  CHECK(run_command(kCli + " quantize missing.sqck --bits 9 --out x.sqck").exit_code == 2);
  CHECK(run_command(kCli + " nosuchcommand").exit_code == 2);
}

TEST_CASE("cli: missing checkpoint names the path") {
  testutil::TempDir tmp("clieval");
  const auto r = run_command(kCli + " eval " + q(tmp.str("absent.sqck")) + " --synthetic");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("absent.sqck") != std::string::npos);
}

TEST_CASE("cli: synth corpus + train + eval + quantize + saliency pipeline") {
  testutil::TempDir tmp("clipipe");
  const std::string corpus = tmp.str("corpus");
  const std::string ckpt = tmp.str("m.sqck");

  auto synth = run_command(kCli + " synth --out " + q(corpus) + " --n 6 --resolution 16 --seed 3");
  REQUIRE(synth.exit_code == 0);
  CHECK(fs::is_directory(corpus + "/class_00"));

  auto trained = run_command(kCli + " train --data " + q(corpus) +
                             " --mode sgt_pact --bits 8 --epochs 2 --batch 16 --resolution 16 --seed 3 --out " +
                             q(ckpt) + " --arch 'conv:4|pact|pool|flatten|dense:8'");
  INFO(trained.output);
  REQUIRE(trained.exit_code == 0);
  CHECK(trained.output.find("Accuracy (%)") != std::string::npos);
  CHECK(fs::exists(ckpt));
  CHECK(count_lines(ckpt + ".csv") == 3);  // header + one row per epoch

  auto evaled = run_command(kCli + " eval " + q(ckpt) + " --data " + q(corpus) + " --seed 3");
  INFO(evaled.output);
  REQUIRE(evaled.exit_code == 0);
  CHECK(evaled.output.find("Accuracy (%) | Sensitivity (%) | Specificity (%)") != std::string::npos);
  CHECK(evaled.output.find("confusion matrix") != std::string::npos);

  const std::string packed = tmp.str("m.q4.sqck");
  auto quantized = run_command(kCli + " quantize " + q(ckpt) + " --bits 4 --out " + q(packed));
  INFO(quantized.output);
  REQUIRE(quantized.exit_code == 0);
  CHECK(quantized.output.find("ratio:") != std::string::npos);
  CHECK(fs::exists(packed));

  const std::string sal_dir = tmp.str("maps");
  const std::string image = corpus + "/class_00/0000.ppm";
  auto saliency = run_command(kCli + " saliency " + q(ckpt) + " " + q(image) + " --out " + q(sal_dir));
  INFO(saliency.output);
  REQUIRE(saliency.exit_code == 0);
  CHECK(fs::exists(sal_dir + "/0000.saliency.pgm"));
  CHECK(saliency.output.find("predicted") != std::string::npos);

  // deterministic: same checkpoint + image twice -> identical bytes
  const std::string sal_dir2 = tmp.str("maps2");
  run_command(kCli + " saliency " + q(ckpt) + " " + q(image) + " --out " + q(sal_dir2));
  CHECK(testutil::read_file_bytes(sal_dir + "/0000.saliency.pgm") ==
        testutil::read_file_bytes(sal_dir2 + "/0000.saliency.pgm"));
}

TEST_CASE("cli: epochs 0 checkpoints the initialized model") {
  testutil::TempDir tmp("cliinit");
  const std::string ckpt = tmp.str("init.sqck");
  auto r = run_command(kCli + " train --synthetic --synthetic-per-class 6 --resolution 16 --epochs 0 --seed 1 --out " +
                       q(ckpt) + " --arch 'conv:4|pact|pool|flatten|dense:8'");
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(ckpt));
  CHECK(count_lines(ckpt + ".csv") == 1);  // header only
}

TEST_CASE("cli: config file provides defaults, flags win") {
  testutil::TempDir tmp("clicfg");
  const std::string cfg = tmp.str("run.cfg");
  std::ofstream(cfg) << "epochs=1\nbatch=16\nresolution=16\nsynthetic=true\nsynthetic-per-class=6\nseed=4\n"
                     << "arch=conv:4|pact|pool|flatten|dense:8\n";
  const std::string ckpt = tmp.str("cfg.sqck");
  auto r = run_command(kCli + " train --config " + q(cfg) + " --epochs 2 --out " + q(ckpt));
  INFO(r.output);
  REQUIRE(r.exit_code == 0);
  CHECK(count_lines(ckpt + ".csv") == 3);  // flag --epochs 2 overrides config's 1
}

TEST_CASE("cli: quantize rejects re-packing at a different width") {
  testutil::TempDir tmp("clirepack");
  const std::string ckpt = tmp.str("m.sqck");
  auto t = run_command(kCli + " train --synthetic --synthetic-per-class 6 --resolution 16 --epochs 0 --seed 1 --out " +
                       q(ckpt) + " --arch 'conv:4|pact|pool|flatten|dense:8'");
  REQUIRE(t.exit_code == 0);
  const std::string p8 = tmp.str("m8.sqck");
  REQUIRE(run_command(kCli + " quantize " + q(ckpt) + " --bits 8 --out " + q(p8)).exit_code == 0);
  const auto again = run_command(kCli + " quantize " + q(p8) + " --bits 4 --out " + q(tmp.str("m4.sqck")));
  CHECK(again.exit_code == 2);
  CHECK(again.output.find("already packed") != std::string::npos);
}
