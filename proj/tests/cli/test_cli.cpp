#include "synthetic.hpp"

#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("micrec_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MICREC_BIN) + " " + args + " > '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

micrec::testing::SyntheticData data(std::uint64_t seed) {
  micrec::testing::SyntheticConfig sc;
  sc.users_a = sc.users_b = 60;
  sc.items_a = sc.items_b = 40;
  sc.mean_degree_a = 8;
  sc.mean_degree_b = 4;
  sc.text_dim = sc.visual_dim = 4;
  sc.seed = seed;
  return micrec::testing::generate(sc);
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

std::string prepare_args(const fs::path& raw, const fs::path& out) {
  return "prepare --data-a " + q(raw / "a.tsv") + " --data-b " + q(raw / "b.tsv") + " --overlap " +
         q(raw / "overlap.tsv") + " -o " + q(out) + " --seed 5 --set min_degree=1";
}

std::string train_args(const fs::path& out) {
  std::string a = "train -o " + q(out) + " --seed 9 --epochs 3 --set dim=8 --set batches=2 --set patience=3";
  for (const char* d : {"a", "b"})
    for (const char* m : {"text", "visual"})
      a += std::string(" --feat-") + d + "-" + m + " " + q(out / (std::string("feat_") + d + "_" + m + ".feat"));
  return a;
}

}  // namespace

TEST_CASE("usage errors exit with the config code") {
  const auto dir = scratch("usage");
  CHECK(run("", dir / "log") == 2);
  CHECK(run("frobnicate", dir / "log") == 2);
  CHECK(run("eval", dir / "log") == 2);
}

TEST_CASE("prepare reports config and data errors") {
  const auto dir = scratch("errors");
  const auto d = data(1);
  micrec::testing::write_raw(d, (dir / "raw").string());

  fs::remove(dir / "raw" / "overlap.tsv");
  CHECK(run(prepare_args(dir / "raw", dir / "out"), dir / "log") == 2);

  micrec::testing::write_raw(d, (dir / "raw").string());
  std::ofstream(dir / "raw" / "a.tsv", std::ios::trunc).close();
  CHECK(run(prepare_args(dir / "raw", dir / "out"), dir / "log") == 3);
  CHECK(slurp(dir / "log").find("a.tsv") != std::string::npos);
}

TEST_CASE("prepare, train, eval and recommend end to end") {
  const auto dir = scratch("e2e");
  const auto d = data(2);
  micrec::testing::write_raw(d, (dir / "raw").string());
  const auto out = dir / "out";
  REQUIRE(run(prepare_args(dir / "raw", out), dir / "log") == 0);
  CHECK(slurp(dir / "log").find("domain") == 0);

  CHECK(run("train -o " + q(out) + " --epochs 1", dir / "log") == 2);

  micrec::testing::write_prepared_features(d, out.string());
  const auto full = slurp(out / "feat_b_visual.feat");
  std::ofstream(out / "feat_b_visual.feat", std::ios::binary) << full.substr(0, full.rfind('\n', full.size() - 2) + 1);
  CHECK(run(train_args(out), dir / "log") == 3);
  CHECK(slurp(dir / "log").find("feature extractor") != std::string::npos);

  micrec::testing::write_prepared_features(d, out.string());
  REQUIRE(run(train_args(out), dir / "log") == 0);
  CHECK(fs::exists(out / "model.ckpt"));
  CHECK(fs::exists(out / "history.tsv"));

  REQUIRE(run("eval " + q(out / "model.ckpt") + " -n 5,20 --slice all --slice low:0.25", dir / "log") == 0);
  std::istringstream lines(slurp(dir / "log"));
  int rows = 0;
  for (std::string line; std::getline(lines, line);) rows += line.rfind("A ", 0) == 0 || line.rfind("B ", 0) == 0;
  CHECK(rows == 2 * 2 * 2);

  CHECK(run("recommend " + q(out / "model.ckpt") + " -u p0 -k 3", dir / "log") == 0);
  CHECK(run("recommend " + q(out / "model.ckpt") + " -u a_u99999 -k 3", dir / "log") == 2);
  CHECK(slurp(dir / "log").find("a_u") != std::string::npos);

  CHECK(run(train_args(out) + " --set lr=1e250", dir / "log") == 4);
  CHECK(fs::exists(out / "divergence.txt"));
}

TEST_CASE("prepare and train are byte-identical across runs") {
  const auto dir = scratch("determinism");
  const auto d = data(3);
  micrec::testing::write_raw(d, (dir / "raw").string());
  const auto out = dir / "out";
  std::string history, model, split;
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove_all(out);
    REQUIRE(run(prepare_args(dir / "raw", out), dir / "log") == 0);
    micrec::testing::write_prepared_features(d, out.string());
    REQUIRE(run(train_args(out), dir / "log") == 0);
    if (rep == 0) {
      history = slurp(out / "history.tsv");
      model = slurp(out / "model.ckpt");
      split = slurp(out / "A.split.tsv");
      continue;
    }
    CHECK(!history.empty());
    CHECK(slurp(out / "history.tsv") == history);
    CHECK(slurp(out / "model.ckpt") == model);
    CHECK(slurp(out / "A.split.tsv") == split);
  }
}

TEST_CASE("selftest passes") {
  const auto dir = scratch("selftest");
  CHECK(run("selftest", dir / "log") == 0);
}
