// Drives the artinv binary end to end on a tiny configuration.

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / "artinv_test_cli";

struct Run {
  int code = -1;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Run artinv(const std::string& args) {
  fs::create_directories(kWork);
  const auto err = kWork / "stderr.txt";
  const std::string cmd = std::string(ARTINV_BIN) + " -q " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

json tiny() {
  return {{"corpus",
           {{"seen", 4}, {"unseen", 2}, {"background", 4}, {"sentences", 10}, {"background_sentences", 10},
            {"duration_s", 1.0}}},
          {"xvector", {{"channels", 8}, {"embed_dim", 8}, {"hidden", 8}}},
          {"sid", {{"lstm", 8}, {"dense", 8}}},
          {"aai", {{"acoustic", 8}, {"conditioning", 4}, {"hidden", 8}, {"layers", 1}}},
          {"train",
           {{"aai", {{"max_epochs", 2}}}, {"xvector", {{"max_epochs", 2}}}, {"sid", {{"max_epochs", 2}}}}}};
}

std::string write_config(const std::string& name, const json& j) {
  fs::create_directories(kWork);
  const auto p = kWork / name;
  std::ofstream(p) << j.dump(2);
  return p.string();
}

std::string common(const std::string& cfg, const std::string& out) {
  return "--config " + cfg + " --out " + (kWork / out).string() + " ";
}

}  // namespace

TEST_CASE("usage and config errors exit with code 2") {
  fs::remove_all(kWork);
  CHECK(artinv("").code == 2);
  auto r = artinv("no-such-command");
  CHECK(r.code == 2);
  CHECK(r.err.find("subcommand") != std::string::npos);
  r = artinv("train-aai");  // --scheme is required
  CHECK(r.code == 2);
  CHECK(r.err.find("--scheme") != std::string::npos);

  auto bad = tiny();
  bad["aai"]["bogus"] = 1;
  r = artinv(common(write_config("bad.json", bad), "bad") + "synth");
  CHECK(r.code == 2);
  CHECK(r.err.find("aai.bogus") != std::string::npos);

  const auto cfg = write_config("tiny.json", tiny());
  CHECK(artinv(common(cfg, "x") + "train-aai --scheme sc --embed xvector").code == 2);
  CHECK(artinv(common(cfg, "x") + "train-aai --scheme nope").code == 2);
  CHECK(artinv(common(cfg, "x") + "evaluate --format xlsx").code == 2);
}

TEST_CASE("missing artifacts exit with code 3 and name the producing stage") {
  const auto cfg = write_config("tiny.json", tiny());
  const auto base = common(cfg, "missing");
  fs::remove_all(kWork / "missing");
  auto r = artinv(base + "preprocess");
  CHECK(r.code == 3);
  CHECK(r.err.find("synth") != std::string::npos);

  REQUIRE(artinv(base + "synth").code == 0);
  REQUIRE(artinv(base + "preprocess").code == 0);
  r = artinv(base + "train-aai --scheme xsc");
  CHECK(r.code == 3);
  CHECK(r.err.find("train-embedder") != std::string::npos);
  CHECK(artinv(base + "evaluate --condition seen").code == 3);
  CHECK(artinv(base + "report").code == 3);
}

TEST_CASE("a changed config is refused against existing artifacts") {
  const auto cfg = write_config("tiny.json", tiny());
  const auto dir = (kWork / "stamp").string();
  fs::remove_all(dir);
  REQUIRE(artinv("--config " + cfg + " --out " + dir + " synth").code == 0);
  auto other = tiny();
  other["corpus"]["sentences"] = 12;
  CHECK(artinv("--config " + write_config("other.json", other) + " --out " + dir + " preprocess").code == 2);
}

TEST_CASE("full stage sequence on a tiny config") {
  const auto cfg = write_config("tiny.json", tiny());
  const auto out = kWork / "full";
  const auto base = common(cfg, "full");
  fs::remove_all(out);
  for (const char* stage : {"synth", "preprocess", "train-embedder", "train-sid"}) {
    INFO(stage);
    REQUIRE(artinv(base + stage).code == 0);
  }
  REQUIRE(artinv(base + "train-aai --scheme gm").code == 0);
  REQUIRE(artinv(base + "train-aai --scheme sc --embed onehot").code == 0);
  REQUIRE(artinv(base + "train-aai --scheme xsc --embed xvector").code == 0);
  REQUIRE(artinv(base + "train-aai --scheme sd --speakers M01,F01").code == 0);
  CHECK(fs::exists(out / "models" / "sd_M01.aivm"));
  CHECK(fs::exists(out / "models" / "sd_F01.aivm"));
  CHECK_FALSE(fs::exists(out / "models" / "sd_M02.aivm"));

  // gm-fsd needs the GM parent, which exists now
  REQUIRE(artinv(base + "train-aai --scheme gm-fsd --speakers M01").code == 0);
  CHECK(fs::exists(out / "models" / "gm-fsd_M01.aivm"));

  // unseen: gm, xsc and usc, one row per (scheme, speaker)
  REQUIRE(artinv(base + "evaluate --condition unseen --format csv").code == 0);
  const auto per = slurp(out / "reports" / "unseen" / "per_speaker.csv");
  std::stringstream ss(per);
  std::string line;
  std::getline(ss, line);
  std::map<std::string, std::set<std::string>> schemes_of;
  while (std::getline(ss, line)) {
    const auto a = line.find(','), b = line.find(',', a + 1);
    schemes_of[line.substr(0, a)].insert(line.substr(a + 1, b - a - 1));
  }
  REQUIRE(schemes_of.size() == 2);
  for (const auto& [spk, s] : schemes_of) {
    INFO(spk);
    CHECK(s == std::set<std::string>{"gm", "usc", "xsc"});
  }

  // the report stage rebuilds identical tables from the stored scores
  const auto overall = slurp(out / "reports" / "unseen" / "table_overall.csv");
  fs::remove(out / "reports" / "unseen" / "table_overall.csv");
  REQUIRE(artinv(base + "report --condition unseen --format csv").code == 0);
  CHECK(slurp(out / "reports" / "unseen" / "table_overall.csv") == overall);

  REQUIRE(artinv(base + "project-embeddings").code == 0);
  CHECK(fs::exists(out / "embeddings" / "projection.csv"));

  fs::remove(out / "models" / "gm.aivm");
  CHECK(artinv(base + "evaluate --condition seen --schemes gm").code == 3);
}
