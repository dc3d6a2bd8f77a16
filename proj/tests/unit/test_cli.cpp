#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stepalign/checkpoint.hpp"
#include "stepalign/cli.hpp"
#include "stepalign/manifest.hpp"
#include "stepalign/semb_io.hpp"

using namespace stepalign;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "stepalign");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stepalign_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("align on identical single rows") {
  const fs::path d = temp_dir("align");
  Matrix v(1, 3);
  v << 0.0, 0.6, 0.8;
  write_embedding_file(EmbeddingSequence(v, SequenceKind::phrases), d / "a.semb");
  write_embedding_file(EmbeddingSequence(v, SequenceKind::phrases), d / "b.semb");
  const auto r = run({"align", "--rows", (d / "a.semb").string(), "--cols", (d / "b.semb").string(), "--mode",
                      "one_to_one", "--percentile", "0.8", "--out", (d / "j.json").string()});
  REQUIRE(r.code == 0);
  const auto j = read_json(d / "j.json");
  // Both drop costs equal the only cost (-1); dropping the row and the column
  // (-2) beats the single match (-1).
  CHECK(j["pairs"].empty());
  CHECK(j["total_cost"].get<double>() == doctest::Approx(-2.0).epsilon(1e-7));
  CHECK(j["drop_cost"].get<double>() == doctest::Approx(-1.0).epsilon(1e-7));
}

TEST_CASE("usage and data errors") {
  CHECK(run({"align", "--bogus"}).code == 1);
  CHECK(run({}).code == 1);
  CHECK(run({"nosuch"}).code == 1);
  const Run r = run({"train", "--data", "/nonexistent/manifest.json", "--out", temp_dir("missing").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("/nonexistent/manifest.json") != std::string::npos);
  const fs::path d = temp_dir("badcfg");
  std::ofstream(d / "c.json") << R"({"epochz": 3})";
  CHECK(run({"gen-data", "--config", (d / "c.json").string(), "--out", (d / "o").string()}).code == 2);
  CHECK(run({"localize", "--ckpt", "x", "--data", "y", "--out", "z", "--percentile", "2"}).code == 1);
}

TEST_CASE("train, localize, zeroshot and eval end to end") {
  const fs::path d = temp_dir("e2e");
  REQUIRE(run({"gen-data", "--out", (d / "data").string()}).code == 0);
  const std::string manifest = (d / "data" / "manifest.json").string();
  std::ofstream(d / "train.json") << R"({"epochs": 2, "warmup_epochs": 1, "checkpoint_every": 1})";
  REQUIRE(run({"train", "--config", (d / "train.json").string(), "--data", manifest, "--out", (d / "run").string()})
              .code == 0);
  CHECK(fs::exists(d / "run" / "epoch_001.sckp"));
  CHECK(fs::exists(d / "run" / "epoch_002.sckp"));
  CHECK(encode_checkpoint(load_checkpoint(d / "run" / "epoch_002.sckp")) ==
        encode_checkpoint(load_checkpoint(d / "run" / "final.sckp")));
  std::ifstream log(d / "run" / "loss_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line); ++lines) CHECK(nlohmann::json::parse(line).contains("total"));
  CHECK(lines == 2 * 15);

  const std::string ckpt = (d / "run" / "final.sckp").string();
  REQUIRE(run({"localize", "--ckpt", ckpt, "--data", manifest, "--out", (d / "loc").string()}).code == 0);
  REQUIRE(run({"eval", "--pred", (d / "loc").string(), "--data", manifest, "--out", (d / "report.json").string(),
               "--csv", (d / "report.csv").string()})
              .code == 0);
  const auto rep = read_json(d / "report.json");
  for (const char* k : {"precision", "recall", "f1", "mof", "iou"}) CHECK(rep["overall"][k].is_number());
  CHECK(fs::exists(d / "report.csv"));

  REQUIRE(run({"zeroshot", "--ckpt", ckpt, "--data", manifest, "--out", (d / "zs").string()}).code == 0);
  REQUIRE(run({"eval", "--pred", (d / "zs").string(), "--data", manifest, "--out", (d / "zs.json").string(),
               "--protocol", "zeroshot"})
              .code == 0);
  CHECK(read_json(d / "zs.json")["protocol"] == "zeroshot");

  // Every emitted SEMB and JSON file reads back.
  for (const auto& e : fs::recursive_directory_iterator(d)) {
    if (e.path().extension() == ".semb") CHECK_NOTHROW(read_embedding_file(e.path()));
    if (e.path().extension() == ".json") CHECK_NOTHROW(read_json(e.path()));
  }
  CHECK_NOTHROW(load_manifest(manifest));

  // Same inputs give the same report.
  REQUIRE(run({"eval", "--pred", (d / "loc").string(), "--data", manifest, "--out", (d / "report2.json").string()})
              .code == 0);
  std::ifstream a(d / "report.json"), b(d / "report2.json");
  CHECK(std::string(std::istreambuf_iterator<char>(a), {}) == std::string(std::istreambuf_iterator<char>(b), {}));
}
