#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "uniembed/evaluation.hpp"
#include "uniembed/experiment.hpp"
#include "uniembed/model.hpp"
#include "uniembed/synthdata.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uniembed;

namespace {

const fs::path kConfigs = UNIEMBED_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uniembed_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Runs the CLI with stderr captured into `err` and returns the exit status.
int run(const std::string& args, std::string* err = nullptr) {
  const fs::path err_path = fs::temp_directory_path() / "uniembed_cli_stderr.txt";
  const std::string cmd = std::string(UNIEMBED_CLI) + " " + args + " > /dev/null 2> " + err_path.string();
  const int status = std::system(cmd.c_str());
  if (err) {
    std::ifstream in(err_path);
    std::ostringstream s;
    s << in.rdbuf();
    *err = s.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

fs::path gen(const std::string& name, const fs::path& config) {
  const fs::path out = scratch(name);
  REQUIRE(run("gen-data --config " + config.string() + " --out " + out.string()) == 0);
  return out;
}

}  // namespace

TEST_CASE("gen-data writes one file per domain plus a manifest, deterministically") {
  const fs::path a = gen("gen_a", kConfigs / "exclusive.json");
  const fs::path b = gen("gen_b", kConfigs / "exclusive.json");
  for (const char* f : {"birds.dataset", "cars.dataset", "clothes.dataset", "manifest.json"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const json m = json::parse(slurp(a / "manifest.json"));
  CHECK(m["files"].size() == 3);
  CHECK(m["seed"] == 1);
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  // Files agree with in-process generation.
  const auto data = generate(default_exclusive_scenario(1));
  CHECK(load_dataset(a / "cars.dataset") == data[1]);
}

TEST_CASE("gen-data: invalid configs exit 2 and name the field") {
  const fs::path dir = scratch("gen_bad");
  json cfg = json::parse(slurp(kConfigs / "exclusive.json"));
  cfg["domains"][0].erase("separation");
  write_text(dir / "bad.json", cfg.dump());
  std::string err;
  CHECK(run("gen-data --config " + (dir / "bad.json").string() + " --out " + (dir / "o").string(), &err) == 2);
  CHECK(err.find("domains[0].separation") != std::string::npos);
  CHECK(run("gen-data --config " + (dir / "nope.json").string() + " --out " + (dir / "o").string()) == 2);
  CHECK(run("gen-data --out " + (dir / "o").string()) == 2);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("train, distill and evaluate through the command line") {
  const fs::path data = gen("pipe_data", kConfigs / "exclusive.json");
  const fs::path work = scratch("pipe");
  write_text(work / "spec.json", R"({"iterations": 60, "eval_every": 30, "seed": 3,
                                     "batch": {"classes_per_batch": 4, "samples_per_class": 4}})");
  std::string specialists;
  for (const char* d : {"birds", "cars", "clothes"}) {
    const fs::path out = work / d;
    REQUIRE(run("train-specialist --data " + (data / (std::string(d) + ".dataset")).string() + " --config " +
                (work / "spec.json").string() + " --out " + out.string()) == 0);
    for (const char* f : {"model.json", "model_final.json", "curve.csv", "eval.json"}) CHECK(fs::exists(out / f));
    const json meta = json::parse(slurp(out / "model.json"))["meta"];
    CHECK(meta["domain"] == d);
    CHECK(meta["seed"] == 3);
    specialists += " " + out.string();
  }

  SUBCASE("evaluate output equals the library report") {
    const fs::path out = work / "eval";
    REQUIRE(run("evaluate --model " + (work / "cars" / "model.json").string() + " --data " + data.string() +
                " --fused --spectrum --ratio-against " + (work / "birds" / "model.json").string() + " --out " +
                out.string()) == 0);
    const json ckpt = json::parse(slurp(work / "cars" / "model.json"));
    EvalReport expected = fused_recall(embedder_for(model_from_json(ckpt)), generate(default_exclusive_scenario(1)));
    expected.model_id = "model";
    expected.seed = 3;
    json j = report_to_json(expected);
    j["config_hash"] = ckpt["meta"]["config_hash"];
    CHECK(slurp(out / "eval.json") == j.dump(2) + "\n");
    CHECK(fs::exists(out / "spectrum_clothes.json"));
    const json ratio = json::parse(slurp(out / "ratio_birds.json"));
    CHECK(ratio["seed"] == 3);
  }

  SUBCASE("distill writes fused and unfused reports") {
    write_text(work / "distill.json", R"({"loss": "rkd", "iterations": 40, "eval_every": 20})");
    const fs::path out = work / "universal";
    REQUIRE(run("distill --specialists" + specialists + " --data " + data.string() + " --config " +
                (work / "distill.json").string() + " --out " + out.string()) == 0);
    const json fused = json::parse(slurp(out / "eval_fused.json"));
    CHECK(fused["entries"].size() == 3);
    CHECK(fused["gallery"] == "birds+cars+clothes");
    CHECK(json::parse(slurp(out / "model.json"))["meta"]["loss"] == "rkd");
  }

  SUBCASE("distill without a specialist for a domain exits 2 naming it") {
    write_text(work / "distill.json", R"({"iterations": 10})");
    std::string err;
    CHECK(run("distill --specialists " + (work / "birds").string() + " " + (work / "cars").string() + " --data " +
                  data.string() + " --config " + (work / "distill.json").string() + " --out " +
                  (work / "u2").string(),
              &err) == 2);
    CHECK(err.find("clothes") != std::string::npos);
  }

  SUBCASE("evaluate rejects a model of the wrong input width") {
    const fs::path easy = gen("pipe_easy", kConfigs / "easy.json");
    std::string err;
    CHECK(run("evaluate --model " + (work / "cars" / "model.json").string() + " --data " + easy.string() +
                  " --out " + (work / "e2").string(),
              &err) == 2);
    CHECK(err.find("features") != std::string::npos);
  }
}

TEST_CASE("reproduce coarse_fine: one row per method and domain, stable across reruns") {
  const fs::path a = scratch("repro_a");
  const fs::path b = scratch("repro_b");
  REQUIRE(run("reproduce --suite coarse_fine --seeds 1 --out " + a.string()) == 0);
  REQUIRE(run("reproduce --suite coarse_fine --seeds 1 --out " + b.string() + " --workers 2") == 0);
  for (const char* f : {"summary.csv", "summary.md", "per_seed.csv", "suite.json", "shrinkage_seed1.json"}) {
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  std::istringstream csv(slurp(a / "summary.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  // methods x domains
  CHECK(rows == 2 + 2 * 2);
  CHECK(run("reproduce --suite bogus --out " + a.string()) == 2);
}
