// uniembed: data generation, specialist training, distillation, evaluation
// and experiment suites from the command line.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "uniembed/errors.hpp"
#include "uniembed/evaluation.hpp"
#include "uniembed/experiment.hpp"
#include "uniembed/model.hpp"
#include "uniembed/synthdata.hpp"
#include "uniembed/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uniembed;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_curve(const fs::path& path, const CurveLog& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  curve.write_csv(out);
}

json report_json(const EvalReport& report, const std::string& hash) {
  json j = report_to_json(report);
  j["config_hash"] = hash;
  return j;
}

// A data directory: manifest.json plus one dataset file per domain.
struct DataDir {
  std::string regime;
  std::vector<DomainDataset> datasets;
};

DataDir load_data_dir(const fs::path& dir) {
  const json manifest = read_json(dir / "manifest.json");
  DataDir out;
  try {
    out.regime = manifest.at("regime").get<std::string>();
    for (const auto& entry : manifest.at("files")) out.datasets.push_back(load_dataset(dir / entry.get<std::string>()));
  } catch (const json::exception& e) {
    throw ConfigError((dir / "manifest.json").string() + ": " + e.what());
  }
  return out;
}

// --- gen-data --------------------------------------------------------------

void cmd_gen_data(const fs::path& config_path, const fs::path& out_dir) {
  const json raw = read_json(config_path);
  const ScenarioConfig config = scenario_from_json(raw);
  const std::vector<DomainDataset> datasets = generate(config);
  fs::create_directories(out_dir);
  json files = json::array();
  for (const auto& ds : datasets) {
    const std::string name = ds.name + ".dataset";
    save_dataset(ds, out_dir / name);
    files.push_back(name);
  }
  const json canonical = scenario_to_json(config);
  write_json(out_dir / "manifest.json", {{"format", "uniembed-manifest v1"},
                                         {"regime", config.regime},
                                         {"seed", config.seed},
                                         {"config_hash", config_hash(canonical)},
                                         {"scenario", canonical},
                                         {"files", files}});
}

// --- train-specialist --------------------------------------------------------

void cmd_train_specialist(const fs::path& data_path, const fs::path& config_path, const fs::path& out_dir) {
  const DomainDataset dataset = load_dataset(data_path);
  TrainConfig base = default_suite("exclusive").specialist;
  base.model.input_dim = dataset.feature_dim();
  const TrainConfig config = train_config_from_json(read_json(config_path), base);
  const std::string hash = config_hash(train_config_to_json(config));
  const TrainResult result = train_specialist(dataset, config);

  fs::create_directories(out_dir);
  const json meta = {{"kind", "specialist"},          {"domain", dataset.name},
                     {"seed", config.seed},           {"config_hash", hash},
                     {"best_iteration", result.best_iteration}};
  save_checkpoint(result.best, out_dir / "model.json", meta);
  json last_meta = meta;
  last_meta["kind"] = "specialist-final";
  last_meta["iteration"] = config.iterations;
  save_checkpoint(result.last, out_dir / "model_final.json", last_meta);
  write_curve(out_dir / "curve.csv", result.curve);
  EvalReport report = unfused_recall(embedder_for(result.best), {dataset});
  report.model_id = "specialist:" + dataset.name;
  report.seed = config.seed;
  write_json(out_dir / "eval.json", report_json(report, hash));
}

// --- distill -----------------------------------------------------------------

std::map<std::string, EmbeddingModel> load_specialists(const std::vector<std::string>& dirs) {
  std::map<std::string, EmbeddingModel> out;
  for (const auto& d : dirs) {
    const fs::path path = fs::path(d) / "model.json";
    const json j = read_json(path);
    std::string domain;
    try {
      domain = j.at("meta").at("domain").get<std::string>();
    } catch (const json::exception&) {
      throw ConfigError(path.string() + ": checkpoint has no meta.domain");
    }
    out.emplace(domain, model_from_json(j));
  }
  return out;
}

void cmd_distill(const std::vector<std::string>& specialist_dirs, const fs::path& data_dir,
                 const fs::path& config_path, const fs::path& out_dir) {
  const DataDir data = load_data_dir(data_dir);
  const auto by_domain = load_specialists(specialist_dirs);
  TrainConfig base = default_suite(data.regime == "coarse_fine" ? "coarse_fine" : "exclusive").distill;
  base.model.input_dim = data.datasets.front().feature_dim();
  const TrainConfig config = train_config_from_json(read_json(config_path), base);
  const std::string hash = config_hash(train_config_to_json(config));

  TrainResult result;
  if (data.regime == "coarse_fine") {
    const auto it = by_domain.find(data.datasets.at(1).name);
    if (it == by_domain.end()) throw ConfigError("no specialist for domain: " + data.datasets.at(1).name);
    result = distill_coarse_fine(data.datasets.at(0), data.datasets.at(1), it->second, config);
  } else {
    std::vector<EmbeddingModel> specialists;
    std::string missing;
    for (const auto& ds : data.datasets) {
      const auto it = by_domain.find(ds.name);
      if (it == by_domain.end()) {
        missing += (missing.empty() ? "" : ", ") + ds.name;
      } else {
        specialists.push_back(it->second);
      }
    }
    if (!missing.empty()) throw ConfigError("no specialist for domain: " + missing);
    result = distill_universal(specialists, data.datasets, config);
  }

  fs::create_directories(out_dir);
  const json meta = {{"kind", "universal"},
                     {"loss", to_string(config.loss)},
                     {"seed", config.seed},
                     {"config_hash", hash},
                     {"best_iteration", result.best_iteration}};
  save_checkpoint(result.best, out_dir / "model.json", meta);
  json last_meta = meta;
  last_meta["kind"] = "universal-final";
  save_checkpoint(result.last, out_dir / "model_final.json", last_meta);
  write_curve(out_dir / "curve.csv", result.curve);
  const Embedder embed = embedder_for(result.best);
  for (const bool fused : {false, true}) {
    EvalReport report = fused ? fused_recall(embed, data.datasets) : unfused_recall(embed, data.datasets);
    report.model_id = "universal:" + to_string(config.loss);
    report.seed = config.seed;
    write_json(out_dir / (fused ? "eval_fused.json" : "eval_unfused.json"), report_json(report, hash));
  }
}

// --- evaluate ----------------------------------------------------------------

void cmd_evaluate(const fs::path& model_path, const fs::path& data_dir, bool fused, const std::string& ratio_against,
                  bool spectrum, const fs::path& out_dir) {
  const json ckpt = read_json(model_path);
  const EmbeddingModel model = model_from_json(ckpt);
  const json meta = ckpt.value("meta", json::object());
  const std::uint64_t seed = meta.value("seed", std::uint64_t{0});
  const std::string hash = meta.value("config_hash", std::string());
  const DataDir data = load_data_dir(data_dir);
  for (const auto& ds : data.datasets) {
    if (ds.feature_dim() != model.input_dim()) {
      throw InputError("model expects " + std::to_string(model.input_dim()) + " features but '" + ds.name +
                       "' has " + std::to_string(ds.feature_dim()));
    }
  }

  fs::create_directories(out_dir);
  const Embedder embed = embedder_for(model);
  EvalReport report = fused ? fused_recall(embed, data.datasets) : unfused_recall(embed, data.datasets);
  report.model_id = model_path.stem().string();
  report.seed = seed;
  write_json(out_dir / "eval.json", report_json(report, hash));

  if (!ratio_against.empty()) {
    const EmbeddingModel other = load_checkpoint(ratio_against);
    if (other.input_dim() != model.input_dim()) throw InputError("--ratio-against model has a different input dim");
    const Embedder embed_b = embedder_for(other);
    Rng rng(seed);
    for (const auto& ds : data.datasets) {
      const RatioHistogram h = distance_ratio_hist(embed, embed_b, ds, PairFilter::kInterClass, 4000, 100, rng);
      json j = histogram_to_json(h);
      j["domain"] = ds.name;
      j["seed"] = seed;
      j["config_hash"] = hash;
      write_json(out_dir / ("ratio_" + ds.name + ".json"), j);
    }
  }
  if (spectrum) {
    for (const auto& ds : data.datasets) {
      const Vector values = pca_spectrum(embed, ds);
      write_json(out_dir / ("spectrum_" + ds.name + ".json"),
                 {{"domain", ds.name},
                  {"seed", seed},
                  {"config_hash", hash},
                  {"eigenvalues", std::vector<double>(values.data(), values.data() + values.size())}});
    }
  }
}

// --- reproduce ---------------------------------------------------------------

void cmd_reproduce(const std::string& suite, int seeds, int workers, const fs::path& out_dir) {
  const SuiteConfig config = default_suite(suite);
  const SuiteOutcome outcome = run_suite(config, seeds, workers);
  write_suite_outputs(outcome, out_dir.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universal embedding by distilling domain specialists"};
  app.require_subcommand(1);

  std::string config, out, data, model, ratio_against, suite;
  std::vector<std::string> specialists;
  bool fused = false;
  bool spectrum = false;
  int seeds = 1;
  int workers = 1;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic scenario");
  gen->add_option("--config", config, "Scenario JSON")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train-specialist", "Train a triplet specialist on one domain");
  train->add_option("--data", data, "Dataset file")->required();
  train->add_option("--config", config, "Training JSON")->required();
  train->add_option("--out", out, "Output directory")->required();

  auto* distill = app.add_subcommand("distill", "Distill specialists into a universal model");
  distill->add_option("--specialists", specialists, "Specialist output directories")->required();
  distill->add_option("--data", data, "Data directory")->required();
  distill->add_option("--config", config, "Training JSON")->required();
  distill->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint");
  eval->add_option("--model", model, "Checkpoint")->required();
  eval->add_option("--data", data, "Data directory")->required();
  eval->add_flag("--fused", fused, "Pool all domains into one gallery");
  eval->add_option("--ratio-against", ratio_against, "Checkpoint for the distance-ratio histogram denominator");
  eval->add_flag("--spectrum", spectrum, "Write PCA eigen-spectra");
  eval->add_option("--out", out, "Output directory")->required();

  auto* repro = app.add_subcommand("reproduce", "Run an experiment suite");
  repro->add_option("--suite", suite, "exclusive or coarse_fine")
      ->required()
      ->check(CLI::IsMember({"exclusive", "coarse_fine"}));
  repro->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
  repro->add_option("--out", out, "Output directory")->required();
  repro->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cerr, std::cerr);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) cmd_gen_data(config, out);
    if (train->parsed()) cmd_train_specialist(data, config, out);
    if (distill->parsed()) cmd_distill(specialists, data, config, out);
    if (eval->parsed()) cmd_evaluate(model, data, fused, ratio_against, spectrum, out);
    if (repro->parsed()) cmd_reproduce(suite, seeds, workers, out);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
