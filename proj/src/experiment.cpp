#include "uniembed/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "uniembed/errors.hpp"

namespace uniembed {

using nlohmann::json;

namespace {

constexpr std::uint64_t kSpecialistStream = 100;
constexpr std::uint64_t kBaselineStream = 200;
constexpr std::uint64_t kDistillStream = 300;
constexpr std::uint64_t kRatioStream = 400;

TrainConfig exclusive_specialist() {
  TrainConfig c;
  c.loss = LossKind::kTriplet;
  c.iterations = 1500;
  c.eval_every = 50;
  c.batch.classes_per_batch = 4;
  c.adam.learning_rate = 1e-3;
  return c;
}

}  // namespace

SuiteConfig default_suite(const std::string& suite) {
  SuiteConfig c;
  c.suite = suite;
  if (suite == "exclusive") {
    c.scenario = default_exclusive_scenario(1);
    c.specialist = exclusive_specialist();
    c.baseline = c.specialist;
    c.baseline.iterations = 3000;
    c.baseline.snapshots = SnapshotProtocol::kFused;
    c.distill = c.specialist;
    c.distill.loss = LossKind::kSnd;
    c.distill.iterations = 4000;
    c.distill.snapshots = SnapshotProtocol::kFused;
  } else if (suite == "coarse_fine") {
    c.scenario = default_coarse_fine_scenario(1);
    c.specialist = exclusive_specialist();
    c.specialist.iterations = 3000;
    c.baseline = c.specialist;
    c.distill = c.specialist;
    c.distill.loss = LossKind::kSnd;
    c.distill.iterations = 6000;
    c.distill.tau = 0.5;
    c.distill.batch.upweight_factor = 10.0;
  } else {
    throw ConfigError("unknown suite '" + suite + "' (expected exclusive or coarse_fine)");
  }
  return c;
}

json suite_to_json(const SuiteConfig& c) {
  json scenario = scenario_to_json(c.scenario);
  scenario.erase("seed");
  return {{"suite", c.suite},
          {"scenario", scenario},
          {"specialist", train_config_to_json(c.specialist)},
          {"baseline", train_config_to_json(c.baseline)},
          {"distill", train_config_to_json(c.distill)},
          {"concat_pca_dim", c.concat_pca_dim},
          {"ratio_pairs", c.ratio_pairs},
          {"ratio_bins", c.ratio_bins}};
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::string> suite_methods(const std::string& suite) {
  if (suite == "exclusive") {
    return {"specialist", "triplet_naive", "triplet_ds", "triplet_bal", "concat_pca", "rkd", "snd"};
  }
  if (suite == "coarse_fine") return {"specialist", "coarse_fine_rkd", "coarse_fine_snd"};
  throw ConfigError("unknown suite '" + suite + "'");
}

const MethodOutcome& SeedOutcome::method(const std::string& name) const {
  for (const auto& m : methods) {
    if (m.method == name) return m;
  }
  throw InputError("no outcome for method '" + name + "'");
}

// ---------------------------------------------------------------------------
// Single seed

namespace {

TrainConfig with_seed(TrainConfig c, std::uint64_t seed, std::uint64_t stream) {
  c.seed = Rng(seed).split(stream).seed();
  return c;
}

EvalReport both_protocols(const Embedder& embed, const std::vector<DomainDataset>& datasets) {
  EvalReport report = unfused_recall(embed, datasets);
  if (datasets.size() > 1) {
    const EvalReport fused = fused_recall(embed, datasets);
    report.entries.insert(report.entries.end(), fused.entries.begin(), fused.entries.end());
    report.gallery = fused.gallery;
  }
  return report;
}

template <typename Fn>
auto phase(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError("phase " + name + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError("phase " + name + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError("phase " + name + ": " + e.what());
  }
}

std::vector<EmbeddingModel> train_specialists(const std::vector<DomainDataset>& datasets, const SuiteConfig& config,
                                              std::uint64_t seed, EvalReport& report) {
  std::vector<EmbeddingModel> specialists;
  report.gallery = "per-domain";
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const TrainConfig tc = with_seed(config.specialist, seed, kSpecialistStream + d);
    TrainResult r = phase("specialist:" + datasets[d].name, [&] { return train_specialist(datasets[d], tc); });
    report.entries.push_back(domain_recall(embedder_for(r.best), datasets[d]));
    specialists.push_back(std::move(r.best));
  }
  return specialists;
}

void run_exclusive(const SuiteConfig& config, std::uint64_t seed, SeedOutcome& out) {
  ScenarioConfig scenario = config.scenario;
  scenario.seed = seed;
  const auto datasets = phase("gen-data", [&] { return generate_exclusive(scenario); });

  MethodOutcome spec{"specialist", {}, 0};
  const auto specialists = train_specialists(datasets, config, seed, spec.report);
  out.methods.push_back(std::move(spec));

  const std::pair<const char*, SamplingPolicy> baselines[] = {{"triplet_naive", SamplingPolicy::kNaive},
                                                              {"triplet_ds", SamplingPolicy::kDomainSpecific},
                                                              {"triplet_bal", SamplingPolicy::kBalanced}};
  std::uint64_t stream = kBaselineStream;
  for (const auto& [name, policy] : baselines) {
    TrainConfig tc = with_seed(config.baseline, seed, stream++);
    tc.batch.policy = policy;
    const TrainResult r = phase(name, [&] { return train_triplet(datasets, tc); });
    out.methods.push_back({name, both_protocols(embedder_for(r.best), datasets), r.best_iteration});
    if (policy == SamplingPolicy::kNaive) out.naive_curve = r.curve;
  }

  {
    Eigen::Index rows = 0;
    for (const auto& ds : datasets) rows += static_cast<Eigen::Index>(ds.indices(Split::kTrain).size());
    Matrix fit(rows, static_cast<Eigen::Index>(datasets.front().feature_dim()));
    Eigen::Index at = 0;
    for (const auto& ds : datasets) {
      const Matrix block = ds.rows(ds.indices(Split::kTrain));
      fit.middleRows(at, block.rows()) = block;
      at += block.rows();
    }
    const auto concat = phase("concat_pca", [&] {
      return std::make_shared<ConcatPcaEmbedder>(specialists, fit, config.concat_pca_dim);
    });
    const Embedder embed = [concat](const Matrix& x) { return (*concat)(x); };
    out.methods.push_back({"concat_pca", both_protocols(embed, datasets), 0});
  }

  for (const LossKind loss : {LossKind::kRkd, LossKind::kSnd}) {
    TrainConfig tc = with_seed(config.distill, seed, kDistillStream + static_cast<std::uint64_t>(loss));
    tc.loss = loss;
    const std::string name = to_string(loss);
    const TrainResult r = phase(name, [&] { return distill_universal(specialists, datasets, tc); });
    out.methods.push_back({name, both_protocols(embedder_for(r.best), datasets), r.best_iteration});
  }
}

void run_coarse_fine(const SuiteConfig& config, std::uint64_t seed, SeedOutcome& out) {
  ScenarioConfig scenario = config.scenario;
  scenario.seed = seed;
  const CoarseFineData data = phase("gen-data", [&] { return generate_coarse_fine(scenario); });
  const std::vector<DomainDataset> datasets{data.coarse, data.fine};

  MethodOutcome spec{"specialist", {}, 0};
  const auto specialists = train_specialists(datasets, config, seed, spec.report);
  out.methods.push_back(std::move(spec));

  Rng rng = Rng(seed).split(kRatioStream);
  out.shrinkage = phase("ratio-hist", [&] {
    return distance_ratio_hist(embedder_for(specialists[0]), embedder_for(specialists[1]), data.fine,
                               PairFilter::kInterClass, config.ratio_pairs, config.ratio_bins, rng);
  });

  for (const LossKind loss : {LossKind::kRkd, LossKind::kSnd}) {
    TrainConfig tc = with_seed(config.distill, seed, kDistillStream + static_cast<std::uint64_t>(loss));
    tc.loss = loss;
    const std::string name = "coarse_fine_" + to_string(loss);
    const TrainResult r =
        phase(name, [&] { return distill_coarse_fine(data.coarse, data.fine, specialists[1], tc); });
    EvalReport report = unfused_recall(embedder_for(r.best), datasets);
    out.methods.push_back({name, std::move(report), r.best_iteration});
  }
}

}  // namespace

SeedOutcome run_seed(const SuiteConfig& config, std::uint64_t seed) {
  SeedOutcome out;
  out.seed = seed;
  if (config.suite == "exclusive") {
    run_exclusive(config, seed, out);
  } else if (config.suite == "coarse_fine") {
    run_coarse_fine(config, seed, out);
  } else {
    throw ConfigError("unknown suite '" + config.suite + "'");
  }
  for (auto& m : out.methods) {
    m.report.model_id = m.method;
    m.report.seed = seed;
  }
  return out;
}

SuiteOutcome run_suite(const SuiteConfig& config, int n_seeds, int workers) {
  if (n_seeds < 1) throw ConfigError("reproduce: --seeds must be at least 1");
  SuiteOutcome outcome;
  outcome.config = config;
  outcome.hash = config_hash(suite_to_json(config));
  outcome.seeds.resize(static_cast<std::size_t>(n_seeds));

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  const auto work = [&] {
    for (int i = next++; i < n_seeds; i = next++) {
      try {
        outcome.seeds[static_cast<std::size_t>(i)] = run_seed(config, static_cast<std::uint64_t>(i + 1));
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n_threads = std::clamp(workers, 1, n_seeds);
  if (n_threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
  }
  if (error) std::rethrow_exception(error);
  return outcome;
}

// ---------------------------------------------------------------------------
// Summaries

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string primary_protocol(const std::string& suite, const std::string& method) {
  if (method == "specialist" || suite == "coarse_fine") return "unfused";
  return "fused";
}

}  // namespace

std::vector<SummaryRow> SuiteOutcome::summary() const {
  std::vector<SummaryRow> rows;
  if (seeds.empty()) return rows;
  for (const auto& method : suite_methods(config.suite)) {
    const std::string protocol = primary_protocol(config.suite, method);
    for (const auto& entry : seeds.front().method(method).report.entries) {
      if (entry.protocol != protocol) continue;
      SummaryRow row{method, entry.domain, protocol, {}};
      for (const auto& [k, unused] : entry.recall) {
        std::vector<double> values;
        for (const auto& s : seeds) values.push_back(s.method(method).report.at(entry.domain, protocol).recall.at(k));
        row.median[k] = median(values);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_summary_csv(const SuiteOutcome& outcome, std::ostream& out) {
  out << "method,domain,protocol,recall_at_1,recall_at_2,recall_at_4,recall_at_8,seeds,config_hash\n";
  char buf[256];
  for (const auto& r : outcome.summary()) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.4f,%.4f,%.4f,%.4f,%zu,%s\n", r.method.c_str(), r.domain.c_str(),
                  r.protocol.c_str(), r.median.at(1), r.median.at(2), r.median.at(4), r.median.at(8),
                  outcome.seeds.size(), outcome.hash.c_str());
    out << buf;
  }
}

void write_summary_markdown(const SuiteOutcome& outcome, std::ostream& out) {
  out << "# Suite `" << outcome.config.suite << "`\n\n";
  out << "Seeds: 1.." << outcome.seeds.size() << ", config hash `" << outcome.hash << "`. ";
  out << "Values are median Recall@k (percent) over seeds.\n\n";
  out << "| method | domain | protocol | R@1 | R@2 | R@4 | R@8 |\n";
  out << "|---|---|---|---:|---:|---:|---:|\n";
  char buf[256];
  for (const auto& r : outcome.summary()) {
    std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %.1f | %.1f | %.1f | %.1f |\n", r.method.c_str(),
                  r.domain.c_str(), r.protocol.c_str(), 100 * r.median.at(1), 100 * r.median.at(2),
                  100 * r.median.at(4), 100 * r.median.at(8));
    out << buf;
  }
}

void write_per_seed_csv(const SuiteOutcome& outcome, std::ostream& out) {
  out << "seed,method,domain,protocol,recall_at_1,recall_at_2,recall_at_4,recall_at_8,best_iteration,config_hash\n";
  char buf[256];
  for (const auto& s : outcome.seeds) {
    for (const auto& m : s.methods) {
      for (const auto& e : m.report.entries) {
        std::snprintf(buf, sizeof(buf), "%llu,%s,%s,%s,%.6f,%.6f,%.6f,%.6f,%d,%s\n",
                      static_cast<unsigned long long>(s.seed), m.method.c_str(), e.domain.c_str(),
                      e.protocol.c_str(), e.recall.at(1), e.recall.at(2), e.recall.at(4), e.recall.at(8),
                      m.best_iteration, outcome.hash.c_str());
        out << buf;
      }
    }
  }
}

void write_suite_outputs(const SuiteOutcome& outcome, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw InputError("cannot write " + (fs::path(dir) / name).string());
    return f;
  };
  {
    auto f = open("summary.csv");
    write_summary_csv(outcome, f);
  }
  {
    auto f = open("summary.md");
    write_summary_markdown(outcome, f);
  }
  {
    auto f = open("per_seed.csv");
    write_per_seed_csv(outcome, f);
  }
  {
    auto f = open("suite.json");
    json j = suite_to_json(outcome.config);
    j["config_hash"] = outcome.hash;
    j["seeds"] = outcome.seeds.size();
    f << j.dump(2) << "\n";
  }
  for (const auto& s : outcome.seeds) {
    const std::string tag = "seed" + std::to_string(s.seed);
    if (!s.naive_curve.points.empty()) {
      auto f = open("naive_curve_" + tag + ".csv");
      s.naive_curve.write_csv(f);
    }
    if (s.shrinkage) {
      auto f = open("shrinkage_" + tag + ".json");
      json j = histogram_to_json(*s.shrinkage);
      j["seed"] = s.seed;
      j["config_hash"] = outcome.hash;
      f << j.dump(2) << "\n";
    }
  }
}

}  // namespace uniembed
