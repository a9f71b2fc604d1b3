#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uniembed/evaluation.hpp"
#include "uniembed/synthdata.hpp"
#include "uniembed/training.hpp"

namespace uniembed {

/// Everything a reproduce suite depends on besides the seed list.
struct SuiteConfig {
  std::string suite;       // "exclusive" | "coarse_fine"
  ScenarioConfig scenario; // scenario.seed is replaced by each run's seed
  TrainConfig specialist;
  TrainConfig baseline;    // fused triplet baselines; policy set per method
  TrainConfig distill;     // loss set per method
  std::size_t concat_pca_dim = 16;
  std::size_t ratio_pairs = 4000;
  std::size_t ratio_bins = 100;
};

SuiteConfig default_suite(const std::string& suite);
nlohmann::json suite_to_json(const SuiteConfig& config);

/// FNV-1a over the compact JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Method names in the order they appear in reports.
std::vector<std::string> suite_methods(const std::string& suite);

struct MethodOutcome {
  std::string method;
  EvalReport report;  // unfused entries, plus fused entries for multi-domain models
  int best_iteration = 0;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<MethodOutcome> methods;
  CurveLog naive_curve;                   // exclusive suite
  std::optional<RatioHistogram> shrinkage; // coarse_fine suite

  const MethodOutcome& method(const std::string& name) const;
};

struct SummaryRow {
  std::string method;
  std::string domain;
  std::string protocol;
  RecallMap median;
};

struct SuiteOutcome {
  SuiteConfig config;
  std::string hash;
  std::vector<SeedOutcome> seeds;

  /// One row per method and domain with median R@k over seeds. Specialists
  /// report the unfused protocol, exclusive-suite universal models the fused
  /// one, coarse_fine models the unfused one.
  std::vector<SummaryRow> summary() const;
};

/// Runs one seed of a suite. Deterministic in (config, seed).
SeedOutcome run_seed(const SuiteConfig& config, std::uint64_t seed);

/// Runs seeds 1..n_seeds, spreading seeds over `workers` threads. The
/// outcome does not depend on the worker count.
SuiteOutcome run_suite(const SuiteConfig& config, int n_seeds, int workers = 1);

void write_summary_csv(const SuiteOutcome& outcome, std::ostream& out);
void write_summary_markdown(const SuiteOutcome& outcome, std::ostream& out);
/// Every (seed, method, domain, protocol) recall row.
void write_per_seed_csv(const SuiteOutcome& outcome, std::ostream& out);

/// Writes summary.csv, summary.md, per_seed.csv, suite.json and per-seed
/// curve/histogram files into `dir`.
void write_suite_outputs(const SuiteOutcome& outcome, const std::string& dir);

}  // namespace uniembed
