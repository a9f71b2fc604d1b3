#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "uniembed/types.hpp"

namespace uniembed {

enum class Split { kTrain, kEval };

// Eval-split sub-role for probe/gallery domains; kNone everywhere else.
enum class EvalRole { kNone, kProbe, kGallery };

/// One domain's samples. Train and eval classes are disjoint.
struct DomainDataset {
  int domain_id = 0;
  std::string name;
  Matrix features;  // n x feature_dim
  std::vector<int> class_ids;
  std::vector<Split> splits;
  std::vector<EvalRole> roles;

  std::size_t size() const noexcept { return class_ids.size(); }
  std::size_t feature_dim() const noexcept { return static_cast<std::size_t>(features.cols()); }

  /// True when the eval split is divided into probe and gallery sets.
  bool probe_gallery() const;

  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::size_t> indices(EvalRole role) const;
  Matrix rows(const std::vector<std::size_t>& idx) const;
  std::vector<int> labels(const std::vector<std::size_t>& idx) const;

  bool operator==(const DomainDataset& other) const = default;
};

/// Throws InputError unless train and eval class sets are disjoint and every
/// eval class has at least two samples.
void validate_zero_shot(const DomainDataset& dataset);

// ---------------------------------------------------------------------------
// Scenario configuration

/// Generation parameters for one domain.
///
/// Class centers sit in a `signal_dim`-dimensional subspace of the domain's
/// own `domain_dim`-dimensional block, drawn uniformly inside a ball of
/// radius `class_spread` around the domain center. Samples add isotropic
/// noise of std `cluster_std` on the signal subspace, `nuisance_std` on the
/// rest of the block, and `ambient_std` across the full feature space.
struct DomainSpec {
  std::string name;
  int train_classes = 10;
  int eval_classes = 10;
  int samples_per_class = 10;
  double cluster_std = 0.5;
  double separation = 6.0;
  double class_spread = 2.0;
  int domain_dim = 8;
  int signal_dim = 4;
  bool probe_gallery = false;
  double nuisance_std = 0.5;
};

/// Coarse+fine regime: a broad coarse domain, one of whose train classes is
/// a region populated by many fine sub-classes.
struct CoarseFineSpec {
  DomainSpec coarse;
  int fine_train_classes = 12;
  int fine_eval_classes = 12;
  int fine_samples_per_class = 10;
  int fine_signal_dim = 4;
  double fine_spread = 1.0;   // radius of the sub-class center ball
  double fine_std = 0.15;     // within-sub-class noise along the fine subspace
  double region_std = 0.3;    // noise of region samples inside the coarse block
  int region_samples = 80;    // coarse-labelled samples of the region class
};

struct ScenarioConfig {
  std::string regime = "exclusive";  // "exclusive" | "coarse_fine"
  std::uint64_t seed = 1;
  int feature_dim = 32;
  double ambient_std = 0.05;
  std::vector<DomainSpec> domains;  // exclusive regime
  CoarseFineSpec coarse_fine;       // coarse_fine regime
};

/// Parses and validates a scenario; missing required fields raise
/// ConfigError naming the field.
ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& config);

/// Built-in scenarios used by the experiment suites.
ScenarioConfig default_exclusive_scenario(std::uint64_t seed);
ScenarioConfig default_coarse_fine_scenario(std::uint64_t seed);
/// One well-separated domain with little nuisance noise.
ScenarioConfig default_easy_scenario(std::uint64_t seed);

std::vector<DomainDataset> generate_exclusive(const ScenarioConfig& config);

struct CoarseFineData {
  DomainDataset coarse;
  DomainDataset fine;
};

CoarseFineData generate_coarse_fine(const ScenarioConfig& config);

/// Dispatches on `config.regime`; coarse_fine returns {coarse, fine}.
std::vector<DomainDataset> generate(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Dataset files

void write_dataset(std::ostream& out, const DomainDataset& dataset);
DomainDataset read_dataset(std::istream& in);

void save_dataset(const DomainDataset& dataset, const std::filesystem::path& path);
DomainDataset load_dataset(const std::filesystem::path& path);

}  // namespace uniembed
