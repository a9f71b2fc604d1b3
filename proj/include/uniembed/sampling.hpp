#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "uniembed/rng.hpp"
#include "uniembed/synthdata.hpp"

namespace uniembed {

enum class SamplingPolicy {
  kNaive,           // classes from all domains mixed in one batch
  kDomainSpecific,  // one domain per batch, chosen proportionally to its size
  kBalanced,        // one domain per batch, chosen uniformly
  kUpweighted,      // like kDomainSpecific with listed domains' sizes multiplied
};

SamplingPolicy parse_policy(const std::string& name);
std::string to_string(SamplingPolicy policy);

struct BatchSpec {
  int classes_per_batch = 8;  // c
  int samples_per_class = 4;  // k
  SamplingPolicy policy = SamplingPolicy::kDomainSpecific;
  double upweight_factor = 10.0;
  std::vector<int> upweighted_domains;

  int batch_size() const noexcept { return classes_per_batch * samples_per_class; }
};

inline constexpr int kMixedDomain = -1;

struct SampleRef {
  int domain = 0;
  std::size_t index = 0;  // row in that domain's dataset
};

/// One mini-batch: c classes x k samples. `labels` are batch-local class
/// slots (0..c-1), unique per (domain, class) pair.
struct Batch {
  std::vector<SampleRef> samples;
  std::vector<int> labels;
  std::vector<int> class_ids;
  int domain = kMixedDomain;
};

/// Draws mini-batches from the train splits of a set of domains. Owns its
/// generator, so the batch sequence is a function of the seed alone.
class BatchSampler {
 public:
  /// Throws ConfigError if any domain that can be drawn has fewer than c
  /// train classes.
  BatchSampler(const std::vector<DomainDataset>& datasets, BatchSpec spec, std::uint64_t seed);

  Batch next();

  /// Probability of drawing each domain under a single-domain policy.
  const std::vector<double>& domain_probabilities() const noexcept { return domain_probs_; }
  const BatchSpec& spec() const noexcept { return spec_; }

 private:
  struct ClassPool {
    int class_id;
    std::vector<std::size_t> rows;
  };

  void fill_class(Batch& batch, int domain, const ClassPool& pool, int slot);
  std::size_t draw_weighted(const std::vector<double>& cumulative);

  BatchSpec spec_;
  Rng rng_;
  std::vector<std::vector<ClassPool>> pools_;  // per domain
  std::vector<double> domain_probs_;
  std::vector<double> domain_cumulative_;
};

}  // namespace uniembed
