#include "uniembed/sampling.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "uniembed/errors.hpp"

namespace uniembed {

SamplingPolicy parse_policy(const std::string& name) {
  if (name == "naive") return SamplingPolicy::kNaive;
  if (name == "ds") return SamplingPolicy::kDomainSpecific;
  if (name == "bal") return SamplingPolicy::kBalanced;
  if (name == "upweighted") return SamplingPolicy::kUpweighted;
  throw ConfigError("unknown sampling policy '" + name + "'");
}

std::string to_string(SamplingPolicy policy) {
  switch (policy) {
    case SamplingPolicy::kNaive: return "naive";
    case SamplingPolicy::kDomainSpecific: return "ds";
    case SamplingPolicy::kBalanced: return "bal";
    case SamplingPolicy::kUpweighted: return "upweighted";
  }
  return "unknown";
}

namespace {

std::vector<double> cumulative(const std::vector<double>& weights) {
  std::vector<double> out(weights.size());
  std::partial_sum(weights.begin(), weights.end(), out.begin());
  return out;
}

}  // namespace

BatchSampler::BatchSampler(const std::vector<DomainDataset>& datasets, BatchSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)), rng_(seed) {
  if (spec_.classes_per_batch < 2 || spec_.samples_per_class < 2) {
    throw ConfigError("batch spec: need c >= 2 and k >= 2");
  }
  if (datasets.empty()) throw ConfigError("sampler: no datasets");
  if (spec_.policy == SamplingPolicy::kUpweighted && !(spec_.upweight_factor >= 0.0)) {
    throw ConfigError("batch spec: upweight factor must be non-negative");
  }

  std::vector<double> weights;
  std::size_t total_classes = 0;
  for (const auto& ds : datasets) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (auto i : ds.indices(Split::kTrain)) by_class[ds.class_ids[i]].push_back(i);
    std::vector<ClassPool> pools;
    std::size_t count = 0;
    for (auto& [cls, rows] : by_class) {
      count += rows.size();
      pools.push_back({cls, std::move(rows)});
    }
    total_classes += pools.size();
    pools_.push_back(std::move(pools));
    weights.push_back(static_cast<double>(count));
  }

  for (const int d : spec_.upweighted_domains) {
    if (d < 0 || static_cast<std::size_t>(d) >= datasets.size()) {
      throw ConfigError("batch spec: upweighted domain " + std::to_string(d) + " does not exist");
    }
  }
  switch (spec_.policy) {
    case SamplingPolicy::kBalanced:
      for (auto& w : weights) w = w > 0.0 ? 1.0 : 0.0;
      break;
    case SamplingPolicy::kUpweighted:
      for (const int d : spec_.upweighted_domains) weights[static_cast<std::size_t>(d)] *= spec_.upweight_factor;
      break;
    default:
      break;
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0.0)) throw ConfigError("sampler: no train samples to draw from");
  for (auto& w : weights) w /= total;
  domain_probs_ = weights;
  domain_cumulative_ = cumulative(weights);

  const auto c = static_cast<std::size_t>(spec_.classes_per_batch);
  if (spec_.policy == SamplingPolicy::kNaive) {
    if (total_classes < c) {
      throw ConfigError("sampler: only " + std::to_string(total_classes) + " train classes for c=" +
                        std::to_string(c));
    }
    return;
  }
  for (std::size_t d = 0; d < pools_.size(); ++d) {
    if (domain_probs_[d] > 0.0 && pools_[d].size() < c) {
      throw ConfigError("sampler: domain '" + datasets[d].name + "' has " + std::to_string(pools_[d].size()) +
                        " train classes, fewer than c=" + std::to_string(c));
    }
  }
}

std::size_t BatchSampler::draw_weighted(const std::vector<double>& cum) {
  const double u = rng_.uniform() * cum.back();
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return std::min(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
}

void BatchSampler::fill_class(Batch& batch, int domain, const ClassPool& pool, int slot) {
  const auto k = static_cast<std::size_t>(spec_.samples_per_class);
  std::vector<std::size_t> picks;
  if (pool.rows.size() >= k) {
    // Partial Fisher-Yates over a copy: k distinct rows.
    std::vector<std::size_t> rows = pool.rows;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng_.index(rows.size() - i);
      std::swap(rows[i], rows[j]);
      picks.push_back(rows[i]);
    }
  } else {
    for (std::size_t i = 0; i < k; ++i) picks.push_back(pool.rows[rng_.index(pool.rows.size())]);
  }
  for (const auto row : picks) {
    batch.samples.push_back({domain, row});
    batch.labels.push_back(slot);
    batch.class_ids.push_back(pool.class_id);
  }
}

Batch BatchSampler::next() {
  Batch batch;
  const int c = spec_.classes_per_batch;
  if (spec_.policy == SamplingPolicy::kNaive) {
    // c distinct (domain, class) pairs, each drawn with probability
    // proportional to its train-sample count among the remaining pairs.
    std::vector<std::pair<int, std::size_t>> pairs;
    std::vector<double> weights;
    for (std::size_t d = 0; d < pools_.size(); ++d) {
      for (std::size_t p = 0; p < pools_[d].size(); ++p) {
        pairs.emplace_back(static_cast<int>(d), p);
        weights.push_back(static_cast<double>(pools_[d][p].rows.size()));
      }
    }
    std::vector<int> domains_seen;
    for (int slot = 0; slot < c; ++slot) {
      const std::size_t pick = draw_weighted(cumulative(weights));
      weights[pick] = 0.0;
      const auto [d, p] = pairs[pick];
      fill_class(batch, d, pools_[static_cast<std::size_t>(d)][p], slot);
      domains_seen.push_back(d);
    }
    const bool single = std::all_of(domains_seen.begin(), domains_seen.end(),
                                    [&](int d) { return d == domains_seen.front(); });
    batch.domain = single ? domains_seen.front() : kMixedDomain;
    return batch;
  }

  const auto domain = static_cast<int>(draw_weighted(domain_cumulative_));
  const auto& pools = pools_[static_cast<std::size_t>(domain)];
  std::vector<std::size_t> order(pools.size());
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < c; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) + rng_.index(order.size() - static_cast<std::size_t>(i));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
    fill_class(batch, domain, pools[order[static_cast<std::size_t>(i)]], i);
  }
  batch.domain = domain;
  return batch;
}

}  // namespace uniembed
