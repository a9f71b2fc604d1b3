#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "uniembed/geometry.hpp"
#include "uniembed/model.hpp"
#include "uniembed/rng.hpp"
#include "uniembed/synthdata.hpp"
#include "uniembed/types.hpp"

namespace uniembed {

/// Maps raw features to unit-norm embeddings.
using Embedder = std::function<Matrix(const Matrix&)>;

Embedder embedder_for(const EmbeddingModel& model);

inline const std::vector<int> kDefaultRecallKs = {1, 2, 4, 8};

using RecallMap = std::map<int, double>;

/// Recall@k for each k in `ks`. A query succeeds at k when any of its k
/// nearest gallery items (Euclidean, ties broken by gallery index) shares its
/// label. With `self_offset`, query i is gallery row `*self_offset + i` and
/// is excluded from its own neighbor list. Every k must be smaller than the
/// usable gallery size.
RecallMap recall_at_k(const Matrix& query, std::span<const int> query_labels, const Matrix& gallery,
                      std::span<const int> gallery_labels, std::span<const int> ks,
                      std::optional<std::size_t> self_offset = std::nullopt);

struct DomainRecall {
  std::string domain;
  std::string protocol;  // "unfused" | "fused"
  RecallMap recall;
  std::size_t queries = 0;
  std::size_t gallery = 0;
  bool self_excluded = true;
};

struct EvalReport {
  std::string model_id;
  std::uint64_t seed = 0;
  std::string gallery;  // gallery composition, e.g. "birds+cars+clothes"
  std::vector<DomainRecall> entries;

  const DomainRecall& at(const std::string& domain, const std::string& protocol) const;
  double r1(const std::string& domain, const std::string& protocol) const {
    return at(domain, protocol).recall.at(1);
  }
};

nlohmann::json report_to_json(const EvalReport& report);

/// Per-domain recall with each domain's eval set as its own gallery
/// (probe/gallery domains: probes against their gallery).
EvalReport unfused_recall(const Embedder& embed, const std::vector<DomainDataset>& datasets,
                          std::span<const int> ks = kDefaultRecallKs);

/// Per-domain recall against the union of every domain's eval set (gallery
/// set for probe/gallery domains). Self matches are excluded for domains
/// whose queries live in the gallery.
EvalReport fused_recall(const Embedder& embed, const std::vector<DomainDataset>& datasets,
                        std::span<const int> ks = kDefaultRecallKs);

/// Recall of one domain under the unfused protocol.
DomainRecall domain_recall(const Embedder& embed, const DomainDataset& dataset,
                           std::span<const int> ks = kDefaultRecallKs);

// ---------------------------------------------------------------------------
// Concatenation + PCA baseline

/// Concatenates the unit-norm outputs of several specialists, rotates into
/// the leading principal directions fitted on `fit_features`, and
/// re-normalizes. The PCA basis is fitted on centered data but applied to
/// the raw concatenation, so a full-rank basis is an isometry.
class ConcatPcaEmbedder {
 public:
  ConcatPcaEmbedder(std::vector<EmbeddingModel> specialists, const Matrix& fit_features, std::size_t out_dim);

  Matrix operator()(const Matrix& x) const;
  Matrix concatenate(const Matrix& x) const;

  const PcaResult& basis() const noexcept { return pca_; }

 private:
  std::vector<EmbeddingModel> specialists_;
  PcaResult pca_;
};

// ---------------------------------------------------------------------------
// Diagnostics

enum class PairFilter { kInterClass, kIntraClass, kAll };

PairFilter parse_pair_filter(const std::string& name);
std::string to_string(PairFilter filter);

struct RatioHistogram {
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
  double fraction_below_1 = 0.0;
  std::size_t pairs = 0;    // kept pairs, equals the sum of counts
  std::size_t dropped = 0;  // pairs whose denominator was below 1e-9
  PairFilter filter = PairFilter::kInterClass;

  double iqr() const noexcept { return q75 - q25; }
};

nlohmann::json histogram_to_json(const RatioHistogram& hist);

/// Histogram of |A(x_i) - A(x_j)| / |B(x_i) - B(x_j)| over `n_pairs` random
/// pairs of the dataset's `split` that satisfy `filter`. Bins are uniform
/// over [0, 99.5th percentile]; the last bin extends to the largest ratio.
RatioHistogram distance_ratio_hist(const Embedder& model_a, const Embedder& model_b,
                                   const DomainDataset& dataset, PairFilter filter, std::size_t n_pairs,
                                   std::size_t bins, Rng& rng, Split split = Split::kEval);

/// Descending covariance eigenvalues of the eval-split embeddings.
Vector pca_spectrum(const Embedder& embed, const DomainDataset& dataset);

}  // namespace uniembed
