#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uniembed/errors.hpp"
#include "uniembed/evaluation.hpp"
#include "uniembed/losses.hpp"
#include "uniembed/model.hpp"
#include "uniembed/sampling.hpp"
#include "uniembed/synthdata.hpp"

namespace uniembed {

enum class LossKind { kTriplet, kRkd, kSnd };

LossKind parse_loss(const std::string& name);
std::string to_string(LossKind loss);

/// How teacher-side kernel widths are chosen for SND.
struct SigmaPolicy {
  enum class Kind { kFixed, kPerplexity };
  Kind kind = Kind::kPerplexity;
  double sigma = 1.0;        // kFixed
  double perplexity = 12.0;  // kPerplexity; k * 3 with k = 4
  double tol = 1e-3;
};

enum class SnapshotProtocol { kUnfused, kFused };

struct TrainConfig {
  LossKind loss = LossKind::kTriplet;
  int iterations = 2000;
  int eval_every = 100;
  BatchSpec batch;
  AdamConfig adam;
  ModelConfig model;
  SigmaPolicy sigma;
  double tau = 1.0;    // student kernel denominator 2 sigma'^2
  double margin = 0.2; // triplet margin (squared distances)
  RkdOptions rkd;
  SnapshotProtocol snapshots = SnapshotProtocol::kUnfused;
  std::uint64_t seed = 1;
};

/// Overlays the fields present in `j` onto `base`. Unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json train_config_to_json(const TrainConfig& config);

struct CurvePoint {
  int iteration = 0;
  std::string domain;
  RecallMap recall;
  double loss_avg = 0.0;
};

/// Periodic per-domain eval recall plus the mean training loss since the
/// previous snapshot.
struct CurveLog {
  std::vector<CurvePoint> points;

  std::vector<int> iterations() const;
  std::vector<std::string> domains() const;
  /// R@1 series of one domain, aligned with iterations().
  std::vector<double> r1_series(const std::string& domain) const;

  /// CSV with header `iteration,domain,recall_at_1,recall_at_2,recall_at_4,loss_avg`.
  void write_csv(std::ostream& out) const;

  bool operator==(const CurveLog& other) const;
};

struct TrainResult {
  EmbeddingModel best;  // snapshot with the highest mean eval R@1
  EmbeddingModel last;
  CurveLog curve;
  int best_iteration = 0;
  double best_score = 0.0;
};

/// Raised when a loss or gradient turns non-finite. Carries the most recent
/// parameters that produced finite values.
class TrainingAborted : public NumericError {
 public:
  TrainingAborted(const std::string& what, EmbeddingModel last_good, int iteration)
      : NumericError(what), last_good_(std::move(last_good)), iteration_(iteration) {}

  const EmbeddingModel& last_good() const noexcept { return last_good_; }
  int iteration() const noexcept { return iteration_; }

 private:
  EmbeddingModel last_good_;
  int iteration_;
};

/// Triplet semi-hard training over one or more domains with the configured
/// sampling policy (naive fusion, DS and BAL baselines).
TrainResult train_triplet(const std::vector<DomainDataset>& datasets, const TrainConfig& config);

/// Triplet semi-hard training on a single domain.
TrainResult train_specialist(const DomainDataset& dataset, const TrainConfig& config);

/// Distills one frozen specialist per domain into a single student with SND
/// or RKD. Every batch is drawn from a single domain and compared against
/// that domain's specialist. `init` overrides the random student init.
TrainResult distill_universal(const std::vector<EmbeddingModel>& specialists,
                              const std::vector<DomainDataset>& datasets, const TrainConfig& config,
                              const std::optional<EmbeddingModel>& init = std::nullopt);

/// Coarse+fine unification: coarse-domain batches train with triplet
/// semi-hard on coarse labels, fine-domain batches distill from the frozen
/// fine specialist. The fine domain's sampling weight is multiplied by
/// `config.batch.upweight_factor`.
TrainResult distill_coarse_fine(const DomainDataset& coarse, const DomainDataset& fine,
                                const EmbeddingModel& fine_specialist, const TrainConfig& config);

/// Teacher distribution for one batch under the configured sigma policy.
NeighborDistribution teacher_distribution(const Matrix& teacher_embeddings, const SigmaPolicy& policy);

}  // namespace uniembed
