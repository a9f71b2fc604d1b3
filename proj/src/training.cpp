#include "uniembed/training.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <ostream>
#include <set>

#include "uniembed/geometry.hpp"

namespace uniembed {

using nlohmann::json;

LossKind parse_loss(const std::string& name) {
  if (name == "triplet") return LossKind::kTriplet;
  if (name == "rkd") return LossKind::kRkd;
  if (name == "snd") return LossKind::kSnd;
  throw ConfigError("unknown loss '" + name + "'");
}

std::string to_string(LossKind loss) {
  switch (loss) {
    case LossKind::kTriplet: return "triplet";
    case LossKind::kRkd: return "rkd";
    case LossKind::kSnd: return "snd";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Config JSON

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& item : j.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
      throw ConfigError("unknown field '" + where + item.key() + "'");
    }
  }
}

}  // namespace

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  reject_unknown(j,
                 {"loss", "iterations", "eval_every", "batch", "learning_rate", "adam", "model", "sigma", "tau",
                  "margin", "rkd", "snapshots", "seed"},
                 "");
  if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
  read_field(j, "iterations", c.iterations);
  read_field(j, "eval_every", c.eval_every);
  read_field(j, "learning_rate", c.adam.learning_rate);
  read_field(j, "tau", c.tau);
  read_field(j, "margin", c.margin);
  read_field(j, "seed", c.seed);
  if (j.contains("batch")) {
    const json& b = j.at("batch");
    reject_unknown(b, {"classes_per_batch", "samples_per_class", "policy", "upweight_factor", "upweighted_domains"},
                   "batch.");
    read_field(b, "classes_per_batch", c.batch.classes_per_batch);
    read_field(b, "samples_per_class", c.batch.samples_per_class);
    if (b.contains("policy")) c.batch.policy = parse_policy(b.at("policy").get<std::string>());
    read_field(b, "upweight_factor", c.batch.upweight_factor);
    read_field(b, "upweighted_domains", c.batch.upweighted_domains);
  }
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    reject_unknown(a, {"learning_rate", "beta1", "beta2", "epsilon"}, "adam.");
    read_field(a, "learning_rate", c.adam.learning_rate);
    read_field(a, "beta1", c.adam.beta1);
    read_field(a, "beta2", c.adam.beta2);
    read_field(a, "epsilon", c.adam.epsilon);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, {"input_dim", "hidden", "output_dim"}, "model.");
    read_field(m, "input_dim", c.model.input_dim);
    read_field(m, "hidden", c.model.hidden);
    read_field(m, "output_dim", c.model.output_dim);
  }
  if (j.contains("sigma")) {
    const json& s = j.at("sigma");
    reject_unknown(s, {"policy", "sigma", "perplexity", "tol"}, "sigma.");
    if (s.contains("policy")) {
      const auto p = s.at("policy").get<std::string>();
      if (p == "fixed") {
        c.sigma.kind = SigmaPolicy::Kind::kFixed;
      } else if (p == "perplexity") {
        c.sigma.kind = SigmaPolicy::Kind::kPerplexity;
      } else {
        throw ConfigError("unknown sigma policy '" + p + "'");
      }
    }
    read_field(s, "sigma", c.sigma.sigma);
    read_field(s, "perplexity", c.sigma.perplexity);
    read_field(s, "tol", c.sigma.tol);
  }
  if (j.contains("rkd")) {
    const json& r = j.at("rkd");
    reject_unknown(r, {"penalty", "delta"}, "rkd.");
    if (r.contains("penalty")) {
      const auto p = r.at("penalty").get<std::string>();
      if (p == "huber") {
        c.rkd.penalty = RkdPenalty::kHuber;
      } else if (p == "l1") {
        c.rkd.penalty = RkdPenalty::kL1;
      } else {
        throw ConfigError("unknown rkd penalty '" + p + "'");
      }
    }
    read_field(r, "delta", c.rkd.delta);
  }
  if (j.contains("snapshots")) {
    const auto p = j.at("snapshots").get<std::string>();
    if (p == "fused") {
      c.snapshots = SnapshotProtocol::kFused;
    } else if (p == "unfused") {
      c.snapshots = SnapshotProtocol::kUnfused;
    } else {
      throw ConfigError("unknown snapshot protocol '" + p + "'");
    }
  }
  if (c.iterations < 0) throw ConfigError("iterations must be non-negative");
  if (c.eval_every < 1) throw ConfigError("eval_every must be positive");
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"loss", to_string(c.loss)},
          {"iterations", c.iterations},
          {"eval_every", c.eval_every},
          {"batch",
           {{"classes_per_batch", c.batch.classes_per_batch},
            {"samples_per_class", c.batch.samples_per_class},
            {"policy", to_string(c.batch.policy)},
            {"upweight_factor", c.batch.upweight_factor},
            {"upweighted_domains", c.batch.upweighted_domains}}},
          {"adam",
           {{"learning_rate", c.adam.learning_rate},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"epsilon", c.adam.epsilon}}},
          {"model", {{"input_dim", c.model.input_dim}, {"hidden", c.model.hidden}, {"output_dim", c.model.output_dim}}},
          {"sigma",
           {{"policy", c.sigma.kind == SigmaPolicy::Kind::kFixed ? "fixed" : "perplexity"},
            {"sigma", c.sigma.sigma},
            {"perplexity", c.sigma.perplexity},
            {"tol", c.sigma.tol}}},
          {"tau", c.tau},
          {"margin", c.margin},
          {"rkd", {{"penalty", c.rkd.penalty == RkdPenalty::kHuber ? "huber" : "l1"}, {"delta", c.rkd.delta}}},
          {"snapshots", c.snapshots == SnapshotProtocol::kFused ? "fused" : "unfused"},
          {"seed", c.seed}};
}

// ---------------------------------------------------------------------------
// CurveLog

std::vector<int> CurveLog::iterations() const {
  std::vector<int> out;
  for (const auto& p : points) {
    if (out.empty() || out.back() != p.iteration) out.push_back(p.iteration);
  }
  return out;
}

std::vector<std::string> CurveLog::domains() const {
  std::vector<std::string> out;
  for (const auto& p : points) {
    if (std::find(out.begin(), out.end(), p.domain) == out.end()) out.push_back(p.domain);
  }
  return out;
}

std::vector<double> CurveLog::r1_series(const std::string& domain) const {
  std::vector<double> out;
  for (const auto& p : points) {
    if (p.domain == domain) out.push_back(p.recall.at(1));
  }
  return out;
}

void CurveLog::write_csv(std::ostream& out) const {
  out << "iteration,domain,recall_at_1,recall_at_2,recall_at_4,loss_avg\n";
  char buf[160];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%.6f,%.6f,%.9g\n", p.iteration, p.domain.c_str(), p.recall.at(1),
                  p.recall.at(2), p.recall.at(4), p.loss_avg);
    out << buf;
  }
}

bool CurveLog::operator==(const CurveLog& other) const {
  if (points.size() != other.points.size()) return false;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& a = points[i];
    const auto& b = other.points[i];
    if (a.iteration != b.iteration || a.domain != b.domain || a.recall != b.recall || a.loss_avg != b.loss_avg) {
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Training loop

NeighborDistribution teacher_distribution(const Matrix& teacher_embeddings, const SigmaPolicy& policy) {
  const DistanceMatrix d = pairwise_sq_dist(teacher_embeddings);
  if (policy.kind == SigmaPolicy::Kind::kFixed) return neighbor_probs(d, policy.sigma);
  return calibrated_neighbor_probs(d, policy.perplexity, {policy.tol, 100});
}

namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kSamplerStream = 12;

Matrix gather(const std::vector<DomainDataset>& datasets, const Batch& batch) {
  const auto dim = static_cast<Eigen::Index>(datasets.front().feature_dim());
  Matrix x(static_cast<Eigen::Index>(batch.samples.size()), dim);
  for (std::size_t r = 0; r < batch.samples.size(); ++r) {
    const auto& ref = batch.samples[r];
    x.row(static_cast<Eigen::Index>(r)) =
        datasets[static_cast<std::size_t>(ref.domain)].features.row(static_cast<Eigen::Index>(ref.index));
  }
  return x;
}

void check_inputs(const std::vector<DomainDataset>& datasets, const TrainConfig& config) {
  if (datasets.empty()) throw ConfigError("training: no datasets");
  for (const auto& ds : datasets) {
    if (ds.feature_dim() != config.model.input_dim) {
      throw ConfigError("training: dataset '" + ds.name + "' has " + std::to_string(ds.feature_dim()) +
                        " features but the model expects " + std::to_string(config.model.input_dim));
    }
    if (ds.indices(Split::kTrain).empty()) throw ConfigError("training: dataset '" + ds.name + "' has no train split");
  }
  if (config.iterations < 0 || config.eval_every < 1) throw ConfigError("training: invalid iteration schedule");
}

// Computes the per-batch loss and dloss/dembeddings for the student.
using BatchObjective = std::function<LossResult(const Batch&, const Matrix& x, const Matrix& student)>;

TrainResult run_loop(const std::vector<DomainDataset>& datasets, const TrainConfig& config, EmbeddingModel model,
                     const BatchObjective& objective) {
  const Rng root(config.seed);
  BatchSampler sampler(datasets, config.batch, root.split(kSamplerStream).seed());
  AdamOptimizer adam(model, config.adam);

  TrainResult result;
  result.best = model;
  result.best_score = -1.0;
  double loss_sum = 0.0;
  int loss_count = 0;

  const auto snapshot = [&](int iteration) {
    const Embedder embed = embedder_for(model);
    const EvalReport report = config.snapshots == SnapshotProtocol::kFused ? fused_recall(embed, datasets)
                                                                            : unfused_recall(embed, datasets);
    const double loss_avg = loss_count > 0 ? loss_sum / loss_count : 0.0;
    double mean_r1 = 0.0;
    for (const auto& e : report.entries) {
      result.curve.points.push_back({iteration, e.domain, e.recall, loss_avg});
      mean_r1 += e.recall.at(1);
    }
    mean_r1 /= static_cast<double>(report.entries.size());
    if (mean_r1 > result.best_score) {
      result.best_score = mean_r1;
      result.best = model;
      result.best_iteration = iteration;
    }
    loss_sum = 0.0;
    loss_count = 0;
  };

  snapshot(0);
  for (int it = 1; it <= config.iterations; ++it) {
    const Batch batch = sampler.next();
    const Matrix x = gather(datasets, batch);
    ForwardPass pass;
    LossResult loss;
    try {
      pass = forward(model, x);
      loss = objective(batch, x, pass.embeddings);
    } catch (const NumericError& e) {
      throw TrainingAborted(std::string(e.what()) + " at iteration " + std::to_string(it), model, it);
    }
    if (!std::isfinite(loss.loss) || !loss.grad.allFinite()) {
      throw TrainingAborted("training: non-finite loss at iteration " + std::to_string(it), model, it);
    }
    const ParamGrads grads = backward(model, pass, loss.grad);
    const EmbeddingModel before = model;
    try {
      adam.step(model, grads);
    } catch (const NumericError& e) {
      throw TrainingAborted(e.what(), before, it);
    }
    loss_sum += loss.loss;
    ++loss_count;
    if (it % config.eval_every == 0 || it == config.iterations) snapshot(it);
  }
  result.last = model;
  return result;
}

EmbeddingModel initial_model(const TrainConfig& config) {
  Rng rng = Rng(config.seed).split(kInitStream);
  return EmbeddingModel::random(config.model, rng);
}

LossResult distill_loss(const Matrix& teacher, const Matrix& student, const TrainConfig& config) {
  if (config.loss == LossKind::kSnd) return snd(teacher_distribution(teacher, config.sigma), student, config.tau);
  return rkd_distance(teacher, student, config.rkd);
}

void require_single_domain_policy(const TrainConfig& config) {
  if (config.batch.policy == SamplingPolicy::kNaive) {
    throw ConfigError("distillation needs single-domain batches; naive sampling is not allowed");
  }
}

}  // namespace

TrainResult train_triplet(const std::vector<DomainDataset>& datasets, const TrainConfig& config) {
  check_inputs(datasets, config);
  if (config.loss != LossKind::kTriplet) throw ConfigError("train_triplet: loss must be triplet");
  const auto objective = [&](const Batch& batch, const Matrix&, const Matrix& s) {
    return triplet_semihard(s, batch.labels, config.margin);
  };
  return run_loop(datasets, config, initial_model(config), objective);
}

TrainResult train_specialist(const DomainDataset& dataset, const TrainConfig& config) {
  TrainConfig c = config;
  c.batch.policy = SamplingPolicy::kDomainSpecific;
  c.snapshots = SnapshotProtocol::kUnfused;
  return train_triplet({dataset}, c);
}

TrainResult distill_universal(const std::vector<EmbeddingModel>& specialists,
                              const std::vector<DomainDataset>& datasets, const TrainConfig& config,
                              const std::optional<EmbeddingModel>& init) {
  check_inputs(datasets, config);
  if (config.loss == LossKind::kTriplet) throw ConfigError("distill_universal: loss must be snd or rkd");
  require_single_domain_policy(config);
  if (specialists.size() != datasets.size()) {
    std::string missing;
    for (std::size_t d = specialists.size(); d < datasets.size(); ++d) missing += " " + datasets[d].name;
    throw ConfigError("distill_universal: " + std::to_string(datasets.size()) + " domains but " +
                      std::to_string(specialists.size()) + " specialists" +
                      (missing.empty() ? std::string() : "; missing:" + missing));
  }
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    if (specialists[d].input_dim() != datasets[d].feature_dim()) {
      throw ConfigError("distill_universal: specialist for '" + datasets[d].name + "' expects " +
                        std::to_string(specialists[d].input_dim()) + " features");
    }
  }
  const auto objective = [&](const Batch& batch, const Matrix& x, const Matrix& s) {
    if (batch.domain == kMixedDomain) throw InputError("distill_universal: mixed-domain batch");
    const Matrix teacher = specialists[static_cast<std::size_t>(batch.domain)].embed(x);
    return distill_loss(teacher, s, config);
  };
  return run_loop(datasets, config, init ? *init : initial_model(config), objective);
}

TrainResult distill_coarse_fine(const DomainDataset& coarse, const DomainDataset& fine,
                                const EmbeddingModel& fine_specialist, const TrainConfig& config) {
  const std::vector<DomainDataset> datasets{coarse, fine};
  check_inputs(datasets, config);
  if (config.loss == LossKind::kTriplet) throw ConfigError("distill_coarse_fine: fine-domain loss must be snd or rkd");
  if (fine_specialist.input_dim() != fine.feature_dim()) {
    throw ConfigError("distill_coarse_fine: fine specialist input dim does not match the fine dataset");
  }
  TrainConfig c = config;
  c.batch.policy = SamplingPolicy::kUpweighted;
  c.batch.upweighted_domains = {1};
  const auto objective = [&](const Batch& batch, const Matrix& x, const Matrix& s) {
    if (batch.domain == 0) return triplet_semihard(s, batch.labels, c.margin);
    if (batch.domain != 1) throw InputError("distill_coarse_fine: unexpected batch domain");
    return distill_loss(fine_specialist.embed(x), s, c);
  };
  return run_loop(datasets, c, initial_model(c), objective);
}

}  // namespace uniembed
