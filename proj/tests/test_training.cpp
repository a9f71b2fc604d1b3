#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "fixtures.hpp"
#include "uniembed/errors.hpp"
#include "uniembed/training.hpp"

using namespace uniembed;

namespace {

TrainConfig small_config(std::size_t dim, int iterations) {
  TrainConfig c;
  c.iterations = iterations;
  c.eval_every = 50;
  c.model = {dim, {}, 16};
  c.batch.classes_per_batch = 4;
  c.batch.samples_per_class = 4;
  c.adam.learning_rate = 1e-3;
  return c;
}

double max_param_diff(const EmbeddingModel& a, const EmbeddingModel& b) {
  double m = 0.0;
  for (std::size_t l = 0; l < a.layers().size(); ++l) {
    m = std::max(m, (a.layers()[l].weight - b.layers()[l].weight).cwiseAbs().maxCoeff());
    m = std::max(m, (a.layers()[l].bias - b.layers()[l].bias).cwiseAbs().maxCoeff());
  }
  return m;
}

}  // namespace

TEST_CASE("zero iterations return the initial model") {
  const auto data = generate_exclusive(default_easy_scenario(1));
  const TrainConfig c = small_config(16, 0);
  const TrainResult r = train_specialist(data[0], c);
  Rng init = Rng(c.seed).split(11);
  CHECK(r.last == EmbeddingModel::random(c.model, init));
  CHECK(r.best == r.last);
  CHECK(r.curve.iterations() == std::vector<int>{0});
}

TEST_CASE("specialist on the easy scenario reaches R@1 0.95 within 2k iterations") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto data = generate_exclusive(default_easy_scenario(seed));
    TrainConfig c = small_config(16, 2000);
    c.eval_every = 100;
    c.seed = seed;
    const TrainResult r = train_specialist(data[0], c);
    CHECK(r.curve.r1_series("easy").front() < 0.6);
    CHECK(r.best_score >= 0.95);
    CHECK(domain_recall(embedder_for(r.best), data[0]).recall.at(1) == r.best_score);
  }
}

TEST_CASE("same seed gives identical curves and models") {
  const auto data = generate_exclusive(default_easy_scenario(2));
  const TrainConfig c = small_config(16, 300);
  const TrainResult a = train_specialist(data[0], c);
  const TrainResult b = train_specialist(data[0], c);
  CHECK(a.curve == b.curve);
  CHECK(a.last == b.last);
  TrainConfig other = c;
  other.seed = 2;
  CHECK_FALSE(train_specialist(data[0], other).curve == a.curve);
}

TEST_CASE("curve log: increasing iterations and csv layout") {
  const auto data = generate_exclusive(default_easy_scenario(3));
  TrainConfig c = small_config(16, 120);
  const TrainResult r = train_specialist(data[0], c);
  CHECK(r.curve.iterations() == std::vector<int>{0, 50, 100, 120});
  std::ostringstream out;
  r.curve.write_csv(out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,domain,recall_at_1,recall_at_2,recall_at_4,loss_avg");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
  CHECK(r.curve.points.front().loss_avg == 0.0);
  CHECK(r.curve.points.back().loss_avg > 0.0);
}

TEST_CASE("train config json: overlay, round trip and unknown keys") {
  const TrainConfig base = small_config(16, 10);
  const nlohmann::json j = train_config_to_json(base);
  CHECK(train_config_to_json(train_config_from_json(j)) == j);

  const TrainConfig c = train_config_from_json({{"loss", "snd"}, {"sigma", {{"policy", "fixed"}, {"sigma", 0.3}}}}, base);
  CHECK(c.loss == LossKind::kSnd);
  CHECK(c.sigma.kind == SigmaPolicy::Kind::kFixed);
  CHECK(c.sigma.sigma == 0.3);
  CHECK(c.iterations == 10);

  CHECK_THROWS_WITH_AS(train_config_from_json({{"iteratons", 5}}), doctest::Contains("iteratons"), ConfigError);
  CHECK_THROWS_WITH_AS(train_config_from_json({{"batch", {{"k", 5}}}}), doctest::Contains("batch.k"), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"loss", "contrastive"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"eval_every", 0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"iterations", "many"}}), ConfigError);
}

TEST_CASE("distillation validates its inputs") {
  const auto data = generate_exclusive(default_exclusive_scenario(1));
  TrainConfig c = small_config(32, 10);
  c.loss = LossKind::kSnd;
  Rng rng(1);
  const EmbeddingModel t = EmbeddingModel::random(c.model, rng);
  try {
    distill_universal({t, t}, data, c);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("clothes") != std::string::npos);
  }
  c.batch.policy = SamplingPolicy::kNaive;
  CHECK_THROWS_AS(distill_universal({t, t, t}, data, c), ConfigError);
  c.batch.policy = SamplingPolicy::kDomainSpecific;
  c.loss = LossKind::kTriplet;
  CHECK_THROWS_AS(distill_universal({t, t, t}, data, c), ConfigError);
  c.loss = LossKind::kRkd;
  const EmbeddingModel narrow = EmbeddingModel::random({8, {}, 16}, rng);
  CHECK_THROWS_AS(distill_universal({t, narrow, t}, data, c), ConfigError);
  c.loss = LossKind::kTriplet;
  CHECK_THROWS_AS(train_triplet(data, small_config(16, 10)), ConfigError);
}

TEST_CASE("self-distillation from the teacher is a fixed point") {
  const auto data = generate_exclusive(default_easy_scenario(4));
  TrainConfig c = small_config(16, 200);
  c.loss = LossKind::kSnd;
  // With a fixed teacher width and tau = 2 sigma^2 the student kernel equals
  // the teacher kernel, so Q = P when the student is the teacher.
  c.sigma.kind = SigmaPolicy::Kind::kFixed;
  c.sigma.sigma = 0.5;
  c.tau = 0.5;
  Rng rng(4);
  const EmbeddingModel teacher = EmbeddingModel::random(c.model, rng);
  const Matrix x = data[0].rows(data[0].indices(Split::kTrain)).topRows(16);
  CHECK(snd(teacher_distribution(teacher.embed(x), c.sigma), teacher.embed(x), c.tau).loss < 1e-12);

  // Adam rescales the residual rounding-level gradients to steps of order lr,
  // so the student hovers near the teacher rather than sitting on it.
  const TrainResult r = distill_universal({teacher}, data, c, teacher);
  const TrainResult cold = distill_universal({teacher}, data, c);
  for (std::size_t i = 1; i < r.curve.points.size(); ++i) {
    CHECK(r.curve.points[i].loss_avg < 1e-3);
    CHECK(r.curve.points[i].loss_avg * 50 < cold.curve.points[i].loss_avg);
  }
  CHECK(max_param_diff(r.last, teacher) < 10 * c.adam.learning_rate);

  c.loss = LossKind::kRkd;
  const TrainResult rkd = distill_universal({teacher}, data, c, teacher);
  CHECK(max_param_diff(rkd.last, teacher) < 10 * c.adam.learning_rate);
}

TEST_CASE("universal distillation: frozen teachers and wiring control") {
  const auto data = generate_exclusive(default_exclusive_scenario(2));
  TrainConfig spec = small_config(32, 600);
  std::vector<EmbeddingModel> specialists;
  for (const auto& ds : data) specialists.push_back(train_specialist(ds, spec).best);
  const std::vector<EmbeddingModel> frozen = specialists;

  TrainConfig c = small_config(32, 1500);
  c.loss = LossKind::kSnd;
  c.snapshots = SnapshotProtocol::kFused;
  const TrainResult good = distill_universal(specialists, data, c);
  for (std::size_t d = 0; d < specialists.size(); ++d) CHECK(specialists[d] == frozen[d]);

  const std::vector<EmbeddingModel> permuted{specialists[1], specialists[2], specialists[0]};
  const TrainResult bad = distill_universal(permuted, data, c);
  MESSAGE("fused mean R@1 correct=" << good.best_score << " permuted=" << bad.best_score);
  CHECK(good.best_score > bad.best_score + 0.05);
}

TEST_CASE("coarse_fine with zero fine weight is plain triplet training on coarse") {
  auto sc = default_coarse_fine_scenario(1);
  sc.coarse_fine.coarse.train_classes = 10;
  sc.coarse_fine.coarse.eval_classes = 10;
  const auto d = generate_coarse_fine(sc);
  TrainConfig c = small_config(32, 200);
  c.loss = LossKind::kSnd;
  c.batch.upweight_factor = 0.0;
  Rng rng(3);
  const EmbeddingModel fine_teacher = EmbeddingModel::random(c.model, rng);
  const TrainResult mixed = distill_coarse_fine(d.coarse, d.fine, fine_teacher, c);

  TrainConfig plain = c;
  plain.loss = LossKind::kTriplet;
  plain.batch.policy = SamplingPolicy::kUpweighted;
  plain.batch.upweighted_domains = {1};
  const TrainResult triplet = train_triplet({d.coarse, d.fine}, plain);
  CHECK(mixed.last == triplet.last);
  CHECK(mixed.curve == triplet.curve);
}

TEST_CASE("coarse_fine control: widely spread sub-classes are solved by the coarse specialist") {
  auto sc = default_coarse_fine_scenario(1);
  sc.coarse_fine.fine_spread = 6.0;
  const auto d = generate_coarse_fine(sc);
  const TrainResult coarse = train_specialist(d.coarse, small_config(32, 500));
  CHECK(domain_recall(embedder_for(coarse.best), d.fine).recall.at(1) > 0.9);
}

TEST_CASE("non-finite features abort training with the last good model") {
  auto data = generate_exclusive(default_easy_scenario(5));
  for (std::size_t i = 0; i < data[0].size(); ++i) {
    if (data[0].splits[i] == Split::kTrain) data[0].features(static_cast<Eigen::Index>(i), 0) = std::nan("");
  }
  const TrainConfig c = small_config(16, 50);
  try {
    train_specialist(data[0], c);
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.iteration() == 1);
    Rng init = Rng(c.seed).split(11);
    CHECK(e.last_good() == EmbeddingModel::random(c.model, init));
  }
}
