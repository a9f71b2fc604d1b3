#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "uniembed/errors.hpp"
#include "uniembed/evaluation.hpp"
#include "uniembed/synthdata.hpp"

using namespace uniembed;

namespace {

std::string to_text(const DomainDataset& ds) {
  std::ostringstream out;
  write_dataset(out, ds);
  return out.str();
}

std::string parse_error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    read_dataset(in);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("default exclusive scenario: three zero-shot domains") {
  const auto data = generate_exclusive(default_exclusive_scenario(3));
  REQUIRE(data.size() == 3);
  CHECK(data[0].name == "birds");
  CHECK(data[2].probe_gallery());
  for (const auto& ds : data) {
    CHECK_NOTHROW(validate_zero_shot(ds));
    CHECK(ds.feature_dim() == 32);
    CHECK(!ds.indices(Split::kTrain).empty());
    CHECK(!ds.indices(Split::kEval).empty());
  }
  CHECK(data[2].indices(EvalRole::kProbe).size() == data[2].indices(EvalRole::kGallery).size());
}

TEST_CASE("generation is deterministic and seed dependent") {
  const auto a = generate_exclusive(default_exclusive_scenario(5));
  const auto b = generate_exclusive(default_exclusive_scenario(5));
  const auto c = generate_exclusive(default_exclusive_scenario(6));
  for (std::size_t d = 0; d < a.size(); ++d) {
    CHECK(to_text(a[d]) == to_text(b[d]));
    CHECK(to_text(a[d]) != to_text(c[d]));
  }
  const auto cf1 = generate_coarse_fine(default_coarse_fine_scenario(2));
  const auto cf2 = generate_coarse_fine(default_coarse_fine_scenario(2));
  CHECK(cf1.coarse == cf2.coarse);
  CHECK(cf1.fine == cf2.fine);
}

TEST_CASE("domains are separable by nearest centroid on raw features") {
  const auto data = generate_exclusive(default_exclusive_scenario(1));
  std::vector<RowVector> centroids;
  for (const auto& ds : data) centroids.push_back(ds.features.colwise().mean());
  for (std::size_t d = 0; d < data.size(); ++d) {
    for (Eigen::Index i = 0; i < data[d].features.rows(); ++i) {
      std::size_t best = 0;
      double best_dist = 1e300;
      for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double dist = (data[d].features.row(i) - centroids[c]).squaredNorm();
        if (dist < best_dist) {
          best_dist = dist;
          best = c;
        }
      }
      CHECK(best == d);
    }
  }
}

TEST_CASE("zero within-class noise collapses classes") {
  ScenarioConfig cfg = default_exclusive_scenario(1);
  cfg.ambient_std = 0.0;
  for (auto& d : cfg.domains) {
    d.cluster_std = 0.0;
    d.nuisance_std = 0.0;
  }
  const auto data = generate_exclusive(cfg);
  for (const auto& ds : data) {
    std::map<int, RowVector> first;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      const RowVector row = ds.features.row(static_cast<Eigen::Index>(i));
      const auto [it, inserted] = first.emplace(ds.class_ids[i], row);
      if (!inserted) CHECK((row - it->second).norm() < 1e-12);
    }
  }
  const Embedder identity = [](const Matrix& x) { return unit_normalize(x); };
  for (const auto& ds : data) CHECK(domain_recall(identity, ds).recall.at(1) == 1.0);
}

TEST_CASE("coarse_fine: the fine domain sits inside coarse class 0") {
  const auto data = generate_coarse_fine(default_coarse_fine_scenario(4));
  CHECK_NOTHROW(validate_zero_shot(data.coarse));
  CHECK_NOTHROW(validate_zero_shot(data.fine));
  CHECK(data.fine.name == "fine");
  CHECK(data.fine.domain_id == 1);
  // Region class mean is close to the fine-domain mean.
  std::vector<std::size_t> region;
  for (std::size_t i = 0; i < data.coarse.size(); ++i) {
    if (data.coarse.class_ids[i] == 0) region.push_back(i);
  }
  const RowVector region_mean = data.coarse.rows(region).colwise().mean();
  const RowVector fine_mean = data.fine.features.colwise().mean();
  CHECK((region_mean - fine_mean).norm() < 0.5);
  CHECK(data.coarse.splits[region.front()] == Split::kTrain);
}

TEST_CASE("scenario json round trip and missing fields") {
  const ScenarioConfig cfg = default_exclusive_scenario(9);
  const nlohmann::json j = scenario_to_json(cfg);
  const ScenarioConfig back = scenario_from_json(j);
  CHECK(scenario_to_json(back) == j);

  nlohmann::json missing = j;
  missing["domains"][1].erase("cluster_std");
  try {
    scenario_from_json(missing);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("domains[1].cluster_std") != std::string::npos);
  }
  nlohmann::json no_seed = j;
  no_seed.erase("seed");
  CHECK_THROWS_WITH_AS(scenario_from_json(no_seed), doctest::Contains("seed"), ConfigError);

  nlohmann::json too_wide = j;
  too_wide["feature_dim"] = 8;
  CHECK_THROWS_AS(scenario_from_json(too_wide), ConfigError);

  const nlohmann::json cf = scenario_to_json(default_coarse_fine_scenario(1));
  CHECK(scenario_to_json(scenario_from_json(cf)) == cf);
}

TEST_CASE("dataset files round trip exactly") {
  for (const auto& ds : generate(default_coarse_fine_scenario(3))) {
    std::istringstream in(to_text(ds));
    const DomainDataset back = read_dataset(in);
    CHECK(back == ds);
  }
  const auto data = generate_exclusive(default_exclusive_scenario(3));
  std::istringstream in(to_text(data[2]));
  CHECK(read_dataset(in) == data[2]);
}

TEST_CASE("dataset parse errors carry line numbers") {
  const std::string header = "uniembed-dataset v1 domain=0 fdim=2 n=2 name=x\n";
  CHECK(parse_error_of(header + "0 train 1 2\n1 eval 3\n").find("line 3") != std::string::npos);
  CHECK(parse_error_of(header + "0 train 1 2\n1 holdout 3 4\n").find("line 3") != std::string::npos);
  CHECK(parse_error_of(header + "0 train 1 zz\n1 eval 3 4\n").find("line 2") != std::string::npos);
  CHECK(parse_error_of("not-a-dataset\n").find("line 1") != std::string::npos);
  CHECK(parse_error_of(header + "0 train 1 2\n").find("n=2") != std::string::npos);
  CHECK(parse_error_of("").find("line 1") != std::string::npos);
}

TEST_CASE("empty eval split loads but evaluation rejects it") {
  std::istringstream in("uniembed-dataset v1 domain=0 fdim=2 n=2 name=x\n0 train 1 2\n1 train 3 4\n");
  const DomainDataset ds = read_dataset(in);
  CHECK(ds.size() == 2);
  const Embedder identity = [](const Matrix& x) { return unit_normalize(x); };
  CHECK_THROWS_AS(domain_recall(identity, ds), InputError);
}

TEST_CASE("validate_zero_shot catches overlapping and singleton classes") {
  Rng rng(1);
  DomainDataset ds = testsupport::make_dataset("x", 0, 2, 2, 3, 2, rng);
  CHECK_NOTHROW(validate_zero_shot(ds));
  ds.splits[0] = Split::kEval;
  CHECK_THROWS_AS(validate_zero_shot(ds), InputError);
  DomainDataset single = testsupport::make_dataset("y", 0, 2, 2, 3, 2, rng);
  single.splits.back() = Split::kTrain;
  single.class_ids.back() = 0;
  single.splits[single.size() - 2] = Split::kTrain;
  single.class_ids[single.size() - 2] = 0;
  CHECK_THROWS_AS(validate_zero_shot(single), InputError);
}
