#include "uniembed/synthdata.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "uniembed/errors.hpp"
#include "uniembed/rng.hpp"

namespace uniembed {

using nlohmann::json;

bool DomainDataset::probe_gallery() const {
  return std::any_of(roles.begin(), roles.end(), [](EvalRole r) { return r != EvalRole::kNone; });
}

std::vector<std::size_t> DomainDataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> DomainDataset::indices(EvalRole role) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < roles.size(); ++i) {
    if (splits[i] == Split::kEval && roles[i] == role) out.push_back(i);
  }
  return out;
}

Matrix DomainDataset::rows(const std::vector<std::size_t>& idx) const {
  Matrix out(static_cast<Eigen::Index>(idx.size()), features.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(idx[r]));
  }
  return out;
}

std::vector<int> DomainDataset::labels(const std::vector<std::size_t>& idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(class_ids[i]);
  return out;
}

void validate_zero_shot(const DomainDataset& dataset) {
  std::set<int> train;
  std::map<int, int> eval_counts;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset.splits[i] == Split::kTrain) {
      train.insert(dataset.class_ids[i]);
    } else {
      ++eval_counts[dataset.class_ids[i]];
    }
  }
  for (const auto& [cls, count] : eval_counts) {
    if (train.count(cls)) {
      throw InputError("dataset '" + dataset.name + "': class " + std::to_string(cls) +
                       " appears in both train and eval splits");
    }
    if (count < 2) {
      throw InputError("dataset '" + dataset.name + "': eval class " + std::to_string(cls) +
                       " has fewer than 2 samples");
    }
  }
}

// ---------------------------------------------------------------------------
// Scenario JSON

namespace {

template <typename T>
T required(const json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing field '" + where + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + where + key + "' has the wrong type");
  }
}

template <typename T>
T optional(const json& j, const char* key, T fallback, const std::string& where) {
  return j.contains(key) ? required<T>(j, key, where) : fallback;
}

DomainSpec domain_from_json(const json& j, const std::string& where) {
  DomainSpec d;
  d.name = required<std::string>(j, "name", where);
  d.train_classes = required<int>(j, "train_classes", where);
  d.eval_classes = required<int>(j, "eval_classes", where);
  d.samples_per_class = required<int>(j, "samples_per_class", where);
  d.cluster_std = required<double>(j, "cluster_std", where);
  d.separation = required<double>(j, "separation", where);
  d.nuisance_std = optional<double>(j, "nuisance_std", d.nuisance_std, where);
  d.class_spread = optional<double>(j, "class_spread", d.class_spread, where);
  d.domain_dim = optional<int>(j, "domain_dim", d.domain_dim, where);
  d.signal_dim = optional<int>(j, "signal_dim", d.signal_dim, where);
  d.probe_gallery = optional<bool>(j, "probe_gallery", false, where);
  return d;
}

json domain_to_json(const DomainSpec& d) {
  return {{"name", d.name},
          {"train_classes", d.train_classes},
          {"eval_classes", d.eval_classes},
          {"samples_per_class", d.samples_per_class},
          {"cluster_std", d.cluster_std},
          {"nuisance_std", d.nuisance_std},
          {"separation", d.separation},
          {"class_spread", d.class_spread},
          {"domain_dim", d.domain_dim},
          {"signal_dim", d.signal_dim},
          {"probe_gallery", d.probe_gallery}};
}

void validate_domain(const DomainSpec& d, const std::string& where) {
  if (d.name.empty() || d.name.find_first_of(" \t\n") != std::string::npos) {
    throw ConfigError(where + "name must be a non-empty token without whitespace");
  }
  if (d.train_classes < 2 || d.eval_classes < 2) throw ConfigError(where + "need >= 2 train and eval classes");
  if (d.samples_per_class < 2) throw ConfigError(where + "samples_per_class must be >= 2");
  if (d.probe_gallery && d.samples_per_class < 4) {
    throw ConfigError(where + "probe/gallery domains need samples_per_class >= 4");
  }
  if (!(d.separation > 0.0)) throw ConfigError(where + "separation must be positive");
  if (!(d.cluster_std >= 0.0) || !(d.nuisance_std >= 0.0) || !(d.class_spread >= 0.0)) throw ConfigError(where + "negative std or spread");
  if (d.signal_dim < 1 || d.signal_dim > d.domain_dim) {
    throw ConfigError(where + "signal_dim must lie in [1, domain_dim]");
  }
}

void validate_scenario(const ScenarioConfig& c) {
  if (c.feature_dim < 2) throw ConfigError("feature_dim must be >= 2");
  if (!(c.ambient_std >= 0.0)) throw ConfigError("ambient_std must be non-negative");
  if (c.regime == "exclusive") {
    if (c.domains.empty()) throw ConfigError("exclusive scenario needs at least one domain");
    int used = 0;
    for (std::size_t i = 0; i < c.domains.size(); ++i) {
      validate_domain(c.domains[i], "domains[" + std::to_string(i) + "].");
      used += 1 + c.domains[i].domain_dim;
    }
    if (used > c.feature_dim) {
      throw ConfigError("domains need " + std::to_string(used) + " feature dims but feature_dim is " +
                        std::to_string(c.feature_dim));
    }
  } else if (c.regime == "coarse_fine") {
    const auto& cf = c.coarse_fine;
    validate_domain(cf.coarse, "coarse_fine.coarse.");
    if (cf.fine_train_classes < 2 || cf.fine_eval_classes < 2 || cf.fine_samples_per_class < 2) {
      throw ConfigError("coarse_fine: need >= 2 fine classes per split and >= 2 samples per class");
    }
    if (cf.fine_signal_dim < 1) throw ConfigError("coarse_fine.fine_signal_dim must be >= 1");
    const int used = 1 + cf.coarse.domain_dim + cf.fine_signal_dim;
    if (used > c.feature_dim) {
      throw ConfigError("coarse_fine needs " + std::to_string(used) + " feature dims but feature_dim is " +
                        std::to_string(c.feature_dim));
    }
    if (cf.region_samples < 2) throw ConfigError("coarse_fine.region_samples must be >= 2");
  } else {
    throw ConfigError("unknown regime '" + c.regime + "'");
  }
}

}  // namespace

ScenarioConfig scenario_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario config must be a JSON object");
  ScenarioConfig c;
  c.regime = required<std::string>(j, "regime", "");
  c.seed = required<std::uint64_t>(j, "seed", "");
  c.feature_dim = required<int>(j, "feature_dim", "");
  c.ambient_std = optional<double>(j, "ambient_std", c.ambient_std, "");
  if (c.regime == "exclusive") {
    if (!j.contains("domains")) throw ConfigError("missing field 'domains'");
    const json& domains = j.at("domains");
    for (std::size_t i = 0; i < domains.size(); ++i) {
      c.domains.push_back(domain_from_json(domains[i], "domains[" + std::to_string(i) + "]."));
    }
  } else if (c.regime == "coarse_fine") {
    if (!j.contains("coarse_fine")) throw ConfigError("missing field 'coarse_fine'");
    const json& cf = j.at("coarse_fine");
    const std::string w = "coarse_fine.";
    if (!cf.contains("coarse")) throw ConfigError("missing field 'coarse_fine.coarse'");
    c.coarse_fine.coarse = domain_from_json(cf.at("coarse"), w + "coarse.");
    auto& f = c.coarse_fine;
    f.fine_train_classes = required<int>(cf, "fine_train_classes", w);
    f.fine_eval_classes = required<int>(cf, "fine_eval_classes", w);
    f.fine_samples_per_class = required<int>(cf, "fine_samples_per_class", w);
    f.fine_signal_dim = optional<int>(cf, "fine_signal_dim", f.fine_signal_dim, w);
    f.fine_spread = required<double>(cf, "fine_spread", w);
    f.fine_std = optional<double>(cf, "fine_std", f.fine_std, w);
    f.region_std = optional<double>(cf, "region_std", f.region_std, w);
    f.region_samples = optional<int>(cf, "region_samples", f.region_samples, w);
  }
  validate_scenario(c);
  return c;
}

json scenario_to_json(const ScenarioConfig& c) {
  json j = {{"regime", c.regime}, {"seed", c.seed}, {"feature_dim", c.feature_dim}, {"ambient_std", c.ambient_std}};
  if (c.regime == "exclusive") {
    j["domains"] = json::array();
    for (const auto& d : c.domains) j["domains"].push_back(domain_to_json(d));
  } else {
    const auto& f = c.coarse_fine;
    j["coarse_fine"] = {{"coarse", domain_to_json(f.coarse)},
                        {"fine_train_classes", f.fine_train_classes},
                        {"fine_eval_classes", f.fine_eval_classes},
                        {"fine_samples_per_class", f.fine_samples_per_class},
                        {"fine_signal_dim", f.fine_signal_dim},
                        {"fine_spread", f.fine_spread},
                        {"fine_std", f.fine_std},
                        {"region_std", f.region_std},
                        {"region_samples", f.region_samples}};
  }
  return j;
}

ScenarioConfig default_exclusive_scenario(std::uint64_t seed) {
  ScenarioConfig c;
  c.regime = "exclusive";
  c.seed = seed;
  c.feature_dim = 32;
  c.ambient_std = 0.05;
  DomainSpec birds{"birds", 4, 40, 20, 0.35, 6.0, 2.0, 8, 6, false, 1.5};
  DomainSpec cars{"cars", 8, 40, 20, 0.35, 6.0, 2.0, 8, 5, false, 1.5};
  DomainSpec clothes{"clothes", 60, 40, 20, 0.45, 6.0, 2.0, 8, 6, true, 1.5};
  c.domains = {birds, cars, clothes};
  return c;
}

ScenarioConfig default_easy_scenario(std::uint64_t seed) {
  ScenarioConfig c;
  c.regime = "exclusive";
  c.seed = seed;
  c.feature_dim = 16;
  c.ambient_std = 0.02;
  c.domains = {DomainSpec{"easy", 20, 20, 12, 0.15, 4.0, 3.0, 12, 4, false, 1.5}};
  return c;
}

ScenarioConfig default_coarse_fine_scenario(std::uint64_t seed) {
  ScenarioConfig c;
  c.regime = "coarse_fine";
  c.seed = seed;
  c.feature_dim = 32;
  c.ambient_std = 0.05;
  auto& f = c.coarse_fine;
  f.coarse = DomainSpec{"coarse", 100, 40, 20, 0.5, 6.0, 3.0, 10, 6, false, 1.0};
  f.fine_train_classes = 16;
  f.fine_eval_classes = 16;
  f.fine_samples_per_class = 12;
  f.fine_signal_dim = 4;
  f.fine_spread = 1.0;
  f.fine_std = 0.15;
  f.region_std = 0.3;
  f.region_samples = 96;
  return c;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

constexpr std::uint64_t kBasisStream = 1;
constexpr std::uint64_t kDomainStreamBase = 1000;

Matrix random_orthonormal(int dim, Rng& rng) {
  Matrix g(dim, dim);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int k = 0; k < dim; ++k) {
    if (r(k, k) < 0.0) q.col(k) = -q.col(k);
  }
  return q;
}

// Uniform point inside the ball of `radius` in span(basis columns).
RowVector ball_point(const Matrix& basis, double radius, Rng& rng) {
  const auto dim = basis.cols();
  Vector dir(dim);
  for (Eigen::Index i = 0; i < dim; ++i) dir(i) = rng.normal();
  const double r = radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(dim));
  dir *= r / dir.norm();
  return (basis * dir).transpose();
}

RowVector isotropic(const Matrix& basis, double stddev, Rng& rng) {
  Vector z(basis.cols());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = stddev * rng.normal();
  return (basis * z).transpose();
}

struct Layout {
  Matrix frame;  // feature_dim x feature_dim, orthonormal
  int next = 0;

  Matrix take(int count) {
    Matrix cols = frame.middleCols(next, count);
    next += count;
    return cols;
  }
};

// Within-class noise: independent isotropic Gaussians on a few subspaces.
struct NoiseTerm {
  const Matrix* basis;
  double stddev;
};
using ClassDraw = std::vector<NoiseTerm>;

void append_sample(DomainDataset& ds, Eigen::Index row, const RowVector& center, const ClassDraw& draw,
                   const Matrix& full, double ambient_std, Rng& rng) {
  RowVector x = center;
  for (const auto& term : draw) {
    if (term.basis->cols() > 0) x += isotropic(*term.basis, term.stddev, rng);
  }
  x += isotropic(full, ambient_std, rng);
  ds.features.row(row) = x;
}

void assign_roles(DomainDataset& ds, bool probe_gallery) {
  ds.roles.assign(ds.size(), EvalRole::kNone);
  if (!probe_gallery) return;
  std::map<int, int> seen;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.splits[i] != Split::kEval) continue;
    ds.roles[i] = (seen[ds.class_ids[i]]++ % 2 == 0) ? EvalRole::kProbe : EvalRole::kGallery;
  }
}

}  // namespace

std::vector<DomainDataset> generate_exclusive(const ScenarioConfig& config) {
  if (config.regime != "exclusive") throw ConfigError("generate_exclusive: regime is '" + config.regime + "'");
  validate_scenario(config);
  const Rng root(config.seed);
  Rng basis_rng = root.split(kBasisStream);
  Layout layout{random_orthonormal(config.feature_dim, basis_rng)};
  const Matrix full = Matrix::Identity(config.feature_dim, config.feature_dim);

  std::vector<DomainDataset> out;
  for (std::size_t d = 0; d < config.domains.size(); ++d) {
    const DomainSpec& spec = config.domains[d];
    const Matrix axis = layout.take(1);
    const Matrix block = layout.take(spec.domain_dim);
    const Matrix signal = block.leftCols(spec.signal_dim);
    const Matrix nuisance = block.rightCols(spec.domain_dim - spec.signal_dim);
    const ClassDraw draw{{&signal, spec.cluster_std}, {&nuisance, spec.nuisance_std}};
    const RowVector domain_center = spec.separation * axis.col(0).transpose();

    const Rng domain_rng = root.split(kDomainStreamBase + d);
    DomainDataset ds;
    ds.domain_id = static_cast<int>(d);
    ds.name = spec.name;
    const int classes = spec.train_classes + spec.eval_classes;
    const auto n = static_cast<Eigen::Index>(classes) * spec.samples_per_class;
    ds.features.resize(n, config.feature_dim);
    Eigen::Index row = 0;
    for (int cls = 0; cls < classes; ++cls) {
      Rng rng = domain_rng.split(static_cast<std::uint64_t>(cls));
      const RowVector center = domain_center + ball_point(signal, spec.class_spread, rng);
      const Split split = cls < spec.train_classes ? Split::kTrain : Split::kEval;
      for (int s = 0; s < spec.samples_per_class; ++s, ++row) {
        append_sample(ds, row, center, draw, full, config.ambient_std, rng);
        ds.class_ids.push_back(cls);
        ds.splits.push_back(split);
      }
    }
    assign_roles(ds, spec.probe_gallery);
    out.push_back(std::move(ds));
  }
  return out;
}

CoarseFineData generate_coarse_fine(const ScenarioConfig& config) {
  if (config.regime != "coarse_fine") throw ConfigError("generate_coarse_fine: regime is '" + config.regime + "'");
  validate_scenario(config);
  const auto& cf = config.coarse_fine;
  const DomainSpec& cs = cf.coarse;
  const Rng root(config.seed);
  Rng basis_rng = root.split(kBasisStream);
  Layout layout{random_orthonormal(config.feature_dim, basis_rng)};
  const Matrix full = Matrix::Identity(config.feature_dim, config.feature_dim);
  const Matrix axis = layout.take(1);
  const Matrix block = layout.take(cs.domain_dim);
  const Matrix coarse_signal = block.leftCols(cs.signal_dim);
  const Matrix nuisance = block.rightCols(cs.domain_dim - cs.signal_dim);
  const Matrix fine_signal = layout.take(cf.fine_signal_dim);
  const RowVector domain_center = cs.separation * axis.col(0).transpose();

  const Rng coarse_rng = root.split(kDomainStreamBase);
  const Rng fine_rng = root.split(kDomainStreamBase + 1);

  // Coarse class 0 is the region that hosts the fine sub-classes.
  std::vector<RowVector> coarse_centers;
  for (int cls = 0; cls < cs.train_classes + cs.eval_classes; ++cls) {
    Rng rng = coarse_rng.split(static_cast<std::uint64_t>(cls));
    coarse_centers.push_back(domain_center + ball_point(coarse_signal, cs.class_spread, rng));
  }
  const RowVector& region_center = coarse_centers[0];

  const int fine_classes = cf.fine_train_classes + cf.fine_eval_classes;
  std::vector<RowVector> fine_centers;
  for (int cls = 0; cls < fine_classes; ++cls) {
    Rng rng = fine_rng.split(static_cast<std::uint64_t>(cls));
    fine_centers.push_back(region_center + ball_point(fine_signal, cf.fine_spread, rng));
  }
  const ClassDraw coarse_draw{{&coarse_signal, cs.cluster_std}, {&nuisance, cs.nuisance_std}};
  const ClassDraw region_draw{{&coarse_signal, cf.region_std}, {&nuisance, cs.nuisance_std}, {&fine_signal, cf.fine_std}};

  CoarseFineData out;
  {
    DomainDataset& ds = out.coarse;
    ds.domain_id = 0;
    ds.name = cs.name;
    const int classes = cs.train_classes + cs.eval_classes;
    const auto n = static_cast<Eigen::Index>(classes - 1) * cs.samples_per_class + cf.region_samples;
    ds.features.resize(n, config.feature_dim);
    Eigen::Index row = 0;
    for (int cls = 0; cls < classes; ++cls) {
      Rng rng = coarse_rng.split(static_cast<std::uint64_t>(cls)).split(1);
      const Split split = cls < cs.train_classes ? Split::kTrain : Split::kEval;
      if (cls == 0) {
        for (int s = 0; s < cf.region_samples; ++s, ++row) {
          const auto& sub = fine_centers[rng.index(fine_centers.size())];
          append_sample(ds, row, sub, region_draw, full, config.ambient_std, rng);
          ds.class_ids.push_back(cls);
          ds.splits.push_back(split);
        }
        continue;
      }
      for (int s = 0; s < cs.samples_per_class; ++s, ++row) {
        append_sample(ds, row, coarse_centers[static_cast<std::size_t>(cls)], coarse_draw, full, config.ambient_std, rng);
        ds.class_ids.push_back(cls);
        ds.splits.push_back(split);
      }
    }
    assign_roles(ds, cs.probe_gallery);
  }
  {
    DomainDataset& ds = out.fine;
    ds.domain_id = 1;
    ds.name = "fine";
    ds.features.resize(static_cast<Eigen::Index>(fine_classes) * cf.fine_samples_per_class, config.feature_dim);
    Eigen::Index row = 0;
    for (int cls = 0; cls < fine_classes; ++cls) {
      Rng rng = fine_rng.split(static_cast<std::uint64_t>(cls)).split(1);
      const Split split = cls < cf.fine_train_classes ? Split::kTrain : Split::kEval;
      for (int s = 0; s < cf.fine_samples_per_class; ++s, ++row) {
        append_sample(ds, row, fine_centers[static_cast<std::size_t>(cls)], region_draw, full,
                      config.ambient_std, rng);
        ds.class_ids.push_back(cls);
        ds.splits.push_back(split);
      }
    }
    assign_roles(ds, false);
  }
  return out;
}

std::vector<DomainDataset> generate(const ScenarioConfig& config) {
  if (config.regime == "coarse_fine") {
    auto data = generate_coarse_fine(config);
    return {std::move(data.coarse), std::move(data.fine)};
  }
  return generate_exclusive(config);
}

// ---------------------------------------------------------------------------
// Dataset files

namespace {

const char* split_token(Split split, EvalRole role) {
  if (split == Split::kTrain) return "train";
  switch (role) {
    case EvalRole::kProbe: return "eval,probe";
    case EvalRole::kGallery: return "eval,gallery";
    case EvalRole::kNone: break;
  }
  return "eval";
}

std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
T parse_number(std::string_view tok, std::size_t line, const char* what) {
  T value{};
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(std::string("invalid ") + what + " '" + std::string(tok) + "'", line);
  }
  return value;
}

}  // namespace

void write_dataset(std::ostream& out, const DomainDataset& ds) {
  out << "uniembed-dataset v1 domain=" << ds.domain_id << " fdim=" << ds.feature_dim() << " n=" << ds.size()
      << " name=" << ds.name << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.class_ids[i] << ' ' << split_token(ds.splits[i], ds.roles[i]);
    for (Eigen::Index k = 0; k < ds.features.cols(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.features(static_cast<Eigen::Index>(i), k));
      out << ' ' << buf;
    }
    out << '\n';
  }
}

DomainDataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
  const auto header = tokenize(line);
  if (header.size() < 2 || header[0] != "uniembed-dataset" || header[1] != "v1") {
    throw ParseError("malformed header, expected 'uniembed-dataset v1 ...'", 1);
  }
  DomainDataset ds;
  long long fdim = -1;
  long long declared_n = -1;
  for (std::size_t t = 2; t < header.size(); ++t) {
    const auto eq = header[t].find('=');
    if (eq == std::string_view::npos) throw ParseError("malformed header field '" + std::string(header[t]) + "'", 1);
    const auto key = header[t].substr(0, eq);
    const auto value = header[t].substr(eq + 1);
    if (key == "domain") {
      ds.domain_id = parse_number<int>(value, 1, "domain id");
    } else if (key == "fdim") {
      fdim = parse_number<long long>(value, 1, "fdim");
    } else if (key == "n") {
      declared_n = parse_number<long long>(value, 1, "sample count");
    } else if (key == "name") {
      ds.name = std::string(value);
    }
  }
  if (fdim < 1) throw ParseError("header is missing a positive fdim", 1);

  std::vector<double> values;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (static_cast<long long>(toks.size()) != fdim + 2) {
      throw ParseError("expected " + std::to_string(fdim + 2) + " columns, found " + std::to_string(toks.size()),
                       line_no);
    }
    ds.class_ids.push_back(parse_number<int>(toks[0], line_no, "class id"));
    const auto tag = toks[1];
    if (tag == "train") {
      ds.splits.push_back(Split::kTrain);
      ds.roles.push_back(EvalRole::kNone);
    } else if (tag == "eval") {
      ds.splits.push_back(Split::kEval);
      ds.roles.push_back(EvalRole::kNone);
    } else if (tag == "eval,probe") {
      ds.splits.push_back(Split::kEval);
      ds.roles.push_back(EvalRole::kProbe);
    } else if (tag == "eval,gallery") {
      ds.splits.push_back(Split::kEval);
      ds.roles.push_back(EvalRole::kGallery);
    } else {
      throw ParseError("unknown split tag '" + std::string(tag) + "'", line_no);
    }
    for (long long k = 0; k < fdim; ++k) {
      values.push_back(parse_number<double>(toks[static_cast<std::size_t>(k + 2)], line_no, "feature value"));
    }
  }
  if (declared_n >= 0 && static_cast<std::size_t>(declared_n) != ds.class_ids.size()) {
    throw ParseError("header declares n=" + std::to_string(declared_n) + " but file has " +
                         std::to_string(ds.class_ids.size()) + " samples",
                     line_no);
  }
  ds.features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(ds.class_ids.size()),
                                   static_cast<Eigen::Index>(fdim));
  return ds;
}

void save_dataset(const DomainDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write dataset " + path.string());
  write_dataset(out, dataset);
}

DomainDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace uniembed
