#include "uniembed/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "uniembed/errors.hpp"

namespace uniembed {

using nlohmann::json;

Embedder embedder_for(const EmbeddingModel& model) {
  return [model](const Matrix& x) { return model.embed(x); };
}

RecallMap recall_at_k(const Matrix& query, std::span<const int> query_labels, const Matrix& gallery,
                      std::span<const int> gallery_labels, std::span<const int> ks,
                      std::optional<std::size_t> self_offset) {
  const auto nq = static_cast<std::size_t>(query.rows());
  const auto ng = static_cast<std::size_t>(gallery.rows());
  if (query_labels.size() != nq || gallery_labels.size() != ng) {
    throw InputError("recall_at_k: label counts do not match embedding rows");
  }
  if (nq == 0) throw InputError("recall_at_k: no queries");
  if (query.cols() != gallery.cols()) throw InputError("recall_at_k: query and gallery dims differ");
  if (ks.empty()) throw InputError("recall_at_k: no k values");
  if (self_offset && *self_offset + nq > ng) {
    throw InputError("recall_at_k: self-excluded queries must lie inside the gallery");
  }
  const std::size_t usable = ng - (self_offset ? 1 : 0);
  int k_max = 0;
  for (const int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) >= usable) {
      throw InputError("recall_at_k: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(usable) +
                       ") for a usable gallery of " + std::to_string(usable));
    }
    k_max = std::max(k_max, k);
  }

  std::vector<std::size_t> first_hit(nq, ng);  // rank (0-based) of first same-label neighbor
  std::vector<std::pair<double, std::size_t>> cand(ng);
  for (std::size_t q = 0; q < nq; ++q) {
    std::size_t count = 0;
    for (std::size_t g = 0; g < ng; ++g) {
      if (self_offset && g == *self_offset + q) continue;
      cand[count++] = {(query.row(static_cast<Eigen::Index>(q)) - gallery.row(static_cast<Eigen::Index>(g))).squaredNorm(),
                       g};
    }
    const auto top = static_cast<std::ptrdiff_t>(k_max);
    std::partial_sort(cand.begin(), cand.begin() + top, cand.begin() + static_cast<std::ptrdiff_t>(count));
    for (std::size_t r = 0; r < static_cast<std::size_t>(k_max); ++r) {
      if (gallery_labels[cand[r].second] == query_labels[q]) {
        first_hit[q] = r;
        break;
      }
    }
  }

  RecallMap out;
  for (const int k : ks) {
    const auto hits = std::count_if(first_hit.begin(), first_hit.end(),
                                    [k](std::size_t r) { return r < static_cast<std::size_t>(k); });
    out[k] = static_cast<double>(hits) / static_cast<double>(nq);
  }
  return out;
}

const DomainRecall& EvalReport::at(const std::string& domain, const std::string& protocol) const {
  for (const auto& e : entries) {
    if (e.domain == domain && e.protocol == protocol) return e;
  }
  throw InputError("report has no entry for domain '" + domain + "' under protocol '" + protocol + "'");
}

json report_to_json(const EvalReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries) {
    json recall = json::object();
    for (const auto& [k, v] : e.recall) recall["R@" + std::to_string(k)] = v;
    entries.push_back({{"domain", e.domain},
                       {"protocol", e.protocol},
                       {"recall", recall},
                       {"queries", e.queries},
                       {"gallery_size", e.gallery},
                       {"self_excluded", e.self_excluded}});
  }
  return {{"model", report.model_id}, {"seed", report.seed}, {"gallery", report.gallery}, {"entries", entries}};
}

namespace {

// Query and gallery rows of one domain's eval split.
struct EvalSets {
  std::vector<std::size_t> query;
  std::vector<std::size_t> gallery;
  bool self_excluded = true;
};

EvalSets eval_sets(const DomainDataset& ds) {
  EvalSets s;
  if (ds.probe_gallery()) {
    s.query = ds.indices(EvalRole::kProbe);
    s.gallery = ds.indices(EvalRole::kGallery);
    s.self_excluded = false;
  } else {
    s.query = ds.indices(Split::kEval);
    s.gallery = s.query;
  }
  if (s.query.empty() || s.gallery.empty()) {
    throw InputError("dataset '" + ds.name + "' has an empty eval split");
  }
  return s;
}

std::string join_names(const std::vector<DomainDataset>& datasets) {
  std::string out;
  for (const auto& ds : datasets) out += (out.empty() ? "" : "+") + ds.name;
  return out;
}

}  // namespace

DomainRecall domain_recall(const Embedder& embed, const DomainDataset& ds, std::span<const int> ks) {
  const EvalSets sets = eval_sets(ds);
  DomainRecall r{ds.name, "unfused", {}, sets.query.size(), sets.gallery.size(), sets.self_excluded};
  const Matrix g = embed(ds.rows(sets.gallery));
  const auto gl = ds.labels(sets.gallery);
  if (sets.self_excluded) {
    r.recall = recall_at_k(g, gl, g, gl, ks, std::size_t{0});
  } else {
    r.recall = recall_at_k(embed(ds.rows(sets.query)), ds.labels(sets.query), g, gl, ks);
  }
  return r;
}

EvalReport unfused_recall(const Embedder& embed, const std::vector<DomainDataset>& datasets,
                          std::span<const int> ks) {
  EvalReport report;
  report.gallery = "per-domain";
  for (const auto& ds : datasets) report.entries.push_back(domain_recall(embed, ds, ks));
  return report;
}

EvalReport fused_recall(const Embedder& embed, const std::vector<DomainDataset>& datasets,
                        std::span<const int> ks) {
  if (datasets.empty()) throw InputError("fused_recall: no datasets");
  std::vector<EvalSets> sets;
  std::vector<Matrix> gallery_blocks;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  const auto dim = static_cast<Eigen::Index>(datasets.front().feature_dim());
  for (const auto& ds : datasets) {
    if (static_cast<Eigen::Index>(ds.feature_dim()) != dim) {
      throw InputError("fused_recall: datasets disagree on feature dim");
    }
    sets.push_back(eval_sets(ds));
    gallery_blocks.push_back(embed(ds.rows(sets.back().gallery)));
    offsets.push_back(total);
    total += sets.back().gallery.size();
  }
  // Labels are made unique across domains by offsetting with the running
  // maximum class id.
  std::vector<int> label_offset(datasets.size(), 0);
  int next = 0;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    label_offset[d] = next;
    const auto& ids = datasets[d].class_ids;
    next += (ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end())) + 1;
  }

  Matrix gallery(static_cast<Eigen::Index>(total), gallery_blocks.front().cols());
  std::vector<int> gallery_labels;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    gallery.middleRows(static_cast<Eigen::Index>(offsets[d]), gallery_blocks[d].rows()) = gallery_blocks[d];
    for (const int l : datasets[d].labels(sets[d].gallery)) gallery_labels.push_back(l + label_offset[d]);
  }

  EvalReport report;
  report.gallery = join_names(datasets);
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    const auto& ds = datasets[d];
    DomainRecall r{ds.name, "fused", {}, sets[d].query.size(), total, sets[d].self_excluded};
    std::vector<int> ql = ds.labels(sets[d].query);
    for (auto& l : ql) l += label_offset[d];
    if (sets[d].self_excluded) {
      r.recall = recall_at_k(gallery_blocks[d], ql, gallery, gallery_labels, ks, offsets[d]);
    } else {
      r.recall = recall_at_k(embed(ds.rows(sets[d].query)), ql, gallery, gallery_labels, ks);
    }
    report.entries.push_back(std::move(r));
  }
  return report;
}

// ---------------------------------------------------------------------------

ConcatPcaEmbedder::ConcatPcaEmbedder(std::vector<EmbeddingModel> specialists, const Matrix& fit_features,
                                     std::size_t out_dim)
    : specialists_(std::move(specialists)) {
  if (specialists_.empty()) throw InputError("concat_pca: need at least one specialist");
  std::size_t total_dim = 0;
  for (const auto& s : specialists_) {
    if (s.input_dim() != specialists_.front().input_dim()) {
      throw InputError("concat_pca: specialists disagree on input dim");
    }
    total_dim += s.output_dim();
  }
  if (out_dim < 1 || out_dim > total_dim) {
    throw InputError("concat_pca: out_dim " + std::to_string(out_dim) + " exceeds concatenated dim " +
                     std::to_string(total_dim));
  }
  pca_ = uniembed::pca(concatenate(fit_features), out_dim);
}

Matrix ConcatPcaEmbedder::concatenate(const Matrix& x) const {
  std::vector<Matrix> parts;
  Eigen::Index cols = 0;
  for (const auto& s : specialists_) {
    parts.push_back(s.embed(x));
    cols += parts.back().cols();
  }
  Matrix out(x.rows(), cols);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return out;
}

Matrix ConcatPcaEmbedder::operator()(const Matrix& x) const {
  return unit_normalize(concatenate(x) * pca_.projection);
}

// ---------------------------------------------------------------------------

PairFilter parse_pair_filter(const std::string& name) {
  if (name == "inter_class") return PairFilter::kInterClass;
  if (name == "intra_class") return PairFilter::kIntraClass;
  if (name == "all") return PairFilter::kAll;
  throw ConfigError("unknown pair filter '" + name + "'");
}

std::string to_string(PairFilter filter) {
  switch (filter) {
    case PairFilter::kInterClass: return "inter_class";
    case PairFilter::kIntraClass: return "intra_class";
    case PairFilter::kAll: return "all";
  }
  return "unknown";
}

json histogram_to_json(const RatioHistogram& h) {
  return {{"filter", to_string(h.filter)},
          {"edges", h.edges},
          {"counts", h.counts},
          {"median", h.median},
          {"q25", h.q25},
          {"q75", h.q75},
          {"iqr", h.iqr()},
          {"fraction_below_1", h.fraction_below_1},
          {"pairs", h.pairs},
          {"dropped", h.dropped}};
}

namespace {

// Linear-interpolation quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

bool accepts(PairFilter filter, int a, int b) {
  switch (filter) {
    case PairFilter::kInterClass: return a != b;
    case PairFilter::kIntraClass: return a == b;
    case PairFilter::kAll: return true;
  }
  return false;
}

}  // namespace

RatioHistogram distance_ratio_hist(const Embedder& model_a, const Embedder& model_b, const DomainDataset& dataset,
                                   PairFilter filter, std::size_t n_pairs, std::size_t bins, Rng& rng,
                                   Split split) {
  if (bins < 1 || n_pairs < 1) throw InputError("distance_ratio_hist: need bins >= 1 and n_pairs >= 1");
  const auto idx = dataset.indices(split);
  const auto labels = dataset.labels(idx);
  std::map<int, int> class_counts;
  for (const int l : labels) ++class_counts[l];
  const bool possible = idx.size() >= 2 && [&] {
    switch (filter) {
      case PairFilter::kInterClass: return class_counts.size() >= 2;
      case PairFilter::kIntraClass:
        return std::any_of(class_counts.begin(), class_counts.end(), [](const auto& kv) { return kv.second >= 2; });
      case PairFilter::kAll: return true;
    }
    return false;
  }();
  if (!possible) throw InputError("distance_ratio_hist: no pairs match filter " + to_string(filter));

  const Matrix x = dataset.rows(idx);
  const Matrix ea = model_a(x);
  const Matrix eb = model_b(x);
  RatioHistogram h;
  h.filter = filter;
  std::vector<double> ratios;
  ratios.reserve(n_pairs);
  std::size_t drawn = 0;
  while (drawn < n_pairs) {
    const std::size_t i = rng.index(idx.size());
    const std::size_t j = rng.index(idx.size());
    if (i == j || !accepts(filter, labels[i], labels[j])) continue;
    ++drawn;
    const auto ii = static_cast<Eigen::Index>(i);
    const auto jj = static_cast<Eigen::Index>(j);
    const double den = (eb.row(ii) - eb.row(jj)).norm();
    if (den < 1e-9) {
      ++h.dropped;
      continue;
    }
    ratios.push_back((ea.row(ii) - ea.row(jj)).norm() / den);
  }
  if (ratios.empty()) throw InputError("distance_ratio_hist: every sampled pair had a zero denominator");

  std::vector<double> sorted = ratios;
  std::sort(sorted.begin(), sorted.end());
  h.pairs = sorted.size();
  h.median = quantile(sorted, 0.5);
  h.q25 = quantile(sorted, 0.25);
  h.q75 = quantile(sorted, 0.75);
  h.fraction_below_1 = static_cast<double>(std::lower_bound(sorted.begin(), sorted.end(), 1.0) - sorted.begin()) /
                       static_cast<double>(sorted.size());

  double top = quantile(sorted, 0.995);
  if (!(top > 0.0)) top = std::max(sorted.back(), 1.0);
  const double width = top / static_cast<double>(bins);
  h.edges.resize(bins + 1);
  for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = width * static_cast<double>(b);
  h.edges.back() = std::max(top, sorted.back());
  h.counts.assign(bins, 0);
  for (const double r : sorted) {
    const auto b = std::min(static_cast<std::size_t>(r / width), bins - 1);
    ++h.counts[b];
  }
  return h;
}

Vector pca_spectrum(const Embedder& embed, const DomainDataset& dataset) {
  const auto idx = dataset.indices(Split::kEval);
  const Matrix e = embed(dataset.rows(idx));
  if (static_cast<std::size_t>(e.rows()) < static_cast<std::size_t>(e.cols()) + 1) {
    throw InputError("pca_spectrum: need at least " + std::to_string(e.cols() + 1) + " eval samples, have " +
                     std::to_string(e.rows()));
  }
  return jacobi_eigen(covariance(e)).values;
}

}  // namespace uniembed
