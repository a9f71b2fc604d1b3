#pragma once

#include <string>

#include "support.hpp"
#include "uniembed/synthdata.hpp"

namespace testsupport {

/// Dataset with `train_classes` train and `eval_classes` eval classes of
/// `per_class` random rows each.
inline uniembed::DomainDataset make_dataset(const std::string& name, int domain_id, int train_classes,
                                            int eval_classes, int per_class, int dim, uniembed::Rng& rng) {
  using namespace uniembed;
  DomainDataset ds;
  ds.name = name;
  ds.domain_id = domain_id;
  const int classes = train_classes + eval_classes;
  ds.features = random_matrix(static_cast<Eigen::Index>(classes) * per_class, dim, rng);
  for (int c = 0; c < classes; ++c) {
    for (int s = 0; s < per_class; ++s) {
      ds.class_ids.push_back(c);
      ds.splits.push_back(c < train_classes ? Split::kTrain : Split::kEval);
      ds.roles.push_back(EvalRole::kNone);
    }
  }
  return ds;
}

}  // namespace testsupport
