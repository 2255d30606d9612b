#pragma once

#include "pqc/dataset.hpp"
#include "pqc/descent.hpp"
#include "pqc/graphalloc.hpp"
#include "pqc/kernel.hpp"
#include "pqc/potential.hpp"
#include "pqc/probmodel.hpp"

#include <memory>

namespace pqc::pipeline {

struct FitSettings {
  kernel::KernelVariant variant = kernel::KernelVariant::PerPointSigma;
  double threshold_ratio = 1.0;
  descent::DescentConfig descent_config;
  int graph_m = 10;
};

// Everything that depends on %KNN but not on the merge threshold: kernel
// construction, offset calibration, descent and the community clustering.
struct CellBase {
  std::shared_ptr<kernel::KernelModel> model;
  potential::PotentialField field;
  descent::DescentResult descent_result;
  graphalloc::PathNetwork path_network;  // shared by every merge threshold
  graphalloc::Clustering base;
  double default_eth = 0.0;
};

CellBase fit_base(const Dataset& data, double knn_percent, const FitSettings& settings);

// Merge at max(eth, default), rebuild the probabilistic layer and allocate
// the training points.
struct CellEval {
  graphalloc::Clustering clustering;
  probmodel::ProbabilisticModel prob;
  probmodel::Allocation train_allocation;
  double anll = 0.0;
  double eth_used = 0.0;
  bool trivial = false;  // effective single-cluster solution
};

CellEval eval_at_eth(const CellBase& base, const Dataset& data, double eth,
                     const FitSettings& settings);

}  // namespace pqc::pipeline
