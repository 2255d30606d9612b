#include "pqc/pipeline.hpp"

#include "pqc/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pqc::pipeline {

CellBase fit_base(const Dataset& data, double knn_percent, const FitSettings& settings) {
  CellBase cell;
  switch (settings.variant) {
    case kernel::KernelVariant::GlobalSigma:
      cell.model = std::make_shared<kernel::KernelModel>(
          kernel::make_global_model(data, knn_percent));
      break;
    case kernel::KernelVariant::PerPointSigma:
      cell.model = std::make_shared<kernel::KernelModel>(kernel::make_knn_model(data, knn_percent));
      break;
    case kernel::KernelVariant::PerPointCovariance:
      cell.model = std::make_shared<kernel::KernelModel>(
          kernel::make_cov_model(data, knn_percent, settings.threshold_ratio));
      break;
  }
  cell.field.model = cell.model;
  cell.field = potential::calibrate_offset(cell.field, data.X);
  cell.descent_result = descent::descend(cell.field, data, settings.descent_config);
  cell.path_network =
      graphalloc::build_path_network(cell.descent_result, cell.field, settings.graph_m);
  cell.base = graphalloc::initial_clustering(cell.descent_result, cell.field, settings.graph_m,
                                             &cell.path_network);
  cell.default_eth = descent::default_energy_threshold(cell.descent_result,
                                                       settings.descent_config);
  return cell;
}

CellEval eval_at_eth(const CellBase& base, const Dataset& data, double eth,
                     const FitSettings& settings) {
  CellEval out;
  out.eth_used = std::max(eth, base.default_eth);
  out.clustering = graphalloc::merge_by_threshold(base.base, base.descent_result, base.field,
                                                  out.eth_used, settings.graph_m,
                                                  &base.path_network);
  out.prob = probmodel::make_probabilistic(base.model, out.clustering.member_sets);
  out.train_allocation = probmodel::allocate(out.prob, data.X);
  out.anll = scoring::anll(out.prob, data.X);
  out.trivial = out.train_allocation.k_effective <= 1;
  return out;
}

}  // namespace pqc::pipeline
