#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace pqc {

// Observation matrix plus optional ground-truth labels and the provenance
// accumulated by the dataio transforms. Treated as immutable once built:
// every transform returns a fresh copy.
struct Dataset {
  Eigen::MatrixXd X;                 // n rows (observations), d columns
  std::vector<std::string> labels;   // one per row; empty when absent
  double lambda_scale = 1.0;         // mean row norm divided out by rescale_mean_norm
  std::vector<std::string> preprocessing_log;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
  bool has_labels() const { return !labels.empty(); }
};

}  // namespace pqc
