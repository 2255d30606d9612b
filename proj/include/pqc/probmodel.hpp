#pragma once

#include "pqc/kernel.hpp"

#include <memory>
#include <string>
#include <vector>

namespace pqc::probmodel {

// Bayesian layer over a fitted kernel model: clusters are sums of the
// member kernels, priors are exact counts over n. Requires a normalized
// kernel variant. Immutable after construction; queries are pure.
struct ProbabilisticModel {
  std::shared_ptr<const kernel::KernelModel> kernel_model;
  std::vector<std::vector<int>> cluster_members;  // kernel indices per cluster

  int k() const { return static_cast<int>(cluster_members.size()); }
};

// Validates variant (GlobalSigma is rejected: its components are not
// densities) and that cluster_members partitions the kernel indices.
ProbabilisticModel make_probabilistic(std::shared_ptr<const kernel::KernelModel> model,
                                      std::vector<std::vector<int>> cluster_members);

// log P(k, x) = log( (1/n) sum_{i in k} psi_i(x) ), via log-sum-exp.
double log_joint(const ProbabilisticModel& model, int k, const Eigen::VectorXd& x);
double joint(const ProbabilisticModel& model, int k, const Eigen::VectorXd& x);

// All cluster log-joints in one kernel pass.
void cluster_log_joints(const ProbabilisticModel& model, const Eigen::VectorXd& x,
                        Eigen::VectorXd& out);

// P(k) = #k / n, exact.
double prior(const ProbabilisticModel& model, int k);

// P(k|x) simplex, shifted-log softmax; never NaN, sums to 1.
Eigen::VectorXd posterior(const ProbabilisticModel& model, const Eigen::VectorXd& x);

// P(x|k) = P(k,x) / P(k).
double likelihood(const ProbabilisticModel& model, const Eigen::VectorXd& x, int k);

struct Allocation {
  std::vector<int> raw_assignment;     // argmax_k P(k|x), original cluster ids
  std::vector<int> assignment;         // remapped to contiguous non-empty ids
  Eigen::VectorXd winner_posterior;    // P(k_w | x_i)
  std::vector<int> empty_clusters;     // original ids that won no point
  std::vector<int> id_remap;           // original id -> effective id, -1 when empty
  int k_effective = 0;
};

// Argmax-posterior allocation, ties toward the lower cluster id. Clusters
// that win no point are reported and dropped from the effective count.
Allocation allocate(const ProbabilisticModel& model, const Eigen::MatrixXd& X);

struct OutlierSpec {
  enum class Kind { Absolute, Quantile } kind = Kind::Quantile;
  double value = 0.05;
};

struct OutlierResult {
  Eigen::VectorXd scores;  // max_k P(x|k) per point
  std::vector<bool> flags;
  double threshold_value = 0.0;  // resolved absolute threshold
};

// Scores every point with max_k P(x|k). Quantile spec flags exactly
// ceil(q*n) lowest-scoring points of X (ties by index); absolute spec
// flags scores strictly below the given density.
OutlierResult outlier_flags(const ProbabilisticModel& model, const Eigen::MatrixXd& X,
                            const OutlierSpec& spec);

// 2-D only: per-cluster P(k|x) plus max_k P(x|k) on a regular grid.
void export_probability_map_csv(const ProbabilisticModel& model, int resolution, double padding,
                                const std::string& path);

}  // namespace pqc::probmodel
