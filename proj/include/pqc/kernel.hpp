#pragma once

#include "pqc/dataset.hpp"

#include <nlohmann/json_fwd.hpp>

#include <vector>

namespace pqc::kernel {

enum class KernelVariant { GlobalSigma, PerPointSigma, PerPointCovariance };

const char* variant_name(KernelVariant v);
KernelVariant variant_from_name(const std::string& name);

// Local covariance with everything the evaluators need cached up front.
struct CovKernel {
  Eigen::MatrixXd cov;   // d x d, symmetric positive definite after thresholding
  Eigen::MatrixXd inv;
  double log_det = 0.0;  // log |cov|
  double trace = 0.0;
  double inv_trace = 0.0;
};

// Per-observation Gaussian components defining the wave function. Immutable
// after construction; evaluation is pure and safe for concurrent callers.
struct KernelModel {
  KernelVariant variant = KernelVariant::GlobalSigma;
  Eigen::MatrixXd centers;             // n x d (the training observations)
  double global_sigma = 0.0;           // GlobalSigma
  Eigen::VectorXd sigmas;              // PerPointSigma; retained by PerPointCovariance
  std::vector<CovKernel> covariances;  // PerPointCovariance
  double knn_percent = 0.0;
  double threshold_ratio = 1.0;

  // Derived caches, rebuilt by finalize().
  Eigen::VectorXd center_sqnorm;  // rowwise squared norms of centers
  Eigen::VectorXd log_norm;       // per-kernel log normalizer (0 for GlobalSigma)

  Eigen::Index n() const { return centers.rows(); }
  Eigen::Index d() const { return centers.cols(); }
  void finalize();
};

// K = round(knn_percent * n / 100); throws unless 1 <= K <= n-1.
int knn_count(double knn_percent, Eigen::Index n);

// Exact K nearest neighbours of every row (self excluded), distance ties
// broken by ascending row index.
std::vector<std::vector<int>> knn_indices(const Eigen::MatrixXd& X, int k);

// Mean over observations of the mean distance to their K nearest
// neighbours: one global length scale.
double sigma_global_quantile(const Dataset& data, double knn_percent);

// sigma_i = mean distance to the K nearest neighbours of x_i. Duplicate
// points make sigma_i = 0, reported as a degenerate-kernel error.
Eigen::VectorXd sigma_per_point(const Dataset& data, double knn_percent);

// Scatter of the K neighbours about x_i itself (not about their mean),
// divided by K-1. Requires K >= 2.
std::vector<Eigen::MatrixXd> local_covariance(const Dataset& data, double knn_percent);

// Eigenvalue floor: decompose, clamp every eigenvalue to >= sigma2_th,
// reconstruct in the same eigenbasis.
Eigen::MatrixXd clamp_covariance(const Eigen::MatrixXd& cov, double sigma2_th);

// Applies the per-point floor sigma_th_i^2 = sigma_{k'nn,i}^2 / d with
// K' = round(threshold_ratio * K).
std::vector<Eigen::MatrixXd> threshold_covariance(const std::vector<Eigen::MatrixXd>& covs,
                                                  const Dataset& data, double knn_percent,
                                                  double threshold_ratio);

KernelModel make_global_model(const Dataset& data, double knn_percent);
KernelModel make_knn_model(const Dataset& data, double knn_percent);
KernelModel make_cov_model(const Dataset& data, double knn_percent, double threshold_ratio = 1.0);

// log psi_i(x). GlobalSigma is the bare exponential (peak value 1); the
// per-point variants carry their full Gaussian normalizers.
double component_log_density(const KernelModel& model, int i, const Eigen::VectorXd& x);

// All log psi_i(x) in one pass; out is resized to n.
void component_log_densities(const KernelModel& model, const Eigen::VectorXd& x,
                             Eigen::VectorXd& out);

// Psi(x): mean of components for the normalized variants, plain sum for
// GlobalSigma. Computed via log-sum-exp; the linear value may underflow to
// 0 while the log accessor stays finite.
double log_wavefunction(const KernelModel& model, const Eigen::VectorXd& x);
double wavefunction(const KernelModel& model, const Eigen::VectorXd& x);

nlohmann::json to_json(const KernelModel& model);
KernelModel model_from_json(const nlohmann::json& j);

}  // namespace pqc::kernel
