#pragma once

#include "pqc/dataset.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pqc::dataio {

// Fitted column statistics, kept so a serialized model can re-apply the
// same transform to new observations.
struct StandardizeParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;              // 1.0 for zero-variance columns
  std::vector<int> zero_variance_cols;
};

struct PcaParams {
  Eigen::VectorXd center;              // column means removed before projection
  Eigen::MatrixXd components;          // d x m, eigenvalue-descending columns
  Eigen::VectorXd eigenvalues;         // m, descending
};

Dataset load_csv(const std::string& path,
                 const std::optional<std::string>& label_column = std::nullopt);

// Writes header + rows; labels (when present) go into a trailing column.
void save_csv(const Dataset& data, const std::string& path,
              const std::vector<std::string>& feature_names = {},
              const std::string& label_name = "label");

// Column-wise z-score with the n-1 denominator. Zero-variance columns are
// set to 0 and recorded in the preprocessing log.
Dataset standardize(const Dataset& data, StandardizeParams* fitted = nullptr);

// X <- X / lambda with lambda the mean row L2 norm; lambda lands in
// Dataset::lambda_scale. Throws if every row is zero.
Dataset rescale_mean_norm(const Dataset& data);

// Projection onto the leading eigenvectors of the sample covariance.
// Sign convention: the largest-magnitude loading of each component is
// made positive, so results are reproducible across eigensolvers.
Dataset pca_project(const Dataset& data, int n_components, PcaParams* fitted = nullptr);

// Synthetic benchmark generators. Pure functions of the seed: they draw
// from an explicit Box-Muller transform over mt19937_64 so the output is
// identical across standard library implementations.

// Four 2-D clusters of 100 points: two elongated "cigar" Gaussians plus a
// compact high-density cluster nested inside a broad low-density one.
Dataset gen_local_densities(std::uint64_t seed);

// Two interleaved Archimedean spirals of 200 points (1.5 turns, second
// rotated by pi) with radial noise std 0.1 and 0.025 respectively.
Dataset gen_two_spirals(std::uint64_t seed);

}  // namespace pqc::dataio
