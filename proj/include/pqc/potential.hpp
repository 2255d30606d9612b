#pragma once

#include "pqc/kernel.hpp"

#include <memory>
#include <string>

namespace pqc::potential {

// Schroedinger-derived potential over a kernel model. energy_offset is the
// additive constant E; potential differences and gradients never depend on
// it. Immutable after calibration, evaluation is pure.
struct PotentialField {
  std::shared_ptr<const kernel::KernelModel> model;
  double energy_offset = 0.0;
};

// Scratch buffers reused across evaluations; one per thread.
struct EvalWorkspace {
  Eigen::VectorXd logpsi;
  Eigen::VectorXd weights;
  Eigen::VectorXd sq;      // squared distances (sigma variants)
  Eigen::VectorXd fvals;   // per-kernel quadratic terms
  Eigen::MatrixXd vrows;   // inv_i * u_i per kernel (covariance variant)
  Eigen::MatrixXd srows;   // inv_i^2 * u_i per kernel (covariance variant)
};

// Computes V(x) and/or its analytic gradient in one weights pass.
// Either output pointer may be null.
void evaluate(const PotentialField& field, const Eigen::VectorXd& x, double* value,
              Eigen::VectorXd* grad, EvalWorkspace* ws = nullptr);

double potential(const PotentialField& field, const Eigen::VectorXd& x);
Eigen::VectorXd gradient(const PotentialField& field, const Eigen::VectorXd& x);

// E <- -min(V - E) over the given points, so the minimum becomes 0.
PotentialField calibrate_offset(PotentialField field, const Eigen::MatrixXd& points);

// 2-D only: evaluates V and its gradient on a regular grid spanning the
// model's bounding box (padded) and writes x,y,V,dVdx,dVdy rows.
void export_grid_csv(const PotentialField& field, int resolution, double padding,
                     const std::string& path);

}  // namespace pqc::potential
