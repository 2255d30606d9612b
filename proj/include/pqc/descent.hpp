#pragma once

#include "pqc/dataset.hpp"
#include "pqc/potential.hpp"

#include <functional>
#include <string>

namespace pqc::descent {

struct DescentConfig {
  double learning_rate = 0.05;  // data is expected at unit mean row norm
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon_adam = 1e-8;
  int max_iterations = 2000;
  double eps_y = 0.001;  // position criterion
  double eps_v = 0.001;  // potential criterion
};

struct DescentResult {
  Eigen::MatrixXd start_points;        // the observations x_i = y_i(0)
  Eigen::VectorXd initial_potentials;  // V(x_i)
  Eigen::MatrixXd final_points;        // replica y_i per observation
  Eigen::VectorXd final_potentials;    // V(y_i)
  int iterations_used = 0;
  bool converged = false;
  double last_max_step = 0.0;  // max_i |dy_i| at the last iteration
  double last_max_dv = 0.0;    // max_i |dV(y_i)| at the last iteration
};

// Called after each iteration with (iteration, positions, potentials);
// used by the CLI trajectory dump.
using IterationObserver =
    std::function<void(int, const Eigen::MatrixXd&, const Eigen::VectorXd&)>;

// Full-batch ADAM from y_i(0) = x_i down the potential gradient. Stops when
// both max_i |dy_i| <= eps_y and max_i |dV(y_i)| <= eps_v hold, or at
// max_iterations with converged=false. Deterministic; replicas within an
// iteration may be advanced by parallel workers.
DescentResult descend(const potential::PotentialField& field, const Dataset& data,
                      const DescentConfig& config, const IterationObserver& observer = {});

// E_th floor: max(eps_v, last max dV).
double default_energy_threshold(const DescentResult& result, const DescentConfig& config);

}  // namespace pqc::descent
