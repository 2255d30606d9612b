#include "pqc/descent.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace pqc::descent {

DescentResult descend(const potential::PotentialField& field, const Dataset& data,
                      const DescentConfig& config, const IterationObserver& observer) {
  if (!(config.eps_y > 0.0) || !(config.eps_v > 0.0))
    throw std::invalid_argument("descend: eps_y and eps_v must be positive");
  if (config.max_iterations < 0)
    throw std::invalid_argument("descend: max_iterations must be >= 0");
  if (!field.model || field.model->d() != data.d())
    throw std::invalid_argument("descend: field/data dimension mismatch");

  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();

  DescentResult result;
  result.start_points = data.X;
  result.final_points = data.X;
  result.final_potentials.resize(n);

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, d);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, d);
  Eigen::VectorXd prev_v(n);

  std::atomic<long> bad_index{-1};

  {
    potential::EvalWorkspace ws;
    for (Eigen::Index i = 0; i < n; ++i) {
      double val;
      potential::evaluate(field, result.final_points.row(i).transpose(), &val, nullptr, &ws);
      prev_v(i) = val;
    }
  }
  result.initial_potentials = prev_v;
  result.final_potentials = prev_v;

  double beta1_t = 1.0;
  double beta2_t = 1.0;
  for (int iter = 1; iter <= config.max_iterations; ++iter) {
    beta1_t *= config.beta1;
    beta2_t *= config.beta2;
    double max_step = 0.0;
    double max_dv = 0.0;

#pragma omp parallel reduction(max : max_step, max_dv)
    {
      potential::EvalWorkspace ws;
      Eigen::VectorXd grad(d), step(d);
#pragma omp for
      for (Eigen::Index i = 0; i < n; ++i) {
        double val;
        potential::evaluate(field, result.final_points.row(i).transpose(), &val, &grad, &ws);
        if (!grad.allFinite()) {
          bad_index.store(i);
          continue;
        }
        max_dv = std::max(max_dv, std::abs(val - prev_v(i)));
        prev_v(i) = val;

        m.row(i) = config.beta1 * m.row(i) + (1.0 - config.beta1) * grad.transpose();
        v.row(i) =
            config.beta2 * v.row(i) + (1.0 - config.beta2) * grad.array().square().matrix().transpose();
        const Eigen::ArrayXd m_hat = m.row(i).transpose().array() / (1.0 - beta1_t);
        const Eigen::ArrayXd v_hat = v.row(i).transpose().array() / (1.0 - beta2_t);
        step = (config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon_adam)).matrix();
        result.final_points.row(i) -= step.transpose();
        max_step = std::max(max_step, step.norm());
      }
    }

    if (bad_index.load() >= 0)
      throw std::runtime_error("descend: non-finite gradient for replica " +
                               std::to_string(bad_index.load()) + " at iteration " +
                               std::to_string(iter));

    result.iterations_used = iter;
    result.last_max_step = max_step;
    result.last_max_dv = max_dv;
    if (observer) {
      result.final_potentials = prev_v;
      observer(iter, result.final_points, result.final_potentials);
    }
    if (max_step <= config.eps_y && max_dv <= config.eps_v) {
      result.converged = true;
      break;
    }
  }

  {
    potential::EvalWorkspace ws;
    for (Eigen::Index i = 0; i < n; ++i) {
      double val;
      potential::evaluate(field, result.final_points.row(i).transpose(), &val, nullptr, &ws);
      result.final_potentials(i) = val;
    }
  }
  return result;
}

double default_energy_threshold(const DescentResult& result, const DescentConfig& config) {
  return std::max(config.eps_v, result.last_max_dv);
}

}  // namespace pqc::descent
