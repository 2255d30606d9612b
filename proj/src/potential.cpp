#include "pqc/potential.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace pqc::potential {

using kernel::KernelModel;
using kernel::KernelVariant;

namespace {

// Shifted softmax; valid even when every logpsi has underflowed, so the
// far field degrades gracefully to the nearest components.
void softmax_weights(const Eigen::VectorXd& logpsi, Eigen::VectorXd& weights) {
  const double m = logpsi.maxCoeff();
  weights = (logpsi.array() - m).exp().matrix();
  weights /= weights.sum();
}

// V - E and gradient for the sigma-based variants (Eqs. with scalar
// length scales). sigma is either the shared value or per-kernel.
void eval_sigma(const KernelModel& model, const Eigen::VectorXd& x, double* value,
                Eigen::VectorXd* grad, EvalWorkspace& ws) {
  const Eigen::Index n = model.n();
  const double d = static_cast<double>(model.d());

  ws.sq = (model.center_sqnorm.array() - 2.0 * (model.centers * x).array() + x.squaredNorm())
              .max(0.0)
              .matrix();

  Eigen::ArrayXd inv_two_s2;  // 1 / (2 sigma_i^2)
  if (model.variant == KernelVariant::GlobalSigma) {
    inv_two_s2 = Eigen::ArrayXd::Constant(n, 1.0 / (2.0 * model.global_sigma * model.global_sigma));
    ws.logpsi = (-ws.sq.array() * inv_two_s2).matrix();
  } else {
    inv_two_s2 = 0.5 / model.sigmas.array().square();
    ws.logpsi = (-ws.sq.array() * inv_two_s2 + model.log_norm.array()).matrix();
  }
  softmax_weights(ws.logpsi, ws.weights);

  ws.fvals = (ws.sq.array() * inv_two_s2).matrix();  // (x-x_i)^2 / (2 sigma_i^2)
  const double mean_f = ws.weights.dot(ws.fvals);
  if (value) *value = mean_f - 0.5 * d;

  if (grad) {
    // <u/s^2> = t.sum() * x - centers^T t  with t_i = w_i / sigma_i^2
    const Eigen::VectorXd t = (ws.weights.array() * 2.0 * inv_two_s2).matrix();
    const Eigen::VectorXd tf = (t.array() * ws.fvals.array()).matrix();
    const Eigen::VectorXd mean_a = t.sum() * x - model.centers.transpose() * t;
    const Eigen::VectorXd mean_af = tf.sum() * x - model.centers.transpose() * tf;
    *grad = mean_a * (1.0 + mean_f) - mean_af;
  }
}

// Covariance variant: V - E = <F> - <G> with
//   F_i = tr(S_i)/2 * ||S_i^{-1} u||^2,  G_i = tr(S_i)/2 * tr(S_i^{-1}),
// and the gradient obtained by differentiating the weighted expectations:
//   grad = (<F>-<G>) <S^{-1}u> - <(F_i-G_i) S_i^{-1}u> + <tr(S_i) S_i^{-2}u>.
void eval_cov(const KernelModel& model, const Eigen::VectorXd& x, double* value,
              Eigen::VectorXd* grad, EvalWorkspace& ws) {
  const Eigen::Index n = model.n();
  const Eigen::Index d = model.d();

  ws.logpsi.resize(n);
  ws.fvals.resize(n);
  ws.vrows.resize(n, d);
  if (grad) ws.srows.resize(n, d);

  for (Eigen::Index i = 0; i < n; ++i) {
    const kernel::CovKernel& ck = model.covariances[i];
    const Eigen::VectorXd u = x - model.centers.row(i).transpose();
    const Eigen::VectorXd v = ck.inv * u;
    ws.logpsi(i) = -0.5 * u.dot(v) + model.log_norm(i);
    ws.fvals(i) = 0.5 * ck.trace * v.squaredNorm();
    ws.vrows.row(i) = v.transpose();
    if (grad) ws.srows.row(i) = (ck.inv * v).transpose();
  }
  softmax_weights(ws.logpsi, ws.weights);

  double mean_f = 0.0, mean_g = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const kernel::CovKernel& ck = model.covariances[i];
    mean_f += ws.weights(i) * ws.fvals(i);
    mean_g += ws.weights(i) * 0.5 * ck.trace * ck.inv_trace;
  }
  if (value) *value = mean_f - mean_g;

  if (grad) {
    Eigen::VectorXd mean_v = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd mean_fgv = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd mean_ts = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      const kernel::CovKernel& ck = model.covariances[i];
      const double w = ws.weights(i);
      const double g_i = 0.5 * ck.trace * ck.inv_trace;
      mean_v.noalias() += w * ws.vrows.row(i).transpose();
      mean_fgv.noalias() += w * (ws.fvals(i) - g_i) * ws.vrows.row(i).transpose();
      mean_ts.noalias() += w * ck.trace * ws.srows.row(i).transpose();
    }
    *grad = (mean_f - mean_g) * mean_v - mean_fgv + mean_ts;
  }
}

}  // namespace

void evaluate(const PotentialField& field, const Eigen::VectorXd& x, double* value,
              Eigen::VectorXd* grad, EvalWorkspace* ws) {
  if (!field.model) throw std::invalid_argument("evaluate: field has no model");
  EvalWorkspace local;
  EvalWorkspace& w = ws ? *ws : local;
  if (field.model->variant == KernelVariant::PerPointCovariance)
    eval_cov(*field.model, x, value, grad, w);
  else
    eval_sigma(*field.model, x, value, grad, w);
  if (value) *value += field.energy_offset;
}

double potential(const PotentialField& field, const Eigen::VectorXd& x) {
  double v;
  evaluate(field, x, &v, nullptr);
  return v;
}

Eigen::VectorXd gradient(const PotentialField& field, const Eigen::VectorXd& x) {
  Eigen::VectorXd g;
  evaluate(field, x, nullptr, &g);
  return g;
}

PotentialField calibrate_offset(PotentialField field, const Eigen::MatrixXd& points) {
  if (points.rows() == 0) throw std::invalid_argument("calibrate_offset: no points");
  double vmin = std::numeric_limits<double>::infinity();
  EvalWorkspace ws;
  const double old_offset = field.energy_offset;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    double v;
    evaluate(field, points.row(i).transpose(), &v, nullptr, &ws);
    vmin = std::min(vmin, v - old_offset);
  }
  field.energy_offset = -vmin;
  return field;
}

void export_grid_csv(const PotentialField& field, int resolution, double padding,
                     const std::string& path) {
  if (!field.model || field.model->d() != 2)
    throw std::invalid_argument("export_grid_csv: 2-D models only");
  if (resolution < 2) throw std::invalid_argument("export_grid_csv: resolution must be >= 2");

  const Eigen::MatrixXd& c = field.model->centers;
  const double x0 = c.col(0).minCoeff() - padding, x1 = c.col(0).maxCoeff() + padding;
  const double y0 = c.col(1).minCoeff() - padding, y1 = c.col(1).maxCoeff() + padding;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_grid_csv: cannot write '" + path + "'");
  out << "x,y,V,dVdx,dVdy\n";
  EvalWorkspace ws;
  char buf[192];
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      Eigen::Vector2d p(x0 + (x1 - x0) * ix / (resolution - 1),
                        y0 + (y1 - y0) * iy / (resolution - 1));
      double v;
      Eigen::VectorXd g;
      evaluate(field, p, &v, &g, &ws);
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g\n", p.x(), p.y(), v, g(0),
                    g(1));
      out << buf;
    }
  }
}

}  // namespace pqc::potential
