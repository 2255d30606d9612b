#include "pqc/probmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace pqc::probmodel {

namespace {

double logsumexp_indexed(const Eigen::VectorXd& v, const std::vector<int>& idx) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i : idx) m = std::max(m, v(i));
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (int i : idx) acc += std::exp(v(i) - m);
  return m + std::log(acc);
}

}  // namespace

ProbabilisticModel make_probabilistic(std::shared_ptr<const kernel::KernelModel> model,
                                      std::vector<std::vector<int>> cluster_members) {
  if (!model) throw std::invalid_argument("make_probabilistic: null kernel model");
  if (model->variant == kernel::KernelVariant::GlobalSigma)
    throw std::invalid_argument(
        "make_probabilistic: GlobalSigma kernels are unnormalized; the probabilistic layer "
        "requires normalized components");
  const Eigen::Index n = model->n();
  std::vector<char> seen(n, 0);
  long total = 0;
  for (const auto& members : cluster_members) {
    if (members.empty())
      throw std::invalid_argument("make_probabilistic: empty cluster member set");
    for (int i : members) {
      if (i < 0 || i >= n || seen[i])
        throw std::invalid_argument("make_probabilistic: cluster members must partition kernels");
      seen[i] = 1;
      ++total;
    }
  }
  if (total != n)
    throw std::invalid_argument("make_probabilistic: cluster members must cover every kernel");
  return ProbabilisticModel{std::move(model), std::move(cluster_members)};
}

void cluster_log_joints(const ProbabilisticModel& model, const Eigen::VectorXd& x,
                        Eigen::VectorXd& out) {
  Eigen::VectorXd logpsi;
  kernel::component_log_densities(*model.kernel_model, x, logpsi);
  const double log_n = std::log(static_cast<double>(model.kernel_model->n()));
  out.resize(model.k());
  for (int c = 0; c < model.k(); ++c)
    out(c) = logsumexp_indexed(logpsi, model.cluster_members[c]) - log_n;
}

double log_joint(const ProbabilisticModel& model, int k, const Eigen::VectorXd& x) {
  if (k < 0 || k >= model.k()) throw std::out_of_range("log_joint: cluster index");
  Eigen::VectorXd logpsi;
  kernel::component_log_densities(*model.kernel_model, x, logpsi);
  return logsumexp_indexed(logpsi, model.cluster_members[k]) -
         std::log(static_cast<double>(model.kernel_model->n()));
}

double joint(const ProbabilisticModel& model, int k, const Eigen::VectorXd& x) {
  return std::exp(log_joint(model, k, x));
}

double prior(const ProbabilisticModel& model, int k) {
  if (k < 0 || k >= model.k()) throw std::out_of_range("prior: cluster index");
  return static_cast<double>(model.cluster_members[k].size()) /
         static_cast<double>(model.kernel_model->n());
}

Eigen::VectorXd posterior(const ProbabilisticModel& model, const Eigen::VectorXd& x) {
  Eigen::VectorXd lj;
  cluster_log_joints(model, x, lj);
  const double m = lj.maxCoeff();
  Eigen::VectorXd p = (lj.array() - m).exp().matrix();
  p /= p.sum();
  return p;
}

double likelihood(const ProbabilisticModel& model, const Eigen::VectorXd& x, int k) {
  return std::exp(log_joint(model, k, x) - std::log(prior(model, k)));
}

Allocation allocate(const ProbabilisticModel& model, const Eigen::MatrixXd& X) {
  if (X.cols() != model.kernel_model->d())
    throw std::invalid_argument("allocate: dimension mismatch, expected " +
                                std::to_string(model.kernel_model->d()) + ", got " +
                                std::to_string(X.cols()));
  const Eigen::Index n = X.rows();
  Allocation out;
  out.raw_assignment.resize(n);
  out.winner_posterior.resize(n);

  Eigen::VectorXd lj;
  for (Eigen::Index i = 0; i < n; ++i) {
    cluster_log_joints(model, X.row(i).transpose(), lj);
    // argmax with ties toward the lower cluster id
    int best = 0;
    for (int c = 1; c < model.k(); ++c)
      if (lj(c) > lj(best)) best = c;
    const double m = lj.maxCoeff();
    const double denom = (lj.array() - m).exp().sum();
    out.raw_assignment[i] = best;
    out.winner_posterior(i) = std::exp(lj(best) - m) / denom;
  }

  std::vector<char> wins(model.k(), 0);
  for (Eigen::Index i = 0; i < n; ++i) wins[out.raw_assignment[i]] = 1;
  out.id_remap.assign(model.k(), -1);
  int next = 0;
  for (int c = 0; c < model.k(); ++c) {
    if (wins[c])
      out.id_remap[c] = next++;
    else
      out.empty_clusters.push_back(c);
  }
  out.k_effective = next;
  out.assignment.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out.assignment[i] = out.id_remap[out.raw_assignment[i]];
  return out;
}

OutlierResult outlier_flags(const ProbabilisticModel& model, const Eigen::MatrixXd& X,
                            const OutlierSpec& spec) {
  const Eigen::Index n = X.rows();
  OutlierResult out;
  out.scores.resize(n);
  out.flags.assign(n, false);

  Eigen::VectorXd lj(model.k());
  for (Eigen::Index i = 0; i < n; ++i) {
    cluster_log_joints(model, X.row(i).transpose(), lj);
    double best = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < model.k(); ++c)
      best = std::max(best, lj(c) - std::log(prior(model, c)));
    out.scores(i) = std::exp(best);
  }

  if (spec.kind == OutlierSpec::Kind::Absolute) {
    out.threshold_value = spec.value;
    for (Eigen::Index i = 0; i < n; ++i) out.flags[i] = out.scores(i) < spec.value;
    return out;
  }

  if (!(spec.value >= 0.0) || spec.value > 1.0)
    throw std::invalid_argument("outlier_flags: quantile must lie in [0, 1]");
  const long flag_count = static_cast<long>(std::ceil(spec.value * static_cast<double>(n)));
  std::vector<long> idx(n);
  std::iota(idx.begin(), idx.end(), 0L);
  std::sort(idx.begin(), idx.end(), [&](long a, long b) {
    if (out.scores(a) != out.scores(b)) return out.scores(a) < out.scores(b);
    return a < b;
  });
  for (long t = 0; t < flag_count; ++t) out.flags[idx[t]] = true;
  out.threshold_value = flag_count > 0 ? out.scores(idx[flag_count - 1]) : 0.0;
  return out;
}

void export_probability_map_csv(const ProbabilisticModel& model, int resolution, double padding,
                                const std::string& path) {
  if (model.kernel_model->d() != 2)
    throw std::invalid_argument("export_probability_map_csv: 2-D models only");
  if (resolution < 2) throw std::invalid_argument("export_probability_map_csv: resolution < 2");

  const Eigen::MatrixXd& c = model.kernel_model->centers;
  const double x0 = c.col(0).minCoeff() - padding, x1 = c.col(0).maxCoeff() + padding;
  const double y0 = c.col(1).minCoeff() - padding, y1 = c.col(1).maxCoeff() + padding;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_probability_map_csv: cannot write '" + path + "'");
  out << "x,y";
  for (int k = 0; k < model.k(); ++k) out << ",P_k" << k;
  out << ",max_likelihood\n";

  char buf[64];
  Eigen::VectorXd lj(model.k());
  for (int iy = 0; iy < resolution; ++iy) {
    for (int ix = 0; ix < resolution; ++ix) {
      const Eigen::Vector2d p(x0 + (x1 - x0) * ix / (resolution - 1),
                              y0 + (y1 - y0) * iy / (resolution - 1));
      const Eigen::VectorXd post = posterior(model, p);
      cluster_log_joints(model, p, lj);
      double best = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < model.k(); ++k)
        best = std::max(best, lj(k) - std::log(prior(model, k)));
      std::snprintf(buf, sizeof(buf), "%.17g", p.x());
      out << buf;
      std::snprintf(buf, sizeof(buf), ",%.17g", p.y());
      out << buf;
      for (int k = 0; k < model.k(); ++k) {
        std::snprintf(buf, sizeof(buf), ",%.17g", post(k));
        out << buf;
      }
      std::snprintf(buf, sizeof(buf), ",%.17g\n", std::exp(best));
      out << buf;
    }
  }
}

}  // namespace pqc::probmodel
