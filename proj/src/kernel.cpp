#include "pqc/kernel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pqc::kernel {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double logsumexp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void require_built(const KernelModel& model) {
  if (model.center_sqnorm.size() != model.n())
    throw std::logic_error("KernelModel: finalize() not called");
}

}  // namespace

const char* variant_name(KernelVariant v) {
  switch (v) {
    case KernelVariant::GlobalSigma: return "global";
    case KernelVariant::PerPointSigma: return "knn";
    case KernelVariant::PerPointCovariance: return "cov";
  }
  throw std::logic_error("variant_name: bad variant");
}

KernelVariant variant_from_name(const std::string& name) {
  if (name == "global") return KernelVariant::GlobalSigma;
  if (name == "knn") return KernelVariant::PerPointSigma;
  if (name == "cov") return KernelVariant::PerPointCovariance;
  throw std::invalid_argument("unknown kernel variant '" + name + "'");
}

void KernelModel::finalize() {
  const Eigen::Index nn = n();
  const double dd = static_cast<double>(d());
  center_sqnorm = centers.rowwise().squaredNorm();
  log_norm.resize(nn);
  switch (variant) {
    case KernelVariant::GlobalSigma:
      if (!(global_sigma > 0.0)) throw std::invalid_argument("GlobalSigma requires sigma > 0");
      log_norm.setZero();
      break;
    case KernelVariant::PerPointSigma:
      if (sigmas.size() != nn) throw std::invalid_argument("sigmas size mismatch");
      for (Eigen::Index i = 0; i < nn; ++i) {
        if (!(sigmas(i) > 0.0))
          throw std::invalid_argument("PerPointSigma requires sigma_i > 0 (kernel " +
                                      std::to_string(i) + ")");
        log_norm(i) = -dd * std::log(sigmas(i)) - 0.5 * dd * kLog2Pi;
      }
      break;
    case KernelVariant::PerPointCovariance:
      if (static_cast<Eigen::Index>(covariances.size()) != nn)
        throw std::invalid_argument("covariances size mismatch");
      for (Eigen::Index i = 0; i < nn; ++i)
        log_norm(i) = -0.5 * (covariances[i].log_det + dd * kLog2Pi);
      break;
  }
}

int knn_count(double knn_percent, Eigen::Index n) {
  if (!(knn_percent > 0.0) || knn_percent > 100.0)
    throw std::invalid_argument("knn_percent must lie in (0, 100]");
  const int k = static_cast<int>(std::lround(knn_percent * static_cast<double>(n) / 100.0));
  if (k < 1) throw std::invalid_argument("knn_percent " + std::to_string(knn_percent) +
                                         " gives K=0 for n=" + std::to_string(n));
  if (k > n - 1)
    throw std::invalid_argument("knn_percent " + std::to_string(knn_percent) + " gives K=" +
                                std::to_string(k) + " > n-1=" + std::to_string(n - 1));
  return k;
}

std::vector<std::vector<int>> knn_indices(const Eigen::MatrixXd& X, int k) {
  const Eigen::Index n = X.rows();
  if (k < 1 || k > n - 1) throw std::invalid_argument("knn_indices: k out of range");

  std::vector<std::vector<int>> result(n);
  std::vector<std::pair<double, int>> order(n - 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    int m = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      order[m++] = {(X.row(j) - X.row(i)).squaredNorm(), static_cast<int>(j)};
    }
    std::partial_sort(order.begin(), order.begin() + k, order.end());
    result[i].resize(k);
    for (int t = 0; t < k; ++t) result[i][t] = order[t].second;
  }
  return result;
}

double sigma_global_quantile(const Dataset& data, double knn_percent) {
  const int k = knn_count(knn_percent, data.n());
  const auto nn = knn_indices(data.X, k);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    double acc = 0.0;
    for (int j : nn[i]) acc += (data.X.row(j) - data.X.row(i)).norm();
    total += acc / k;
  }
  return total / static_cast<double>(data.n());
}

Eigen::VectorXd sigma_per_point(const Dataset& data, double knn_percent) {
  const int k = knn_count(knn_percent, data.n());
  const auto nn = knn_indices(data.X, k);
  Eigen::VectorXd sigmas(data.n());
  std::vector<int> degenerate;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    double acc = 0.0;
    for (int j : nn[i]) acc += (data.X.row(j) - data.X.row(i)).norm();
    sigmas(i) = acc / k;
    if (!(sigmas(i) > 0.0)) degenerate.push_back(static_cast<int>(i));
  }
  if (!degenerate.empty()) {
    std::string rows;
    for (std::size_t t = 0; t < degenerate.size() && t < 10; ++t)
      rows += (t ? "," : "") + std::to_string(degenerate[t]);
    if (degenerate.size() > 10) rows += ",...";
    throw std::runtime_error("sigma_per_point: degenerate kernel (duplicate points) at rows " +
                             rows);
  }
  return sigmas;
}

std::vector<Eigen::MatrixXd> local_covariance(const Dataset& data, double knn_percent) {
  const int k = knn_count(knn_percent, data.n());
  if (k < 2) throw std::invalid_argument("local_covariance: K must be >= 2");
  const auto nn = knn_indices(data.X, k);
  const Eigen::Index d = data.d();
  std::vector<Eigen::MatrixXd> covs(data.n());
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(d, d);
    for (int j : nn[i]) {
      const Eigen::VectorXd u = (data.X.row(j) - data.X.row(i)).transpose();
      acc.noalias() += u * u.transpose();
    }
    covs[i] = acc / static_cast<double>(k - 1);
  }
  return covs;
}

Eigen::MatrixXd clamp_covariance(const Eigen::MatrixXd& cov, double sigma2_th) {
  if (!(sigma2_th > 0.0)) throw std::invalid_argument("clamp_covariance: threshold must be > 0");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("clamp_covariance: eigensolver failed");
  Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(sigma2_th);
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

std::vector<Eigen::MatrixXd> threshold_covariance(const std::vector<Eigen::MatrixXd>& covs,
                                                  const Dataset& data, double knn_percent,
                                                  double threshold_ratio) {
  if (!(threshold_ratio > 0.0) || threshold_ratio > 1.0)
    throw std::invalid_argument("threshold_ratio must lie in (0, 1]");
  const int k = knn_count(knn_percent, data.n());
  const int k_prime = static_cast<int>(std::lround(threshold_ratio * k));
  if (k_prime < 1)
    throw std::invalid_argument("threshold_covariance: round(r*K) < 1");
  const double k_prime_percent = 100.0 * static_cast<double>(k_prime) / static_cast<double>(data.n());
  const Eigen::VectorXd sig = sigma_per_point(data, k_prime_percent);
  const double d = static_cast<double>(data.d());

  std::vector<Eigen::MatrixXd> out(covs.size());
  for (std::size_t i = 0; i < covs.size(); ++i) {
    const double sigma2_th = sig(static_cast<Eigen::Index>(i)) * sig(static_cast<Eigen::Index>(i)) / d;
    out[i] = clamp_covariance(covs[i], sigma2_th);
  }
  return out;
}

KernelModel make_global_model(const Dataset& data, double knn_percent) {
  KernelModel model;
  model.variant = KernelVariant::GlobalSigma;
  model.centers = data.X;
  model.knn_percent = knn_percent;
  model.global_sigma = sigma_global_quantile(data, knn_percent);
  model.finalize();
  return model;
}

KernelModel make_knn_model(const Dataset& data, double knn_percent) {
  KernelModel model;
  model.variant = KernelVariant::PerPointSigma;
  model.centers = data.X;
  model.knn_percent = knn_percent;
  model.sigmas = sigma_per_point(data, knn_percent);
  model.finalize();
  return model;
}

KernelModel make_cov_model(const Dataset& data, double knn_percent, double threshold_ratio) {
  KernelModel model;
  model.variant = KernelVariant::PerPointCovariance;
  model.centers = data.X;
  model.knn_percent = knn_percent;
  model.threshold_ratio = threshold_ratio;
  model.sigmas = sigma_per_point(data, knn_percent);

  const auto raw = local_covariance(data, knn_percent);
  const auto clamped = threshold_covariance(raw, data, knn_percent, threshold_ratio);
  model.covariances.resize(clamped.size());
  for (std::size_t i = 0; i < clamped.size(); ++i) {
    CovKernel& ck = model.covariances[i];
    ck.cov = clamped[i];
    Eigen::LLT<Eigen::MatrixXd> llt(ck.cov);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("make_cov_model: covariance " + std::to_string(i) +
                               " is not positive definite");
    ck.inv = llt.solve(Eigen::MatrixXd::Identity(ck.cov.rows(), ck.cov.cols()));
    ck.log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    ck.trace = ck.cov.trace();
    ck.inv_trace = ck.inv.trace();
  }
  model.finalize();
  return model;
}

double component_log_density(const KernelModel& model, int i, const Eigen::VectorXd& x) {
  require_built(model);
  if (i < 0 || i >= model.n()) throw std::out_of_range("component_log_density: kernel index");
  const Eigen::VectorXd u = x - model.centers.row(i).transpose();
  switch (model.variant) {
    case KernelVariant::GlobalSigma:
      return -u.squaredNorm() / (2.0 * model.global_sigma * model.global_sigma);
    case KernelVariant::PerPointSigma:
      return -u.squaredNorm() / (2.0 * model.sigmas(i) * model.sigmas(i)) + model.log_norm(i);
    case KernelVariant::PerPointCovariance: {
      const CovKernel& ck = model.covariances[i];
      return -0.5 * u.dot(ck.inv * u) + model.log_norm(i);
    }
  }
  throw std::logic_error("component_log_density: bad variant");
}

void component_log_densities(const KernelModel& model, const Eigen::VectorXd& x,
                             Eigen::VectorXd& out) {
  require_built(model);
  const Eigen::Index n = model.n();
  out.resize(n);
  if (model.variant == KernelVariant::PerPointCovariance) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::VectorXd u = x - model.centers.row(i).transpose();
      out(i) = -0.5 * u.dot(model.covariances[i].inv * u) + model.log_norm(i);
    }
    return;
  }
  // ||x - c_i||^2 = ||x||^2 - 2 c_i.x + ||c_i||^2, clamped against rounding.
  Eigen::VectorXd sq = (model.center_sqnorm.array() - 2.0 * (model.centers * x).array() +
                        x.squaredNorm())
                           .max(0.0)
                           .matrix();
  if (model.variant == KernelVariant::GlobalSigma) {
    out = -sq / (2.0 * model.global_sigma * model.global_sigma);
  } else {
    out = (-0.5 * sq.array() / model.sigmas.array().square() + model.log_norm.array()).matrix();
  }
}

double log_wavefunction(const KernelModel& model, const Eigen::VectorXd& x) {
  Eigen::VectorXd logpsi;
  component_log_densities(model, x, logpsi);
  double lse = logsumexp(logpsi);
  if (model.variant != KernelVariant::GlobalSigma)
    lse -= std::log(static_cast<double>(model.n()));
  return lse;
}

double wavefunction(const KernelModel& model, const Eigen::VectorXd& x) {
  return std::exp(log_wavefunction(model, x));
}

nlohmann::json to_json(const KernelModel& model) {
  nlohmann::json j;
  j["variant"] = variant_name(model.variant);
  j["knn_percent"] = model.knn_percent;
  j["threshold_ratio"] = model.threshold_ratio;
  j["centers"] = std::vector<std::vector<double>>();
  for (Eigen::Index i = 0; i < model.n(); ++i) {
    std::vector<double> row(model.d());
    for (Eigen::Index c = 0; c < model.d(); ++c) row[c] = model.centers(i, c);
    j["centers"].push_back(row);
  }
  switch (model.variant) {
    case KernelVariant::GlobalSigma:
      j["global_sigma"] = model.global_sigma;
      break;
    case KernelVariant::PerPointSigma:
      j["sigmas"] = std::vector<double>(model.sigmas.data(), model.sigmas.data() + model.n());
      break;
    case KernelVariant::PerPointCovariance: {
      j["sigmas"] = std::vector<double>(model.sigmas.data(), model.sigmas.data() + model.n());
      nlohmann::json covs = nlohmann::json::array();
      for (const CovKernel& ck : model.covariances) {
        std::vector<std::vector<double>> m(ck.cov.rows());
        for (Eigen::Index r = 0; r < ck.cov.rows(); ++r) {
          m[r].resize(ck.cov.cols());
          for (Eigen::Index c = 0; c < ck.cov.cols(); ++c) m[r][c] = ck.cov(r, c);
        }
        covs.push_back(m);
      }
      j["covariances"] = std::move(covs);
      break;
    }
  }
  return j;
}

KernelModel model_from_json(const nlohmann::json& j) {
  KernelModel model;
  model.variant = variant_from_name(j.at("variant").get<std::string>());
  model.knn_percent = j.at("knn_percent").get<double>();
  model.threshold_ratio = j.value("threshold_ratio", 1.0);

  const auto& centers = j.at("centers");
  const Eigen::Index n = static_cast<Eigen::Index>(centers.size());
  if (n == 0) throw std::invalid_argument("model_from_json: empty centers");
  const Eigen::Index d = static_cast<Eigen::Index>(centers[0].size());
  model.centers.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index c = 0; c < d; ++c) model.centers(i, c) = centers[i][c].get<double>();

  if (model.variant == KernelVariant::GlobalSigma) {
    model.global_sigma = j.at("global_sigma").get<double>();
  } else {
    const auto sig = j.at("sigmas").get<std::vector<double>>();
    model.sigmas = Eigen::Map<const Eigen::VectorXd>(sig.data(), static_cast<Eigen::Index>(sig.size()));
  }
  if (model.variant == KernelVariant::PerPointCovariance) {
    const auto& covs = j.at("covariances");
    model.covariances.resize(covs.size());
    for (std::size_t i = 0; i < covs.size(); ++i) {
      CovKernel& ck = model.covariances[i];
      ck.cov.resize(d, d);
      for (Eigen::Index r = 0; r < d; ++r)
        for (Eigen::Index c = 0; c < d; ++c) ck.cov(r, c) = covs[i][r][c].get<double>();
      Eigen::LLT<Eigen::MatrixXd> llt(ck.cov);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("model_from_json: covariance " + std::to_string(i) +
                                 " is not positive definite");
      ck.inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
      ck.log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
      ck.trace = ck.cov.trace();
      ck.inv_trace = ck.inv.trace();
    }
  }
  model.finalize();
  return model;
}

}  // namespace pqc::kernel
