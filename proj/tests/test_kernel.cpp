#include "pqc/kernel.hpp"

#include "test_helpers.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace pqc;
using kernel::KernelModel;
using kernel::KernelVariant;

namespace {

Dataset line_points(std::initializer_list<double> xs) {
  Eigen::MatrixXd X(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double v : xs) X(i++, 0) = v;
  return testing::make_dataset(X);
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("sigma_global_quantile on collinear points") {
  // neighbours: 0->1, 1->0 (tie with 2, lower index wins), 2->1; mean = 1
  const Dataset data = line_points({0.0, 1.0, 2.0});
  CHECK(kernel::sigma_global_quantile(data, 34.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sigma_global_quantile two points") {
  const Dataset data = line_points({0.0, 3.5});
  CHECK(kernel::sigma_global_quantile(data, 50.0) == doctest::Approx(3.5).epsilon(1e-15));
}

TEST_CASE("duplicate points make GlobalSigma construction fail") {
  Eigen::MatrixXd X(4, 1);
  X << 1.0, 1.0, 2.0, 2.0;
  const Dataset data = testing::make_dataset(X);
  CHECK(kernel::sigma_global_quantile(data, 25.0) == 0.0);
  CHECK_THROWS_AS(kernel::make_global_model(data, 25.0), std::invalid_argument);
}

TEST_CASE("knn_count bounds") {
  CHECK_THROWS_AS(kernel::knn_count(0.1, 100), std::invalid_argument);   // K = 0
  CHECK_THROWS_AS(kernel::knn_count(100.0, 100), std::invalid_argument); // K = n
  CHECK(kernel::knn_count(2.5, 400) == 10);
  CHECK(kernel::knn_count(17.5, 200) == 35);
}

TEST_CASE("sigma_per_point hand enumeration") {
  const Dataset data = line_points({0.0, 1.0, 3.0});
  const Eigen::VectorXd s = kernel::sigma_per_point(data, 34.0);  // K = 1
  CHECK(s(0) == doctest::Approx(1.0));
  CHECK(s(1) == doctest::Approx(1.0));
  CHECK(s(2) == doctest::Approx(2.0));
}

TEST_CASE("sigma_per_point equilateral triangle symmetry") {
  const double side = 0.8;
  Eigen::MatrixXd X(3, 2);
  X << 0.0, 0.0, side, 0.0, side / 2.0, side * std::sqrt(3.0) / 2.0;
  const Eigen::VectorXd s = kernel::sigma_per_point(testing::make_dataset(X), 67.0);  // K = 2
  for (int i = 0; i < 3; ++i) CHECK(s(i) == doctest::Approx(side).epsilon(1e-12));
}

TEST_CASE("sigma_per_point on a regular polygon ring") {
  const int n = 8;
  Eigen::MatrixXd X(n, 2);
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * M_PI * i / n;
    X(i, 0) = std::cos(a);
    X(i, 1) = std::sin(a);
  }
  const Eigen::VectorXd s = kernel::sigma_per_point(testing::make_dataset(X), 25.0);  // K = 2
  for (int i = 1; i < n; ++i) CHECK(std::abs(s(i) - s(0)) < 1e-12);
}

TEST_CASE("sigma_per_point is permutation-equivariant") {
  const Eigen::MatrixXd X = testing::random_points(20, 2, -1.0, 1.0, 3);
  const Eigen::VectorXd s = kernel::sigma_per_point(testing::make_dataset(X), 20.0);
  std::vector<int> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937 rng(5);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd Xp(20, 2);
  for (int i = 0; i < 20; ++i) Xp.row(i) = X.row(perm[i]);
  const Eigen::VectorXd sp = kernel::sigma_per_point(testing::make_dataset(Xp), 20.0);
  for (int i = 0; i < 20; ++i) CHECK(sp(i) == doctest::Approx(s(perm[i])).epsilon(1e-14));
}

TEST_CASE("local_covariance hand evaluations") {
  // x_0 at the origin with neighbours at (+-1, 0): scatter diag(2, 0)
  Eigen::MatrixXd X(3, 2);
  X << 0.0, 0.0, 1.0, 0.0, -1.0, 0.0;
  const auto covs = kernel::local_covariance(testing::make_dataset(X), 67.0);  // K = 2
  CHECK(covs[0](0, 0) == doctest::Approx(2.0));
  CHECK(covs[0](0, 1) == doctest::Approx(0.0));
  CHECK(covs[0](1, 1) == doctest::Approx(0.0));

  // 1-D neighbours at +-a: scalar 2a^2
  const double a = 0.7;
  const auto covs1 = kernel::local_covariance(line_points({0.0, a, -a}), 67.0);
  CHECK(covs1[0](0, 0) == doctest::Approx(2.0 * a * a).epsilon(1e-14));
}

TEST_CASE("local_covariance of coincident neighbours is the zero matrix") {
  Eigen::MatrixXd X(3, 2);
  X << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;
  const auto covs = kernel::local_covariance(testing::make_dataset(X), 67.0);
  CHECK(covs[0].cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("local_covariance requires K >= 2") {
  CHECK_THROWS_AS(kernel::local_covariance(line_points({0.0, 1.0, 2.0}), 34.0),
                  std::invalid_argument);
}

TEST_CASE("clamp_covariance raises small eigenvalues only") {
  Eigen::Matrix2d cov;
  cov << 2.0, 0.0, 0.0, 0.0;
  const Eigen::MatrixXd clamped = kernel::clamp_covariance(cov, 0.5);
  CHECK(clamped(0, 0) == doctest::Approx(2.0));
  CHECK(clamped(1, 1) == doctest::Approx(0.5));
  CHECK(clamped(0, 1) == doctest::Approx(0.0));

  Eigen::Matrix2d big;
  big << 3.0, 0.4, 0.4, 2.0;
  CHECK((kernel::clamp_covariance(big, 0.1) - big).cwiseAbs().maxCoeff() < 1e-12);

  const Eigen::MatrixXd full = kernel::clamp_covariance(Eigen::Matrix2d::Zero(), 0.25);
  CHECK((full - 0.25 * Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("threshold_covariance floors eigenvalues and is idempotent") {
  const Eigen::MatrixXd X = testing::random_points(30, 2, -1.0, 1.0, 17);
  const Dataset data = testing::make_dataset(X);
  const double knn = 20.0;  // K = 6
  const auto raw = kernel::local_covariance(data, knn);
  const auto once = kernel::threshold_covariance(raw, data, knn, 1.0);
  const auto twice = kernel::threshold_covariance(once, data, knn, 1.0);

  const Eigen::VectorXd sig = kernel::sigma_per_point(data, knn);
  for (std::size_t i = 0; i < once.size(); ++i) {
    const double floor = sig(static_cast<Eigen::Index>(i)) * sig(static_cast<Eigen::Index>(i)) / 2.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(once[i]);
    CHECK(eig.eigenvalues().minCoeff() >= floor - 1e-12);
    CHECK((once[i] - twice[i]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((once[i] - once[i].transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("threshold_covariance rejects ratios that give no neighbours") {
  const Dataset data = testing::make_dataset(testing::random_points(30, 2, -1.0, 1.0, 2));
  const auto raw = kernel::local_covariance(data, 10.0);  // K = 3
  CHECK_THROWS_AS(kernel::threshold_covariance(raw, data, 10.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(kernel::threshold_covariance(raw, data, 10.0, 1.5), std::invalid_argument);
}

TEST_CASE("component_log_density at centers") {
  Eigen::MatrixXd X(1, 1);
  X << 0.3;
  KernelModel knn_model;
  knn_model.variant = KernelVariant::PerPointSigma;
  knn_model.centers = X;
  knn_model.sigmas = Eigen::VectorXd::Ones(1);
  knn_model.finalize();
  // standard normal at its mode
  CHECK(kernel::component_log_density(knn_model, 0, X.row(0).transpose()) ==
        doctest::Approx(-0.91893853320467274).epsilon(1e-14));

  KernelModel global;
  global.variant = KernelVariant::GlobalSigma;
  global.centers = X;
  global.global_sigma = 2.0;
  global.finalize();
  CHECK(kernel::component_log_density(global, 0, X.row(0).transpose()) == 0.0);

  CHECK_THROWS_AS(kernel::component_log_density(global, 1, X.row(0).transpose()),
                  std::out_of_range);
}

TEST_CASE("identity covariance matches unit sigma everywhere") {
  const Eigen::MatrixXd C = testing::random_points(6, 2, -1.0, 1.0, 23);
  KernelModel cov_model;
  cov_model.variant = KernelVariant::PerPointCovariance;
  cov_model.centers = C;
  cov_model.sigmas = Eigen::VectorXd::Ones(6);
  cov_model.covariances.resize(6);
  for (auto& ck : cov_model.covariances) {
    ck.cov = Eigen::Matrix2d::Identity();
    ck.inv = Eigen::Matrix2d::Identity();
    ck.log_det = 0.0;
    ck.trace = 2.0;
    ck.inv_trace = 2.0;
  }
  cov_model.finalize();

  KernelModel knn_model;
  knn_model.variant = KernelVariant::PerPointSigma;
  knn_model.centers = C;
  knn_model.sigmas = Eigen::VectorXd::Ones(6);
  knn_model.finalize();

  const Eigen::MatrixXd probes = testing::random_points(10, 2, -3.0, 3.0, 29);
  for (int p = 0; p < probes.rows(); ++p) {
    for (int i = 0; i < 6; ++i) {
      const double a = kernel::component_log_density(cov_model, i, probes.row(p).transpose());
      const double b = kernel::component_log_density(knn_model, i, probes.row(p).transpose());
      CHECK(std::abs(a - b) < 1e-12);
    }
    CHECK(std::abs(kernel::log_wavefunction(cov_model, probes.row(p).transpose()) -
                   kernel::log_wavefunction(knn_model, probes.row(p).transpose())) < 1e-10);
  }
}

TEST_CASE("wavefunction of a single normalized kernel at its center") {
  KernelModel model;
  model.variant = KernelVariant::PerPointSigma;
  model.centers = Eigen::MatrixXd::Zero(1, 1);
  model.sigmas = Eigen::VectorXd::Ones(1);
  model.finalize();
  CHECK(kernel::wavefunction(model, Eigen::VectorXd::Zero(1)) ==
        doctest::Approx(0.3989422804014327).epsilon(1e-14));
}

TEST_CASE("normalized wave functions integrate to one") {
  // PerPointSigma in 1-D
  {
    const Dataset data = line_points({-0.8, -0.1, 0.2, 0.9, 1.4});
    const KernelModel model = kernel::make_knn_model(data, 40.0);  // K = 2
    Eigen::VectorXd lo, hi;
    testing::model_box(model, 8.0, lo, hi);
    CHECK(testing::integrate_wavefunction(model, lo, hi, 4000) ==
          doctest::Approx(1.0).epsilon(1e-2));
  }
  // PerPointCovariance in 2-D
  {
    const Dataset data = testing::make_dataset(testing::random_points(12, 2, -1.0, 1.0, 31));
    const KernelModel model = kernel::make_cov_model(data, 25.0, 1.0);  // K = 3
    Eigen::VectorXd lo, hi;
    testing::model_box(model, 8.0, lo, hi);
    CHECK(testing::integrate_wavefunction(model, lo, hi, 700) ==
          doctest::Approx(1.0).epsilon(1e-2));
  }
}

TEST_CASE("far-field wave function underflows to zero with finite log") {
  KernelModel model;
  model.variant = KernelVariant::PerPointSigma;
  model.centers = Eigen::MatrixXd::Zero(1, 1);
  model.sigmas = Eigen::VectorXd::Ones(1);
  model.finalize();
  Eigen::VectorXd far(1);
  far << 100.0;
  const double logpsi = kernel::log_wavefunction(model, far);
  CHECK(std::isfinite(logpsi));
  CHECK(logpsi == doctest::Approx(-5000.0).epsilon(1e-3));
  CHECK(kernel::wavefunction(model, far) == 0.0);
}

TEST_CASE("model JSON round-trip preserves evaluations") {
  const Dataset data = testing::make_dataset(testing::random_points(15, 2, -1.0, 1.0, 37));
  for (int variant = 0; variant < 3; ++variant) {
    KernelModel model;
    if (variant == 0)
      model = kernel::make_global_model(data, 20.0);
    else if (variant == 1)
      model = kernel::make_knn_model(data, 20.0);
    else
      model = kernel::make_cov_model(data, 20.0, 1.0);
    const nlohmann::json j = kernel::to_json(model);
    const KernelModel back = kernel::model_from_json(j);
    const Eigen::MatrixXd probes = testing::random_points(5, 2, -2.0, 2.0, 41);
    for (int p = 0; p < probes.rows(); ++p)
      CHECK(std::abs(kernel::log_wavefunction(model, probes.row(p).transpose()) -
                     kernel::log_wavefunction(back, probes.row(p).transpose())) < 1e-12);
  }
}

}  // TEST_SUITE
