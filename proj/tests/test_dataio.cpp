#include "pqc/dataio.hpp"

#include "test_helpers.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

using namespace pqc;

namespace {

std::string write_temp(const std::string& name, const std::string& contents) {
  const std::string path = std::string("pqc_test_") + name;
  std::ofstream out(path);
  out << contents;
  return path;
}

}  // namespace

TEST_SUITE("dataio") {

TEST_CASE("load_csv reads the crabs file") {
  const Dataset data = dataio::load_csv(std::string(PQC_DATA_DIR) + "/crabs.csv", "group");
  CHECK(data.n() == 200);
  CHECK(data.d() == 5);
  REQUIRE(data.has_labels());
  CHECK(data.labels[0] == "BM");
  CHECK(data.X(0, 0) == doctest::Approx(8.1));
  CHECK(data.X(199, 4) == doctest::Approx(21.1));
}

TEST_CASE("load_csv minimal one-cell file") {
  const std::string path = write_temp("one.csv", "v\n0.0\n");
  const Dataset data = dataio::load_csv(path);
  CHECK(data.n() == 1);
  CHECK(data.d() == 1);
  CHECK_FALSE(data.has_labels());
  std::remove(path.c_str());
}

TEST_CASE("load_csv reports the offending cell") {
  const std::string path = write_temp("bad.csv", "a,b\n1.0,2.0\n3.0,oops\n");
  CHECK_THROWS_WITH_AS(dataio::load_csv(path),
                       doctest::Contains("row 3, column 'b'"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("load_csv missing file and missing label column") {
  CHECK_THROWS_AS(dataio::load_csv("definitely_not_here.csv"), std::runtime_error);
  const std::string path = write_temp("nolabel.csv", "a\n1.0\n");
  CHECK_THROWS_AS(dataio::load_csv(path, "label"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("standardize uses the n-1 denominator") {
  Eigen::MatrixXd X(2, 1);
  X << 1.0, 3.0;
  const Dataset out = dataio::standardize(testing::make_dataset(X));
  CHECK(out.X(0, 0) == doctest::Approx(-0.70710678118654746).epsilon(1e-12));
  CHECK(out.X(1, 0) == doctest::Approx(0.70710678118654746).epsilon(1e-12));
}

TEST_CASE("standardize is idempotent") {
  const Dataset data = testing::make_dataset(testing::random_points(40, 3, -2.0, 5.0, 11));
  const Dataset once = dataio::standardize(data);
  const Dataset twice = dataio::standardize(once);
  CHECK((once.X - twice.X).cwiseAbs().maxCoeff() < 1e-9);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(once.X.col(j).mean()) < 1e-9);
    const double sd = std::sqrt(once.X.col(j).squaredNorm() / (once.n() - 1));
    CHECK(sd == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("standardize zeroes constant columns and logs them") {
  Eigen::MatrixXd X(3, 2);
  X << 5.0, 1.0, 5.0, 2.0, 5.0, 3.0;
  dataio::StandardizeParams params;
  const Dataset out = dataio::standardize(testing::make_dataset(X), &params);
  CHECK(out.X.col(0).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(params.zero_variance_cols.size() == 1);
  CHECK(params.zero_variance_cols[0] == 0);
  bool logged = false;
  for (const auto& entry : out.preprocessing_log)
    if (entry.find("zero_variance") != std::string::npos) logged = true;
  CHECK(logged);
}

TEST_CASE("rescale_mean_norm hand case and fixed points") {
  Eigen::MatrixXd X(2, 2);
  X << 3.0, 4.0, 0.0, 5.0;
  const Dataset out = dataio::rescale_mean_norm(testing::make_dataset(X));
  CHECK(out.lambda_scale == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(out.X(0, 0) == doctest::Approx(0.6));
  CHECK(out.X(0, 1) == doctest::Approx(0.8));
  CHECK(out.X(1, 0) == doctest::Approx(0.0));
  CHECK(out.X(1, 1) == doctest::Approx(1.0));
  CHECK(out.X.rowwise().norm().mean() == doctest::Approx(1.0).epsilon(1e-9));

  Eigen::MatrixXd unit(1, 2);
  unit << 1.0, 0.0;
  const Dataset fixed = dataio::rescale_mean_norm(testing::make_dataset(unit));
  CHECK(fixed.lambda_scale == doctest::Approx(1.0));
  CHECK(fixed.X(0, 0) == doctest::Approx(1.0));

  const Dataset again = dataio::rescale_mean_norm(out);
  CHECK(again.lambda_scale == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("rescale_mean_norm rejects the all-zero matrix") {
  CHECK_THROWS_AS(dataio::rescale_mean_norm(testing::make_dataset(Eigen::MatrixXd::Zero(3, 2))),
                  std::runtime_error);
}

TEST_CASE("pca_project full rank preserves pairwise distances") {
  const Dataset data =
      dataio::standardize(testing::make_dataset(testing::random_points(30, 4, -1.0, 1.0, 7)));
  const Dataset proj = dataio::pca_project(data, 4);
  for (int i = 0; i < 30; ++i)
    for (int j = i + 1; j < 30; ++j) {
      const double before = (data.X.row(i) - data.X.row(j)).norm();
      const double after = (proj.X.row(i) - proj.X.row(j)).norm();
      CHECK(std::abs(before - after) < 1e-9);
    }
}

TEST_CASE("pca_project rank-1 data reconstructs exactly") {
  Eigen::MatrixXd X(10, 2);
  for (int i = 0; i < 10; ++i) {
    X(i, 0) = 0.3 * i - 1.0;
    X(i, 1) = -2.0 * X(i, 0);
  }
  const Dataset proj = dataio::pca_project(testing::make_dataset(X), 1);
  dataio::PcaParams params;
  const Dataset full = dataio::pca_project(testing::make_dataset(X), 2, &params);
  // second eigenvalue vanishes for collinear data
  CHECK(params.eigenvalues(1) == doctest::Approx(0.0).epsilon(1e-12));
  // reconstruction from one component is exact
  Eigen::MatrixXd rec =
      (proj.X * params.components.col(0).transpose()).rowwise() + params.center.transpose();
  CHECK((rec - X).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("pca_project rejects too many components") {
  CHECK_THROWS_AS(dataio::pca_project(testing::make_dataset(Eigen::MatrixXd::Zero(5, 2)), 3),
                  std::invalid_argument);
}

TEST_CASE("gen_local_densities shape, labels and density contrast") {
  const Dataset data = dataio::gen_local_densities(42);
  CHECK(data.n() == 400);
  CHECK(data.d() == 2);
  REQUIRE(data.has_labels());
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < 400; ++i) groups[data.labels[i]].push_back(i);
  REQUIRE(groups.size() == 4);
  for (const auto& [name, rows] : groups) CHECK(rows.size() == 100);

  auto axis_variance = [&](const std::vector<int>& rows, int axis) {
    double mean = 0.0;
    for (int r : rows) mean += data.X(r, axis);
    mean /= rows.size();
    double var = 0.0;
    for (int r : rows) var += (data.X(r, axis) - mean) * (data.X(r, axis) - mean);
    return var / (rows.size() - 1);
  };
  for (int axis = 0; axis < 2; ++axis) {
    CHECK(axis_variance(groups.at("dense"), axis) <
          axis_variance(groups.at("sparse"), axis) / 10.0);
  }
}

TEST_CASE("generators are pure functions of the seed") {
  const Dataset a = dataio::gen_local_densities(7);
  const Dataset b = dataio::gen_local_densities(7);
  CHECK(a.X == b.X);
  CHECK(a.labels == b.labels);
  const Dataset c = dataio::gen_two_spirals(9);
  const Dataset d2 = dataio::gen_two_spirals(9);
  CHECK(c.X == d2.X);
  const Dataset e = dataio::gen_two_spirals(10);
  CHECK(c.X != e.X);
}

TEST_CASE("gen_two_spirals shape and radial noise levels") {
  const Dataset data = dataio::gen_two_spirals(3);
  CHECK(data.n() == 400);
  CHECK(data.d() == 2);
  std::map<std::string, std::vector<int>> groups;
  for (int i = 0; i < 400; ++i) groups[data.labels[i]].push_back(i);
  REQUIRE(groups.size() == 2);
  CHECK(groups.at("spiral1").size() == 200);
  CHECK(groups.at("spiral2").size() == 200);

  // Radial residual against the documented ideal arm r = theta/pi over
  // theta in [pi/2, 7pi/2], arm 2 rotated by pi. The winding is recovered
  // by trying every compatible theta for the observed direction.
  auto residual_std = [&](const std::vector<int>& rows, double rot) {
    double ss = 0.0;
    for (int r : rows) {
      const double x = data.X(r, 0), y = data.X(r, 1);
      const double radius = std::hypot(x, y);
      const double angle = std::atan2(y, x) - rot;
      double best = 1e300;
      for (int k = -1; k <= 4; ++k) {
        const double theta = angle + 2.0 * M_PI * k;
        if (theta < 0.0) continue;
        const double res = radius - theta / M_PI;
        if (std::abs(res) < std::abs(best)) best = res;
      }
      ss += best * best;
    }
    return std::sqrt(ss / (rows.size() - 1));
  };
  const double s1 = residual_std(groups.at("spiral1"), 0.0);
  const double s2 = residual_std(groups.at("spiral2"), M_PI);
  CHECK(s1 == doctest::Approx(0.1).epsilon(0.2));
  CHECK(s2 == doctest::Approx(0.025).epsilon(0.2));
}

TEST_CASE("save_csv round-trips a generated dataset") {
  const Dataset data = dataio::gen_two_spirals(5);
  const std::string path = "pqc_test_roundtrip.csv";
  dataio::save_csv(data, path);
  const Dataset back = dataio::load_csv(path, "label");
  CHECK(back.n() == data.n());
  CHECK(back.d() == data.d());
  CHECK((back.X - data.X).cwiseAbs().maxCoeff() == 0.0);  // 17 digits round-trip exactly
  CHECK(back.labels == data.labels);
  std::remove(path.c_str());
}

}  // TEST_SUITE
