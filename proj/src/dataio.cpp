#include "pqc/dataio.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace pqc::dataio {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // tolerate CRLF files and stray spaces around cells
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ' || cell.back() == '\t'))
      cell.pop_back();
    std::size_t start = cell.find_first_not_of(" \t");
    out.push_back(start == std::string::npos ? std::string() : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& value) {
  if (s.empty()) return false;
  char* end = nullptr;
  value = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(value);
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// 53-bit uniform in (0,1] plus Box-Muller; mt19937_64 output is fixed by
// the standard, so generated datasets do not depend on the libstdc++
// distribution implementations.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : rng_(seed) {}

  double uniform() { return static_cast<double>((rng_() >> 11) + 1) * 0x1.0p-53; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u = uniform();
    const double v = uniform();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double a = 2.0 * M_PI * v;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 rng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace

Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: '" + path + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);
  if (header.empty()) throw std::runtime_error("load_csv: '" + path + "' has an empty header row");

  int label_idx = -1;
  if (label_column) {
    const auto it = std::find(header.begin(), header.end(), *label_column);
    if (it == header.end())
      throw std::runtime_error("load_csv: label column '" + *label_column + "' not found in '" +
                               path + "'");
    label_idx = static_cast<int>(it - header.begin());
  }

  const int d = static_cast<int>(header.size()) - (label_idx >= 0 ? 1 : 0);
  if (d < 1) throw std::runtime_error("load_csv: '" + path + "' has no feature columns");

  std::vector<double> values;
  std::vector<std::string> labels;
  long n = 0;
  long row = 1;  // header was row 1
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("load_csv: row " + std::to_string(row) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(header.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (static_cast<int>(c) == label_idx) {
        labels.push_back(cells[c]);
        continue;
      }
      double v;
      if (!parse_double(cells[c], v))
        throw std::runtime_error("load_csv: cell at row " + std::to_string(row) + ", column '" +
                                 header[c] + "' is not a finite number: '" + cells[c] + "'");
      values.push_back(v);
    }
    ++n;
  }
  if (n == 0) throw std::runtime_error("load_csv: '" + path + "' has no data rows");

  Dataset data;
  data.X.resize(n, d);
  for (long i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) data.X(i, j) = values[static_cast<std::size_t>(i) * d + j];
  data.labels = std::move(labels);
  data.preprocessing_log.push_back("load_csv:" + path);
  return data;
}

void save_csv(const Dataset& data, const std::string& path,
              const std::vector<std::string>& feature_names, const std::string& label_name) {
  if (!feature_names.empty() && static_cast<Eigen::Index>(feature_names.size()) != data.d())
    throw std::invalid_argument("save_csv: feature_names size does not match d");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot write '" + path + "'");

  for (Eigen::Index j = 0; j < data.d(); ++j) {
    if (j) out << ',';
    if (feature_names.empty())
      out << 'x' << j;
    else
      out << feature_names[j];
  }
  if (data.has_labels()) out << ',' << label_name;
  out << '\n';

  for (Eigen::Index i = 0; i < data.n(); ++i) {
    for (Eigen::Index j = 0; j < data.d(); ++j) {
      if (j) out << ',';
      out << format_g17(data.X(i, j));
    }
    if (data.has_labels()) out << ',' << data.labels[i];
    out << '\n';
  }
}

Dataset standardize(const Dataset& data, StandardizeParams* fitted) {
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  StandardizeParams params;
  params.mean = data.X.colwise().mean();
  params.stddev.resize(d);

  Dataset out = data;
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::ArrayXd centered = data.X.col(j).array() - params.mean(j);
    const double var = n > 1 ? centered.square().sum() / static_cast<double>(n - 1) : 0.0;
    const double sd = std::sqrt(var);
    if (sd > 0.0) {
      params.stddev(j) = sd;
      out.X.col(j) = centered / sd;
    } else {
      params.stddev(j) = 1.0;
      params.zero_variance_cols.push_back(static_cast<int>(j));
      out.X.col(j).setZero();
      out.preprocessing_log.push_back("standardize:zero_variance_column:" + std::to_string(j));
    }
  }
  out.preprocessing_log.push_back("standardize");
  if (fitted) *fitted = params;
  return out;
}

Dataset rescale_mean_norm(const Dataset& data) {
  const double lambda = data.X.rowwise().norm().mean();
  if (!(lambda > 0.0))
    throw std::runtime_error("rescale_mean_norm: mean row norm is zero, scale undefined");
  Dataset out = data;
  out.X /= lambda;
  out.lambda_scale = lambda;
  out.preprocessing_log.push_back("rescale_mean_norm:lambda=" + format_g17(lambda));
  return out;
}

Dataset pca_project(const Dataset& data, int n_components, PcaParams* fitted) {
  const Eigen::Index d = data.d();
  if (n_components < 1 || n_components > d)
    throw std::invalid_argument("pca_project: n_components must be in [1, d]");

  PcaParams params;
  params.center = data.X.colwise().mean();
  Eigen::MatrixXd centered = data.X.rowwise() - params.center.transpose();
  const double denom = data.n() > 1 ? static_cast<double>(data.n() - 1) : 1.0;
  const Eigen::MatrixXd cov = centered.transpose() * centered / denom;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("pca_project: eigensolver failed");

  // SelfAdjointEigenSolver sorts ascending; take the trailing columns.
  params.components.resize(d, n_components);
  params.eigenvalues.resize(n_components);
  for (int c = 0; c < n_components; ++c) {
    const Eigen::Index src = d - 1 - c;
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index imax;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    params.components.col(c) = v;
    params.eigenvalues(c) = eig.eigenvalues()(src);
  }

  Dataset out = data;
  out.X = centered * params.components;
  out.preprocessing_log.push_back("pca_project:" + std::to_string(n_components));
  if (fitted) *fitted = params;
  return out;
}

Dataset gen_local_densities(std::uint64_t seed) {
  GaussianSource g(seed);
  Dataset out;
  out.X.resize(400, 2);
  out.labels.reserve(400);

  struct Blob {
    double cx, cy, sx, sy;
    const char* name;
  };
  // Two parallel 8:1 cigars on top; a broad sparse cluster at the bottom
  // partially overlapped by a compact dense one lying inside its 3-sigma
  // extent (std ratio 5.2, variance ratio ~27).
  const Blob blobs[4] = {
      {0.0, 4.75, 2.0, 0.25, "cigar_top"},
      {0.0, 1.75, 2.0, 0.25, "cigar_low"},
      {0.0, -3.25, 1.3, 1.3, "sparse"},
      {0.9, -2.55, 0.25, 0.25, "dense"},
  };
  long row = 0;
  for (const Blob& b : blobs) {
    for (int i = 0; i < 100; ++i, ++row) {
      out.X(row, 0) = b.cx + b.sx * g.normal();
      out.X(row, 1) = b.cy + b.sy * g.normal();
      out.labels.emplace_back(b.name);
    }
  }
  out.preprocessing_log.push_back("gen_local_densities:seed=" + std::to_string(seed));
  return out;
}

namespace {

// Arc length of r = theta/pi from theta0, ds = sqrt(r'^2 + r^2) dtheta.
double spiral_arc_length(double theta0, double theta) {
  auto antiderivative = [](double t) {
    return 0.5 * (t * std::sqrt(1.0 + t * t) + std::log(t + std::sqrt(1.0 + t * t)));
  };
  return (antiderivative(theta) - antiderivative(theta0)) / M_PI;
}

}  // namespace

Dataset gen_two_spirals(std::uint64_t seed) {
  GaussianSource g(seed);
  Dataset out;
  out.X.resize(400, 2);
  out.labels.reserve(400);

  // Archimedean arm r = theta/pi over 1.5 turns; consecutive passes of the
  // two arms are 1 apart in radius, i.e. 10 and 40 noise sigmas. Points are
  // spaced uniformly in arc length so the outer windings are sampled as
  // densely as the inner ones.
  const double theta0 = 0.5 * M_PI;
  const double theta1 = theta0 + 3.0 * M_PI;
  const double total_length = spiral_arc_length(theta0, theta1);
  const double noise[2] = {0.1, 0.025};

  long row = 0;
  for (int s = 0; s < 2; ++s) {
    const double rot = s * M_PI;
    for (int i = 0; i < 200; ++i, ++row) {
      const double target = total_length * static_cast<double>(i) / 199.0;
      double theta = theta0 + (theta1 - theta0) * static_cast<double>(i) / 199.0;
      for (int it = 0; it < 30; ++it) {  // Newton on monotone arc length
        const double f = spiral_arc_length(theta0, theta) - target;
        const double df = std::sqrt(1.0 + theta * theta) / M_PI;
        const double step = f / df;
        theta -= step;
        if (std::abs(step) < 1e-13) break;
      }
      const double r = theta / M_PI + noise[s] * g.normal();
      out.X(row, 0) = r * std::cos(theta + rot);
      out.X(row, 1) = r * std::sin(theta + rot);
      out.labels.emplace_back(s == 0 ? "spiral1" : "spiral2");
    }
  }
  out.preprocessing_log.push_back("gen_two_spirals:seed=" + std::to_string(seed));
  return out;
}

}  // namespace pqc::dataio
