#include "pqc/scoring.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace pqc::scoring {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_winner_posterior(const Eigen::VectorXd& lj) {
  int best = 0;
  for (int c = 1; c < lj.size(); ++c)
    if (lj(c) > lj(best)) best = c;
  const double m = lj.maxCoeff();
  const double lse = m + std::log((lj.array() - m).exp().sum());
  return lj(best) - lse;
}

// Contingency table between two integer labelings.
Eigen::MatrixXd contingency(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("label vectors differ in length");
  if (a.empty()) throw std::invalid_argument("empty label vectors");
  const int ra = *std::max_element(a.begin(), a.end()) + 1;
  const int rb = *std::max_element(b.begin(), b.end()) + 1;
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ra, rb);
  for (std::size_t i = 0; i < a.size(); ++i) table(a[i], b[i]) += 1.0;
  return table;
}

double choose2(double m) { return 0.5 * m * (m - 1.0); }

double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

double anll(const probmodel::ProbabilisticModel& model, const Eigen::MatrixXd& X) {
  if (X.rows() == 0) throw std::invalid_argument("anll: empty point set");
  Eigen::VectorXd lj;
  double acc = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    probmodel::cluster_log_joints(model, X.row(i).transpose(), lj);
    acc -= log_winner_posterior(lj);
  }
  return acc / static_cast<double>(X.rows());
}

double jaccard(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
  const Eigen::MatrixXd table = contingency(labels_a, labels_b);
  double n11 = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    for (Eigen::Index j = 0; j < table.cols(); ++j) n11 += choose2(table(i, j));
  double pairs_a = 0.0, pairs_b = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i) pairs_a += choose2(table.row(i).sum());
  for (Eigen::Index j = 0; j < table.cols(); ++j) pairs_b += choose2(table.col(j).sum());
  const double denom = pairs_a + pairs_b - n11;  // n11 + n10 + n01
  if (denom == 0.0) return 1.0;                  // both partitions all singletons
  return n11 / denom;
}

double cramers_v(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
  const Eigen::MatrixXd table = contingency(labels_a, labels_b);
  const Eigen::Index r = table.rows(), c = table.cols();
  if (r == 1 && c == 1) return 1.0;
  if (r == 1 || c == 1) return 0.0;
  const double n = table.sum();
  const Eigen::VectorXd row_sum = table.rowwise().sum();
  const Eigen::VectorXd col_sum = table.colwise().sum();
  double chi2 = 0.0;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) {
      const double expected = row_sum(i) * col_sum(j) / n;
      if (expected > 0.0) {
        const double diff = table(i, j) - expected;
        chi2 += diff * diff / expected;
      }
    }
  return std::sqrt(chi2 / (n * static_cast<double>(std::min(r, c) - 1)));
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_bt =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double bt = std::exp(log_bt);
  if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

PearsonResult pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson: length mismatch");
  const std::size_t n = xs.size();
  if (n < 3) throw std::invalid_argument("pearson: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson: constant series");

  PearsonResult out;
  out.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double nu = static_cast<double>(n - 2);
  if (std::abs(out.rho) >= 1.0) {
    out.p_value = 0.0;
  } else {
    const double t2 = out.rho * out.rho * nu / (1.0 - out.rho * out.rho);
    out.p_value = incomplete_beta(0.5 * nu, 0.5, nu / (nu + t2));
  }
  return out;
}

std::vector<int> factorize(const std::vector<std::string>& labels) {
  std::vector<int> out(labels.size());
  std::map<std::string, int> codes;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto [it, inserted] = codes.emplace(labels[i], static_cast<int>(codes.size()));
    out[i] = it->second;
  }
  return out;
}

std::vector<double> default_knn_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(2.5 * i);
  return grid;
}

std::vector<double> default_eth_grid(double eps_v) {
  std::vector<double> grid;
  const double hi = 3.0;
  for (int j = 0; j < 16; ++j)
    grid.push_back(eps_v * std::pow(hi / eps_v, static_cast<double>(j) / 15.0));
  return grid;
}

SweepResult sweep(const Dataset& data, kernel::KernelVariant variant,
                  const std::vector<double>& knn_grid, const std::vector<double>& eth_grid,
                  const pipeline::FitSettings& settings) {
  if (knn_grid.empty() || eth_grid.empty())
    throw std::invalid_argument("sweep: grids must be nonempty");
  if (!std::is_sorted(knn_grid.begin(), knn_grid.end()) ||
      !std::is_sorted(eth_grid.begin(), eth_grid.end()))
    throw std::invalid_argument("sweep: grids must be ascending");

  SweepResult result;
  result.knn_grid = knn_grid;
  result.eth_grid = eth_grid;
  result.cells.assign(knn_grid.size(), std::vector<SweepCell>(eth_grid.size()));

  std::vector<int> truth;
  if (data.has_labels()) truth = factorize(data.labels);

  pipeline::FitSettings cell_settings = settings;
  cell_settings.variant = variant;

  const int cols = static_cast<int>(knn_grid.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < cols; ++i) {
    auto& column = result.cells[i];
    for (std::size_t j = 0; j < eth_grid.size(); ++j) {
      column[j].knn_percent = knn_grid[i];
      column[j].eth = eth_grid[j];
    }
    try {
      const pipeline::CellBase base = pipeline::fit_base(data, knn_grid[i], cell_settings);
      for (std::size_t j = 0; j < eth_grid.size(); ++j) {
        const pipeline::CellEval eval =
            pipeline::eval_at_eth(base, data, eth_grid[j], cell_settings);
        SweepCell& cell = column[j];
        cell.eth_used = eval.eth_used;
        cell.anll = eval.anll;
        cell.k_effective = eval.train_allocation.k_effective;
        cell.trivial = eval.trivial;
        cell.converged = base.descent_result.converged;
        if (!truth.empty()) {
          cell.js = jaccard(truth, eval.train_allocation.assignment);
          cell.cv = cramers_v(truth, eval.train_allocation.assignment);
        }
      }
    } catch (const std::exception&) {
      for (std::size_t j = 0; j < eth_grid.size(); ++j) {
        column[j].failed = true;
        column[j].anll = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }

  result.max_display_anll = 0.0;
  for (const auto& column : result.cells)
    for (const SweepCell& cell : column)
      if (!cell.failed && !cell.trivial)
        result.max_display_anll = std::max(result.max_display_anll, cell.anll);

  if (!truth.empty()) {
    result.row_correlations.resize(eth_grid.size());
    for (std::size_t j = 0; j < eth_grid.size(); ++j) {
      std::vector<double> xs, ys;
      for (std::size_t i = 0; i < knn_grid.size(); ++i) {
        const SweepCell& cell = result.cells[i][j];
        if (cell.failed || cell.trivial || !cell.js) continue;
        xs.push_back(cell.anll);
        ys.push_back(*cell.js);
      }
      try {
        if (xs.size() >= 3) result.row_correlations[j] = pearson(xs, ys);
      } catch (const std::exception&) {
        // constant series; leave the correlation absent
      }
    }
  }
  return result;
}

std::vector<Candidate> select_models(const SweepResult& sweep) {
  const std::size_t nk = sweep.knn_grid.size();
  const std::size_t ne = sweep.eth_grid.size();
  if (nk == 0 || ne == 0) return {};

  auto display = [&](std::size_t i, std::size_t j) -> double {
    const SweepCell& cell = sweep.cells[i][j];
    if (cell.failed) return kInf;
    if (cell.trivial) return sweep.max_display_anll;
    return cell.anll;
  };

  // Interior local minima along %KNN at the default row, runs of equal
  // values collapsed so duplicated grid points do not create artifacts.
  std::vector<std::size_t> minima;
  std::size_t i = 0;
  while (i < nk) {
    std::size_t run_end = i;
    while (run_end + 1 < nk && display(run_end + 1, 0) == display(i, 0)) ++run_end;
    if (i > 0 && run_end + 1 < nk && std::isfinite(display(i, 0)) &&
        display(i - 1, 0) > display(i, 0) && display(run_end + 1, 0) > display(i, 0))
      minima.push_back(i);
    i = run_end + 1;
  }

  auto stable_along_eth = [&](std::size_t ki) {
    for (std::size_t j = 0; j + 2 < ne; ++j) {
      double lo = kInf, hi = -kInf;
      bool usable = true;
      for (std::size_t t = j; t < j + 3; ++t) {
        const SweepCell& cell = sweep.cells[ki][t];
        if (cell.failed || cell.trivial) {
          usable = false;
          break;
        }
        lo = std::min(lo, cell.anll);
        hi = std::max(hi, cell.anll);
      }
      if (usable && (hi == 0.0 || (hi - lo) / hi < 0.1)) return true;
    }
    return false;
  };

  std::vector<Candidate> stable, unstable;
  for (std::size_t ki : minima) {
    const SweepCell& cell = sweep.cells[ki][0];
    Candidate c;
    c.knn_percent = cell.knn_percent;
    c.eth = cell.eth;
    c.k = cell.k_effective;
    c.anll = cell.anll;
    c.stable_valley = stable_along_eth(ki);
    (c.stable_valley ? stable : unstable).push_back(c);
  }

  // Low-ANLL plateau at higher E_th: best 3x3 block of non-trivial cells
  // with <10% internal variation, landing at or below the 25th percentile
  // of the non-trivial scores.
  std::vector<double> pool;
  for (std::size_t a = 0; a < nk; ++a)
    for (std::size_t b = 0; b < ne; ++b)
      if (!sweep.cells[a][b].failed && !sweep.cells[a][b].trivial)
        pool.push_back(sweep.cells[a][b].anll);
  std::optional<Candidate> plateau;
  if (pool.size() >= 9 && nk >= 3 && ne >= 4) {
    std::sort(pool.begin(), pool.end());
    const double low_threshold = pool[pool.size() / 4];
    double best_mean = kInf;
    for (std::size_t a = 0; a + 2 < nk; ++a) {
      for (std::size_t b = 1; b + 2 < ne; ++b) {
        double lo = kInf, hi = -kInf, sum = 0.0;
        std::size_t best_a = a, best_b = b;
        bool usable = true;
        for (std::size_t ia = a; ia < a + 3 && usable; ++ia)
          for (std::size_t ib = b; ib < b + 3; ++ib) {
            const SweepCell& cell = sweep.cells[ia][ib];
            if (cell.failed || cell.trivial) {
              usable = false;
              break;
            }
            sum += cell.anll;
            if (cell.anll < lo) {
              lo = cell.anll;
              best_a = ia;
              best_b = ib;
            }
            hi = std::max(hi, cell.anll);
          }
        if (!usable) continue;
        if (!(hi == 0.0 || (hi - lo) / hi < 0.1)) continue;
        const double mean = sum / 9.0;
        if (mean > low_threshold || mean >= best_mean) continue;
        best_mean = mean;
        const SweepCell& cell = sweep.cells[best_a][best_b];
        Candidate c;
        c.knn_percent = cell.knn_percent;
        c.eth = cell.eth;
        c.k = cell.k_effective;
        c.anll = cell.anll;
        c.stable_valley = true;
        c.hierarchical = true;
        plateau = c;
      }
    }
  }

  std::vector<Candidate> out = std::move(stable);
  out.insert(out.end(), unstable.begin(), unstable.end());
  if (plateau) out.push_back(*plateau);
  return out;
}

void export_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_sweep_csv: cannot write '" + path + "'");
  out << "knn,eth,anll,k,js,cv,trivial,converged\n";
  for (const auto& column : sweep.cells) {
    for (const SweepCell& cell : column) {
      out << g17(cell.knn_percent) << ',' << g17(cell.eth) << ',' << g17(cell.anll) << ','
          << cell.k_effective << ',';
      if (cell.js) out << g17(*cell.js);
      out << ',';
      if (cell.cv) out << g17(*cell.cv);
      out << ',' << (cell.trivial ? 1 : 0) << ',' << (cell.converged ? 1 : 0) << '\n';
    }
  }
}

nlohmann::json sweep_summary_json(const SweepResult& sweep,
                                  const std::vector<Candidate>& candidates) {
  nlohmann::json j;
  j["knn_grid"] = sweep.knn_grid;
  j["eth_grid"] = sweep.eth_grid;
  j["max_display_anll"] = sweep.max_display_anll;
  j["candidates"] = nlohmann::json::array();
  for (const Candidate& c : candidates)
    j["candidates"].push_back({{"knn_percent", c.knn_percent},
                               {"eth", c.eth},
                               {"k", c.k},
                               {"anll", c.anll},
                               {"stable_valley", c.stable_valley},
                               {"hierarchical", c.hierarchical}});
  j["correlations"] = nlohmann::json::array();
  for (std::size_t row = 0; row < sweep.row_correlations.size(); ++row) {
    if (!sweep.row_correlations[row]) continue;
    j["correlations"].push_back({{"eth", sweep.eth_grid[row]},
                                 {"rho", sweep.row_correlations[row]->rho},
                                 {"p_value", sweep.row_correlations[row]->p_value}});
  }
  return j;
}

}  // namespace pqc::scoring
