#pragma once

#include "pqc/dataset.hpp"
#include "pqc/pipeline.hpp"
#include "pqc/probmodel.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <string>
#include <vector>

namespace pqc::scoring {

// Average negative log of the winning posterior, natural log. Exactly 0
// for the single-cluster model.
double anll(const probmodel::ProbabilisticModel& model, const Eigen::MatrixXd& X);

// Pair-counting Jaccard over unordered point pairs:
// J = n11 / (n11 + n10 + n01).
double jaccard(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

// Cramer's V from the r x c contingency table. Degenerate tables: 1x1 is
// 1, 1xc with c>1 is 0.
double cramers_v(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

struct PearsonResult {
  double rho = 0.0;
  double p_value = 1.0;  // two-sided, t distribution with n-2 dof
};

PearsonResult pearson(const std::vector<double>& xs, const std::vector<double>& ys);

// Regularized incomplete beta I_x(a, b); exposed for the p-value tests.
double incomplete_beta(double a, double b, double x);

// String labels -> contiguous integer codes in order of first appearance.
std::vector<int> factorize(const std::vector<std::string>& labels);

struct SweepCell {
  double knn_percent = 0.0;
  double eth = 0.0;
  double eth_used = 0.0;
  double anll = 0.0;
  int k_effective = 0;
  std::optional<double> js;
  std::optional<double> cv;
  bool trivial = false;
  bool converged = false;
  bool failed = false;  // kernel construction or descent threw
};

struct SweepResult {
  std::vector<double> knn_grid;
  std::vector<double> eth_grid;
  std::vector<std::vector<SweepCell>> cells;  // [knn][eth]
  // Pearson between ANLL and JS across %KNN, per eth row, over usable
  // non-trivial cells; absent without labels.
  std::vector<std::optional<PearsonResult>> row_correlations;
  double max_display_anll = 0.0;  // stand-in value for trivial cells
};

// Full (%KNN, E_th) grid evaluation. One descent per %KNN column; merge
// thresholds below the run's Eq-floor are clamped up to it. A column whose
// construction or descent fails is recorded as failed and skipped.
SweepResult sweep(const Dataset& data, kernel::KernelVariant variant,
                  const std::vector<double>& knn_grid, const std::vector<double>& eth_grid,
                  const pipeline::FitSettings& settings);

// Default grids: %KNN 2.5..50 step 2.5; E_th geometric from eps_v to 3.0,
// 16 points.
std::vector<double> default_knn_grid();
std::vector<double> default_eth_grid(double eps_v);

struct Candidate {
  double knn_percent = 0.0;
  double eth = 0.0;
  int k = 0;
  double anll = 0.0;
  bool stable_valley = false;
  bool hierarchical = false;
};

// Deterministic reading of the extended-ANLL landscape: interior local
// minima along %KNN at the default row (trivial cells pushed to the
// maximum ANLL), each checked for a stable valley along E_th, plus at most
// one low-ANLL plateau block at higher E_th flagged "hierarchical".
// Stable candidates rank first, ascending %KNN.
std::vector<Candidate> select_models(const SweepResult& sweep);

void export_sweep_csv(const SweepResult& sweep, const std::string& path);
nlohmann::json sweep_summary_json(const SweepResult& sweep,
                                  const std::vector<Candidate>& candidates);

}  // namespace pqc::scoring
