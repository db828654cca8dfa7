#pragma once

// Evaluation and plot-ready exports: split losses, prediction horizons,
// eigenfunction grids, eigenvalue fields and linearity diagnostics.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "koopnet/dynamics.hpp"
#include "koopnet/koopman.hpp"
#include "koopnet/loss.hpp"

namespace koopnet {

struct Axis {
  double min = 0.0;
  double max = 1.0;
  int resolution = 2;
};

/// Tensor grid; points are ordered lexicographically by grid index with the
/// first axis varying slowest.
struct GridSpec {
  std::vector<Axis> axes;

  void validate() const;
  std::size_t point_count() const;
  Matrix points() const;  // point_count x axes.size()

  /// "min:max:res,min:max:res,...".
  static GridSpec parse(const std::string& text);
  std::string to_string() const;
};

/// A state-space grid with an optional domain mask and an optional lift
/// from grid coordinates to full states (fluid1 grids live on the bowl).
struct StateGrid {
  GridSpec grid;
  std::function<bool(const Vector&)> keep;
  std::function<Vector(const Vector&)> lift;
};

/// Training-domain grid per system. Pendulum points outside the energy cap
/// are dropped.
StateGrid default_state_grid(SystemKind kind, int resolution = 100);

/// Plain numeric table with a header, written as CSV.
struct Table {
  std::vector<std::string> columns;
  Matrix rows;

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

std::map<Split, LossBreakdown> split_errors(const KoopmanModel& model,
                                            const std::vector<const Dataset*>& datasets,
                                            const LossWeights& weights, std::size_t chunk = 256);

inline constexpr double kHorizonThreshold = 0.1;
inline constexpr double kHorizonNormFloor = 1e-12;

/// Maps (x0, m) to predictions of snapshots 1..m as an m x n matrix.
using Predictor = std::function<Matrix(const Vector&, int)>;

/// Largest h such that every step k <= h has
/// |x_hat_k - x_k|_2 / max(|x_k|_2, floor) < threshold.
int prediction_horizon(const Predictor& predictor, const Trajectory& trajectory,
                       double threshold = kHorizonThreshold, double floor = kHorizonNormFloor);
int prediction_horizon(const KoopmanModel& model, const Trajectory& trajectory,
                       double threshold = kHorizonThreshold, double floor = kHorizonNormFloor);

/// Rows (x..., y..., then magnitude_k and phase_k for each complex pair).
Table eigenfunction_grid(const KoopmanModel& model, const StateGrid& grid);

/// Rows (y..., mu_k, omega_k per pair, lambda_j per real eigenvalue).
Table eigenvalue_field(const KoopmanModel& model, const GridSpec& latent_grid);

/// Symmetric latent grid covering the encodings of `states`, padded by
/// `margin` relative to the largest absolute coordinate.
GridSpec latent_grid_for(const KoopmanModel& model, const Eigen::Ref<const Matrix>& states,
                         int resolution = 50, double margin = 0.0);

struct LinearityDiagnostic {
  std::vector<double> residuals;  // |enc(x_{m+1}) - K^m enc(x_1)|_2, m = 1..T-1
  std::vector<double> radius;     // radius of the first pair's encodings, per snapshot
  double radius_cv() const;       // coefficient of variation of `radius`
};

LinearityDiagnostic linearity_diagnostic(const KoopmanModel& model, const Trajectory& trajectory);

/// Predicted and true states for each trajectory; columns
/// (trajectory, step, x..., x_hat...).
Table prediction_table(const KoopmanModel& model, const std::vector<Trajectory>& trajectories);

/// Average ranks (ties share their mean rank) and Spearman's rho.
std::vector<double> ranks(const std::vector<double>& values);
double spearman(const std::vector<double>& a, const std::vector<double>& b);
double median(std::vector<double> values);

struct EvalReport {
  std::map<Split, LossBreakdown> errors;
  std::vector<int> horizons;  // per test trajectory
  Matrix eigenvalue_summary;  // rows min/mean/max, one column per eigenvalue table column
  std::vector<std::string> eigenvalue_columns;
  std::vector<std::string> exports;

  nlohmann::json to_json() const;
};

/// Split errors, horizon distribution over the test split (when present) and
/// eigenvalue statistics over the encodings of every evaluated state.
EvalReport evaluate_model(const KoopmanModel& model, const std::vector<const Dataset*>& datasets,
                          const LossWeights& weights, std::size_t chunk = 256);

nlohmann::json breakdown_to_json(const LossBreakdown& b);

}  // namespace koopnet
