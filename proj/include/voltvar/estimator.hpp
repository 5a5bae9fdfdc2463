#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "voltvar/feeder.hpp"
#include "voltvar/training.hpp"

namespace voltvar {

// ---------------------------------------------------------------------------
// Voltage regression: |V_i| = intercept_i + sum_m alpha_{m,i} * m

struct VoltageRegressionModel {
  std::vector<NodeRef> nodes;
  std::vector<std::string> channels;
  Eigen::MatrixXd coef;  // nodes x (1 + channels); column 0 is the intercept
  std::vector<double> residual_rms;
  std::vector<int> baseline_taps;

  double predict(std::size_t node, std::span<const double> m) const;
};

/// Least squares with intercept for several targets at once. Columns of `x`
/// are named by `names` (used in the rank-deficiency message).
/// Returns (1 + cols) x targets.
Eigen::MatrixXd least_squares_with_intercept(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                             const std::vector<std::string>& names);

/// OLS per critical node over the sweep rows (tap rows excluded).
VoltageRegressionModel fit_voltage_regression(const TrainingDataset& ds,
                                              const CriticalNodeSet& critical);

// ---------------------------------------------------------------------------
// Reactive-power sensitivity curves: delta = a / (c + Q_s)^b   [pu per kvar]

struct SensitivityCurve {
  double a = 0.0;
  double b = 0.0;
  double c = 3000.0;  // kvar
  double qs_min = 0.0, qs_max = 0.0;
  std::size_t points = 0;
  double residual_rms = 0.0;
  bool negligible = false;
};

struct PowerLawOptions {
  int max_iterations = 50;
  double tolerance = 1e-10;
  double negligible_below = 1e-8;  // pu/kvar
};

/// Log-space linear initialiser, then Gauss-Newton. b is constrained to >= 0.
SensitivityCurve fit_power_law(std::span<const double> qs, std::span<const double> delta,
                               double c, const PowerLawOptions& options = {});

struct SensitivityEstimate {
  double value = 0.0;
  bool extrapolated = false;
};

SensitivityEstimate estimate_sensitivity(const SensitivityCurve& curve, double qs);

enum class QsMode { FeederTotal, NodePhase };

struct CurveOptions {
  double offset_c = 3000.0;
  QsMode qs_mode = QsMode::FeederTotal;
  PowerLawOptions fit;
};

struct SensitivityCurveSet {
  std::vector<NodeRef> nodes;
  std::vector<std::string> plants;
  std::vector<SensitivityCurve> curves;  // [node * plants + plant]
  QsMode qs_mode = QsMode::FeederTotal;

  const SensitivityCurve& at(std::size_t node, std::size_t plant) const {
    return curves[node * plants.size() + plant];
  }
};

/// One curve per (critical node, plant) from consecutive sweep-row differences.
SensitivityCurveSet fit_sensitivity_curves(const TrainingDataset& ds,
                                           const CriticalNodeSet& critical,
                                           const CurveOptions& options = {});

// ---------------------------------------------------------------------------

struct TapSensitivityTable {
  std::vector<NodeRef> nodes;
  std::vector<std::string> units;
  Eigen::MatrixXd delta;  // nodes x units, pu per tap
  std::vector<double> base_vmag;
};

TapSensitivityTable tap_sensitivity_table(const TrainingDataset& ds, const CriticalNodeSet& critical);

// ---------------------------------------------------------------------------

struct EstimatorModel {
  CriticalNodeSet critical;
  VoltageRegressionModel regression;
  SensitivityCurveSet curves;
  TapSensitivityTable taps;
  // Per critical node: upstream regulator instance.
  std::vector<std::optional<std::size_t>> upstream;
  // Per regulator instance: position of its secondary node in the critical set.
  std::vector<std::size_t> secondary_position;
  double offset_c = 3000.0;
};

EstimatorModel fit_estimator(const TrainingDataset& ds, const FeederModel& model,
                             const CriticalNodeSet& critical, const CurveOptions& options = {});

/// Uncorrected estimate at every critical node.
std::vector<double> estimate_voltages(const VoltageRegressionModel& regression,
                                      const TapSensitivityTable& taps, std::span<const double> m,
                                      std::span<const int> unit_taps);
std::vector<double> estimate_voltages(const EstimatorModel& est, std::span<const double> m,
                                      std::span<const int> unit_taps);

struct CorrectionContext {
  std::vector<double> measured;   // per regulator instance, pu
  std::vector<double> estimated;  // per regulator instance, pu
  std::vector<double> error;      // measured - estimated
  std::vector<std::optional<std::size_t>> upstream;  // per critical node
};

/// Estimate shifted by the secondary-voltage error of each node's upstream
/// regulator. `v_reg_measured` has one entry per regulator instance.
std::vector<double> estimate_voltages_corrected(const EstimatorModel& est, std::span<const double> m,
                                                std::span<const int> unit_taps,
                                                std::span<const double> v_reg_measured,
                                                CorrectionContext* context = nullptr);

/// delta^Q at the critical nodes for the present feeder-head reactive power;
/// nodes x plants. `head_q_phase` feeds the per-phase Q_s variant.
Eigen::MatrixXd estimate_sensitivities(const EstimatorModel& est, const Measurements& m);

void save_estimator(const EstimatorModel& est, const std::filesystem::path& dir);
EstimatorModel load_estimator(const std::filesystem::path& dir, const FeederModel& model);

}  // namespace voltvar
