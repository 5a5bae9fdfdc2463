#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "voltvar/estimator.hpp"
#include "voltvar/feeder.hpp"
#include "voltvar/optimizer.hpp"
#include "voltvar/powerflow.hpp"
#include "voltvar/regulator_control.hpp"
#include "voltvar/scenario.hpp"
#include "voltvar/training.hpp"

namespace voltvar {

// ---------------------------------------------------------------------------
// Training pipeline

enum class SelectionMethod { Guided, Random };

struct TrainingConfig {
  std::size_t grid_rows = 5, grid_cols = 5;
  DistanceMetric metric = DistanceMetric::Kilometres;
  SelectionMethod selection = SelectionMethod::Guided;
  std::uint64_t seed = 1;  // random selection only
  TrainingOptions training;
  CurveOptions curves;
};

struct TrainedModel {
  std::vector<Scenario> scenarios;
  TrainingDataset dataset;
  EstimatorModel estimator;
};

/// Scenario selection, training data, critical nodes and estimator fit.
/// `critical` overrides the critical set derived from the training data.
TrainedModel train_estimator(const FeederModel& model, const ProfileSet& history,
                             const TrainingConfig& config,
                             const CriticalNodeSet* critical = nullptr);

// ---------------------------------------------------------------------------
// Time-series simulation

enum class CaseTag { None, A, B, C, D };
const char* to_string(CaseTag c);
CaseTag parse_case(std::string_view s);

struct CaseConfig {
  CaseTag tag = CaseTag::A;
  int interval_minutes = 5;
  int resolution_minutes = 1;
  double bandwidth_volts = 4.0;
  double tap_step_volts = 0.75;
  int delay_steps = 1;
  SetpointMapping mapping = SetpointMapping::HalfStep;
  double opt_v_lo = 0.975, opt_v_hi = 1.04;
  double report_v_lo = 0.965, report_v_hi = 1.05;
  CvvcCosts costs;
  int max_tap_change = 2;
  double perturb_kvar = 10.0;
  int rolling_window = 10;
  std::uint64_t seed = 1;
  bool log_estimates = false;  // every step, cases B-D
  std::string model_dir;       // recorded in the manifest only

  void validate() const;
};

struct CommandRecord {
  std::size_t step = 0;
  std::string device;
  std::string kind;  // "q_setpoint", "tap_delta", "v_set"
  double value = 0.0;
  std::string branch;
};

struct EstimateRecord {
  std::size_t step = 0;
  std::size_t critical = 0;  // position in the critical set
  double truth = 0.0;
  double uncorrected = 0.0;
  double corrected = 0.0;
};

struct SimulationTrace {
  std::vector<NodeRef> nodes;
  std::vector<std::string> plant_ids, unit_ids;
  std::vector<std::string> timestamps;
  std::vector<double> vmag;   // [t][node]
  std::vector<double> pv_p;   // [t][plant]
  std::vector<double> pv_q;   // [t][plant]
  std::vector<int> taps;      // [t][unit]
  std::vector<int> initial_taps;
  std::vector<std::uint8_t> skipped;  // failed solves
  std::vector<CommandRecord> commands;
  std::vector<EstimateRecord> estimates;
  std::size_t relaxed_solves = 0;
  std::size_t optimizations = 0;
  double max_balance_residual_pu = 0.0;

  std::size_t steps() const { return timestamps.size(); }
  double v(std::size_t t, std::size_t node) const { return vmag[t * nodes.size() + node]; }
};

struct MetricsReport {
  std::string label;
  double mvvm = 0.0;
  std::size_t nvv = 0;
  long ntc = 0;
  double q_cost = 0.0;
  double t_cost = 0.0;
  double total_cost = 0.0;
};

/// Local-controller delay per regulator unit: `base_delay` times one plus the
/// number of regulator units upstream, so cascaded units act from the source out.
std::vector<int> coordinated_delays(const FeederModel& model, int base_delay);

/// `estimator` is required for cases B-D.
SimulationTrace run_case(const FeederModel& model, const ProfileSet& profiles, const CaseConfig& config,
                         const EstimatorModel* estimator = nullptr);

MetricsReport compute_metrics(const SimulationTrace& trace, const CaseConfig& config);

void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path);
void write_trace(const SimulationTrace& trace, const std::filesystem::path& dir);
std::string config_to_json(const CaseConfig& config);

// ---------------------------------------------------------------------------
// Experiments

enum class ExperimentKind { CaseMatrix, DeadbandSweep, SelectionComparison, CorrectionComparison };
const char* to_string(ExperimentKind k);
ExperimentKind parse_experiment(std::string_view s);

struct ExperimentInputs {
  const FeederModel* model = nullptr;
  const ProfileSet* history = nullptr;     // training data source
  const ProfileSet* evaluation = nullptr;  // simulated horizon
  const EstimatorModel* estimator = nullptr;  // optional pre-trained model
  CaseConfig config;
  TrainingConfig training;
  std::vector<double> bandwidths{2.0, 3.0, 4.0};
  std::vector<std::uint64_t> random_seeds{1, 2, 3, 4, 5};
};

struct ErrorSummary {
  std::string label;
  std::size_t samples = 0;
  double mean_signed = 0.0;
  double mean_abs = 0.0;
  double within_001 = 0.0;  // fraction with |error| <= 0.01 pu
};

ErrorSummary summarize_errors(const std::string& label, const std::vector<double>& errors);

struct ExperimentResult {
  std::vector<MetricsReport> metrics;
  std::vector<ErrorSummary> errors;
};

/// Runs the experiment and writes its CSV reports and manifest into `out_dir`.
ExperimentResult run_experiment(ExperimentKind kind, const ExperimentInputs& inputs,
                                const std::filesystem::path& out_dir);

/// Estimator errors (estimate - truth) at the critical nodes over a
/// trajectory recorded without control.
std::vector<double> open_loop_errors(const FeederModel& model, const ProfileSet& profiles,
                                     const EstimatorModel& estimator);

}  // namespace voltvar
