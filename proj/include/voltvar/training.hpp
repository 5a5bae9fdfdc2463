#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "voltvar/feeder.hpp"
#include "voltvar/powerflow.hpp"
#include "voltvar/scenario.hpp"

namespace voltvar {

enum class RowKind { Sweep, TapPerturbation };

struct TrainingRow {
  std::size_t scenario = 0;  // position in TrainingDataset::scenarios
  RowKind kind = RowKind::Sweep;
  int plant = -1;            // swept plant (Sweep rows)
  int unit = -1;             // perturbed regulator unit (TapPerturbation rows)
  double q_kvar = 0.0;       // commanded Q of the swept plant
  std::vector<int> unit_taps;
  std::vector<double> measurements;
  double head_q_kvar = 0.0;  // total feeder-head reactive power
  std::vector<double> vmag;  // every node, pu
};

/// Power-flow sweep results used to fit the estimators.
struct TrainingDataset {
  std::vector<NodeRef> nodes;
  std::vector<std::string> channels;
  std::vector<std::string> plant_ids;
  std::vector<std::string> unit_ids;
  std::vector<int> baseline_taps;  // T0, per regulator unit
  std::vector<double> q_levels;    // fractions of rated kVA
  std::vector<Scenario> scenarios;
  std::vector<TrainingRow> rows;

  // Voltage change per unit tap step, [unit][node], from the first scenario.
  std::vector<std::vector<double>> tap_delta;
  std::vector<double> tap_base_vmag;

  std::size_t sweep_row_count() const;
};

std::vector<double> default_q_levels();  // -1.0, -0.8, ..., 1.0

struct TrainingOptions {
  std::vector<double> q_levels = default_q_levels();
  SolveOptions solve;
};

/// Injection state for a scenario with every plant at zero reactive power.
InjectionState scenario_state(const FeederModel& model, const Scenario& scenario,
                              const std::vector<int>& unit_taps);

/// Tap perturbations on the first scenario, then one-plant-at-a-time reactive
/// power sweeps over every scenario. Throws Error naming the
/// (scenario, plant, Q) of a failed solve.
TrainingDataset generate_training_data(const FeederModel& model,
                                       std::span<const Scenario> scenarios,
                                       const TrainingOptions& options = {});

/// Writes dataset.csv, dataset_manifest.json and training_scenarios.csv.
void save_dataset(const TrainingDataset& ds, const FeederModel& model,
                  const std::filesystem::path& dir);
TrainingDataset load_dataset(const std::filesystem::path& dir, const FeederModel& model);

enum class CriticalTag { FeederHead, RegulatorPrimary, RegulatorSecondary, PvPlant, ObservedExtreme };
const char* to_string(CriticalTag tag);
CriticalTag parse_critical_tag(std::string_view s);

struct CriticalNode {
  NodeRef node;
  std::size_t index = 0;  // model node index
  CriticalTag tag = CriticalTag::ObservedExtreme;
};

using CriticalNodeSet = std::vector<CriticalNode>;

/// Feeder head, regulator buses and PV buses, then every row's argmax/argmin.
CriticalNodeSet select_critical_nodes(const TrainingDataset& ds, const FeederModel& model);

}  // namespace voltvar
