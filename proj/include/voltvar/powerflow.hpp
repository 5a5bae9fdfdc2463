#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "voltvar/feeder.hpp"

namespace voltvar {

/// Injections and device positions for one power-flow solve.
/// Loads are constant-PQ; PV plants inject P and Q split equally over their
/// phases; taps are per regulator instance.
struct InjectionState {
  std::vector<double> load_kw;
  std::vector<double> load_kvar;
  std::vector<double> pv_kw;
  std::vector<double> pv_kvar;
  std::vector<int> taps;

  /// Base loads from the model, zero PV, initial taps.
  static InjectionState nominal(const FeederModel& model);
};

/// Reactive headroom sqrt(S^2 - P^2) of an inverter; 0 when P >= S.
double excess_capacity_kvar(double rated_kva, double p_kw);

/// Measurements available online: per-phase feeder-head P/Q and per-plant P/Q.
struct Measurements {
  std::vector<Phase> head_phases;
  std::vector<double> head_p_kw, head_q_kvar;
  std::vector<double> pv_p_kw, pv_q_kvar;

  /// Channel order: head P per phase, head Q per phase, plant P, plant Q.
  std::vector<double> vector() const;
  double head_q_total() const;
  double head_p_total() const;
};

std::vector<std::string> measurement_channel_names(const FeederModel& model);

struct VoltageSolution {
  std::vector<Complex> v_pu;  // per node, local base
  std::vector<double> vmag_pu;
  Measurements measurements;

  // Per-phase power accounting at the source, kW/kvar as complex kVA.
  std::array<Complex, 3> head_kva{};
  std::array<Complex, 3> load_kva{};  // net of PV
  std::array<Complex, 3> loss_kva{};

  int iterations = 0;
  double max_mismatch_pu = 0.0;
  std::size_t worst_node = 0;
};

struct SolveOptions {
  double tolerance_pu = 1e-8;  // on 1 MVA
  int max_iterations = 100;
};

/// Backward/forward sweep. Throws ConvergenceError or DomainError.
VoltageSolution solve(const FeederModel& model, const InjectionState& state,
                      const SolveOptions& options = {});

void write_solution_csv(const FeederModel& model, const VoltageSolution& sol,
                        const std::filesystem::path& path);

}  // namespace voltvar
