#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "voltvar/feeder.hpp"

namespace voltvar {

/// Time-indexed per-load and per-plant active/reactive power.
///
/// CSV layout (one row per timestamp, header required):
///   timestamp,<load id>...,<load id>:kvar...,<plant id>...
/// Load kW columns are mandatory for every load and plant kW columns for every
/// plant. A load without a `:kvar` column keeps its base power factor.
struct ProfileSet {
  std::vector<std::string> timestamps;
  std::size_t n_loads = 0;
  std::size_t n_plants = 0;
  std::vector<double> load_kw;    // row-major [t][load]
  std::vector<double> load_kvar;  // row-major [t][load]
  std::vector<double> pv_kw;      // row-major [t][plant]

  std::size_t size() const noexcept { return timestamps.size(); }
  double load_p(std::size_t t, std::size_t i) const { return load_kw[t * n_loads + i]; }
  double load_q(std::size_t t, std::size_t i) const { return load_kvar[t * n_loads + i]; }
  double pv_p(std::size_t t, std::size_t k) const { return pv_kw[t * n_plants + k]; }

  ProfileSet slice(std::size_t begin, std::size_t end, std::size_t stride = 1) const;
};

ProfileSet read_profiles(const std::filesystem::path& path, const FeederModel& model);
void write_profiles(const ProfileSet& profiles, const FeederModel& model,
                    const std::filesystem::path& path);

/// One timestep's injections plus the features used to place it on the
/// selection grid.
struct Scenario {
  std::size_t index = 0;  // chronological position in the source profile set
  std::string timestamp;
  std::vector<double> load_kw, load_kvar;
  std::vector<double> pv_kw;
  double p_feeder_kw = 0.0;  // total load - total PV
  double p_pv_total_kw = 0.0;
  double load_center = 0.0;
  std::optional<double> pv_center;  // undefined when no PV output
};

struct Centers {
  double load_center = 0.0;
  std::optional<double> pv_center;
};

Centers compute_centers(const Scenario& scenario, const FeederModel& model,
                        DistanceMetric metric = DistanceMetric::Kilometres);

/// Builds all scenarios of a profile set with centers filled in.
std::vector<Scenario> build_scenarios(const ProfileSet& profiles, const FeederModel& model,
                                      DistanceMetric metric = DistanceMetric::Kilometres);
Scenario scenario_at(const ProfileSet& profiles, std::size_t t);

/// Uniform rows x cols grid over (P_PVTOT, P_feeder); rows index the PV axis.
struct BlockGrid {
  std::size_t rows = 0, cols = 0;
  std::vector<double> feeder_edges;  // cols + 1
  std::vector<double> pv_edges;      // rows + 1
  std::vector<std::vector<std::size_t>> blocks;  // row-major, positions into the scenario list

  bool empty_block(std::size_t r, std::size_t c) const { return blocks[r * cols + c].empty(); }
  std::size_t non_empty_blocks() const;
};

BlockGrid partition_blocks(std::span<const Scenario> scenarios, std::size_t rows, std::size_t cols);

/// Min/median/max load center and min/median/max PV center per block,
/// deduplicated, returned in chronological order.
std::vector<Scenario> select_representatives(const BlockGrid& grid,
                                             std::span<const Scenario> scenarios);

/// Up to six uniform draws without replacement per block.
std::vector<Scenario> select_random(const BlockGrid& grid, std::span<const Scenario> scenarios,
                                    std::uint64_t seed);

void write_scenarios_csv(std::span<const Scenario> scenarios, const std::filesystem::path& path);

}  // namespace voltvar
