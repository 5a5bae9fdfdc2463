#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voltvar/feeder.hpp"
#include "voltvar/scenario.hpp"

namespace voltvar::synthetic {

/// Six single-phase nodes: source, one regulator, four load buses, one PV plant.
FeederData tutorial_feeder();

/// Rural-style radial test feeder: three-phase trunk with a ganged mid-feeder
/// regulator, single-phase laterals, a long lateral behind a single-phase
/// regulator, and three PV plants sized to the feeder peak load.
FeederData test_feeder();

enum class DayKind { Clear, Cloudy };

struct ProfileOptions {
  std::string start_date = "2024-06-01";
  int days = 7;
  int step_minutes = 1;
  std::uint64_t seed = 1;
  double cloudy_probability = 0.4;
  std::vector<DayKind> day_kinds;  // overrides the random draw when non-empty
  double load_scale = 1.0;
  double pv_scale = 1.0;
};

/// Diverse per-load daily shapes with shifts, day-to-day variation and noise;
/// PV on clear-sky curves with moving-cloud dips. Generated at one-minute
/// resolution and averaged down to `step_minutes`.
ProfileSet generate_profiles(const FeederModel& model, const ProfileOptions& options);

/// A clear, lightly loaded day whose midday PV ramp drives the feeder above
/// its upper limit without control.
ProfileSet stress_day(const FeederModel& model, std::uint64_t seed = 7);

}  // namespace voltvar::synthetic
