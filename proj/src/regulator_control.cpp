#include "voltvar/regulator_control.hpp"

#include <cmath>

#include "voltvar/csv.hpp"
#include "voltvar/error.hpp"

namespace voltvar {

SetpointCommand tap_to_setpoint(int dt, double v_s1_pu, double bandwidth, double tap_step_volts,
                                SetpointMapping mapping, int target_tap) {
  if (!(tap_step_volts > 0.0)) throw DomainError("tap step must be positive");
  if (!(bandwidth > tap_step_volts))
    throw DomainError("bandwidth " + csv::fmt(bandwidth) + " V cannot encode a tap move of " +
                      csv::fmt(tap_step_volts) + " V");
  const double vs1 = v_s1_pu * kRegulatorBaseVolts;
  const double half = mapping == SetpointMapping::HalfStep ? tap_step_volts / 2.0 : target_tap / 2.0;
  const double margin = bandwidth / 2.0 - half;

  SetpointCommand cmd;
  cmd.bandwidth = bandwidth;
  cmd.v_set = dt == 0 ? vs1 : dt > 0 ? vs1 + margin : vs1 - margin;
  if (!(cmd.v_set >= 110.0 && cmd.v_set <= 130.0))
    throw DomainError("setpoint " + csv::fmt(cmd.v_set) + " V outside [110, 130] V");
  return cmd;
}

LocalControlStep step_local_control(const RegulatorRuntimeState& state, double measured_volts) {
  LocalControlStep out{state, 0};
  auto& s = out.state;
  if (!s.command) return out;
  const double err = measured_volts - s.command->v_set;
  if (std::abs(err) <= s.command->bandwidth / 2.0) {
    s.timer = 0;
    s.at_limit = false;
    return out;
  }
  ++s.timer;
  if (s.timer < s.delay_steps) return out;
  s.timer = 0;
  const int dir = err > 0.0 ? -1 : +1;
  if (s.tap + dir > s.tap_max || s.tap + dir < s.tap_min) {
    s.at_limit = true;
    return out;
  }
  s.at_limit = false;
  s.tap += dir;
  out.tap_delta = dir;
  return out;
}

}  // namespace voltvar
