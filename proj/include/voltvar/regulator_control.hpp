#pragma once

#include <optional>
#include <string>

namespace voltvar {

constexpr double kRegulatorBaseVolts = 120.0;

enum class SetpointMapping {
  HalfStep,     // V_s1 +/- (B/2 - tap_step/2)
  LiteralTap,   // V_s1 +/- (B/2 - T/2), T = commanded tap position taken as volts
};

struct SetpointCommand {
  std::string regulator;
  double v_set = kRegulatorBaseVolts;  // volts, 120 V base
  double bandwidth = 4.0;              // volts
  long issued_at = 0;                  // timestep
};

/// Setpoint that makes a conventional controller move by `dt` taps.
/// `v_s1_pu` is the expected secondary voltage after every planned action.
/// Throws DomainError when bandwidth <= tap_step or the setpoint leaves [110, 130] V.
SetpointCommand tap_to_setpoint(int dt, double v_s1_pu, double bandwidth, double tap_step_volts,
                                SetpointMapping mapping = SetpointMapping::HalfStep,
                                int target_tap = 0);

struct RegulatorRuntimeState {
  std::string regulator;
  int tap = 0;
  int tap_min = -16;
  int tap_max = 16;
  std::optional<SetpointCommand> command;
  int timer = 0;
  int delay_steps = 1;
  bool at_limit = false;
};

struct LocalControlStep {
  RegulatorRuntimeState state;
  int tap_delta = 0;
};

/// One tick of the deadband/time-delay controller on the measured secondary voltage (volts).
LocalControlStep step_local_control(const RegulatorRuntimeState& state, double measured_volts);

}  // namespace voltvar
