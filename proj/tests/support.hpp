#pragma once

#include <cmath>
#include <complex>
#include <string>

#include "voltvar/feeder.hpp"

namespace testsupport {

using voltvar::Complex;
using voltvar::FeederData;
using voltvar::Phase;

inline voltvar::PhaseImpedance diagonal(Complex z) {
  voltvar::PhaseImpedance m{};
  for (int i = 0; i < 3; ++i) m[i][i] = z;
  return m;
}

/// Source bus and one load bus on `phases`, joined by a line of impedance z (ohm).
inline FeederData two_bus(Complex z, double kw, double kvar, std::vector<Phase> phases = {Phase::A},
                          double source_pu = 1.0, double base_kv = 12.47) {
  FeederData d;
  d.buses.push_back({"s", phases, base_kv});
  d.buses.push_back({"r", phases, base_kv});
  voltvar::LineSection l;
  l.id = "l1";
  l.from_bus = "s";
  l.to_bus = "r";
  l.z_ohm = diagonal(z);
  l.length_km = 1.0;
  d.lines.push_back(l);
  for (Phase p : phases)
    d.loads.push_back({std::string("ld_") + voltvar::phase_letter(p), "r", p, kw, kvar});
  d.source = {"s", {source_pu, source_pu, source_pu}};
  return d;
}

/// Closed-form receiving-end magnitude (volts) for a constant-PQ load (W, var)
/// behind a series impedance (ohm) from a stiff source (volts).
inline double two_bus_receiving_volts(double vs, Complex z, double p_w, double q_var) {
  const double r = z.real(), x = z.imag();
  const double b = vs * vs - 2.0 * (r * p_w + x * q_var);
  const double c = std::norm(z) * (p_w * p_w + q_var * q_var);
  return std::sqrt((b + std::sqrt(b * b - 4.0 * c)) / 2.0);
}

}  // namespace testsupport
