#include "voltvar/powerflow.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "voltvar/error.hpp"

namespace voltvar {

namespace {

constexpr double kVaPerPu = 1e6;  // 1 MVA system base
using PhaseVec = std::array<Complex, 3>;

void check_state(const FeederModel& model, const InjectionState& s) {
  if (s.load_kw.size() != model.loads().size() || s.load_kvar.size() != model.loads().size())
    throw DomainError("injection state: load vector size mismatch");
  if (s.pv_kw.size() != model.pv_plants().size() || s.pv_kvar.size() != model.pv_plants().size())
    throw DomainError("injection state: pv vector size mismatch");
  if (s.taps.size() != model.regulators().size())
    throw DomainError("injection state: tap vector size mismatch");
  for (std::size_t r = 0; r < s.taps.size(); ++r) {
    const auto& rg = model.regulators()[r];
    if (s.taps[r] < rg.tap_min || s.taps[r] > rg.tap_max)
      throw DomainError("regulator '" + rg.id + "' tap " + std::to_string(s.taps[r]) +
                        " outside [" + std::to_string(rg.tap_min) + ", " +
                        std::to_string(rg.tap_max) + "]");
  }
  for (std::size_t k = 0; k < s.pv_kw.size(); ++k) {
    const auto& pv = model.pv_plants()[k];
    if (!std::isfinite(s.pv_kw[k]) || !std::isfinite(s.pv_kvar[k]) || s.pv_kw[k] < 0.0)
      throw DomainError("pv plant '" + pv.id + "' has invalid output");
    const double cap = excess_capacity_kvar(pv.rated_kva, s.pv_kw[k]);
    if (std::abs(s.pv_kvar[k]) > cap + 1e-6)
      throw DomainError("pv plant '" + pv.id + "' reactive power " + std::to_string(s.pv_kvar[k]) +
                        " kvar exceeds excess capacity " + std::to_string(cap) + " kvar");
  }
  for (std::size_t i = 0; i < s.load_kw.size(); ++i)
    if (!std::isfinite(s.load_kw[i]) || !std::isfinite(s.load_kvar[i]))
      throw DomainError("load '" + model.loads()[i].id + "' has non-finite power");
}

}  // namespace

InjectionState InjectionState::nominal(const FeederModel& model) {
  InjectionState s;
  for (const auto& ld : model.loads()) {
    s.load_kw.push_back(ld.kw);
    s.load_kvar.push_back(ld.kvar);
  }
  s.pv_kw.assign(model.pv_plants().size(), 0.0);
  s.pv_kvar.assign(model.pv_plants().size(), 0.0);
  for (const auto& r : model.regulators()) s.taps.push_back(r.initial_tap);
  return s;
}

double excess_capacity_kvar(double rated_kva, double p_kw) {
  const double d = rated_kva * rated_kva - p_kw * p_kw;
  return d > 0.0 ? std::sqrt(d) : 0.0;
}

std::vector<double> Measurements::vector() const {
  std::vector<double> m;
  m.reserve(head_p_kw.size() * 2 + pv_p_kw.size() * 2);
  m.insert(m.end(), head_p_kw.begin(), head_p_kw.end());
  m.insert(m.end(), head_q_kvar.begin(), head_q_kvar.end());
  m.insert(m.end(), pv_p_kw.begin(), pv_p_kw.end());
  m.insert(m.end(), pv_q_kvar.begin(), pv_q_kvar.end());
  return m;
}

double Measurements::head_q_total() const {
  double q = 0.0;
  for (double v : head_q_kvar) q += v;
  return q;
}

double Measurements::head_p_total() const {
  double p = 0.0;
  for (double v : head_p_kw) p += v;
  return p;
}

std::vector<std::string> measurement_channel_names(const FeederModel& model) {
  std::vector<std::string> names;
  const auto& phases = model.buses()[model.source_index()].phases;
  for (Phase p : phases) names.push_back(std::string("head_p_") + phase_letter(p));
  for (Phase p : phases) names.push_back(std::string("head_q_") + phase_letter(p));
  for (const auto& pv : model.pv_plants()) names.push_back(pv.id + "_p");
  for (const auto& pv : model.pv_plants()) names.push_back(pv.id + "_q");
  return names;
}

VoltageSolution solve(const FeederModel& model, const InjectionState& state,
                      const SolveOptions& options) {
  check_state(model, state);
  const auto& buses = model.buses();
  const std::size_t nb = buses.size();
  const auto& order = model.sweep_order();
  const std::size_t src = model.source_index();

  // Net specified power per bus and phase, VA.
  std::vector<PhaseVec> s_spec(nb, PhaseVec{});
  for (std::size_t i = 0; i < model.loads().size(); ++i) {
    const auto& ld = model.loads()[i];
    s_spec[model.bus_index(ld.bus)][static_cast<int>(ld.phase)] +=
        Complex(state.load_kw[i], state.load_kvar[i]) * 1e3;
  }
  for (std::size_t k = 0; k < model.pv_plants().size(); ++k) {
    const auto& pv = model.pv_plants()[k];
    const double n = static_cast<double>(pv.phases.size());
    const Complex per_phase = Complex(state.pv_kw[k], state.pv_kvar[k]) * (1e3 / n);
    for (Phase p : pv.phases) s_spec[model.bus_index(pv.bus)][static_cast<int>(p)] -= per_phase;
  }

  std::vector<PhaseVec> ratio(nb, PhaseVec{1.0, 1.0, 1.0});
  for (std::size_t b = 0; b < nb; ++b) {
    if (b == src) continue;
    const auto& br = model.parent_branch(b);
    if (br.kind != Branch::Kind::Regulator) continue;
    for (int p = 0; p < 3; ++p)
      if (br.regs[p]) {
        const auto& rg = model.regulators()[*br.regs[p]];
        ratio[b][p] = 1.0 + state.taps[*br.regs[p]] * rg.step_pu;
      }
  }

  const double vbase_src = model.base_volts(src);
  PhaseVec v_src;
  for (int p = 0; p < 3; ++p)
    v_src[p] = std::polar(model.source().voltage_pu[p] * vbase_src,
                          -2.0 * std::numbers::pi / 3.0 * p);

  std::vector<PhaseVec> v(nb, PhaseVec{});
  std::vector<PhaseVec> i_inj(nb, PhaseVec{});
  std::vector<PhaseVec> i_branch(nb, PhaseVec{});  // current into bus from its parent, child side

  auto forward = [&]() {
    for (std::size_t b : order) {
      if (b == src) {
        v[b] = v_src;
        continue;
      }
      const auto& br = model.parent_branch(b);
      const auto& vp = v[br.parent];
      if (br.kind == Branch::Kind::Regulator) {
        for (Phase ph : buses[b].phases) {
          const int p = static_cast<int>(ph);
          v[b][p] = ratio[b][p] * vp[p];
        }
      } else {
        const auto& z = model.lines()[br.line].z_ohm;
        for (Phase ph : buses[b].phases) {
          const int p = static_cast<int>(ph);
          Complex drop{};
          for (Phase qh : buses[b].phases) {
            const int q = static_cast<int>(qh);
            drop += z[p][q] * i_branch[b][q];
          }
          v[b][p] = vp[p] - drop;
        }
      }
    }
  };

  auto backward = [&]() {
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::size_t b = *it;
      PhaseVec total = i_inj[b];
      for (std::size_t c : model.children(b)) {
        const auto& cb = model.parent_branch(c);
        for (Phase ph : buses[c].phases) {
          const int p = static_cast<int>(ph);
          // ideal ratio device conserves power: primary current = ratio * secondary current
          total[p] += cb.kind == Branch::Kind::Regulator ? ratio[c][p] * i_branch[c][p]
                                                         : i_branch[c][p];
        }
      }
      i_branch[b] = total;
    }
  };

  forward();  // flat start: zero branch currents

  VoltageSolution sol;
  double mismatch = 0.0;
  std::size_t worst_bus = src;
  int worst_phase = 0;
  int it = 0;
  for (it = 1; it <= options.max_iterations; ++it) {
    for (std::size_t b = 0; b < nb; ++b)
      for (Phase ph : buses[b].phases) {
        const int p = static_cast<int>(ph);
        i_inj[b][p] = std::conj(s_spec[b][p] / v[b][p]);
      }
    backward();
    forward();
    mismatch = 0.0;
    for (std::size_t b = 0; b < nb; ++b)
      for (Phase ph : buses[b].phases) {
        const int p = static_cast<int>(ph);
        const double mm = std::abs(v[b][p] * std::conj(i_inj[b][p]) - s_spec[b][p]) / kVaPerPu;
        if (mm > mismatch) {
          mismatch = mm;
          worst_bus = b;
          worst_phase = p;
        }
      }
    if (mismatch <= options.tolerance_pu) break;
  }
  const std::size_t worst = model.node_index(worst_bus, static_cast<Phase>(worst_phase));
  if (mismatch > options.tolerance_pu || !std::isfinite(mismatch))
    throw ConvergenceError("power flow did not converge after " +
                               std::to_string(options.max_iterations) +
                               " iterations; worst mismatch " + std::to_string(mismatch) +
                               " pu at node " + model.nodes()[worst].str(),
                           model.nodes()[worst].str(), mismatch);

  sol.iterations = std::min(it, options.max_iterations);
  sol.max_mismatch_pu = mismatch;
  sol.worst_node = worst;

  const auto& nodes = model.nodes();
  sol.v_pu.resize(nodes.size());
  sol.vmag_pu.resize(nodes.size());
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const std::size_t b = model.bus_index(nodes[n].bus);
    const Complex vp = v[b][static_cast<int>(nodes[n].phase)] / model.base_volts(b);
    sol.v_pu[n] = vp;
    sol.vmag_pu[n] = std::abs(vp);
  }

  // Source-side accounting: head power = V_src * conj(total current leaving the source).
  for (int p = 0; p < 3; ++p) {
    sol.head_kva[p] = v[src][p] * std::conj(i_branch[src][p]) / 1e3;
  }
  for (std::size_t b = 0; b < nb; ++b)
    for (Phase ph : buses[b].phases) {
      const int p = static_cast<int>(ph);
      sol.load_kva[p] += v[b][p] * std::conj(i_inj[b][p]) / 1e3;
    }
  for (std::size_t b : order) {
    if (b == src) continue;
    const auto& br = model.parent_branch(b);
    if (br.kind != Branch::Kind::Line) continue;
    for (Phase ph : buses[b].phases) {
      const int p = static_cast<int>(ph);
      sol.loss_kva[p] += (v[br.parent][p] - v[b][p]) * std::conj(i_branch[b][p]) / 1e3;
    }
  }

  auto& m = sol.measurements;
  for (Phase ph : buses[src].phases) {
    const int p = static_cast<int>(ph);
    m.head_phases.push_back(ph);
    m.head_p_kw.push_back(sol.head_kva[p].real());
    m.head_q_kvar.push_back(sol.head_kva[p].imag());
  }
  m.pv_p_kw = state.pv_kw;
  m.pv_q_kvar = state.pv_kvar;
  return sol;
}

void write_solution_csv(const FeederModel& model, const VoltageSolution& sol,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "bus,phase,vmag_pu,angle_deg\n";
  out.precision(10);
  for (std::size_t n = 0; n < model.node_count(); ++n) {
    const auto& node = model.nodes()[n];
    out << node.bus << ',' << phase_letter(node.phase) << ',' << sol.vmag_pu[n] << ','
        << std::arg(sol.v_pu[n]) * 180.0 / std::numbers::pi << '\n';
  }
}

}  // namespace voltvar
