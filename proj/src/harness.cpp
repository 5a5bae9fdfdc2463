#include "voltvar/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "voltvar/csv.hpp"
#include "voltvar/error.hpp"

namespace voltvar {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Training pipeline

TrainedModel train_estimator(const FeederModel& model, const ProfileSet& history,
                             const TrainingConfig& config, const CriticalNodeSet* critical) {
  TrainedModel out;
  const auto all = build_scenarios(history, model, config.metric);
  const auto grid = partition_blocks(all, config.grid_rows, config.grid_cols);
  out.scenarios = config.selection == SelectionMethod::Guided ? select_representatives(grid, all)
                                                              : select_random(grid, all, config.seed);
  out.dataset = generate_training_data(model, out.scenarios, config.training);
  const auto crit = critical ? *critical : select_critical_nodes(out.dataset, model);
  out.estimator = fit_estimator(out.dataset, model, crit, config.curves);
  return out;
}

// ---------------------------------------------------------------------------

const char* to_string(CaseTag c) {
  switch (c) {
    case CaseTag::None: return "none";
    case CaseTag::A: return "A";
    case CaseTag::B: return "B";
    case CaseTag::C: return "C";
    case CaseTag::D: return "D";
  }
  return "?";
}

CaseTag parse_case(std::string_view s) {
  if (s == "none") return CaseTag::None;
  if (s == "A" || s == "a") return CaseTag::A;
  if (s == "B" || s == "b") return CaseTag::B;
  if (s == "C" || s == "c") return CaseTag::C;
  if (s == "D" || s == "d") return CaseTag::D;
  throw ParseError("unknown case '" + std::string(s) + "' (expected none, A, B, C or D)");
}

void CaseConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("case config: " + m); };
  if (resolution_minutes <= 0 || interval_minutes <= 0) fail("interval and resolution must be positive");
  if (interval_minutes % resolution_minutes != 0) fail("interval must be a multiple of the resolution");
  if (!(opt_v_lo < opt_v_hi)) fail("optimization limits must satisfy lo < hi");
  if (!(report_v_lo <= opt_v_lo && opt_v_hi <= report_v_hi))
    fail("optimization limits must lie inside the reporting limits");
  if (!(bandwidth_volts > 0.0)) fail("bandwidth must be positive");
  if (rolling_window <= 0) fail("rolling window must be positive");
  if (delay_steps < 1) fail("delay must be at least one step");
  if (!(perturb_kvar > 0.0)) fail("perturbation size must be positive");
}

namespace {

struct Stepper {
  const FeederModel& model;
  const ProfileSet& profiles;
  InjectionState state;
  std::vector<int> unit_taps;
  std::vector<double> q;

  Stepper(const FeederModel& m, const ProfileSet& p)
      : model(m), profiles(p), state(InjectionState::nominal(m)), unit_taps(m.initial_unit_taps()),
        q(m.pv_plants().size(), 0.0) {}

  double capacity(std::size_t k) const {
    return excess_capacity_kvar(model.pv_plants()[k].rated_kva, state.pv_kw[k]);
  }

  void load_step(std::size_t t) {
    for (std::size_t i = 0; i < profiles.n_loads; ++i) {
      state.load_kw[i] = profiles.load_p(t, i);
      state.load_kvar[i] = profiles.load_q(t, i);
    }
    for (std::size_t k = 0; k < profiles.n_plants; ++k) {
      state.pv_kw[k] = profiles.pv_p(t, k);
      const double cap = capacity(k);
      q[k] = std::clamp(q[k], -cap, cap);
    }
    sync();
  }

  void sync() {
    state.pv_kvar = q;
    state.taps = model.instance_taps(unit_taps);
  }
};

double balance_residual_pu(const VoltageSolution& sol) {
  double r = 0.0;
  for (int p = 0; p < 3; ++p)
    r = std::max(r, std::abs(sol.head_kva[p] - sol.load_kva[p] - sol.loss_kva[p]) / 1000.0);
  return r;
}

CvvcProblem base_problem(const FeederModel& model, const Stepper& s, const CaseConfig& cfg) {
  CvvcProblem p;
  for (std::size_t k = 0; k < model.pv_plants().size(); ++k) {
    const double cap = s.capacity(k);
    p.plant_ids.push_back(model.pv_plants()[k].id);
    p.q_now.push_back(s.q[k]);
    p.q_lo.push_back(-cap);
    p.q_hi.push_back(cap);
  }
  for (std::size_t u = 0; u < model.regulator_units().size(); ++u) {
    const auto& unit = model.regulator_units()[u];
    const auto& first = model.regulators()[unit.members.front()];
    p.regulator_ids.push_back(unit.id);
    p.tap_now.push_back(s.unit_taps[u]);
    p.tap_lo.push_back(first.tap_min);
    p.tap_hi.push_back(first.tap_max);
  }
  p.max_tap_change = cfg.max_tap_change;
  p.v_lo = cfg.opt_v_lo;
  p.v_hi = cfg.opt_v_hi;
  p.costs = cfg.costs;
  return p;
}

// Full-visibility problem: every node, sensitivities by one-sided perturbation.
CvvcProblem full_visibility_problem(const FeederModel& model, Stepper& s, const VoltageSolution& base,
                                    const CaseConfig& cfg) {
  CvvcProblem p = base_problem(model, s, cfg);
  const std::size_t n = model.node_count();
  for (const auto& nd : model.nodes()) p.nodes.push_back(nd.str());
  p.v0 = base.vmag_pu;
  p.dq = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p.plant_count()));
  p.dvr = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p.regulator_count()));
  for (std::size_t k = 0; k < p.plant_count(); ++k) {
    const double cap = s.capacity(k);
    double d = cfg.perturb_kvar;
    if (s.q[k] + d > cap) d = -d;
    if (s.q[k] + d < -cap) continue;  // no headroom either way
    auto st = s.state;
    st.pv_kvar[k] += d;
    const auto sol = solve(model, st);
    for (std::size_t i = 0; i < n; ++i)
      p.dq(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (sol.vmag_pu[i] - base.vmag_pu[i]) / d;
  }
  for (std::size_t u = 0; u < p.regulator_count(); ++u) {
    const int dir = s.unit_taps[u] < p.tap_hi[u] ? 1 : -1;
    auto taps = s.unit_taps;
    taps[u] += dir;
    auto st = s.state;
    st.taps = model.instance_taps(taps);
    const auto sol = solve(model, st);
    for (std::size_t i = 0; i < n; ++i)
      p.dvr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u)) = (sol.vmag_pu[i] - base.vmag_pu[i]) / dir;
  }
  return p;
}

std::vector<double> regulator_voltages(const FeederModel& model, const VoltageSolution& sol) {
  std::vector<double> v;
  for (std::size_t r = 0; r < model.regulators().size(); ++r) v.push_back(sol.vmag_pu[model.secondary_node(r)]);
  return v;
}

CvvcProblem estimated_problem(const FeederModel& model, const Stepper& s, const VoltageSolution& base,
                              const CaseConfig& cfg, const EstimatorModel& est) {
  CvvcProblem p = base_problem(model, s, cfg);
  for (const auto& c : est.critical) p.nodes.push_back(c.node.str());
  const auto m = base.measurements.vector();
  if (cfg.tag == CaseTag::D)
    p.v0 = estimate_voltages_corrected(est, m, s.unit_taps, regulator_voltages(model, base));
  else
    p.v0 = estimate_voltages(est, m, s.unit_taps);
  p.dq = estimate_sensitivities(est, base.measurements);
  p.dvr = est.taps.delta;
  return p;
}

}  // namespace

std::vector<int> coordinated_delays(const FeederModel& model, int base_delay) {
  std::vector<int> out;
  for (const auto& unit : model.regulator_units()) {
    int depth = 0;
    auto up = model.upstream_regulator(model.primary_node(unit.sensing));
    while (up) {
      ++depth;
      up = model.upstream_regulator(model.primary_node(*up));
    }
    out.push_back(base_delay * (1 + depth));
  }
  return out;
}

SimulationTrace run_case(const FeederModel& model, const ProfileSet& profiles, const CaseConfig& cfg,
                         const EstimatorModel* est) {
  cfg.validate();
  const bool estimated = cfg.tag == CaseTag::B || cfg.tag == CaseTag::C || cfg.tag == CaseTag::D;
  const bool local = cfg.tag == CaseTag::C || cfg.tag == CaseTag::D;
  if (estimated && !est) throw ValidationError(std::string("case ") + to_string(cfg.tag) + " needs a trained estimator");
  if (est) {
    if (est->regression.channels != measurement_channel_names(model))
      throw ValidationError("estimator channels do not match the feeder");
    if (est->secondary_position.size() != model.regulators().size())
      throw ValidationError("estimator regulators do not match the feeder");
  }
  if (profiles.n_loads != model.loads().size() || profiles.n_plants != model.pv_plants().size())
    throw ValidationError("profiles do not match the feeder");

  const std::size_t n = profiles.size(), nn = model.node_count();
  const std::size_t nk = model.pv_plants().size(), nu = model.regulator_units().size();
  const std::size_t interval = static_cast<std::size_t>(cfg.interval_minutes / cfg.resolution_minutes);

  SimulationTrace tr;
  tr.nodes = model.nodes();
  for (const auto& pv : model.pv_plants()) tr.plant_ids.push_back(pv.id);
  for (const auto& u : model.regulator_units()) tr.unit_ids.push_back(u.id);
  tr.timestamps = profiles.timestamps;
  tr.vmag.reserve(n * nn);
  tr.pv_p.reserve(n * nk);
  tr.pv_q.reserve(n * nk);
  tr.taps.reserve(n * nu);
  tr.skipped.assign(n, 0);

  Stepper s(model, profiles);
  tr.initial_taps = s.unit_taps;

  std::vector<RegulatorRuntimeState> local_state(nu);
  const auto delays = coordinated_delays(model, cfg.delay_steps);
  for (std::size_t u = 0; u < nu; ++u) {
    const auto& unit = model.regulator_units()[u];
    const auto& first = model.regulators()[unit.members.front()];
    auto& ls = local_state[u];
    ls.regulator = unit.id;
    ls.tap = s.unit_taps[u];
    ls.tap_min = first.tap_min;
    ls.tap_max = first.tap_max;
    ls.delay_steps = delays[u];
  }

  std::vector<double> last_v(nn, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    s.load_step(t);

    if (cfg.tag != CaseTag::None && t % interval == 0) {
      try {
        const auto base = solve(model, s.state);
        const CvvcProblem prob = cfg.tag == CaseTag::A ? full_visibility_problem(model, s, base, cfg)
                                                       : estimated_problem(model, s, base, cfg, *est);
        const ControlPlan plan = optimize(prob);
        ++tr.optimizations;
        if (plan.branch == PlanBranch::Relaxed) ++tr.relaxed_solves;
        const std::string branch = to_string(plan.branch);
        for (std::size_t k = 0; k < nk; ++k) {
          if (plan.q_setpoint[k] != s.q[k])
            tr.commands.push_back({t, prob.plant_ids[k], "q_setpoint", plan.q_setpoint[k], branch});
          s.q[k] = plan.q_setpoint[k];
        }
        for (std::size_t u = 0; u < nu; ++u) {
          const int dt = plan.tap_delta[u];
          if (!local) {
            if (dt != 0) tr.commands.push_back({t, prob.regulator_ids[u], "tap_delta", double(dt), branch});
            s.unit_taps[u] += dt;
            continue;
          }
          const std::size_t sensing = model.regulator_units()[u].sensing;
          const double vs1 = plan.predicted_v[est->secondary_position[sensing]];
          SetpointCommand cmd;
          try {
            cmd = tap_to_setpoint(dt, vs1, cfg.bandwidth_volts, cfg.tap_step_volts, cfg.mapping,
                                  s.unit_taps[u] + dt);
          } catch (const DomainError&) {
            tr.commands.push_back({t, prob.regulator_ids[u], "v_set_rejected", vs1 * kRegulatorBaseVolts, branch});
            continue;
          }
          cmd.regulator = prob.regulator_ids[u];
          cmd.issued_at = static_cast<long>(t);
          local_state[u].command = cmd;
          local_state[u].timer = 0;
          tr.commands.push_back({t, prob.regulator_ids[u], "v_set", cmd.v_set, branch});
        }
        s.sync();
      } catch (const ConvergenceError&) {
        // Control skipped for this interval; the step itself is retried below.
      }
    }

    VoltageSolution sol;
    bool ok = true;
    try {
      sol = solve(model, s.state);
    } catch (const ConvergenceError&) {
      ok = false;
    }
    if (ok) {
      last_v = sol.vmag_pu;
      tr.max_balance_residual_pu = std::max(tr.max_balance_residual_pu, balance_residual_pu(sol));
    } else {
      tr.skipped[t] = 1;
    }
    tr.vmag.insert(tr.vmag.end(), last_v.begin(), last_v.end());
    tr.pv_p.insert(tr.pv_p.end(), s.state.pv_kw.begin(), s.state.pv_kw.end());
    tr.pv_q.insert(tr.pv_q.end(), s.q.begin(), s.q.end());
    tr.taps.insert(tr.taps.end(), s.unit_taps.begin(), s.unit_taps.end());

    if (!ok) continue;

    if (cfg.log_estimates && est) {
      const auto m = sol.measurements.vector();
      const auto plain = estimate_voltages(*est, m, s.unit_taps);
      const auto corr = estimate_voltages_corrected(*est, m, s.unit_taps, regulator_voltages(model, sol));
      for (std::size_t i = 0; i < est->critical.size(); ++i)
        tr.estimates.push_back({t, i, sol.vmag_pu[est->critical[i].index], plain[i], corr[i]});
    }

    if (local) {
      for (std::size_t u = 0; u < nu; ++u) {
        const std::size_t sensing = model.regulator_units()[u].sensing;
        const double volts = sol.vmag_pu[model.secondary_node(sensing)] * kRegulatorBaseVolts;
        local_state[u].tap = s.unit_taps[u];
        auto step = step_local_control(local_state[u], volts);
        local_state[u] = step.state;
        s.unit_taps[u] = step.state.tap;
      }
      s.sync();
    }
  }
  return tr;
}

MetricsReport compute_metrics(const SimulationTrace& tr, const CaseConfig& cfg) {
  MetricsReport r;
  const std::size_t n = tr.steps(), nn = tr.nodes.size();
  const std::size_t w = static_cast<std::size_t>(cfg.rolling_window);
  std::vector<double> sum(nn, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < nn; ++i) {
      sum[i] += tr.v(t, i);
      if (t >= w) sum[i] -= tr.v(t - w, i);
      if (t + 1 < w) continue;
      const double avg = sum[i] / static_cast<double>(w);
      const double out = std::max(cfg.report_v_lo - avg, avg - cfg.report_v_hi);
      if (out > 0.0) {
        ++r.nvv;
        r.mvvm = std::max(r.mvvm, out);
      }
    }
  }
  const std::size_t nu = tr.unit_ids.size(), nk = tr.plant_ids.size();
  std::vector<int> prev = tr.initial_taps;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t u = 0; u < nu; ++u) {
      const int tap = tr.taps[t * nu + u];
      r.ntc += std::abs(tap - prev[u]);
      prev[u] = tap;
    }
  double q_sum = 0.0;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t k = 0; k < nk; ++k) q_sum += std::abs(tr.pv_q[t * nk + k]);
  r.q_cost = cfg.costs.c_k * q_sum * cfg.resolution_minutes / cfg.interval_minutes;
  r.t_cost = cfg.costs.c_r * static_cast<double>(r.ntc);
  r.total_cost = r.q_cost + r.t_cost;
  return r;
}

void write_metrics_csv(const std::vector<MetricsReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "label,mvvm_pu,nvv,ntc,q_cost,t_cost,total_cost\n";
  for (const auto& r : reports)
    out << r.label << ',' << csv::fmt(r.mvvm) << ',' << r.nvv << ',' << r.ntc << ',' << csv::fmt(r.q_cost) << ','
        << csv::fmt(r.t_cost) << ',' << csv::fmt(r.total_cost) << '\n';
}

void write_trace(const SimulationTrace& tr, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t nn = tr.nodes.size(), nk = tr.plant_ids.size(), nu = tr.unit_ids.size();
  {
    std::ofstream out(dir / "voltages.csv");
    out << "timestamp,skipped";
    for (const auto& n : tr.nodes) out << ',' << n.str();
    out << '\n';
    for (std::size_t t = 0; t < tr.steps(); ++t) {
      out << tr.timestamps[t] << ',' << int(tr.skipped[t]);
      for (std::size_t i = 0; i < nn; ++i) out << ',' << csv::fmt(tr.v(t, i));
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "devices.csv");
    out << "timestamp";
    for (const auto& k : tr.plant_ids) out << ',' << k << "_p_kw," << k << "_q_kvar";
    for (const auto& u : tr.unit_ids) out << ',' << u << "_tap";
    out << '\n';
    for (std::size_t t = 0; t < tr.steps(); ++t) {
      out << tr.timestamps[t];
      for (std::size_t k = 0; k < nk; ++k) out << ',' << csv::fmt(tr.pv_p[t * nk + k]) << ',' << csv::fmt(tr.pv_q[t * nk + k]);
      for (std::size_t u = 0; u < nu; ++u) out << ',' << tr.taps[t * nu + u];
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "commands.csv");
    out << "timestamp,device,kind,value,branch\n";
    for (const auto& c : tr.commands)
      out << tr.timestamps[c.step] << ',' << c.device << ',' << c.kind << ',' << csv::fmt(c.value) << ',' << c.branch
          << '\n';
  }
  if (!tr.estimates.empty()) {
    std::ofstream out(dir / "estimates.csv");
    out << "timestamp,critical_index,truth,uncorrected,corrected\n";
    for (const auto& e : tr.estimates)
      out << tr.timestamps[e.step] << ',' << e.critical << ',' << csv::fmt(e.truth) << ',' << csv::fmt(e.uncorrected)
          << ',' << csv::fmt(e.corrected) << '\n';
  }
}

std::string config_to_json(const CaseConfig& c) {
  json j;
  j["case"] = to_string(c.tag);
  j["interval_minutes"] = c.interval_minutes;
  j["resolution_minutes"] = c.resolution_minutes;
  j["bandwidth_volts"] = c.bandwidth_volts;
  j["tap_step_volts"] = c.tap_step_volts;
  j["delay_steps"] = c.delay_steps;
  j["setpoint_mapping"] = c.mapping == SetpointMapping::HalfStep ? "half_step" : "literal_tap";
  j["opt_limits"] = {c.opt_v_lo, c.opt_v_hi};
  j["report_limits"] = {c.report_v_lo, c.report_v_hi};
  j["costs"] = {{"c_r", c.costs.c_r}, {"c_k", c.costs.c_k}, {"alpha", c.costs.alpha}, {"beta", c.costs.beta}};
  j["max_tap_change"] = c.max_tap_change;
  j["perturb_kvar"] = c.perturb_kvar;
  j["rolling_window"] = c.rolling_window;
  j["seed"] = c.seed;
  j["model_dir"] = c.model_dir;
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Experiments

const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::CaseMatrix: return "case-matrix";
    case ExperimentKind::DeadbandSweep: return "deadband-sweep";
    case ExperimentKind::SelectionComparison: return "selection-comparison";
    case ExperimentKind::CorrectionComparison: return "correction-comparison";
  }
  return "?";
}

ExperimentKind parse_experiment(std::string_view s) {
  if (s == "case-matrix") return ExperimentKind::CaseMatrix;
  if (s == "deadband-sweep") return ExperimentKind::DeadbandSweep;
  if (s == "selection-comparison") return ExperimentKind::SelectionComparison;
  if (s == "correction-comparison") return ExperimentKind::CorrectionComparison;
  throw ParseError("unknown experiment '" + std::string(s) + "'");
}

ErrorSummary summarize_errors(const std::string& label, const std::vector<double>& e) {
  ErrorSummary s;
  s.label = label;
  s.samples = e.size();
  if (e.empty()) return s;
  std::size_t within = 0;
  for (double x : e) {
    s.mean_signed += x;
    s.mean_abs += std::abs(x);
    if (std::abs(x) <= 0.01) ++within;
  }
  s.mean_signed /= static_cast<double>(e.size());
  s.mean_abs /= static_cast<double>(e.size());
  s.within_001 = static_cast<double>(within) / static_cast<double>(e.size());
  return s;
}

std::vector<double> open_loop_errors(const FeederModel& model, const ProfileSet& profiles,
                                     const EstimatorModel& est) {
  Stepper s(model, profiles);
  std::vector<double> errors;
  errors.reserve(profiles.size() * est.critical.size());
  for (std::size_t t = 0; t < profiles.size(); ++t) {
    s.load_step(t);
    const auto sol = solve(model, s.state);
    const auto v = estimate_voltages(est, sol.measurements.vector(), s.unit_taps);
    for (std::size_t i = 0; i < v.size(); ++i) errors.push_back(v[i] - sol.vmag_pu[est.critical[i].index]);
  }
  return errors;
}

namespace {

void write_errors_csv(const std::vector<ErrorSummary>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  out << "label,samples,mean_signed_pu,mean_abs_pu,fraction_within_0.01\n";
  for (const auto& r : rows)
    out << r.label << ',' << r.samples << ',' << csv::fmt(r.mean_signed) << ',' << csv::fmt(r.mean_abs) << ','
        << csv::fmt(r.within_001) << '\n';
}

void write_histogram_csv(const std::vector<std::pair<std::string, std::vector<double>>>& series,
                         const std::filesystem::path& path) {
  constexpr double lo = -0.03, width = 0.001;
  constexpr int bins = 60;
  std::ofstream out(path);
  out << "bin_lo,bin_hi";
  for (const auto& [label, _] : series) out << ',' << label;
  out << '\n';
  std::vector<std::vector<std::size_t>> counts(series.size(), std::vector<std::size_t>(bins + 2, 0));
  for (std::size_t s = 0; s < series.size(); ++s)
    for (double e : series[s].second) {
      const double f = std::floor((e - lo) / width);
      const int b = f < 0 ? 0 : f >= bins ? bins + 1 : static_cast<int>(f) + 1;
      ++counts[s][static_cast<std::size_t>(b)];
    }
  for (int b = 0; b < bins + 2; ++b) {
    const std::string blo = b == 0 ? "-inf" : csv::fmt(lo + (b - 1) * width);
    const std::string bhi = b == bins + 1 ? "inf" : csv::fmt(lo + b * width);
    out << blo << ',' << bhi;
    for (const auto& c : counts) out << ',' << c[static_cast<std::size_t>(b)];
    out << '\n';
  }
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string profile_digest(const ProfileSet& p) {
  std::uint64_t h = 1469598103934665603ull;
  for (const auto& t : p.timestamps) h = fnv1a(t, h);
  for (const auto* v : {&p.load_kw, &p.load_kvar, &p.pv_kw})
    for (double x : *v) h = fnv1a(csv::fmt(x), h);
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_manifest(ExperimentKind kind, const ExperimentInputs& in, const std::filesystem::path& dir) {
  json j;
  j["experiment"] = to_string(kind);
  j["config"] = json::parse(config_to_json(in.config));
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(feeder_to_json(in.model->data()))));
  j["feeder_digest"] = buf;
  if (in.evaluation) j["evaluation_digest"] = profile_digest(*in.evaluation);
  if (in.history) j["history_digest"] = profile_digest(*in.history);
  j["training"] = {{"grid", {in.training.grid_rows, in.training.grid_cols}},
                   {"offset_c_kvar", in.training.curves.offset_c},
                   {"random_seeds", in.random_seeds}};
  j["bandwidths"] = in.bandwidths;
  std::ofstream out(dir / "run_manifest.json");
  out << j.dump(2) << '\n';
}

const EstimatorModel& need_estimator(const ExperimentInputs& in, std::optional<TrainedModel>& storage) {
  if (in.estimator) return *in.estimator;
  if (!in.history) throw ValidationError("experiment needs a trained model or history profiles");
  storage = train_estimator(*in.model, *in.history, in.training);
  return storage->estimator;
}

}  // namespace

ExperimentResult run_experiment(ExperimentKind kind, const ExperimentInputs& in,
                                const std::filesystem::path& out_dir) {
  if (!in.model || !in.evaluation) throw ValidationError("experiment needs a feeder and evaluation profiles");
  std::filesystem::create_directories(out_dir);
  ExperimentResult res;
  std::optional<TrainedModel> trained;

  switch (kind) {
    case ExperimentKind::CaseMatrix: {
      const auto& est = need_estimator(in, trained);
      for (CaseTag tag : {CaseTag::None, CaseTag::A, CaseTag::B, CaseTag::C, CaseTag::D}) {
        CaseConfig cfg = in.config;
        cfg.tag = tag;
        const auto tr = run_case(*in.model, *in.evaluation, cfg, &est);
        auto m = compute_metrics(tr, cfg);
        m.label = to_string(tag);
        res.metrics.push_back(m);
      }
      write_metrics_csv(res.metrics, out_dir / "metrics.csv");
      break;
    }
    case ExperimentKind::DeadbandSweep: {
      const auto& est = need_estimator(in, trained);
      for (CaseTag tag : {CaseTag::C, CaseTag::D})
        for (double b : in.bandwidths) {
          CaseConfig cfg = in.config;
          cfg.tag = tag;
          cfg.bandwidth_volts = b;
          const auto tr = run_case(*in.model, *in.evaluation, cfg, &est);
          auto m = compute_metrics(tr, cfg);
          m.label = std::string(to_string(tag)) + "_B" + csv::fmt(b);
          res.metrics.push_back(m);
        }
      write_metrics_csv(res.metrics, out_dir / "metrics.csv");
      break;
    }
    case ExperimentKind::SelectionComparison: {
      if (!in.history) throw ValidationError("selection comparison needs history profiles");
      TrainingConfig guided_cfg = in.training;
      guided_cfg.selection = SelectionMethod::Guided;
      const auto guided = train_estimator(*in.model, *in.history, guided_cfg);
      const auto& crit = guided.estimator.critical;
      std::vector<std::pair<std::string, std::vector<double>>> series;
      series.emplace_back("guided", open_loop_errors(*in.model, *in.evaluation, guided.estimator));
      for (auto seed : in.random_seeds) {
        TrainingConfig rc = in.training;
        rc.selection = SelectionMethod::Random;
        rc.seed = seed;
        const auto rnd = train_estimator(*in.model, *in.history, rc, &crit);
        series.emplace_back("random_seed" + std::to_string(seed),
                            open_loop_errors(*in.model, *in.evaluation, rnd.estimator));
      }
      for (const auto& [label, e] : series) res.errors.push_back(summarize_errors(label, e));
      write_errors_csv(res.errors, out_dir / "selection_errors.csv");
      write_histogram_csv(series, out_dir / "selection_histogram.csv");
      break;
    }
    case ExperimentKind::CorrectionComparison: {
      const auto& est = need_estimator(in, trained);
      CaseConfig cfg = in.config;
      cfg.tag = CaseTag::D;
      cfg.log_estimates = true;
      const auto tr = run_case(*in.model, *in.evaluation, cfg, &est);
      std::vector<double> plain, corr;
      for (const auto& e : tr.estimates) {
        plain.push_back(e.uncorrected - e.truth);
        corr.push_back(e.corrected - e.truth);
      }
      std::vector<std::pair<std::string, std::vector<double>>> series{{"uncorrected", plain}, {"corrected", corr}};
      for (const auto& [label, e] : series) res.errors.push_back(summarize_errors(label, e));
      auto m = compute_metrics(tr, cfg);
      m.label = "D";
      res.metrics.push_back(m);
      write_errors_csv(res.errors, out_dir / "correction_errors.csv");
      write_histogram_csv(series, out_dir / "correction_histogram.csv");
      write_metrics_csv(res.metrics, out_dir / "metrics.csv");
      break;
    }
  }
  write_manifest(kind, in, out_dir);
  return res;
}

}  // namespace voltvar
