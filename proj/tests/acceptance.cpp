// Acceptance run over the bundled test feeder. Prints one PASS/FAIL line per
// criterion and exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "cvvc_oracle.hpp"
#include "support.hpp"
#include "voltvar/error.hpp"
#include "voltvar/harness.hpp"
#include "voltvar/synthetic.hpp"

using namespace voltvar;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Ledger {
  int failed = 0;
  void report(int id, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s\n", ok ? "PASS" : "FAIL", id, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct World {
  FeederModel model{synthetic::test_feeder()};
  ProfileSet history, week, heldout, stress;
  double max_residual = 0.0;

  World() {
    synthetic::ProfileOptions h;
    h.start_date = "2024-05-04";
    h.days = 28;
    h.seed = 11;
    history = synthetic::generate_profiles(model, h);
    synthetic::ProfileOptions w;
    w.start_date = "2024-06-01";
    w.days = 7;
    w.seed = 1;
    week = synthetic::generate_profiles(model, w);
    heldout = week.slice(0, 1440);
    stress = synthetic::stress_day(model);
  }

  void track(const SimulationTrace& t) { max_residual = std::max(max_residual, t.max_balance_residual_pu); }
};

void criterion1(Ledger& L, World& w) {
  const Complex z{0.9, 1.7};
  double worst = 0.0;
  for (auto [kw, kvar] : {std::pair{250.0, 80.0}, {1200.0, 500.0}, {-700.0, 100.0}}) {
    const FeederModel m(testsupport::two_bus(z, kw, kvar));
    const auto sol = solve(m, InjectionState::nominal(m));
    const double vs = m.base_volts(0);
    const double exact = testsupport::two_bus_receiving_volts(vs, z, kw * 1e3, kvar * 1e3) / vs;
    worst = std::max(worst, std::abs(sol.vmag_pu[1] - exact));
  }
  // Every step of the evaluation week, uncontrolled, plus all controlled runs tracked elsewhere.
  double slowest = 0.0;
  auto st = InjectionState::nominal(w.model);
  for (std::size_t t = 0; t < w.week.size(); t += 7) {
    for (std::size_t i = 0; i < w.week.n_loads; ++i) {
      st.load_kw[i] = w.week.load_p(t, i);
      st.load_kvar[i] = w.week.load_q(t, i);
    }
    for (std::size_t k = 0; k < w.week.n_plants; ++k) st.pv_kw[k] = w.week.pv_p(t, k);
    const auto t0 = Clock::now();
    const auto sol = solve(w.model, st);
    slowest = std::max(slowest, seconds_since(t0));
    for (int p = 0; p < 3; ++p)
      w.max_residual = std::max(w.max_residual, std::abs(sol.head_kva[p] - sol.load_kva[p] - sol.loss_kva[p]) / 1000.0);
  }
  L.report(1, worst <= 1e-8 && w.max_residual <= 1e-6 && slowest < 1.0,
           fmt("two-bus error %.2e pu (<= 1e-8), balance residual %.2e pu (<= 1e-6), slowest solve %.4f s (< 1 s)",
               worst, w.max_residual, slowest));
}

void criteria2and3(Ledger& L, World& w, const EstimatorModel& est) {
  CaseConfig c;
  c.tag = CaseTag::D;
  c.log_estimates = true;
  const auto tr = run_case(w.model, w.heldout, c, &est);
  w.track(tr);
  std::vector<double> plain, corr;
  for (const auto& e : tr.estimates) {
    plain.push_back(e.uncorrected - e.truth);
    corr.push_back(e.corrected - e.truth);
  }
  const auto u = summarize_errors("uncorrected", plain), k = summarize_errors("corrected", corr);
  L.report(2, k.within_001 >= 0.95 && u.within_001 >= 0.90,
           fmt("within 0.01 pu: corrected %.4f (>= 0.95), uncorrected %.4f (>= 0.90) over %zu samples",
               k.within_001, u.within_001, k.samples));
  L.report(3, k.mean_abs <= u.mean_abs && std::abs(k.mean_signed) < std::abs(u.mean_signed),
           fmt("MAE corrected %.3e <= uncorrected %.3e; |mean signed| corrected %.3e < uncorrected %.3e",
               k.mean_abs, u.mean_abs, std::abs(k.mean_signed), std::abs(u.mean_signed)));
}

void criterion4(Ledger& L, const World& w, const TrainedModel& guided) {
  const double g = std::abs(summarize_errors("g", open_loop_errors(w.model, w.heldout, guided.estimator)).mean_signed);
  std::vector<double> rnd;
  std::string seeds;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TrainingConfig tc;
    tc.selection = SelectionMethod::Random;
    tc.seed = seed;
    const auto t = train_estimator(w.model, w.history, tc, &guided.estimator.critical);
    rnd.push_back(std::abs(summarize_errors("r", open_loop_errors(w.model, w.heldout, t.estimator)).mean_signed));
    seeds += fmt(" %.2e", rnd.back());
  }
  auto sorted = rnd;
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted[2];
  L.report(4, g <= median,
           fmt("guided |mean signed| %.3e <= random median %.3e (seeds:%s)", g, median, seeds.c_str()));
}

void criterion5(Ledger& L) {
  std::mt19937_64 rng(2024);
  int ok = 0, strict_inf = 0;
  double worst = 0.0;
  std::string first_fail;
  for (int n = 0; n < 200; ++n) {
    const auto p = oracle::random_instance(rng);
    bool good = true;
    const auto strict = solve_cvvc(p);
    const auto ref = oracle::solve(p, false);
    if (strict.has_value() != ref.feasible) good = false;
    if (!ref.feasible) ++strict_inf;
    auto check_plan = [&](const ControlPlan& plan, double target) {
      const double rel = std::abs(plan.objective - target) / std::max(std::abs(target), 1e-9);
      worst = std::max(worst, rel);
      if (rel > 1e-3) good = false;
      for (std::size_t k = 0; k < p.plant_count(); ++k) {
        if (plan.q_plus[k] < 0 || plan.q_minus[k] < 0 || plan.q_plus[k] * plan.q_minus[k] != 0.0) good = false;
        if (plan.q_setpoint[k] < p.q_lo[k] - 1e-9 || plan.q_setpoint[k] > p.q_hi[k] + 1e-9) good = false;
      }
      for (std::size_t r = 0; r < p.regulator_count(); ++r) {
        const int t = p.tap_now[r] + plan.tap_delta[r];
        if (std::abs(plan.tap_delta[r]) > p.max_tap_change || t < p.tap_lo[r] || t > p.tap_hi[r]) good = false;
      }
      for (std::size_t i = 0; i < p.node_count(); ++i) {
        const double v = plan.predicted_v[i];
        if (plan.branch == PlanBranch::Strict) {
          if (v < p.v_lo - 1e-9 || v > p.v_hi + 1e-9) good = false;
        } else {
          const double s = std::max({0.0, p.v_lo - v, v - p.v_hi});
          if (plan.slack[i] < 0 || std::abs(plan.slack[i] - s) > 1e-12) good = false;
        }
      }
    };
    if (strict && ref.feasible) check_plan(*strict, ref.objective);
    check_plan(solve_cvvc_relaxed(p), oracle::solve(p, true).objective);
    if (good)
      ++ok;
    else if (first_fail.empty())
      first_fail = fmt(" first failure: instance %d", n);
  }
  L.report(5, ok == 200,
           fmt("%d/200 instances match the reference (%d strictly infeasible), worst relative gap %.2e (<= 1e-3)%s", ok,
               strict_inf, worst, first_fail.c_str()));
}

void criterion6(Ledger& L) {
  double worst_fit = 0.0;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ua(1e-4, 5e-2), ub(0.05, 1.5), uq(-2500.0, 0.0);
  for (int n = 0; n < 50; ++n) {
    const double a = ua(rng), b = ub(rng), q0 = uq(rng);
    std::vector<double> qs, d;
    for (int j = 0; j < 12; ++j) {
      qs.push_back(q0 + 400.0 * j);
      d.push_back(a * std::pow(3000.0 + qs.back(), -b));
    }
    const auto c = fit_power_law(qs, d, 3000.0);
    worst_fit = std::max({worst_fit, std::abs(c.a - a) / a, std::abs(c.b - b) / b});
  }
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = 200, p = 12;
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = 500.0 * g(rng);
  Eigen::VectorXd beta(p + 1);
  for (int j = 0; j <= p; ++j) beta(j) = j == 0 ? 1.01 : 1e-5 * g(rng);
  Eigen::MatrixXd y(n, 1);
  y.col(0) = (x * beta.tail(p)).array() + beta(0);
  std::vector<std::string> names;
  for (int j = 0; j < p; ++j) names.push_back("m" + std::to_string(j));
  const auto est = least_squares_with_intercept(x, y, names);
  const double worst_reg = (est.col(0) - beta).cwiseAbs().maxCoeff();
  L.report(6, worst_fit <= 0.01 && worst_reg <= 1e-9,
           fmt("power-law worst relative error %.2e (<= 1%%), regression worst coefficient error %.2e (<= 1e-9)",
               worst_fit, worst_reg));
}

void criterion7(Ledger& L, World& w, const EstimatorModel& est) {
  std::size_t nvv[5];
  int i = 0;
  for (CaseTag tag : {CaseTag::None, CaseTag::A, CaseTag::B, CaseTag::C, CaseTag::D}) {
    CaseConfig c;
    c.tag = tag;
    const auto tr = run_case(w.model, w.stress, c, &est);
    w.track(tr);
    nvv[i++] = compute_metrics(tr, c).nvv;
  }
  const double cap = 0.05 * static_cast<double>(nvv[0]);
  L.report(7, nvv[0] > 0 && nvv[1] == 0 && nvv[2] <= cap && nvv[4] <= cap && nvv[4] <= nvv[3],
           fmt("stress-day NVV: none %zu, A %zu (= 0), B %zu and D %zu (<= %.1f), C %zu (D <= C)", nvv[0], nvv[1],
               nvv[2], nvv[4], cap, nvv[3]));
}

void criterion8(Ledger& L, World& w, const EstimatorModel& est) {
  const auto t0 = Clock::now();
  long ntc[2][3];
  const double bw[3] = {2.0, 3.0, 4.0};
  for (int ci = 0; ci < 2; ++ci)
    for (int b = 0; b < 3; ++b) {
      CaseConfig c;
      c.tag = ci == 0 ? CaseTag::C : CaseTag::D;
      c.bandwidth_volts = bw[b];
      const auto tr = run_case(w.model, w.week, c, &est);
      w.track(tr);
      ntc[ci][b] = compute_metrics(tr, c).ntc;
    }
  const double secs = seconds_since(t0);
  bool mono = true;
  for (auto& row : ntc) mono &= row[0] >= row[1] && row[1] >= row[2];
  L.report(8, mono && secs < 1800.0,
           fmt("7-day NTC at 2/3/4 V: C %ld/%ld/%ld, D %ld/%ld/%ld (non-increasing); sweep %.1f s (< 1800 s)",
               ntc[0][0], ntc[0][1], ntc[0][2], ntc[1][0], ntc[1][1], ntc[1][2], secs));
}

void criterion9(Ledger& L, const World& w) {
  const auto& m = w.model;
  const std::size_t nu = m.regulator_units().size();
  const auto delays = coordinated_delays(m, 1);
  int issued = 0, landed = 0, zero_cmds = 0, spontaneous = 0, rejected = 0;
  for (std::size_t t : {200u, 480u, 720u, 900u, 1140u, 1320u}) {
    const auto scen = scenario_at(w.heldout, t);
    for (int start : {-4, 0, 3})
      for (double bw : {2.0, 3.0, 4.0})
        for (int d0 = -2; d0 <= 2; ++d0)
          for (int d1 = -2; d1 <= 2; ++d1) {
            const std::vector<int> dt{d0, d1};
            std::vector<int> taps(nu, start), target(nu);
            for (std::size_t u = 0; u < nu; ++u) target[u] = start + dt[u];
            const auto predicted = solve(m, scenario_state(m, scen, target));
            std::vector<RegulatorRuntimeState> rs(nu);
            bool valid = true;
            for (std::size_t u = 0; u < nu; ++u) {
              const auto sensing = m.regulator_units()[u].sensing;
              rs[u].tap = start;
              rs[u].delay_steps = delays[u];
              try {
                rs[u].command = tap_to_setpoint(dt[u], predicted.vmag_pu[m.secondary_node(sensing)], bw, 0.75);
              } catch (const DomainError&) {
                valid = false;  // setpoint outside the controller range; never issued
              }
            }
            if (!valid) {
              ++rejected;
              continue;
            }
            std::vector<int> moves(nu, 0);
            for (int step = 0; step < 40; ++step) {
              const auto sol = solve(m, scenario_state(m, scen, taps));
              for (std::size_t u = 0; u < nu; ++u) {
                const auto sensing = m.regulator_units()[u].sensing;
                rs[u].tap = taps[u];
                const auto r = step_local_control(rs[u], sol.vmag_pu[m.secondary_node(sensing)] * kRegulatorBaseVolts);
                rs[u] = r.state;
                moves[u] += std::abs(r.tap_delta);
              }
              for (std::size_t u = 0; u < nu; ++u) taps[u] = rs[u].tap;
            }
            for (std::size_t u = 0; u < nu; ++u) {
              ++issued;
              if (taps[u] == target[u] && moves[u] == std::abs(dt[u])) ++landed;
              if (dt[u] == 0) {
                ++zero_cmds;
                if (moves[u] != 0) ++spontaneous;
              }
            }
          }
  }
  L.report(9, landed == issued && spontaneous == 0,
           fmt("%d/%d commands landed exactly; %d spontaneous changes over %d zero-move commands; %d command pairs "
               "rejected for setpoints outside [110, 130] V",
               landed, issued, spontaneous, zero_cmds, rejected));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void criterion10(Ledger& L, const World& w, const EstimatorModel& est) {
  const fs::path root = fs::temp_directory_path() / "voltvar_acceptance_determinism";
  fs::remove_all(root);
  ExperimentInputs in;
  in.model = &w.model;
  in.evaluation = &w.stress;
  in.estimator = &est;
  in.config.seed = 42;
  run_experiment(ExperimentKind::CaseMatrix, in, root / "a");
  run_experiment(ExperimentKind::CaseMatrix, in, root / "b");
  const bool same_metrics = slurp(root / "a" / "metrics.csv") == slurp(root / "b" / "metrics.csv");
  const bool same_manifest = slurp(root / "a" / "run_manifest.json") == slurp(root / "b" / "run_manifest.json");
  const bool nonempty = !slurp(root / "a" / "metrics.csv").empty();
  fs::remove_all(root);
  L.report(10, same_metrics && same_manifest && nonempty,
           fmt("case-matrix metrics %s, manifest %s across two runs", same_metrics ? "identical" : "DIFFER",
               same_manifest ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  Ledger L;
  World w;
  std::printf("test feeder: %zu nodes, %zu PV plants, %zu regulator units\n", w.model.node_count(),
              w.model.pv_plants().size(), w.model.regulator_units().size());
  const auto guided = train_estimator(w.model, w.history, TrainingConfig{});
  std::printf("estimator: %zu training scenarios, %zu critical nodes\n", guided.scenarios.size(),
              guided.estimator.critical.size());

  criterion5(L);
  criterion6(L);
  criteria2and3(L, w, guided.estimator);
  criterion4(L, w, guided);
  criterion7(L, w, guided.estimator);
  criterion8(L, w, guided.estimator);
  criterion9(L, w);
  criterion10(L, w, guided.estimator);
  criterion1(L, w);  // last, so the balance residual covers every controlled run above

  std::printf("%d of 10 criteria failed (%.1f s)\n", L.failed, seconds_since(t0));
  return L.failed == 0 ? 0 : 1;
}
