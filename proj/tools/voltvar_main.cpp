// voltvar command-line tool.
//
// Exit codes: 0 success, 1 unexpected failure, 2 configuration / input error,
// 3 power-flow convergence failure, 4 optimizer fell back to the relaxed branch.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "voltvar/error.hpp"
#include "voltvar/harness.hpp"
#include "voltvar/synthetic.hpp"

namespace fs = std::filesystem;
using namespace voltvar;

namespace {

constexpr int kExitGeneric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitRelaxed = 4;

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ValidationError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  out << text;
}

struct CaseFlags {
  std::string mapping = "half_step";
  void add(CLI::App* app, CaseConfig& c) {
    app->add_option("--deadband", c.bandwidth_volts, "Regulator bandwidth, volts on 120 V base")
        ->capture_default_str();
    app->add_option("--interval", c.interval_minutes, "Control interval, minutes")->capture_default_str();
    app->add_option("--resolution", c.resolution_minutes, "Simulation resolution, minutes")->capture_default_str();
    app->add_option("--tap-step-volts", c.tap_step_volts, "Tap step, volts on 120 V base")->capture_default_str();
    app->add_option("--delay", c.delay_steps, "Local controller delay, steps")->capture_default_str();
    app->add_option("--max-tap-change", c.max_tap_change, "Tap window per interval")->capture_default_str();
    app->add_option("--c-r", c.costs.c_r, "Cost per tap change")->capture_default_str();
    app->add_option("--c-k", c.costs.c_k, "Cost per kvar per interval")->capture_default_str();
    app->add_option("--beta", c.costs.beta, "Violation weight of the relaxed problem")->capture_default_str();
    app->add_option("--seed", c.seed, "Seed recorded with the run")->capture_default_str();
    app->add_option("--setpoint-mapping", mapping, "half_step or literal_tap")
        ->check(CLI::IsMember({"half_step", "literal_tap"}))
        ->capture_default_str();
  }
  void apply(CaseConfig& c) const {
    c.mapping = mapping == "literal_tap" ? SetpointMapping::LiteralTap : SetpointMapping::HalfStep;
  }
};

QsMode parse_qs_mode(const std::string& s) {
  if (s == "feeder_total") return QsMode::FeederTotal;
  if (s == "node_phase") return QsMode::NodePhase;
  throw ParseError("unknown Q_s mode '" + s + "'");
}

ProfileSet horizon(const ProfileSet& p, std::size_t steps) {
  return steps == 0 || steps >= p.size() ? p : p.slice(0, steps);
}

int run(int argc, char** argv) {
  CLI::App app{"Volt-var control toolkit: feeder power flow, voltage estimation and coordinated control"};
  app.require_subcommand(1);

  // generate
  std::string gen_kind = "test", gen_out;
  auto* gen = app.add_subcommand("generate", "Write a bundled synthetic feeder as JSON");
  gen->add_option("--kind", gen_kind, "test or tutorial")->check(CLI::IsMember({"test", "tutorial"}))->capture_default_str();
  gen->add_option("-o,--out", gen_out, "Output feeder JSON")->required();

  // generate-profiles
  std::string gp_feeder, gp_out;
  synthetic::ProfileOptions gp_opt;
  bool gp_stress = false;
  auto* gp = app.add_subcommand("generate-profiles", "Write synthetic load and PV profiles");
  gp->add_option("-f,--feeder", gp_feeder, "Feeder JSON")->required();
  gp->add_option("-o,--out", gp_out, "Output profile CSV")->required();
  gp->add_option("--days", gp_opt.days, "Number of days")->capture_default_str();
  gp->add_option("--start", gp_opt.start_date, "First date, YYYY-MM-DD")->capture_default_str();
  gp->add_option("--step", gp_opt.step_minutes, "Resolution, minutes")->capture_default_str();
  gp->add_option("--seed", gp_opt.seed, "Random seed")->capture_default_str();
  gp->add_option("--cloudy-probability", gp_opt.cloudy_probability, "Chance that a day is cloudy")->capture_default_str();
  gp->add_option("--load-scale", gp_opt.load_scale, "Load multiplier")->capture_default_str();
  gp->add_option("--pv-scale", gp_opt.pv_scale, "PV multiplier")->capture_default_str();
  gp->add_flag("--stress", gp_stress, "Generate the single clear stress day (uses --seed only)");

  // solve
  std::string pf_feeder, pf_profiles, pf_out;
  std::size_t pf_step = 0;
  auto* pf = app.add_subcommand("solve", "Solve one power flow and write node voltages");
  pf->add_option("-f,--feeder", pf_feeder, "Feeder JSON")->required();
  pf->add_option("-p,--profiles", pf_profiles, "Profile CSV; nominal injections when omitted");
  pf->add_option("--step", pf_step, "Profile row to solve")->capture_default_str();
  pf->add_option("-o,--out", pf_out, "Output CSV")->required();

  // select-scenarios
  std::string ss_feeder, ss_profiles, ss_out, ss_method = "guided";
  TrainingConfig ss_cfg;
  auto* ss = app.add_subcommand("select-scenarios", "Pick training scenarios from historical profiles");
  ss->add_option("-f,--feeder", ss_feeder, "Feeder JSON")->required();
  ss->add_option("-p,--profiles", ss_profiles, "Historical profile CSV")->required();
  ss->add_option("-o,--out", ss_out, "Output scenario CSV")->required();
  ss->add_option("--rows", ss_cfg.grid_rows, "Grid rows (PV output)")->capture_default_str();
  ss->add_option("--cols", ss_cfg.grid_cols, "Grid columns (feeder net load)")->capture_default_str();
  ss->add_option("--method", ss_method, "guided or random")->check(CLI::IsMember({"guided", "random"}))->capture_default_str();
  ss->add_option("--seed", ss_cfg.seed, "Seed for random selection")->capture_default_str();

  // train
  std::string tr_feeder, tr_profiles, tr_out, tr_dataset, tr_method = "guided", tr_qs = "feeder_total";
  TrainingConfig tr_cfg;
  auto* tr = app.add_subcommand("train", "Generate training data and fit the voltage estimator");
  tr->add_option("-f,--feeder", tr_feeder, "Feeder JSON")->required();
  tr->add_option("-p,--profiles", tr_profiles, "Historical profile CSV")->required();
  tr->add_option("-m,--model", tr_out, "Output model directory")->required();
  tr->add_option("--dataset", tr_dataset, "Also write the training dataset to this directory");
  tr->add_option("--rows", tr_cfg.grid_rows, "Grid rows (PV output)")->capture_default_str();
  tr->add_option("--cols", tr_cfg.grid_cols, "Grid columns (feeder net load)")->capture_default_str();
  tr->add_option("--method", tr_method, "guided or random")->check(CLI::IsMember({"guided", "random"}))->capture_default_str();
  tr->add_option("--seed", tr_cfg.seed, "Seed for random selection")->capture_default_str();
  tr->add_option("--offset-c", tr_cfg.curves.offset_c, "Power-law offset, kvar")->capture_default_str();
  tr->add_option("--qs-mode", tr_qs, "feeder_total or node_phase")->capture_default_str();

  // simulate
  std::string sim_feeder, sim_profiles, sim_model, sim_out, sim_case = "A";
  std::size_t sim_horizon = 0;
  bool sim_trace = false;
  CaseConfig sim_cfg;
  CaseFlags sim_flags;
  auto* sim = app.add_subcommand("simulate", "Run one control case over a profile horizon");
  sim->add_option("-f,--feeder", sim_feeder, "Feeder JSON")->required();
  sim->add_option("-p,--profiles", sim_profiles, "Profile CSV to simulate")->required();
  sim->add_option("-m,--model", sim_model, "Trained model directory (cases B-D)");
  sim->add_option("-o,--out", sim_out, "Output directory")->required();
  sim->add_option("--case", sim_case, "none, A, B, C or D")->capture_default_str();
  sim->add_option("--horizon", sim_horizon, "Simulate only the first N steps (0 = all)")->capture_default_str();
  sim->add_flag("--trace", sim_trace, "Write per-step voltages, device states and commands");
  sim->add_flag("--log-estimates", sim_cfg.log_estimates, "Record estimates at every step");
  sim_flags.add(sim, sim_cfg);

  // evaluate
  std::string ev_feeder, ev_history, ev_profiles, ev_model, ev_out, ev_kind, ev_qs = "feeder_total";
  std::size_t ev_horizon = 0;
  CaseConfig ev_cfg;
  CaseFlags ev_flags;
  ExperimentInputs ev_in;
  auto* ev = app.add_subcommand("evaluate", "Run an experiment and write its reports");
  ev->add_option("--experiment", ev_kind,
                 "case-matrix, deadband-sweep, selection-comparison or correction-comparison")
      ->required();
  ev->add_option("-f,--feeder", ev_feeder, "Feeder JSON")->required();
  ev->add_option("-p,--profiles", ev_profiles, "Evaluation profile CSV")->required();
  ev->add_option("--history", ev_history, "Historical profile CSV used for training");
  ev->add_option("-m,--model", ev_model, "Pre-trained model directory");
  ev->add_option("-o,--out", ev_out, "Output directory")->required();
  ev->add_option("--horizon", ev_horizon, "Evaluate only the first N steps (0 = all)")->capture_default_str();
  ev->add_option("--bandwidths", ev_in.bandwidths, "Deadband sweep values, volts")->capture_default_str();
  ev->add_option("--random-seeds", ev_in.random_seeds, "Seeds for random selection")->capture_default_str();
  ev->add_option("--offset-c", ev_in.training.curves.offset_c, "Power-law offset, kvar")->capture_default_str();
  ev->add_option("--qs-mode", ev_qs, "feeder_total or node_phase")->capture_default_str();
  ev_flags.add(ev, ev_cfg);

  // optimize
  std::string op_problem, op_out;
  auto* op = app.add_subcommand("optimize", "Solve one coordinated control problem from JSON");
  op->add_option("--problem", op_problem, "Problem JSON")->required();
  op->add_option("-o,--out", op_out, "Write the plan here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    write_feeder(gen_kind == "test" ? synthetic::test_feeder() : synthetic::tutorial_feeder(), gen_out);
    return 0;
  }
  if (gp->parsed()) {
    const auto model = load_feeder(gp_feeder);
    const auto p = gp_stress ? synthetic::stress_day(model, gp_opt.seed) : synthetic::generate_profiles(model, gp_opt);
    write_profiles(p, model, gp_out);
    return 0;
  }
  if (pf->parsed()) {
    const auto model = load_feeder(pf_feeder);
    auto state = InjectionState::nominal(model);
    if (!pf_profiles.empty()) {
      const auto p = read_profiles(pf_profiles, model);
      if (pf_step >= p.size()) throw ValidationError("--step is past the end of the profiles");
      state = scenario_state(model, scenario_at(p, pf_step), model.initial_unit_taps());
    }
    write_solution_csv(model, solve(model, state), pf_out);
    return 0;
  }
  if (ss->parsed()) {
    const auto model = load_feeder(ss_feeder);
    const auto p = read_profiles(ss_profiles, model);
    const auto all = build_scenarios(p, model, ss_cfg.metric);
    const auto grid = partition_blocks(all, ss_cfg.grid_rows, ss_cfg.grid_cols);
    const auto picked = ss_method == "guided" ? select_representatives(grid, all) : select_random(grid, all, ss_cfg.seed);
    write_scenarios_csv(picked, ss_out);
    std::cout << picked.size() << " scenarios from " << grid.non_empty_blocks() << " non-empty blocks\n";
    return 0;
  }
  if (tr->parsed()) {
    const auto model = load_feeder(tr_feeder);
    const auto p = read_profiles(tr_profiles, model);
    tr_cfg.selection = tr_method == "guided" ? SelectionMethod::Guided : SelectionMethod::Random;
    tr_cfg.curves.qs_mode = parse_qs_mode(tr_qs);
    const auto trained = train_estimator(model, p, tr_cfg);
    save_estimator(trained.estimator, tr_out);
    write_scenarios_csv(trained.scenarios, fs::path(tr_out) / "scenarios.csv");
    if (!tr_dataset.empty()) save_dataset(trained.dataset, model, tr_dataset);
    std::cout << trained.scenarios.size() << " scenarios, " << trained.dataset.rows.size() << " training rows, "
              << trained.estimator.critical.size() << " critical nodes\n";
    return 0;
  }
  if (sim->parsed()) {
    const auto model = load_feeder(sim_feeder);
    const auto p = horizon(read_profiles(sim_profiles, model), sim_horizon);
    sim_cfg.tag = parse_case(sim_case);
    sim_cfg.model_dir = sim_model;
    sim_flags.apply(sim_cfg);
    std::optional<EstimatorModel> est;
    if (!sim_model.empty()) est = load_estimator(sim_model, model);
    const auto trace = run_case(model, p, sim_cfg, est ? &*est : nullptr);
    auto m = compute_metrics(trace, sim_cfg);
    m.label = to_string(sim_cfg.tag);
    fs::create_directories(sim_out);
    write_metrics_csv({m}, fs::path(sim_out) / "metrics.csv");
    write_text(fs::path(sim_out) / "config.json", config_to_json(sim_cfg) + "\n");
    if (sim_trace || sim_cfg.log_estimates) write_trace(trace, sim_out);
    std::cout << "case " << m.label << ": NVV " << m.nvv << ", MVVM " << m.mvvm << " pu, NTC " << m.ntc
              << ", total cost " << m.total_cost << "\n";
    if (trace.relaxed_solves > 0) {
      std::cerr << trace.relaxed_solves << " of " << trace.optimizations
                << " control intervals used the relaxed problem\n";
      return kExitRelaxed;
    }
    return 0;
  }
  if (ev->parsed()) {
    const auto model = load_feeder(ev_feeder);
    const auto kind = parse_experiment(ev_kind);
    const auto eval = horizon(read_profiles(ev_profiles, model), ev_horizon);
    std::optional<ProfileSet> history;
    std::optional<EstimatorModel> est;
    if (!ev_history.empty()) history = read_profiles(ev_history, model);
    if (!ev_model.empty()) est = load_estimator(ev_model, model);
    ev_cfg.model_dir = ev_model;
    ev_flags.apply(ev_cfg);
    ev_in.model = &model;
    ev_in.evaluation = &eval;
    ev_in.history = history ? &*history : nullptr;
    ev_in.estimator = est ? &*est : nullptr;
    ev_in.config = ev_cfg;
    ev_in.training.curves.qs_mode = parse_qs_mode(ev_qs);
    const auto res = run_experiment(kind, ev_in, ev_out);
    for (const auto& m : res.metrics)
      std::cout << m.label << ": NVV " << m.nvv << ", MVVM " << m.mvvm << " pu, NTC " << m.ntc << ", total cost "
                << m.total_cost << "\n";
    for (const auto& e : res.errors)
      std::cout << e.label << ": mean signed " << e.mean_signed << " pu, mean abs " << e.mean_abs
                << " pu, within 0.01 pu " << e.within_001 << "\n";
    return 0;
  }
  if (op->parsed()) {
    const auto prob = parse_problem(read_text(op_problem));
    const auto plan = optimize(prob);
    const auto text = plan_to_json(prob, plan) + "\n";
    if (op_out.empty())
      std::cout << text;
    else
      write_text(op_out, text);
    return plan.branch == PlanBranch::Relaxed ? kExitRelaxed : 0;
  }
  return kExitGeneric;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConvergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitGeneric;
  }
}
