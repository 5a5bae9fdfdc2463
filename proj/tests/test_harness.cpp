#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "voltvar/error.hpp"
#include "voltvar/harness.hpp"
#include "voltvar/synthetic.hpp"

using namespace voltvar;

namespace {

SimulationTrace toy_trace() {
  SimulationTrace t;
  t.nodes = {NodeRef::parse("x.a")};
  t.plant_ids = {"pv"};
  t.unit_ids = {"vr"};
  t.timestamps = {"t0", "t1", "t2", "t3"};
  t.vmag = {1.0, 1.06, 1.06, 1.0};
  t.pv_p = {0, 0, 0, 0};
  t.pv_q = {10, -20, 0, 5};
  t.taps = {0, 1, 1, -1};
  t.initial_taps = {0};
  t.skipped.assign(4, 0);
  return t;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Setup {
  FeederModel model{synthetic::tutorial_feeder()};
  ProfileSet history, day;
  TrainedModel trained;
  Setup() {
    synthetic::ProfileOptions o;
    o.days = 4;
    o.step_minutes = 15;
    o.seed = 2;
    history = synthetic::generate_profiles(model, o);
    o.days = 1;
    o.step_minutes = 1;
    o.seed = 3;
    o.start_date = "2024-06-10";
    day = synthetic::generate_profiles(model, o).slice(600, 840);
    TrainingConfig tc;
    tc.grid_rows = tc.grid_cols = 3;
    trained = train_estimator(model, history, tc);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

}  // namespace

TEST_CASE("metrics use a trailing window and count tap steps") {
  CaseConfig cfg;
  cfg.rolling_window = 2;
  const auto m = compute_metrics(toy_trace(), cfg);
  CHECK(m.nvv == 1);
  CHECK(m.mvvm == doctest::Approx(0.01));
  CHECK(m.ntc == 3);
  CHECK(m.q_cost == doctest::Approx(8e-4 * 35 / 5));
  CHECK(m.t_cost == doctest::Approx(0.42));
  CHECK(m.total_cost == doctest::Approx(m.q_cost + m.t_cost));
}

TEST_CASE("case configuration is validated") {
  CaseConfig c;
  c.interval_minutes = 7;
  c.resolution_minutes = 2;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.opt_v_hi = 1.06;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK(parse_case("none") == CaseTag::None);
  CHECK(parse_case("D") == CaseTag::D);
  CHECK_THROWS_AS(parse_case("E"), ParseError);
  CHECK(parse_experiment("deadband-sweep") == ExperimentKind::DeadbandSweep);
}

TEST_CASE("estimator cases need a model") {
  const auto& s = setup();
  CaseConfig c;
  c.tag = CaseTag::B;
  CHECK_THROWS_AS(run_case(s.model, s.day, c), ValidationError);
}

TEST_CASE("every case keeps devices inside their ranges") {
  const auto& s = setup();
  for (CaseTag tag : {CaseTag::None, CaseTag::A, CaseTag::B, CaseTag::C, CaseTag::D}) {
    CaseConfig c;
    c.tag = tag;
    const auto tr = run_case(s.model, s.day, c, &s.trained.estimator);
    CHECK(tr.steps() == s.day.size());
    CHECK(tr.vmag.size() == s.day.size() * s.model.node_count());
    CHECK(tr.max_balance_residual_pu <= 1e-6);
    const auto& pv = s.model.pv_plants()[0];
    for (std::size_t t = 0; t < tr.steps(); ++t) {
      CHECK(std::abs(tr.pv_q[t]) <= excess_capacity_kvar(pv.rated_kva, tr.pv_p[t]) + 1e-6);
      CHECK(std::abs(tr.taps[t]) <= 16);
      if (t > 0 && (tag == CaseTag::C || tag == CaseTag::D)) CHECK(std::abs(tr.taps[t] - tr.taps[t - 1]) <= 1);
    }
    if (tag == CaseTag::None) CHECK(tr.commands.empty());
    if (tag != CaseTag::None) CHECK(tr.optimizations == (s.day.size() + 4) / 5);
  }
}

TEST_CASE("simulation is deterministic") {
  const auto& s = setup();
  CaseConfig c;
  c.tag = CaseTag::D;
  const auto a = compute_metrics(run_case(s.model, s.day, c, &s.trained.estimator), c);
  const auto b = compute_metrics(run_case(s.model, s.day, c, &s.trained.estimator), c);
  const auto dir = std::filesystem::temp_directory_path() / "voltvar_det";
  std::filesystem::create_directories(dir);
  write_metrics_csv({a}, dir / "a.csv");
  write_metrics_csv({b}, dir / "b.csv");
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("estimate logging records truth and both estimates") {
  const auto& s = setup();
  CaseConfig c;
  c.tag = CaseTag::D;
  c.log_estimates = true;
  const auto tr = run_case(s.model, s.day.slice(0, 30), c, &s.trained.estimator);
  CHECK(tr.estimates.size() == 30 * s.trained.estimator.critical.size());
  for (const auto& e : tr.estimates) {
    CHECK(e.truth == tr.v(e.step, s.trained.estimator.critical[e.critical].index));
    if (s.trained.estimator.critical[e.critical].tag == CriticalTag::RegulatorSecondary)
      CHECK(e.corrected == doctest::Approx(e.truth));
  }
}

TEST_CASE("error summaries") {
  const auto e = summarize_errors("x", {0.005, -0.02, 0.001, 0.002});
  CHECK(e.samples == 4);
  CHECK(e.mean_signed == doctest::Approx(-0.003));
  CHECK(e.mean_abs == doctest::Approx(0.007));
  CHECK(e.within_001 == doctest::Approx(0.75));
}

TEST_CASE("experiments write their reports") {
  const auto& s = setup();
  ExperimentInputs in;
  in.model = &s.model;
  in.history = &s.history;
  in.evaluation = &s.day;
  in.estimator = &s.trained.estimator;
  in.training.grid_rows = in.training.grid_cols = 3;
  in.random_seeds = {1, 2};
  const auto dir = std::filesystem::temp_directory_path() / "voltvar_experiments";
  std::filesystem::remove_all(dir);
  const auto cm = run_experiment(ExperimentKind::CaseMatrix, in, dir / "cm");
  CHECK(cm.metrics.size() == 5);
  CHECK(std::filesystem::exists(dir / "cm" / "metrics.csv"));
  CHECK(std::filesystem::exists(dir / "cm" / "run_manifest.json"));
  const auto sel = run_experiment(ExperimentKind::SelectionComparison, in, dir / "sel");
  CHECK(sel.errors.size() == 3);
  CHECK(std::filesystem::exists(dir / "sel" / "selection_histogram.csv"));
  const auto cc = run_experiment(ExperimentKind::CorrectionComparison, in, dir / "cc");
  CHECK(cc.errors.size() == 2);
  std::filesystem::remove_all(dir);
}
