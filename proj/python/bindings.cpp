#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "voltvar/error.hpp"
#include "voltvar/harness.hpp"
#include "voltvar/optimizer.hpp"
#include "voltvar/powerflow.hpp"
#include "voltvar/regulator_control.hpp"
#include "voltvar/synthetic.hpp"

namespace py = pybind11;
using namespace voltvar;

namespace {

InjectionState state_at(const FeederModel& model, const ProfileSet& p, std::size_t t) {
  auto st = InjectionState::nominal(model);
  for (std::size_t i = 0; i < p.n_loads; ++i) {
    st.load_kw[i] = p.load_p(t, i);
    st.load_kvar[i] = p.load_q(t, i);
  }
  for (std::size_t k = 0; k < p.n_plants; ++k) st.pv_kw[k] = p.pv_p(t, k);
  return st;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Feeder voltage estimation and volt-var control";

  auto base = py::register_exception<Error>(m, "VoltVarError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
  py::register_exception<RankDeficientError>(m, "RankDeficientError", base.ptr());

  py::class_<FeederModel>(m, "Feeder")
      .def_static("load", [](const std::filesystem::path& p) { return load_feeder(p); })
      .def_static("parse", [](const std::string& text) { return parse_feeder(text); })
      .def_static("tutorial", [] { return FeederModel(synthetic::tutorial_feeder()); })
      .def_static("test", [] { return FeederModel(synthetic::test_feeder()); })
      .def("to_json", [](const FeederModel& f) { return feeder_to_json(f.data()); })
      .def_property_readonly("node_count", &FeederModel::node_count)
      .def_property_readonly("nodes",
                             [](const FeederModel& f) {
                               std::vector<std::string> out;
                               for (const auto& n : f.nodes()) out.push_back(n.str());
                               return out;
                             })
      .def_property_readonly("plant_ids",
                             [](const FeederModel& f) {
                               std::vector<std::string> out;
                               for (const auto& p : f.pv_plants()) out.push_back(p.id);
                               return out;
                             })
      .def_property_readonly("regulator_units", [](const FeederModel& f) {
        std::vector<std::string> out;
        for (const auto& u : f.regulator_units()) out.push_back(u.id);
        return out;
      });

  py::class_<ProfileSet>(m, "Profiles")
      .def_static("read", &read_profiles, py::arg("path"), py::arg("feeder"))
      .def_static(
          "generate",
          [](const FeederModel& f, const std::string& start, int days, int step, std::uint64_t seed) {
            synthetic::ProfileOptions o;
            o.start_date = start;
            o.days = days;
            o.step_minutes = step;
            o.seed = seed;
            return synthetic::generate_profiles(f, o);
          },
          py::arg("feeder"), py::arg("start") = "2024-06-01", py::arg("days") = 1, py::arg("step_minutes") = 1,
          py::arg("seed") = 1)
      .def_static("stress_day", &synthetic::stress_day, py::arg("feeder"), py::arg("seed") = 7)
      .def("write", &write_profiles, py::arg("feeder"), py::arg("path"))
      .def("slice", &ProfileSet::slice, py::arg("begin"), py::arg("end"), py::arg("stride") = 1)
      .def("__len__", &ProfileSet::size)
      .def_readonly("timestamps", &ProfileSet::timestamps);

  py::class_<VoltageSolution>(m, "Solution")
      .def_readonly("vmag_pu", &VoltageSolution::vmag_pu)
      .def_readonly("iterations", &VoltageSolution::iterations)
      .def_readonly("max_mismatch_pu", &VoltageSolution::max_mismatch_pu)
      .def_property_readonly("measurements", [](const VoltageSolution& s) { return s.measurements.vector(); });

  m.def(
      "solve",
      [](const FeederModel& f, const ProfileSet& p, std::size_t step) {
        if (step >= p.size()) throw ValidationError("step " + std::to_string(step) + " outside the profile");
        return solve(f, state_at(f, p, step));
      },
      py::arg("feeder"), py::arg("profiles"), py::arg("step") = 0,
      "Power flow at one profile step with initial taps and zero PV reactive power.");
  m.def("excess_capacity_kvar", &excess_capacity_kvar, py::arg("rated_kva"), py::arg("p_kw"));

  py::class_<ControlPlan>(m, "ControlPlan")
      .def_property_readonly("branch", [](const ControlPlan& p) { return std::string(to_string(p.branch)); })
      .def_readonly("q_setpoint", &ControlPlan::q_setpoint)
      .def_readonly("tap_delta", &ControlPlan::tap_delta)
      .def_readonly("slack", &ControlPlan::slack)
      .def_readonly("predicted_v", &ControlPlan::predicted_v)
      .def_readonly("objective", &ControlPlan::objective)
      .def_readonly("combinations", &ControlPlan::combinations);

  m.def(
      "optimize_json",
      [](const std::string& text) {
        const auto problem = parse_problem(text);
        const auto plan = optimize(problem);
        return std::make_pair(plan, plan_to_json(problem, plan));
      },
      py::arg("problem_json"), "Solve a control problem given as JSON; returns (plan, plan_json).");

  m.def("tap_to_setpoint",
        [](int tap_delta, double vs1_pu, double bandwidth, double step_volts) {
          return tap_to_setpoint(tap_delta, vs1_pu, bandwidth, step_volts).v_set;
        },
        py::arg("tap_delta"), py::arg("vs1_pu"), py::arg("bandwidth_volts") = 4.0, py::arg("tap_step_volts") = 0.75);

  py::class_<EstimatorModel>(m, "Estimator")
      .def_static("load", &load_estimator, py::arg("dir"), py::arg("feeder"))
      .def("save", &save_estimator, py::arg("dir"))
      .def_property_readonly("critical_nodes", [](const EstimatorModel& e) {
        std::vector<std::string> out;
        for (const auto& c : e.critical) out.push_back(c.node.str());
        return out;
      });

  m.def(
      "train",
      [](const FeederModel& f, const ProfileSet& history, std::size_t rows, std::size_t cols, bool guided,
         std::uint64_t seed) {
        TrainingConfig tc;
        tc.grid_rows = rows;
        tc.grid_cols = cols;
        tc.selection = guided ? SelectionMethod::Guided : SelectionMethod::Random;
        tc.seed = seed;
        return train_estimator(f, history, tc).estimator;
      },
      py::arg("feeder"), py::arg("history"), py::arg("rows") = 5, py::arg("cols") = 5, py::arg("guided") = true,
      py::arg("seed") = 1);

  py::class_<MetricsReport>(m, "Metrics")
      .def_readonly("label", &MetricsReport::label)
      .def_readonly("mvvm", &MetricsReport::mvvm)
      .def_readonly("nvv", &MetricsReport::nvv)
      .def_readonly("ntc", &MetricsReport::ntc)
      .def_readonly("q_cost", &MetricsReport::q_cost)
      .def_readonly("t_cost", &MetricsReport::t_cost)
      .def_readonly("total_cost", &MetricsReport::total_cost)
      .def("__repr__", [](const MetricsReport& r) {
        return "<Metrics " + r.label + " nvv=" + std::to_string(r.nvv) + " ntc=" + std::to_string(r.ntc) + ">";
      });

  m.def(
      "simulate",
      [](const FeederModel& f, const ProfileSet& p, const std::string& case_tag, const EstimatorModel* est,
         double bandwidth, int delay) {
        CaseConfig c;
        c.tag = parse_case(case_tag);
        c.bandwidth_volts = bandwidth;
        c.delay_steps = delay;
        c.validate();
        const auto trace = [&] {
          py::gil_scoped_release release;
          return run_case(f, p, c, est);
        }();
        auto report = compute_metrics(trace, c);
        report.label = to_string(c.tag);
        return report;
      },
      py::arg("feeder"), py::arg("profiles"), py::arg("case") = "A", py::arg("estimator") = nullptr,
      py::arg("bandwidth_volts") = 4.0, py::arg("delay_steps") = 1);
}
