#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace voltvar {

struct CvvcCosts {
  double c_r = 0.14;   // per tap change
  double c_k = 8e-4;   // per kvar per control interval
  double alpha = 1.0;  // action-cost weight (relaxed)
  double beta = 1e4;   // squared-violation weight (relaxed)
};

struct CvvcProblem {
  std::vector<std::string> nodes;  // optional labels
  std::vector<double> v0;          // pu, per node
  Eigen::MatrixXd dq;              // nodes x plants, pu/kvar
  Eigen::MatrixXd dvr;             // nodes x regulators, pu/tap

  std::vector<std::string> plant_ids;
  std::vector<double> q_now, q_lo, q_hi;  // kvar

  std::vector<std::string> regulator_ids;
  std::vector<int> tap_now, tap_lo, tap_hi;
  int max_tap_change = 2;

  double v_lo = 0.975, v_hi = 1.04;
  CvvcCosts costs;

  std::size_t node_count() const { return v0.size(); }
  std::size_t plant_count() const { return q_now.size(); }
  std::size_t regulator_count() const { return tap_now.size(); }

  /// Throws ValidationError on inconsistent sizes, bounds or non-finite data.
  void validate() const;
};

enum class PlanBranch { Strict, Relaxed };
const char* to_string(PlanBranch b);

struct ControlPlan {
  PlanBranch branch = PlanBranch::Strict;
  std::vector<double> q_setpoint;  // absolute, kvar
  std::vector<double> q_plus, q_minus;
  std::vector<int> tap_delta;
  std::vector<double> slack;        // pu, per node
  std::vector<double> predicted_v;  // pu, per node
  double tap_cost = 0.0;
  double q_cost = 0.0;
  double objective = 0.0;
  std::size_t combinations = 0;     // tap combinations in the window
  std::size_t solved = 0;           // continuous subproblems actually solved
};

/// Hard voltage limits. nullopt when no tap combination is feasible.
std::optional<ControlPlan> solve_cvvc(const CvvcProblem& problem);

/// Violations allowed at quadratic cost. Always returns a plan.
ControlPlan solve_cvvc_relaxed(const CvvcProblem& problem);

/// Strict branch first, relaxed when it is infeasible.
ControlPlan optimize(const CvvcProblem& problem);

/// Number of integer tap combinations the enumeration would visit.
std::size_t tap_combination_count(const CvvcProblem& problem);

CvvcProblem parse_problem(std::string_view json_text);
std::string problem_to_json(const CvvcProblem& problem);
std::string plan_to_json(const CvvcProblem& problem, const ControlPlan& plan);

}  // namespace voltvar
