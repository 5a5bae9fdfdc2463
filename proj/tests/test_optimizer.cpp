#include <doctest.h>

#include <random>

#include "cvvc_oracle.hpp"
#include "voltvar/error.hpp"
#include "voltvar/optimizer.hpp"
#include "voltvar/tableau.hpp"

using namespace voltvar;

TEST_CASE("simplex on a textbook LP") {
  // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18.
  Eigen::VectorXd c(2);
  c << -3, -5;
  Eigen::MatrixXd a(3, 2);
  a << 1, 0, 0, 2, 3, 2;
  Eigen::VectorXd b(3);
  b << 4, 12, 18;
  const auto r = tableau::solve_lp(c, a, b);
  REQUIRE(r.status == tableau::Status::Optimal);
  CHECK(r.x(0) == doctest::Approx(2));
  CHECK(r.x(1) == doctest::Approx(6));
  CHECK(r.objective == doctest::Approx(-36));
}

TEST_CASE("simplex detects infeasible and unbounded problems") {
  Eigen::VectorXd c(1);
  c << 1;
  Eigen::MatrixXd a(2, 1);
  a << 1, -1;
  Eigen::VectorXd b(2);
  b << 1, -2;  // x <= 1 and x >= 2
  CHECK(tableau::solve_lp(c, a, b).status == tableau::Status::Infeasible);
  c << -1;
  Eigen::MatrixXd a1(1, 1);
  a1 << -1;
  Eigen::VectorXd b1(1);
  b1 << 0;
  CHECK(tableau::solve_lp(c, a1, b1).status == tableau::Status::Unbounded);
}

TEST_CASE("Lemke solves a small LCP") {
  Eigen::MatrixXd m(2, 2);
  m << 2, 1, 1, 2;
  Eigen::VectorXd q(2);
  q << -5, -6;
  const auto r = tableau::solve_lcp(m, q);
  REQUIRE(r.status == tableau::Status::Optimal);
  const Eigen::VectorXd w = m * r.z + q;
  CHECK(r.z(0) == doctest::Approx(4.0 / 3));
  CHECK(r.z(1) == doctest::Approx(7.0 / 3));
  CHECK(std::abs(w.dot(r.z)) < 1e-9);
}

TEST_CASE("QP with an active bound") {
  // min (x-3)^2 + (y-1)^2 s.t. x + y <= 2.
  Eigen::MatrixXd h = 2 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd p(2);
  p << -6, -2;
  Eigen::MatrixXd a(1, 2);
  a << 1, 1;
  Eigen::VectorXd b(1);
  b << 2;
  const auto r = tableau::solve_qp(h, p, a, b);
  REQUIRE(r.status == tableau::Status::Optimal);
  CHECK(r.x(0) == doctest::Approx(2));
  CHECK(r.x(1) == doctest::Approx(0));
}

namespace {

CvvcProblem one_node(double v0, double dq, double dvr, int tap = 0) {
  CvvcProblem p;
  p.v0 = {v0};
  p.dq = Eigen::MatrixXd::Constant(1, 1, dq);
  p.dvr = Eigen::MatrixXd::Constant(1, 1, dvr);
  p.q_now = {0};
  p.q_lo = {-200};
  p.q_hi = {200};
  p.tap_now = {tap};
  p.tap_lo = {-16};
  p.tap_hi = {16};
  return p;
}

}  // namespace

TEST_CASE("no action when voltages are inside the limits") {
  const auto plan = solve_cvvc(one_node(1.0, 1e-4, 0.006));
  REQUIRE(plan);
  CHECK(plan->q_setpoint[0] == 0.0);
  CHECK(plan->tap_delta[0] == 0);
  CHECK(plan->objective == 0.0);
}

TEST_CASE("cheap reactive power beats a tap change") {
  // 0.002 pu over the limit: 20 kvar absorption (0.016) vs one tap (0.14).
  const auto plan = solve_cvvc(one_node(1.042, 1e-4, 0.006));
  REQUIRE(plan);
  CHECK(plan->tap_delta[0] == 0);
  CHECK(plan->q_setpoint[0] == doctest::Approx(-20.0));
  CHECK(plan->predicted_v[0] == doctest::Approx(1.04));
  CHECK(plan->objective == doctest::Approx(8e-4 * 20));
}

TEST_CASE("a tap change wins when reactive power is insufficient") {
  const auto plan = solve_cvvc(one_node(1.05, 1e-5, 0.006));
  REQUIRE(plan);
  CHECK(plan->tap_delta[0] == -2);
  CHECK(plan->q_setpoint[0] == 0.0);
}

TEST_CASE("infeasible problems fall back to the relaxed branch") {
  auto p = one_node(1.09, 1e-5, 0.006);
  CHECK_FALSE(solve_cvvc(p).has_value());
  const auto plan = optimize(p);
  CHECK(plan.branch == PlanBranch::Relaxed);
  CHECK(plan.tap_delta[0] == -2);
  CHECK(plan.q_setpoint[0] == doctest::Approx(-200.0));
  CHECK(plan.slack[0] == doctest::Approx(1.09 - 0.012 - 0.002 - 1.04));
}

TEST_CASE("tap window respects range limits") {
  auto p = one_node(1.06, 0.0, 0.006, -15);
  CHECK(tap_combination_count(p) == 4);  // -1..+2
  const auto plan = optimize(p);
  CHECK(plan.tap_delta[0] == -1);
  CHECK(plan.branch == PlanBranch::Relaxed);
}

TEST_CASE("oversized tap windows are refused") {
  CvvcProblem p;
  p.v0 = {1.0};
  p.dq = Eigen::MatrixXd::Zero(1, 0);
  p.dvr = Eigen::MatrixXd::Zero(1, 8);
  p.tap_now.assign(8, 0);
  p.tap_lo.assign(8, -16);
  p.tap_hi.assign(8, 16);
  CHECK(tap_combination_count(p) > 100000);
  CHECK_THROWS_AS(solve_cvvc(p), DomainError);
}

TEST_CASE("invalid problems are rejected") {
  auto p = one_node(1.0, 1e-4, 0.006);
  p.q_lo = {300};
  CHECK_THROWS_AS(solve_cvvc(p), ValidationError);
  p = one_node(1.0, 1e-4, 0.006);
  p.dq = Eigen::MatrixXd::Zero(2, 1);
  CHECK_THROWS_AS(solve_cvvc(p), ValidationError);
}

TEST_CASE("problem JSON round trip") {
  std::mt19937_64 rng(9);
  const auto p = oracle::random_instance(rng);
  const auto q = parse_problem(problem_to_json(p));
  CHECK(q.v0 == p.v0);
  CHECK(q.dq.isApprox(p.dq));
  CHECK(q.tap_now == p.tap_now);
  CHECK(q.q_lo == p.q_lo);
  CHECK(optimize(q).objective == doctest::Approx(optimize(p).objective));
  CHECK_THROWS_AS(parse_problem("{\"v0\": [1.0], \"plants\": [{\"q_lo\": 0}]}"), ParseError);
}

TEST_CASE("random instances agree with the brute-force reference") {
  std::mt19937_64 rng(77);
  for (int n = 0; n < 60; ++n) {
    const auto p = oracle::random_instance(rng);
    const auto strict = solve_cvvc(p);
    const auto ref = oracle::solve(p, false);
    CHECK(strict.has_value() == ref.feasible);
    if (strict && ref.feasible)
      CHECK(std::abs(strict->objective - ref.objective) <= 1e-3 * std::max(std::abs(ref.objective), 1e-9));
    const auto relaxed = solve_cvvc_relaxed(p);
    const auto rref = oracle::solve(p, true);
    CHECK(std::abs(relaxed.objective - rref.objective) <= 1e-3 * std::max(std::abs(rref.objective), 1e-9));
    for (std::size_t k = 0; k < p.plant_count(); ++k) {
      CHECK(relaxed.q_plus[k] * relaxed.q_minus[k] == 0.0);
      CHECK(relaxed.q_setpoint[k] >= p.q_lo[k]);
      CHECK(relaxed.q_setpoint[k] <= p.q_hi[k]);
    }
  }
}
