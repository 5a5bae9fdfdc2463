#pragma once

#include <Eigen/Dense>

namespace voltvar::tableau {

enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

const char* to_string(Status s);

struct LpResult {
  Status status = Status::Infeasible;
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
};

/// min c'x  s.t.  A x <= b,  x >= 0.   Two-phase dense simplex.
LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                  int max_iterations = 20000);

struct LcpResult {
  Status status = Status::Infeasible;  // Unbounded means ray termination
  Eigen::VectorXd w, z;
  int iterations = 0;
};

/// w = M z + q,  w, z >= 0,  w'z = 0.   Lemke's method with covering vector 1.
LcpResult solve_lcp(const Eigen::MatrixXd& m, const Eigen::VectorXd& q, int max_iterations = 20000);

/// min 1/2 x'Hx + p'x  s.t.  A x <= b,  x >= 0, with H positive semidefinite.
LpResult solve_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& p, const Eigen::MatrixXd& a,
                  const Eigen::VectorXd& b, int max_iterations = 20000);

}  // namespace voltvar::tableau
