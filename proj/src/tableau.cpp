#include "voltvar/tableau.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace voltvar::tableau {

namespace {

constexpr double kEps = 1e-10;
constexpr int kDegenerateBeforeBland = 50;

using Matrix = Eigen::MatrixXd;

// Gauss-Jordan pivot on t(r, c).
void pivot(Matrix& t, Eigen::Index r, Eigen::Index c) {
  t.row(r) /= t(r, c);
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    if (i == r) continue;
    const double f = t(i, c);
    if (f != 0.0) t.row(i) -= f * t.row(r);
  }
}

// Minimise the objective in the last row of `t` (reduced costs, rhs in last
// column, stored as -z). Columns >= `allowed` never enter.
Status run_simplex(Matrix& t, std::vector<Eigen::Index>& basis, Eigen::Index allowed, int max_iterations,
                   int& iterations) {
  const Eigen::Index m = t.rows() - 1, rhs = t.cols() - 1;
  int degenerate = 0;
  for (; iterations < max_iterations; ++iterations) {
    const bool bland = degenerate >= kDegenerateBeforeBland;
    Eigen::Index enter = -1;
    double best = -kEps;
    for (Eigen::Index j = 0; j < allowed; ++j) {
      const double d = t(m, j);
      if (d < best) {
        enter = j;
        if (bland) break;
        best = d;
      }
    }
    if (enter < 0) return Status::Optimal;

    Eigen::Index leave = -1;
    double ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < m; ++i) {
      const double a = t(i, enter);
      if (a <= kEps) continue;
      const double r = t(i, rhs) / a;
      if (r < ratio - kEps || (r <= ratio + kEps && leave >= 0 && basis[i] < basis[leave])) {
        ratio = std::min(ratio, r);
        leave = i;
      }
    }
    if (leave < 0) return Status::Unbounded;
    degenerate = ratio <= kEps ? degenerate + 1 : 0;
    pivot(t, leave, enter);
    basis[leave] = enter;
  }
  return Status::IterationLimit;
}

}  // namespace

const char* to_string(Status s) {
  switch (s) {
    case Status::Optimal: return "optimal";
    case Status::Infeasible: return "infeasible";
    case Status::Unbounded: return "unbounded";
    case Status::IterationLimit: return "iteration_limit";
  }
  return "?";
}

LpResult solve_lp(const Eigen::VectorXd& c, const Eigen::MatrixXd& a_in, const Eigen::VectorXd& b_in,
                  int max_iterations) {
  const Eigen::Index n = c.size(), m = a_in.rows();
  LpResult res;
  res.x = Eigen::VectorXd::Zero(n);

  // Row scaling, with negative right-hand sides flipped to need an artificial.
  Matrix a = a_in;
  Eigen::VectorXd b = b_in;
  std::vector<bool> flipped(static_cast<std::size_t>(m), false);
  Eigen::Index n_art = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double s = a.row(i).cwiseAbs().maxCoeff();
    if (s > 0.0) {
      a.row(i) /= s;
      b(i) /= s;
    } else if (b(i) < -kEps) {
      res.status = Status::Infeasible;
      return res;
    }
    if (b(i) < 0.0) {
      flipped[static_cast<std::size_t>(i)] = true;
      ++n_art;
    }
  }

  const Eigen::Index cols = n + m + n_art + 1, rhs = cols - 1;
  Matrix t = Matrix::Zero(m + 1, cols);
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(m));
  Eigen::Index art = n + m;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double sign = flipped[static_cast<std::size_t>(i)] ? -1.0 : 1.0;
    t.block(i, 0, 1, n) = sign * a.row(i);
    t(i, n + i) = sign;
    t(i, rhs) = sign * b(i);
    if (flipped[static_cast<std::size_t>(i)]) {
      t(i, art) = 1.0;
      basis[static_cast<std::size_t>(i)] = art++;
    } else {
      basis[static_cast<std::size_t>(i)] = n + i;
    }
  }

  if (n_art > 0) {
    // Phase 1: minimise the sum of artificials.
    for (Eigen::Index i = 0; i < m; ++i)
      if (flipped[static_cast<std::size_t>(i)]) t.row(m) -= t.row(i);
    for (Eigen::Index j = n + m; j < n + m + n_art; ++j) t(m, j) = 0.0;
    const Status s1 = run_simplex(t, basis, n + m + n_art, max_iterations, res.iterations);
    if (s1 == Status::IterationLimit) {
      res.status = s1;
      return res;
    }
    if (-t(m, rhs) > 1e-9) {
      res.status = Status::Infeasible;
      return res;
    }
    // Drive remaining artificials out of the basis where possible.
    for (Eigen::Index i = 0; i < m; ++i) {
      if (basis[static_cast<std::size_t>(i)] < n + m) continue;
      for (Eigen::Index j = 0; j < n + m; ++j)
        if (std::abs(t(i, j)) > 1e-9) {
          pivot(t, i, j);
          basis[static_cast<std::size_t>(i)] = j;
          break;
        }
    }
  }

  // Phase 2.
  t.row(m).setZero();
  t.block(m, 0, 1, n) = c.transpose();
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index bj = basis[static_cast<std::size_t>(i)];
    const double f = t(m, bj);
    if (f != 0.0) t.row(m) -= f * t.row(i);
  }
  res.status = run_simplex(t, basis, n + m, max_iterations, res.iterations);
  if (res.status != Status::Optimal) return res;
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index bj = basis[static_cast<std::size_t>(i)];
    if (bj < n) res.x(bj) = std::max(0.0, t(i, rhs));
  }
  res.objective = c.dot(res.x);
  return res;
}

LcpResult solve_lcp(const Eigen::MatrixXd& mm, const Eigen::VectorXd& q, int max_iterations) {
  const Eigen::Index n = q.size();
  LcpResult res;
  res.w = Eigen::VectorXd::Zero(n);
  res.z = Eigen::VectorXd::Zero(n);
  if (q.minCoeff() >= 0.0) {
    res.w = q;
    res.status = Status::Optimal;
    return res;
  }

  // Columns: w (0..n-1), z (n..2n-1), z0 (2n), rhs. Rows: I w - M z - 1 z0 = q.
  const Eigen::Index z0 = 2 * n, rhs = 2 * n + 1;
  Matrix t = Matrix::Zero(n, 2 * n + 2);
  t.leftCols(n).setIdentity();
  t.block(0, n, n, n) = -mm;
  t.col(z0).setConstant(-1.0);
  t.col(rhs) = q;
  std::vector<Eigen::Index> basis(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) basis[static_cast<std::size_t>(i)] = i;

  Eigen::Index r0 = 0;
  q.minCoeff(&r0);
  Eigen::Index entering = z0;
  Eigen::Index leave = r0;
  for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
    const Eigen::Index left = basis[static_cast<std::size_t>(leave)];
    pivot(t, leave, entering);
    basis[static_cast<std::size_t>(leave)] = entering;
    if (left == z0) {
      res.status = Status::Optimal;
      break;
    }
    entering = left < n ? left + n : left - n;

    leave = -1;
    double ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = t(i, entering);
      if (a <= kEps) continue;
      const double r = t(i, rhs) / a;
      const bool z0_row = basis[static_cast<std::size_t>(i)] == z0;
      if (r < ratio - kEps) {
        ratio = r;
        leave = i;
      } else if (r <= ratio + kEps && leave >= 0) {
        // Prefer letting z0 leave; otherwise the lowest variable index.
        const bool cur_z0 = basis[static_cast<std::size_t>(leave)] == z0;
        if (z0_row || (!cur_z0 && basis[static_cast<std::size_t>(i)] < basis[static_cast<std::size_t>(leave)])) {
          leave = i;
          ratio = std::min(ratio, r);
        }
      }
    }
    if (leave < 0) {
      res.status = Status::Unbounded;
      return res;
    }
  }
  if (res.status != Status::Optimal) {
    res.status = Status::IterationLimit;
    return res;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index bj = basis[static_cast<std::size_t>(i)];
    const double v = std::max(0.0, t(i, rhs));
    if (bj < n)
      res.w(bj) = v;
    else if (bj < 2 * n)
      res.z(bj - n) = v;
  }
  return res;
}

LpResult solve_qp(const Eigen::MatrixXd& h, const Eigen::VectorXd& p, const Eigen::MatrixXd& a,
                  const Eigen::VectorXd& b, int max_iterations) {
  const Eigen::Index n = p.size(), m = a.rows();
  // KKT system as an LCP in z = [x; lambda].
  Matrix mm = Matrix::Zero(n + m, n + m);
  mm.topLeftCorner(n, n) = h;
  mm.topRightCorner(n, m) = a.transpose();
  mm.bottomLeftCorner(m, n) = -a;
  Eigen::VectorXd q(n + m);
  q << p, b;
  const auto lcp = solve_lcp(mm, q, max_iterations);
  LpResult res;
  res.iterations = lcp.iterations;
  if (lcp.status == Status::Unbounded) {
    res.status = Status::Infeasible;
    return res;
  }
  res.status = lcp.status;
  if (res.status != Status::Optimal) return res;
  res.x = lcp.z.head(n);
  res.objective = 0.5 * res.x.dot(h * res.x) + p.dot(res.x);
  return res;
}

}  // namespace voltvar::tableau
