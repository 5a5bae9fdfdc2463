#pragma once

// Brute-force reference for small coordinated control problems (at most two
// plants). Every tap combination is visited; the first plant's setpoint is
// scanned on a grid and refined by golden section, the second plant is
// minimised exactly along its line.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "voltvar/optimizer.hpp"

namespace oracle {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Result {
  bool feasible = false;  // strict problem only
  double objective = kInf;
};

// Voltage at node i as an affine function of the free plant: c + d * q.
struct Line {
  double c, d;
};

inline std::vector<double> tap_base(const voltvar::CvvcProblem& p, const std::vector<int>& dt) {
  std::vector<double> v(p.node_count());
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = p.v0[i];
    for (std::size_t r = 0; r < dt.size(); ++r) v[i] += p.dvr(i, r) * dt[r];
    for (std::size_t k = 0; k < p.plant_count(); ++k) v[i] -= p.dq(i, k) * p.q_now[k];
  }
  return v;
}

// Feasible interval of q for lo <= c + d q <= hi over all lines, within [qlo, qhi].
inline std::optional<std::pair<double, double>> interval(const std::vector<Line>& lines, double vlo, double vhi,
                                                         double qlo, double qhi) {
  double lo = qlo, hi = qhi;
  for (const auto& l : lines) {
    if (l.d == 0.0) {
      if (l.c < vlo - 1e-12 || l.c > vhi + 1e-12) return std::nullopt;
      continue;
    }
    double a = (vlo - l.c) / l.d, b = (vhi - l.c) / l.d;
    if (a > b) std::swap(a, b);
    lo = std::max(lo, a);
    hi = std::min(hi, b);
  }
  if (lo > hi + 1e-12) return std::nullopt;
  return std::pair{lo, std::max(lo, hi)};
}

inline double min_abs_on(double lo, double hi) { return lo > 0 ? lo : hi < 0 ? -hi : 0.0; }

// Exact minimiser of w|q| + beta * sum(slack_i(q)^2) over [qlo, qhi].
inline double relaxed_line_min(const std::vector<Line>& lines, double vlo, double vhi, double w, double beta,
                               double qlo, double qhi) {
  auto f = [&](double q) {
    double s2 = 0.0;
    for (const auto& l : lines) {
      const double v = l.c + l.d * q;
      const double s = std::max({0.0, vlo - v, v - vhi});
      s2 += s * s;
    }
    return w * std::abs(q) + beta * s2;
  };
  std::vector<double> cuts{qlo, qhi};
  if (qlo < 0 && qhi > 0) cuts.push_back(0.0);
  for (const auto& l : lines)
    if (l.d != 0.0)
      for (double lim : {vlo, vhi}) {
        const double x = (lim - l.c) / l.d;
        if (x > qlo && x < qhi) cuts.push_back(x);
      }
  std::sort(cuts.begin(), cuts.end());
  double best = kInf;
  for (double x : cuts) best = std::min(best, f(x));
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s], b = cuts[s + 1];
    if (b <= a) continue;
    const double mid = 0.5 * (a + b);
    // f'(q) = w sgn(q) + sum 2 beta d (v - lim) on this piece: slope * q + icpt.
    double slope = 0.0, icpt = mid > 0 ? w : mid < 0 ? -w : 0.0;
    for (const auto& l : lines) {
      const double v = l.c + l.d * mid;
      double lim;
      if (v > vhi)
        lim = vhi;
      else if (v < vlo)
        lim = vlo;
      else
        continue;
      slope += 2 * beta * l.d * l.d;
      icpt += 2 * beta * l.d * (l.c - lim);
    }
    if (slope > 0) {
      const double x = std::clamp(-icpt / slope, a, b);
      best = std::min(best, f(x));
    }
  }
  return best;
}

// Convex scalar function minimised by a grid followed by golden-section refinement.
template <class F>
double scan_min(F f, double lo, double hi, double step) {
  if (hi - lo < 1e-12) return f(lo);
  const int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / step)));
  double best = kInf, arg = lo;
  for (int i = 0; i <= n; ++i) {
    const double x = i == n ? hi : lo + (hi - lo) * i / n;
    const double v = f(x);
    if (v < best) {
      best = v;
      arg = x;
    }
  }
  const double h = (hi - lo) / n;
  double a = std::max(lo, arg - h), b = std::min(hi, arg + h);
  const double g = (std::sqrt(5.0) - 1) / 2;
  double x1 = b - g * (b - a), x2 = a + g * (b - a), f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 200 && b - a > 1e-10; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - g * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + g * (b - a);
      f2 = f(x2);
    }
  }
  return std::min({best, f1, f2, f(a), f(b)});
}

inline std::vector<std::vector<int>> tap_window(const voltvar::CvvcProblem& p) {
  std::vector<std::vector<int>> out{{}};
  for (std::size_t r = 0; r < p.regulator_count(); ++r) {
    std::vector<std::vector<int>> next;
    for (const auto& pre : out)
      for (int d = -p.max_tap_change; d <= p.max_tap_change; ++d) {
        const int t = p.tap_now[r] + d;
        if (t < p.tap_lo[r] || t > p.tap_hi[r]) continue;
        auto v = pre;
        v.push_back(d);
        next.push_back(v);
      }
    out = std::move(next);
  }
  return out;
}

inline int changes(const std::vector<int>& dt) {
  int n = 0;
  for (int d : dt) n += std::abs(d);
  return n;
}

// Fourier-Motzkin projection of the strict two-plant feasible set onto q1.
inline std::optional<std::pair<double, double>> project_q1(const voltvar::CvvcProblem& p,
                                                           const std::vector<double>& base) {
  struct Row {
    double a1, a2, b;
  };
  std::vector<Row> rows{{1, 0, p.q_hi[0]}, {-1, 0, -p.q_lo[0]}, {0, 1, p.q_hi[1]}, {0, -1, -p.q_lo[1]}};
  for (std::size_t i = 0; i < p.node_count(); ++i) {
    rows.push_back({p.dq(i, 0), p.dq(i, 1), p.v_hi - base[i]});
    rows.push_back({-p.dq(i, 0), -p.dq(i, 1), base[i] - p.v_lo});
  }
  double lo = -kInf, hi = kInf;
  std::vector<Row> pos, neg;
  for (const auto& r : rows) {
    if (r.a2 > 0)
      pos.push_back(r);
    else if (r.a2 < 0)
      neg.push_back(r);
    else if (r.a1 > 0)
      hi = std::min(hi, r.b / r.a1);
    else if (r.a1 < 0)
      lo = std::max(lo, r.b / r.a1);
    else if (r.b < -1e-12)
      return std::nullopt;
  }
  for (const auto& u : pos)
    for (const auto& l : neg) {
      // u.a1 q1 + u.a2 q2 <= u.b, l.a1 q1 + l.a2 q2 <= l.b with u.a2 > 0 > l.a2.
      const double a1 = u.a1 / u.a2 - l.a1 / l.a2, b = u.b / u.a2 - l.b / l.a2;
      if (a1 > 0)
        hi = std::min(hi, b / a1);
      else if (a1 < 0)
        lo = std::max(lo, b / a1);
      else if (b < -1e-12)
        return std::nullopt;
    }
  if (lo > hi + 1e-12) return std::nullopt;
  return std::pair{lo, std::max(lo, hi)};
}

inline Result solve(const voltvar::CvvcProblem& p, bool relaxed, double step = 0.5) {
  const auto& c = p.costs;
  const std::size_t nk = p.plant_count();
  Result best;
  for (const auto& dt : tap_window(p)) {
    const auto base = tap_base(p, dt);
    const double tap_cost = (relaxed ? c.alpha : 1.0) * c.c_r * changes(dt);
    auto lines_for = [&](double q1) {
      std::vector<Line> lines;
      for (std::size_t i = 0; i < p.node_count(); ++i) {
        const double fixed = nk == 2 ? base[i] + p.dq(i, 0) * q1 : base[i];
        lines.push_back({fixed, p.dq(i, nk - 1)});
      }
      return lines;
    };
    const std::size_t last = nk - 1;
    double value = kInf;
    if (!relaxed) {
      auto inner = [&](double q1) {
        const auto iv = interval(lines_for(q1), p.v_lo, p.v_hi, p.q_lo[last], p.q_hi[last]);
        if (!iv) return kInf;
        return c.c_k * ((nk == 2 ? std::abs(q1) : 0.0) + min_abs_on(iv->first, iv->second));
      };
      if (nk == 1) {
        value = inner(0.0);
      } else if (const auto q1 = project_q1(p, base)) {
        value = scan_min(inner, q1->first, q1->second, step);
      }
      if (std::isfinite(value)) best.feasible = true;
    } else {
      auto inner = [&](double q1) {
        return c.alpha * c.c_k * (nk == 2 ? std::abs(q1) : 0.0) +
               relaxed_line_min(lines_for(q1), p.v_lo, p.v_hi, c.alpha * c.c_k, c.beta, p.q_lo[last], p.q_hi[last]);
      };
      value = nk == 1 ? inner(0.0) : scan_min(inner, p.q_lo[0], p.q_hi[0], step);
    }
    best.objective = std::min(best.objective, tap_cost + value);
  }
  return best;
}

// Random small instance: 1-2 plants, 0-2 regulators, tap window +/-2.
inline voltvar::CvvcProblem random_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };
  voltvar::CvvcProblem p;
  const int n = 2 + static_cast<int>(rng() % 5);
  const int nk = 1 + static_cast<int>(rng() % 2);
  const int nr = static_cast<int>(rng() % 3);
  const double centre = uni(0.96, 1.06);
  for (int i = 0; i < n; ++i) p.v0.push_back(centre + uni(-0.02, 0.02));
  p.dq = Eigen::MatrixXd(n, nk);
  p.dvr = Eigen::MatrixXd::Zero(n, nr);
  for (int k = 0; k < nk; ++k) {
    const double cap = uni(30.0, 300.0);
    p.q_lo.push_back(-cap);
    p.q_hi.push_back(cap);
    p.q_now.push_back(uni(-cap, cap));
    for (int i = 0; i < n; ++i) p.dq(i, k) = uni(0.0, 1.5e-4);
  }
  for (int r = 0; r < nr; ++r) {
    p.tap_lo.push_back(-16);
    p.tap_hi.push_back(16);
    const int t = u(rng) < 0.3 ? (u(rng) < 0.5 ? 16 : -15) : static_cast<int>(rng() % 33) - 16;
    p.tap_now.push_back(t);
    for (int i = 0; i < n; ++i)
      if (u(rng) < 0.7) p.dvr(i, r) = uni(0.004, 0.0065);
  }
  p.max_tap_change = 2;
  return p;
}

}  // namespace oracle
