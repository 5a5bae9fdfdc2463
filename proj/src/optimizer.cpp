#include "voltvar/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "voltvar/error.hpp"
#include "voltvar/tableau.hpp"

namespace voltvar {

using json = nlohmann::json;

namespace {

constexpr std::size_t kMaxCombinations = 100000;
constexpr double kVoltScale = 100.0;  // rows in percent
constexpr double kTieTol = 1e-12;

struct TapCombo {
  std::vector<int> delta;
  int changes = 0;
};

std::vector<TapCombo> enumerate_taps(const CvvcProblem& p) {
  const std::size_t nr = p.regulator_count();
  std::vector<int> lo(nr), hi(nr);
  for (std::size_t r = 0; r < nr; ++r) {
    lo[r] = std::max(-p.max_tap_change, p.tap_lo[r] - p.tap_now[r]);
    hi[r] = std::min(p.max_tap_change, p.tap_hi[r] - p.tap_now[r]);
  }
  std::vector<TapCombo> out;
  TapCombo cur;
  cur.delta = lo;
  if (nr == 0) {
    out.push_back(cur);
    return out;
  }
  for (;;) {
    cur.changes = 0;
    for (int d : cur.delta) cur.changes += std::abs(d);
    out.push_back(cur);
    int r = static_cast<int>(nr) - 1;
    while (r >= 0 && cur.delta[static_cast<std::size_t>(r)] == hi[static_cast<std::size_t>(r)]) {
      cur.delta[static_cast<std::size_t>(r)] = lo[static_cast<std::size_t>(r)];
      --r;
    }
    if (r < 0) break;
    ++cur.delta[static_cast<std::size_t>(r)];
  }
  // Fewer tap changes first, then lexicographic order.
  std::stable_sort(out.begin(), out.end(),
                   [](const TapCombo& a, const TapCombo& b) { return a.changes < b.changes; });
  return out;
}

double q_unit(const CvvcProblem& p) {
  double m = 0.0;
  for (std::size_t k = 0; k < p.plant_count(); ++k)
    m = std::max({m, std::abs(p.q_lo[k]), std::abs(p.q_hi[k])});
  return m > 0.0 ? m / 10.0 : 1.0;
}

// Node voltages with fixed taps and every plant held at q_now.
std::vector<double> tap_base(const CvvcProblem& p, const std::vector<int>& delta) {
  std::vector<double> base(p.node_count());
  for (std::size_t i = 0; i < base.size(); ++i) {
    double v = p.v0[i];
    for (std::size_t r = 0; r < delta.size(); ++r) v += p.dvr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r)) * delta[r];
    for (std::size_t k = 0; k < p.plant_count(); ++k) v -= p.dq(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * p.q_now[k];
    base[i] = v;
  }
  return base;
}

struct NodeRange {
  double lo, hi;
};

NodeRange reachable(const CvvcProblem& p, std::size_t i, double base) {
  NodeRange r{base, base};
  for (std::size_t k = 0; k < p.plant_count(); ++k) {
    const double s = p.dq(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    const double a = s * p.q_lo[k], b = s * p.q_hi[k];
    r.lo += std::min(a, b);
    r.hi += std::max(a, b);
  }
  return r;
}

// Device rows shared by both branches: x = [q+ (K), q- (K), ...] in units of `qu`.
void device_rows(const CvvcProblem& p, double qu, Eigen::Index ncols, std::vector<Eigen::VectorXd>& rows,
                 std::vector<double>& rhs) {
  const auto nk = static_cast<Eigen::Index>(p.plant_count());
  for (Eigen::Index k = 0; k < nk; ++k) {
    const auto ks = static_cast<std::size_t>(k);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(ncols);
    r(k) = 1.0;
    r(nk + k) = -1.0;
    rows.push_back(r);
    rhs.push_back(p.q_hi[ks] / qu);
    rows.push_back(-r);
    rhs.push_back(-p.q_lo[ks] / qu);
    Eigen::VectorXd up = Eigen::VectorXd::Zero(ncols);
    up(k) = 1.0;
    rows.push_back(up);
    rhs.push_back(std::max(p.q_hi[ks], 0.0) / qu);
    Eigen::VectorXd dn = Eigen::VectorXd::Zero(ncols);
    dn(nk + k) = 1.0;
    rows.push_back(dn);
    rhs.push_back(std::max(-p.q_lo[ks], 0.0) / qu);
  }
}

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& rows, Eigen::Index ncols) {
  Eigen::MatrixXd a(static_cast<Eigen::Index>(rows.size()), ncols);
  for (std::size_t i = 0; i < rows.size(); ++i) a.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return a;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Fill setpoints, netted q+/q-, predictions, slacks and costs from absolute setpoints.
ControlPlan finish_plan(const CvvcProblem& p, const std::vector<int>& delta, std::vector<double> q,
                        const std::vector<double>& base, PlanBranch branch) {
  ControlPlan plan;
  plan.branch = branch;
  plan.tap_delta = delta;
  for (std::size_t k = 0; k < q.size(); ++k) q[k] = std::clamp(q[k], p.q_lo[k], p.q_hi[k]);
  plan.q_setpoint = q;
  for (double v : q) {
    plan.q_plus.push_back(std::max(v, 0.0));
    plan.q_minus.push_back(std::max(-v, 0.0));
  }
  plan.predicted_v.resize(p.node_count());
  plan.slack.assign(p.node_count(), 0.0);
  double viol2 = 0.0;
  for (std::size_t i = 0; i < p.node_count(); ++i) {
    double v = base[i];
    for (std::size_t k = 0; k < q.size(); ++k) v += p.dq(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * q[k];
    plan.predicted_v[i] = v;
    if (branch == PlanBranch::Relaxed) {
      plan.slack[i] = std::max({0.0, p.v_lo - v, v - p.v_hi});
      viol2 += plan.slack[i] * plan.slack[i];
    }
  }
  int changes = 0;
  for (int d : delta) changes += std::abs(d);
  plan.tap_cost = p.costs.c_r * changes;
  for (double v : q) plan.q_cost += p.costs.c_k * std::abs(v);
  plan.objective = branch == PlanBranch::Strict
                       ? plan.tap_cost + plan.q_cost
                       : p.costs.alpha * (plan.tap_cost + plan.q_cost) + p.costs.beta * viol2;
  return plan;
}

std::optional<std::vector<double>> strict_lp(const CvvcProblem& p, const std::vector<double>& base) {
  const auto nk = static_cast<Eigen::Index>(p.plant_count());
  if (nk == 0) {
    for (std::size_t i = 0; i < p.node_count(); ++i)
      if (base[i] < p.v_lo || base[i] > p.v_hi) return std::nullopt;
    return std::vector<double>{};
  }
  const double qu = q_unit(p);
  const Eigen::Index ncols = 2 * nk;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  device_rows(p, qu, ncols, rows, rhs);
  for (std::size_t i = 0; i < p.node_count(); ++i) {
    const auto range = reachable(p, i, base[i]);
    if (range.hi < p.v_lo || range.lo > p.v_hi) return std::nullopt;
    if (range.lo >= p.v_lo && range.hi <= p.v_hi) continue;
    Eigen::VectorXd r = Eigen::VectorXd::Zero(ncols);
    for (Eigen::Index k = 0; k < nk; ++k) {
      const double s = kVoltScale * qu * p.dq(static_cast<Eigen::Index>(i), k);
      r(k) = s;
      r(nk + k) = -s;
    }
    if (range.hi > p.v_hi) {
      rows.push_back(r);
      rhs.push_back(kVoltScale * (p.v_hi - base[i]));
    }
    if (range.lo < p.v_lo) {
      rows.push_back(-r);
      rhs.push_back(kVoltScale * (base[i] - p.v_lo));
    }
  }
  Eigen::VectorXd c = Eigen::VectorXd::Constant(ncols, p.costs.c_k * qu);
  const auto res = tableau::solve_lp(c, stack(rows, ncols), to_vector(rhs));
  if (res.status == tableau::Status::Infeasible) return std::nullopt;
  if (res.status != tableau::Status::Optimal)
    throw Error(std::string("CVVC linear program: ") + tableau::to_string(res.status));
  std::vector<double> q(p.plant_count());
  for (Eigen::Index k = 0; k < nk; ++k) q[static_cast<std::size_t>(k)] = qu * (res.x(k) - res.x(nk + k));
  return q;
}

std::vector<double> relaxed_qp(const CvvcProblem& p, const std::vector<double>& base) {
  const auto nk = static_cast<Eigen::Index>(p.plant_count());
  if (nk == 0) return {};
  const double qu = q_unit(p);
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < p.node_count(); ++i) {
    const auto range = reachable(p, i, base[i]);
    if (!(range.lo >= p.v_lo && range.hi <= p.v_hi)) active.push_back(i);
  }
  const auto ns = static_cast<Eigen::Index>(active.size());
  const Eigen::Index ncols = 2 * nk + ns;
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  device_rows(p, qu, ncols, rows, rhs);
  for (Eigen::Index j = 0; j < ns; ++j) {
    const std::size_t i = active[static_cast<std::size_t>(j)];
    Eigen::VectorXd r = Eigen::VectorXd::Zero(ncols);
    for (Eigen::Index k = 0; k < nk; ++k) {
      const double s = kVoltScale * qu * p.dq(static_cast<Eigen::Index>(i), k);
      r(k) = s;
      r(nk + k) = -s;
    }
    Eigen::VectorXd up = r, dn = -r;
    up(2 * nk + j) = -1.0;
    dn(2 * nk + j) = -1.0;
    rows.push_back(up);
    rhs.push_back(kVoltScale * (p.v_hi - base[i]));
    rows.push_back(dn);
    rhs.push_back(kVoltScale * (base[i] - p.v_lo));
  }
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(ncols, ncols);
  for (Eigen::Index j = 0; j < ns; ++j) h(2 * nk + j, 2 * nk + j) = 2.0 * p.costs.beta / (kVoltScale * kVoltScale);
  Eigen::VectorXd lin = Eigen::VectorXd::Zero(ncols);
  lin.head(2 * nk).setConstant(p.costs.alpha * p.costs.c_k * qu);

  const auto res = tableau::solve_qp(h, lin, stack(rows, ncols), to_vector(rhs));
  if (res.status != tableau::Status::Optimal)
    throw Error(std::string("CVVC quadratic program: ") + tableau::to_string(res.status));
  std::vector<double> q(p.plant_count());
  for (Eigen::Index k = 0; k < nk; ++k) q[static_cast<std::size_t>(k)] = qu * (res.x(k) - res.x(nk + k));
  return q;
}

std::optional<ControlPlan> search(const CvvcProblem& p, PlanBranch branch) {
  p.validate();
  const std::size_t count = tap_combination_count(p);
  if (count > kMaxCombinations)
    throw DomainError("tap window spans " + std::to_string(count) + " combinations (limit " +
                      std::to_string(kMaxCombinations) + ")");
  const auto combos = enumerate_taps(p);
  const double weight = branch == PlanBranch::Strict ? 1.0 : p.costs.alpha;

  std::optional<ControlPlan> best;
  std::size_t solved = 0;
  for (const auto& combo : combos) {
    const double tap_cost = weight * p.costs.c_r * combo.changes;
    if (best && tap_cost >= best->objective - kTieTol * std::max(1.0, std::abs(best->objective))) break;
    const auto base = tap_base(p, combo.delta);
    std::optional<std::vector<double>> q;
    if (branch == PlanBranch::Strict)
      q = strict_lp(p, base);
    else
      q = relaxed_qp(p, base);
    if (!q) continue;
    ++solved;
    auto plan = finish_plan(p, combo.delta, std::move(*q), base, branch);
    if (!best || plan.objective < best->objective - kTieTol * std::max(1.0, std::abs(best->objective)))
      best = std::move(plan);
  }
  if (best) {
    best->combinations = count;
    best->solved = solved;
  }
  return best;
}

}  // namespace

const char* to_string(PlanBranch b) { return b == PlanBranch::Strict ? "strict" : "relaxed"; }

void CvvcProblem::validate() const {
  const std::size_t n = v0.size(), k = q_now.size(), r = tap_now.size();
  auto fail = [](const std::string& m) { throw ValidationError("CVVC problem: " + m); };
  if (static_cast<std::size_t>(dq.rows()) != n || static_cast<std::size_t>(dq.cols()) != k)
    fail("dq must be nodes x plants");
  if (static_cast<std::size_t>(dvr.rows()) != n || static_cast<std::size_t>(dvr.cols()) != r)
    fail("dvr must be nodes x regulators");
  if (q_lo.size() != k || q_hi.size() != k) fail("plant bound vectors differ in length");
  if (tap_lo.size() != r || tap_hi.size() != r) fail("tap bound vectors differ in length");
  if (!plant_ids.empty() && plant_ids.size() != k) fail("plant id count mismatch");
  if (!regulator_ids.empty() && regulator_ids.size() != r) fail("regulator id count mismatch");
  if (!nodes.empty() && nodes.size() != n) fail("node label count mismatch");
  if (!(v_lo < v_hi)) fail("voltage limits must satisfy v_lo < v_hi");
  if (max_tap_change < 0) fail("max_tap_change must be >= 0");
  if (!dq.allFinite() || !dvr.allFinite()) fail("sensitivities must be finite");
  for (double v : v0)
    if (!std::isfinite(v)) fail("voltages must be finite");
  for (std::size_t i = 0; i < k; ++i) {
    if (!(q_lo[i] <= q_hi[i])) fail("plant " + std::to_string(i) + ": q_lo > q_hi");
    if (!std::isfinite(q_now[i]) || !std::isfinite(q_lo[i]) || !std::isfinite(q_hi[i]))
      fail("plant " + std::to_string(i) + ": non-finite reactive power");
  }
  for (std::size_t i = 0; i < r; ++i)
    if (!(tap_lo[i] <= tap_now[i] && tap_now[i] <= tap_hi[i]))
      fail("regulator " + std::to_string(i) + ": tap outside its range");
  if (costs.c_r < 0 || costs.c_k < 0 || costs.alpha < 0 || !(costs.beta > 0))
    fail("costs must be non-negative and beta positive");
}

std::size_t tap_combination_count(const CvvcProblem& p) {
  std::size_t count = 1;
  for (std::size_t r = 0; r < p.regulator_count(); ++r) {
    const int lo = std::max(-p.max_tap_change, p.tap_lo[r] - p.tap_now[r]);
    const int hi = std::min(p.max_tap_change, p.tap_hi[r] - p.tap_now[r]);
    count *= static_cast<std::size_t>(std::max(0, hi - lo + 1));
    if (count > kMaxCombinations) return count;
  }
  return count;
}

std::optional<ControlPlan> solve_cvvc(const CvvcProblem& problem) {
  return search(problem, PlanBranch::Strict);
}

ControlPlan solve_cvvc_relaxed(const CvvcProblem& problem) {
  auto plan = search(problem, PlanBranch::Relaxed);
  if (!plan) throw Error("relaxed CVVC produced no plan");
  return *plan;
}

ControlPlan optimize(const CvvcProblem& problem) {
  if (auto plan = solve_cvvc(problem)) return *plan;
  return solve_cvvc_relaxed(problem);
}

// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXd matrix_from(const json& j, std::size_t rows, std::size_t cols, const char* name) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if (cols == 0) return m;
  if (!j.is_array() || j.size() != rows) throw ParseError(std::string(name) + ": expected one row per node");
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw ParseError(std::string(name) + ": row " + std::to_string(i) + " has wrong length");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = j[i][c].get<double>();
  }
  return m;
}

json matrix_to(const Eigen::MatrixXd& m) {
  json j = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(i, c));
    j.push_back(row);
  }
  return j;
}

}  // namespace

CvvcProblem parse_problem(std::string_view text) {
  CvvcProblem p;
  try {
    const json j = json::parse(text);
    p.v0 = j.at("v0").get<std::vector<double>>();
    if (j.contains("nodes")) p.nodes = j.at("nodes").get<std::vector<std::string>>();
    for (const auto& pl : j.value("plants", json::array())) {
      p.plant_ids.push_back(pl.value("id", "pv" + std::to_string(p.plant_ids.size() + 1)));
      p.q_now.push_back(pl.value("q_now", 0.0));
      p.q_lo.push_back(pl.at("q_lo").get<double>());
      p.q_hi.push_back(pl.at("q_hi").get<double>());
    }
    for (const auto& rg : j.value("regulators", json::array())) {
      p.regulator_ids.push_back(rg.value("id", "vr" + std::to_string(p.regulator_ids.size() + 1)));
      p.tap_now.push_back(rg.value("tap", 0));
      p.tap_lo.push_back(rg.value("tap_lo", -16));
      p.tap_hi.push_back(rg.value("tap_hi", 16));
    }
    p.dq = matrix_from(j.value("dq", json::array()), p.v0.size(), p.q_now.size(), "dq");
    p.dvr = matrix_from(j.value("dvr", json::array()), p.v0.size(), p.tap_now.size(), "dvr");
    p.max_tap_change = j.value("max_tap_change", p.max_tap_change);
    if (j.contains("v_limits")) {
      const auto lim = j.at("v_limits").get<std::vector<double>>();
      if (lim.size() != 2) throw ParseError("v_limits must have two entries");
      p.v_lo = lim[0];
      p.v_hi = lim[1];
    }
    if (j.contains("costs")) {
      const auto& c = j.at("costs");
      p.costs.c_r = c.value("c_r", p.costs.c_r);
      p.costs.c_k = c.value("c_k", p.costs.c_k);
      p.costs.alpha = c.value("alpha", p.costs.alpha);
      p.costs.beta = c.value("beta", p.costs.beta);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("CVVC problem: ") + e.what());
  }
  p.validate();
  return p;
}

std::string problem_to_json(const CvvcProblem& p) {
  json j;
  if (!p.nodes.empty()) j["nodes"] = p.nodes;
  j["v0"] = p.v0;
  j["dq"] = matrix_to(p.dq);
  j["dvr"] = matrix_to(p.dvr);
  json plants = json::array();
  for (std::size_t k = 0; k < p.plant_count(); ++k)
    plants.push_back({{"id", p.plant_ids.empty() ? "pv" + std::to_string(k + 1) : p.plant_ids[k]},
                      {"q_now", p.q_now[k]},
                      {"q_lo", p.q_lo[k]},
                      {"q_hi", p.q_hi[k]}});
  j["plants"] = plants;
  json regs = json::array();
  for (std::size_t r = 0; r < p.regulator_count(); ++r)
    regs.push_back({{"id", p.regulator_ids.empty() ? "vr" + std::to_string(r + 1) : p.regulator_ids[r]},
                    {"tap", p.tap_now[r]},
                    {"tap_lo", p.tap_lo[r]},
                    {"tap_hi", p.tap_hi[r]}});
  j["regulators"] = regs;
  j["max_tap_change"] = p.max_tap_change;
  j["v_limits"] = {p.v_lo, p.v_hi};
  j["costs"] = {{"c_r", p.costs.c_r}, {"c_k", p.costs.c_k}, {"alpha", p.costs.alpha}, {"beta", p.costs.beta}};
  return j.dump(2);
}

std::string plan_to_json(const CvvcProblem& p, const ControlPlan& plan) {
  json j;
  j["branch"] = to_string(plan.branch);
  j["objective"] = plan.objective;
  j["tap_cost"] = plan.tap_cost;
  j["q_cost"] = plan.q_cost;
  json plants = json::array();
  for (std::size_t k = 0; k < plan.q_setpoint.size(); ++k)
    plants.push_back({{"id", p.plant_ids.empty() ? "pv" + std::to_string(k + 1) : p.plant_ids[k]},
                      {"q_setpoint", plan.q_setpoint[k]},
                      {"q_plus", plan.q_plus[k]},
                      {"q_minus", plan.q_minus[k]}});
  j["plants"] = plants;
  json regs = json::array();
  for (std::size_t r = 0; r < plan.tap_delta.size(); ++r)
    regs.push_back({{"id", p.regulator_ids.empty() ? "vr" + std::to_string(r + 1) : p.regulator_ids[r]},
                    {"tap_delta", plan.tap_delta[r]},
                    {"tap", p.tap_now[r] + plan.tap_delta[r]}});
  j["regulators"] = regs;
  json nodes = json::array();
  for (std::size_t i = 0; i < plan.predicted_v.size(); ++i)
    nodes.push_back({{"node", p.nodes.empty() ? std::to_string(i) : p.nodes[i]},
                     {"v", plan.predicted_v[i]},
                     {"slack", plan.slack[i]}});
  j["nodes"] = nodes;
  j["combinations"] = plan.combinations;
  j["solved"] = plan.solved;
  return j.dump(2);
}

}  // namespace voltvar
