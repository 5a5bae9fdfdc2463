#include "voltvar/estimator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "voltvar/csv.hpp"
#include "voltvar/error.hpp"

namespace voltvar {

using json = nlohmann::json;

namespace {

constexpr int kModelSchema = 1;

const char* qs_mode_name(QsMode m) { return m == QsMode::FeederTotal ? "feeder_total" : "node_phase"; }

QsMode parse_qs_mode(std::string_view s) {
  if (s == "feeder_total") return QsMode::FeederTotal;
  if (s == "node_phase") return QsMode::NodePhase;
  throw ParseError("unknown qs_mode '" + std::string(s) + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Regression

double VoltageRegressionModel::predict(std::size_t node, std::span<const double> m) const {
  if (m.size() != channels.size())
    throw ValidationError("measurement vector has " + std::to_string(m.size()) + " entries, expected " +
                          std::to_string(channels.size()));
  double v = coef(static_cast<Eigen::Index>(node), 0);
  for (std::size_t j = 0; j < m.size(); ++j) v += coef(static_cast<Eigen::Index>(node), static_cast<Eigen::Index>(j + 1)) * m[j];
  return v;
}

Eigen::MatrixXd least_squares_with_intercept(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                                             const std::vector<std::string>& names) {
  const Eigen::Index n = x.rows(), p = x.cols() + 1;
  if (y.rows() != n) throw ValidationError("least squares: row count mismatch");
  if (n < p)
    throw RankDeficientError("least squares: " + std::to_string(n) + " rows for " + std::to_string(p) +
                             " coefficients");

  Eigen::MatrixXd a(n, p);
  a.col(0).setOnes();
  a.rightCols(p - 1) = x;
  Eigen::VectorXd scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double s = a.col(j).cwiseAbs().maxCoeff();
    scale(j) = s > 0.0 ? s : 1.0;
    a.col(j) /= scale(j);
  }

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < p; ++k) {
      const Eigen::Index j = perm(k);
      if (!cols.empty()) cols += ", ";
      cols += j == 0 ? std::string("intercept") : names.at(static_cast<std::size_t>(j - 1));
    }
    throw RankDeficientError("regression design is rank deficient (rank " + std::to_string(qr.rank()) +
                             " of " + std::to_string(p) + "); collinear: " + cols);
  }
  Eigen::MatrixXd beta = qr.solve(y);
  for (Eigen::Index j = 0; j < p; ++j) beta.row(j) /= scale(j);
  return beta;
}

VoltageRegressionModel fit_voltage_regression(const TrainingDataset& ds,
                                              const CriticalNodeSet& critical) {
  if (critical.empty()) throw ValidationError("fit_voltage_regression: empty critical set");
  std::vector<const TrainingRow*> rows;
  for (const auto& r : ds.rows)
    if (r.kind == RowKind::Sweep) rows.push_back(&r);

  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto p = static_cast<Eigen::Index>(ds.channels.size());
  const auto k = static_cast<Eigen::Index>(critical.size());
  Eigen::MatrixXd x(n, p), y(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = *rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = r.measurements[static_cast<std::size_t>(j)];
    for (Eigen::Index c = 0; c < k; ++c) y(i, c) = r.vmag[critical[static_cast<std::size_t>(c)].index];
  }

  VoltageRegressionModel m;
  for (const auto& c : critical) m.nodes.push_back(c.node);
  m.channels = ds.channels;
  m.baseline_taps = ds.baseline_taps;
  m.coef = least_squares_with_intercept(x, y, ds.channels).transpose();

  Eigen::MatrixXd a(n, p + 1);
  a.col(0).setOnes();
  a.rightCols(p) = x;
  const Eigen::MatrixXd resid = y - a * m.coef.transpose();
  for (Eigen::Index c = 0; c < k; ++c)
    m.residual_rms.push_back(std::sqrt(resid.col(c).squaredNorm() / static_cast<double>(n)));
  return m;
}

// ---------------------------------------------------------------------------
// Power-law curves

namespace {

struct LawFit {
  double a = 0.0, b = 0.0;
};

double law_cost(std::span<const double> x, std::span<const double> y, double a, double b) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double r = y[j] - a * std::pow(x[j], -b);
    s += r * r;
  }
  return s;
}

double mean_of(std::span<const double> y) {
  return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
}

// y > 0 everywhere; x > 0.
LawFit fit_positive(std::span<const double> x, std::span<const double> y, const PowerLawOptions& opt) {
  const std::size_t n = x.size();
  LawFit f;
  // ln y = ln a - b ln x
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const double lx = std::log(x[j]), ly = std::log(y[j]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double dn = static_cast<double>(n);
  const double var = sxx - sx * sx / dn;
  if (var <= 1e-14 * std::max(1.0, sxx)) return {mean_of(y), 0.0};
  const double slope = (sxy - sx * sy / dn) / var;
  f.b = -slope;
  f.a = std::exp((sy - slope * sx) / dn);

  double cost = law_cost(x, y, f.a, f.b);
  for (int it = 0; it < opt.max_iterations; ++it) {
    double jaa = 0, jab = 0, jbb = 0, ga = 0, gb = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double xb = std::pow(x[j], -f.b);
      const double da = xb;
      const double db = -f.a * std::log(x[j]) * xb;
      const double r = y[j] - f.a * xb;
      jaa += da * da;
      jab += da * db;
      jbb += db * db;
      ga += da * r;
      gb += db * r;
    }
    const double det = jaa * jbb - jab * jab;
    if (!(std::abs(det) > 1e-300)) break;
    double step_a = (jbb * ga - jab * gb) / det;
    double step_b = (jaa * gb - jab * ga) / det;
    double t = 1.0;
    double na = f.a + step_a, nb = f.b + step_b, ncost = law_cost(x, y, na, nb);
    for (int h = 0; h < 40 && !(ncost <= cost); ++h) {
      t *= 0.5;
      na = f.a + t * step_a;
      nb = f.b + t * step_b;
      ncost = law_cost(x, y, na, nb);
    }
    if (!(ncost <= cost)) break;
    f.a = na;
    f.b = nb;
    cost = ncost;
    if (std::abs(t * step_a) <= opt.tolerance * (1.0 + std::abs(f.a)) &&
        std::abs(t * step_b) <= opt.tolerance * (1.0 + std::abs(f.b)))
      break;
  }
  if (f.b < 0.0 || !std::isfinite(f.a) || !std::isfinite(f.b)) return {mean_of(y), 0.0};
  return f;
}

}  // namespace

SensitivityCurve fit_power_law(std::span<const double> qs, std::span<const double> delta, double c,
                               const PowerLawOptions& options) {
  if (qs.size() != delta.size()) throw ValidationError("fit_power_law: size mismatch");
  if (qs.size() < 2) throw DomainError("fit_power_law: need at least 2 points, got " + std::to_string(qs.size()));

  SensitivityCurve curve;
  curve.c = c;
  curve.points = qs.size();
  curve.qs_min = *std::min_element(qs.begin(), qs.end());
  curve.qs_max = *std::max_element(qs.begin(), qs.end());

  std::vector<double> x(qs.size());
  for (std::size_t j = 0; j < qs.size(); ++j) {
    x[j] = c + qs[j];
    if (!(x[j] > 0.0))
      throw DomainError("fit_power_law: c + Q_s = " + csv::fmt(x[j]) + " is not positive (Q_s " +
                        csv::fmt(qs[j]) + " kvar, c " + csv::fmt(c) + ")");
  }

  double scale = 0.0;
  bool pos = false, neg = false;
  for (double d : delta) {
    if (!std::isfinite(d)) throw DomainError("fit_power_law: non-finite sample");
    scale = std::max(scale, std::abs(d));
    pos |= d > 0.0;
    neg |= d < 0.0;
  }
  if (scale < options.negligible_below) {
    curve.negligible = true;
    return curve;
  }

  std::vector<double> y(delta.size());
  const double sign = neg && !pos ? -1.0 : 1.0;
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = sign * delta[j] / scale;

  LawFit f;
  if (pos && neg) {
    f = {mean_of(y), 0.0};
  } else {
    f = fit_positive(x, y, options);
  }
  curve.a = sign * f.a * scale;
  curve.b = f.b;

  double ss = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double r = delta[j] - curve.a * std::pow(x[j], -curve.b);
    ss += r * r;
  }
  curve.residual_rms = std::sqrt(ss / static_cast<double>(x.size()));
  return curve;
}

SensitivityEstimate estimate_sensitivity(const SensitivityCurve& curve, double qs) {
  SensitivityEstimate e;
  if (curve.negligible) return e;
  const double x = curve.c + qs;
  if (!(x > 0.0))
    throw DomainError("estimate_sensitivity: c + Q_s = " + csv::fmt(x) + " is not positive");
  e.value = curve.a * std::pow(x, -curve.b);
  e.extrapolated = qs < curve.qs_min || qs > curve.qs_max;
  return e;
}

SensitivityCurveSet fit_sensitivity_curves(const TrainingDataset& ds, const CriticalNodeSet& critical,
                                           const CurveOptions& options) {
  SensitivityCurveSet set;
  for (const auto& c : critical) set.nodes.push_back(c.node);
  set.plants = ds.plant_ids;
  set.qs_mode = options.qs_mode;

  std::array<std::optional<std::size_t>, 3> head_q_col{};
  if (options.qs_mode == QsMode::NodePhase)
    for (int p = 0; p < 3; ++p) {
      const std::string name = std::string("head_q_") + phase_letter(static_cast<Phase>(p));
      auto it = std::find(ds.channels.begin(), ds.channels.end(), name);
      if (it != ds.channels.end()) head_q_col[static_cast<std::size_t>(p)] = static_cast<std::size_t>(it - ds.channels.begin());
    }

  // Sweep rows grouped by (scenario, plant), ordered by Q.
  std::map<std::pair<std::size_t, int>, std::vector<const TrainingRow*>> sweeps;
  for (const auto& r : ds.rows)
    if (r.kind == RowKind::Sweep) sweeps[{r.scenario, r.plant}].push_back(&r);
  for (auto& [key, rows] : sweeps)
    std::stable_sort(rows.begin(), rows.end(),
                     [](const TrainingRow* a, const TrainingRow* b) { return a->q_kvar < b->q_kvar; });

  const std::size_t nk = ds.plant_ids.size();
  set.curves.resize(critical.size() * nk);
  std::vector<double> qs, dv;
  for (std::size_t k = 0; k < nk; ++k) {
    for (std::size_t i = 0; i < critical.size(); ++i) {
      qs.clear();
      dv.clear();
      const std::size_t node = critical[i].index;
      std::optional<std::size_t> qcol;
      if (options.qs_mode == QsMode::NodePhase) {
        qcol = head_q_col[static_cast<std::size_t>(critical[i].node.phase)];
        if (!qcol)
          throw ValidationError("no head reactive power channel for phase of node " + critical[i].node.str());
      }
      for (const auto& [key, rows] : sweeps) {
        if (key.second != static_cast<int>(k)) continue;
        for (std::size_t j = 1; j < rows.size(); ++j) {
          const double dq = rows[j]->q_kvar - rows[j - 1]->q_kvar;
          if (!(dq > 0.0)) continue;
          dv.push_back((rows[j]->vmag[node] - rows[j - 1]->vmag[node]) / dq);
          qs.push_back(qcol ? rows[j]->measurements[*qcol] : rows[j]->head_q_kvar);
        }
      }
      if (qs.size() < 2)
        throw DomainError("plant '" + ds.plant_ids[k] + "' has " + std::to_string(qs.size()) +
                          " sensitivity samples; at least 2 are needed");
      try {
        set.curves[i * nk + k] = fit_power_law(qs, dv, options.offset_c, options.fit);
      } catch (const DomainError& e) {
        throw DomainError("curve (" + critical[i].node.str() + ", " + ds.plant_ids[k] + "): " + e.what());
      }
    }
  }
  return set;
}

// ---------------------------------------------------------------------------

TapSensitivityTable tap_sensitivity_table(const TrainingDataset& ds, const CriticalNodeSet& critical) {
  TapSensitivityTable t;
  for (const auto& c : critical) t.nodes.push_back(c.node);
  t.units = ds.unit_ids;
  t.delta.resize(static_cast<Eigen::Index>(critical.size()), static_cast<Eigen::Index>(ds.unit_ids.size()));
  if (ds.tap_delta.size() != ds.unit_ids.size())
    throw ValidationError("dataset carries no tap perturbation for every regulator unit");
  for (std::size_t i = 0; i < critical.size(); ++i) {
    for (std::size_t u = 0; u < ds.unit_ids.size(); ++u)
      t.delta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u)) = ds.tap_delta[u][critical[i].index];
    t.base_vmag.push_back(ds.tap_base_vmag.empty() ? 0.0 : ds.tap_base_vmag[critical[i].index]);
  }
  return t;
}

// ---------------------------------------------------------------------------

namespace {

void link_topology(EstimatorModel& est, const FeederModel& model) {
  est.upstream.clear();
  for (auto& c : est.critical) {
    c.index = model.node_index(c.node);
    est.upstream.push_back(model.upstream_regulator(c.index));
  }
  est.secondary_position.clear();
  for (std::size_t r = 0; r < model.regulators().size(); ++r) {
    const std::size_t sec = model.secondary_node(r);
    auto it = std::find_if(est.critical.begin(), est.critical.end(),
                           [&](const CriticalNode& c) { return c.index == sec; });
    if (it == est.critical.end())
      throw ValidationError("regulator '" + model.regulators()[r].id +
                            "' secondary node is not in the critical set");
    est.secondary_position.push_back(static_cast<std::size_t>(it - est.critical.begin()));
  }
}

}  // namespace

EstimatorModel fit_estimator(const TrainingDataset& ds, const FeederModel& model,
                             const CriticalNodeSet& critical, const CurveOptions& options) {
  EstimatorModel est;
  est.critical = critical;
  est.offset_c = options.offset_c;
  est.regression = fit_voltage_regression(ds, critical);
  est.curves = fit_sensitivity_curves(ds, critical, options);
  est.taps = tap_sensitivity_table(ds, critical);
  link_topology(est, model);
  return est;
}

std::vector<double> estimate_voltages(const VoltageRegressionModel& regression,
                                      const TapSensitivityTable& taps, std::span<const double> m,
                                      std::span<const int> unit_taps) {
  if (unit_taps.size() != regression.baseline_taps.size())
    throw ValidationError("tap vector has " + std::to_string(unit_taps.size()) + " entries, expected " +
                          std::to_string(regression.baseline_taps.size()));
  std::vector<double> v(regression.nodes.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double x = regression.predict(i, m);
    for (std::size_t u = 0; u < unit_taps.size(); ++u)
      x += taps.delta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u)) *
           (unit_taps[u] - regression.baseline_taps[u]);
    v[i] = x;
  }
  return v;
}

std::vector<double> estimate_voltages(const EstimatorModel& est, std::span<const double> m,
                                      std::span<const int> unit_taps) {
  return estimate_voltages(est.regression, est.taps, m, unit_taps);
}

std::vector<double> estimate_voltages_corrected(const EstimatorModel& est, std::span<const double> m,
                                                std::span<const int> unit_taps,
                                                std::span<const double> v_reg_measured,
                                                CorrectionContext* context) {
  if (v_reg_measured.size() != est.secondary_position.size())
    throw ValidationError("expected " + std::to_string(est.secondary_position.size()) +
                          " regulator voltages, got " + std::to_string(v_reg_measured.size()));
  auto v = estimate_voltages(est, m, unit_taps);
  std::vector<double> err(v_reg_measured.size());
  for (std::size_t r = 0; r < err.size(); ++r) err[r] = v_reg_measured[r] - v[est.secondary_position[r]];
  if (context) {
    context->measured.assign(v_reg_measured.begin(), v_reg_measured.end());
    context->estimated.clear();
    for (std::size_t r = 0; r < err.size(); ++r) context->estimated.push_back(v[est.secondary_position[r]]);
    context->error = err;
    context->upstream = est.upstream;
  }
  for (std::size_t i = 0; i < v.size(); ++i)
    if (est.upstream[i]) v[i] += err[*est.upstream[i]];
  return v;
}

Eigen::MatrixXd estimate_sensitivities(const EstimatorModel& est, const Measurements& m) {
  const std::size_t n = est.critical.size(), nk = est.curves.plants.size();
  Eigen::MatrixXd s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nk));
  const double total = m.head_q_total();
  for (std::size_t i = 0; i < n; ++i) {
    double qs = total;
    if (est.curves.qs_mode == QsMode::NodePhase) {
      auto it = std::find(m.head_phases.begin(), m.head_phases.end(), est.critical[i].node.phase);
      if (it == m.head_phases.end())
        throw ValidationError("no head measurement on the phase of " + est.critical[i].node.str());
      qs = m.head_q_kvar[static_cast<std::size_t>(it - m.head_phases.begin())];
    }
    for (std::size_t k = 0; k < nk; ++k)
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = estimate_sensitivity(est.curves.at(i, k), qs).value;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Persistence

void save_estimator(const EstimatorModel& est, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json man;
  man["schema_version"] = kModelSchema;
  man["channels"] = est.regression.channels;
  man["plants"] = est.curves.plants;
  man["regulator_units"] = est.taps.units;
  man["baseline_taps"] = est.regression.baseline_taps;
  man["offset_c_kvar"] = est.offset_c;
  man["qs_mode"] = qs_mode_name(est.curves.qs_mode);
  json crit = json::array();
  for (const auto& c : est.critical) crit.push_back({{"node", c.node.str()}, {"tag", to_string(c.tag)}});
  man["critical_nodes"] = crit;
  {
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error("cannot write manifest in '" + dir.string() + "'");
    out << man.dump(1) << '\n';
  }
  {
    std::ofstream out(dir / "voltage_regression.csv");
    out << "node,intercept";
    for (const auto& c : est.regression.channels) out << ',' << c;
    out << ",residual_rms\n";
    for (std::size_t i = 0; i < est.critical.size(); ++i) {
      out << est.critical[i].node.str();
      for (Eigen::Index j = 0; j < est.regression.coef.cols(); ++j)
        out << ',' << csv::fmt(est.regression.coef(static_cast<Eigen::Index>(i), j));
      out << ',' << csv::fmt(est.regression.residual_rms[i]) << '\n';
    }
  }
  {
    std::ofstream out(dir / "sensitivity_curves.csv");
    out << "node,plant,a,b,c,qs_min,qs_max,points,residual_rms,negligible\n";
    for (std::size_t i = 0; i < est.critical.size(); ++i)
      for (std::size_t k = 0; k < est.curves.plants.size(); ++k) {
        const auto& cv = est.curves.at(i, k);
        out << est.critical[i].node.str() << ',' << est.curves.plants[k] << ',' << csv::fmt(cv.a) << ','
            << csv::fmt(cv.b) << ',' << csv::fmt(cv.c) << ',' << csv::fmt(cv.qs_min) << ','
            << csv::fmt(cv.qs_max) << ',' << cv.points << ',' << csv::fmt(cv.residual_rms) << ','
            << (cv.negligible ? 1 : 0) << '\n';
      }
  }
  {
    std::ofstream out(dir / "tap_sensitivity.csv");
    out << "node,base_vmag";
    for (const auto& u : est.taps.units) out << ',' << u;
    out << '\n';
    for (std::size_t i = 0; i < est.critical.size(); ++i) {
      out << est.critical[i].node.str() << ',' << csv::fmt(est.taps.base_vmag[i]);
      for (Eigen::Index u = 0; u < est.taps.delta.cols(); ++u)
        out << ',' << csv::fmt(est.taps.delta(static_cast<Eigen::Index>(i), u));
      out << '\n';
    }
  }
}

EstimatorModel load_estimator(const std::filesystem::path& dir, const FeederModel& model) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ParseError("no manifest.json in model directory '" + dir.string() + "'");
  json man;
  try {
    man = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model manifest: ") + e.what());
  }
  const int schema = man.value("schema_version", 0);
  if (schema != kModelSchema)
    throw ParseError("model schema version " + std::to_string(schema) + " is not supported (expected " +
                     std::to_string(kModelSchema) + ")");

  EstimatorModel est;
  try {
    est.regression.channels = man.at("channels").get<std::vector<std::string>>();
    est.curves.plants = man.at("plants").get<std::vector<std::string>>();
    est.taps.units = man.at("regulator_units").get<std::vector<std::string>>();
    est.regression.baseline_taps = man.at("baseline_taps").get<std::vector<int>>();
    est.offset_c = man.at("offset_c_kvar").get<double>();
    est.curves.qs_mode = parse_qs_mode(man.at("qs_mode").get<std::string>());
    for (const auto& c : man.at("critical_nodes")) {
      CriticalNode cn;
      cn.node = NodeRef::parse(c.at("node").get<std::string>());
      cn.tag = parse_critical_tag(c.at("tag").get<std::string>());
      est.critical.push_back(cn);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("model manifest: ") + e.what());
  }
  if (est.regression.channels != measurement_channel_names(model))
    throw ValidationError("model channels do not match the feeder's measurement channels");
  if (est.curves.plants.size() != model.pv_plants().size() ||
      est.taps.units.size() != model.regulator_units().size())
    throw ValidationError("model plants/regulators do not match the feeder");

  const std::size_t n = est.critical.size();
  const std::size_t p = est.regression.channels.size();
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) {
    est.regression.nodes.push_back(est.critical[i].node);
    est.curves.nodes.push_back(est.critical[i].node);
    est.taps.nodes.push_back(est.critical[i].node);
    pos[est.critical[i].node.str()] = i;
  }
  auto row_of = [&](const std::string& node, const char* file) {
    auto it = pos.find(node);
    if (it == pos.end()) throw ParseError(std::string(file) + ": node '" + node + "' is not critical");
    return it->second;
  };

  {
    const auto t = csv::read(dir / "voltage_regression.csv");
    if (t.header.size() != p + 3) throw ParseError("voltage_regression.csv: unexpected column count");
    est.regression.coef = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p + 1));
    est.regression.residual_rms.assign(n, 0.0);
    if (t.rows.size() != n) throw ParseError("voltage_regression.csv: expected one row per critical node");
    for (const auto& r : t.rows) {
      const auto i = row_of(r[0], "voltage_regression.csv");
      for (std::size_t j = 0; j <= p; ++j)
        est.regression.coef(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            csv::to_double(r[j + 1], "voltage_regression.csv");
      est.regression.residual_rms[i] = csv::to_double(r[p + 2], "voltage_regression.csv");
    }
  }
  {
    const auto t = csv::read(dir / "sensitivity_curves.csv");
    const std::size_t nk = est.curves.plants.size();
    est.curves.curves.assign(n * nk, {});
    if (t.rows.size() != n * nk) throw ParseError("sensitivity_curves.csv: expected one row per (node, plant)");
    const auto ca = t.column("a"), cb = t.column("b"), cc = t.column("c"), cmin = t.column("qs_min"),
               cmax = t.column("qs_max"), cpts = t.column("points"), crms = t.column("residual_rms"),
               cneg = t.column("negligible"), cnode = t.column("node"), cplant = t.column("plant");
    for (const auto& r : t.rows) {
      const auto i = row_of(r[cnode], "sensitivity_curves.csv");
      auto kit = std::find(est.curves.plants.begin(), est.curves.plants.end(), r[cplant]);
      if (kit == est.curves.plants.end()) throw ParseError("sensitivity_curves.csv: unknown plant '" + r[cplant] + "'");
      auto& cv = est.curves.curves[i * nk + static_cast<std::size_t>(kit - est.curves.plants.begin())];
      cv.a = csv::to_double(r[ca], "sensitivity_curves.csv");
      cv.b = csv::to_double(r[cb], "sensitivity_curves.csv");
      cv.c = csv::to_double(r[cc], "sensitivity_curves.csv");
      cv.qs_min = csv::to_double(r[cmin], "sensitivity_curves.csv");
      cv.qs_max = csv::to_double(r[cmax], "sensitivity_curves.csv");
      cv.points = static_cast<std::size_t>(csv::to_int(r[cpts], "sensitivity_curves.csv"));
      cv.residual_rms = csv::to_double(r[crms], "sensitivity_curves.csv");
      cv.negligible = csv::to_int(r[cneg], "sensitivity_curves.csv") != 0;
    }
  }
  {
    const auto t = csv::read(dir / "tap_sensitivity.csv");
    const std::size_t nu = est.taps.units.size();
    if (t.header.size() != nu + 2) throw ParseError("tap_sensitivity.csv: unexpected column count");
    if (t.rows.size() != n) throw ParseError("tap_sensitivity.csv: expected one row per critical node");
    est.taps.delta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nu));
    est.taps.base_vmag.assign(n, 0.0);
    for (const auto& r : t.rows) {
      const auto i = row_of(r[0], "tap_sensitivity.csv");
      est.taps.base_vmag[i] = csv::to_double(r[1], "tap_sensitivity.csv");
      for (std::size_t u = 0; u < nu; ++u)
        est.taps.delta(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(u)) =
            csv::to_double(r[u + 2], "tap_sensitivity.csv");
    }
  }
  link_topology(est, model);
  return est;
}

}  // namespace voltvar
