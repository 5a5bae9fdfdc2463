#include "voltvar/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <unordered_map>

#include "voltvar/csv.hpp"
#include "voltvar/error.hpp"

namespace voltvar {

ProfileSet ProfileSet::slice(std::size_t begin, std::size_t end, std::size_t stride) const {
  if (begin > end || end > size() || stride == 0) throw DomainError("invalid profile slice");
  ProfileSet out;
  out.n_loads = n_loads;
  out.n_plants = n_plants;
  for (std::size_t t = begin; t < end; t += stride) {
    out.timestamps.push_back(timestamps[t]);
    out.load_kw.insert(out.load_kw.end(), load_kw.begin() + t * n_loads,
                       load_kw.begin() + (t + 1) * n_loads);
    out.load_kvar.insert(out.load_kvar.end(), load_kvar.begin() + t * n_loads,
                         load_kvar.begin() + (t + 1) * n_loads);
    out.pv_kw.insert(out.pv_kw.end(), pv_kw.begin() + t * n_plants,
                     pv_kw.begin() + (t + 1) * n_plants);
  }
  return out;
}

ProfileSet read_profiles(const std::filesystem::path& path, const FeederModel& model) {
  const auto table = csv::read(path);
  if (table.header.empty() || table.header[0] != "timestamp")
    throw ParseError("profile file '" + path.string() + "': first column must be 'timestamp'");

  const auto& loads = model.loads();
  const auto& plants = model.pv_plants();
  std::vector<int> kw_col(loads.size(), -1), kvar_col(loads.size(), -1), pv_col(plants.size(), -1);
  for (std::size_t c = 1; c < table.header.size(); ++c) {
    const auto& name = table.header[c];
    const auto colon = name.rfind(':');
    if (colon != std::string::npos && name.substr(colon + 1) == "kvar") {
      const auto id = name.substr(0, colon);
      kvar_col[model.load_index(id)] = static_cast<int>(c);
      continue;
    }
    bool found = false;
    for (std::size_t i = 0; i < loads.size() && !found; ++i)
      if (loads[i].id == name) kw_col[i] = static_cast<int>(c), found = true;
    for (std::size_t k = 0; k < plants.size() && !found; ++k)
      if (plants[k].id == name) pv_col[k] = static_cast<int>(c), found = true;
    if (!found)
      throw ParseError("profile file '" + path.string() + "': column '" + name +
                       "' matches no load or pv plant");
  }
  for (std::size_t i = 0; i < loads.size(); ++i)
    if (kw_col[i] < 0)
      throw ParseError("profile file '" + path.string() + "' lacks load '" + loads[i].id + "'");
  for (std::size_t k = 0; k < plants.size(); ++k)
    if (pv_col[k] < 0)
      throw ParseError("profile file '" + path.string() + "' lacks pv plant '" + plants[k].id +
                       "'");

  ProfileSet ps;
  ps.n_loads = loads.size();
  ps.n_plants = plants.size();
  ps.timestamps.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::string ctx = path.string() + " row " + std::to_string(r + 2);
    ps.timestamps.push_back(row[0]);
    for (std::size_t i = 0; i < loads.size(); ++i) {
      const double kw = csv::to_double(row[static_cast<std::size_t>(kw_col[i])], ctx);
      double kvar = 0.0;
      if (kvar_col[i] >= 0) {
        kvar = csv::to_double(row[static_cast<std::size_t>(kvar_col[i])], ctx);
      } else if (loads[i].kw != 0.0) {
        kvar = kw * loads[i].kvar / loads[i].kw;
      }
      ps.load_kw.push_back(kw);
      ps.load_kvar.push_back(kvar);
    }
    for (std::size_t k = 0; k < plants.size(); ++k) {
      const double p = csv::to_double(row[static_cast<std::size_t>(pv_col[k])], ctx);
      if (p < 0.0) throw ParseError(ctx + ": negative PV output");
      ps.pv_kw.push_back(p);
    }
  }
  return ps;
}

void write_profiles(const ProfileSet& ps, const FeederModel& model,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "timestamp";
  for (const auto& ld : model.loads()) out << ',' << ld.id;
  for (const auto& ld : model.loads()) out << ',' << ld.id << ":kvar";
  for (const auto& pv : model.pv_plants()) out << ',' << pv.id;
  out << '\n';
  for (std::size_t t = 0; t < ps.size(); ++t) {
    out << ps.timestamps[t];
    for (std::size_t i = 0; i < ps.n_loads; ++i) out << ',' << csv::fmt(ps.load_p(t, i));
    for (std::size_t i = 0; i < ps.n_loads; ++i) out << ',' << csv::fmt(ps.load_q(t, i));
    for (std::size_t k = 0; k < ps.n_plants; ++k) out << ',' << csv::fmt(ps.pv_p(t, k));
    out << '\n';
  }
}

// ---------------------------------------------------------------------------

Centers compute_centers(const Scenario& s, const FeederModel& model, DistanceMetric metric) {
  const auto& loads = model.loads();
  double wsum = 0.0, lsum = 0.0;
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const double d = model.electrical_distance(NodeRef{loads[i].bus, loads[i].phase}, metric);
    wsum += d * s.load_kw[i];
    lsum += s.load_kw[i];
  }
  if (!(lsum > 0.0))
    throw DomainError("scenario '" + s.timestamp + "' has zero total load; load center undefined");

  Centers c;
  c.load_center = wsum / lsum;

  double pw = 0.0, psum = 0.0;
  for (std::size_t k = 0; k < model.pv_plants().size(); ++k) {
    const auto nodes = model.plant_nodes(k);
    double d = 0.0;
    for (auto n : nodes) d += model.electrical_distance(n, metric);
    d /= static_cast<double>(nodes.size());
    pw += d * s.pv_kw[k];
    psum += s.pv_kw[k];
  }
  if (psum > 0.0) c.pv_center = pw / psum;
  return c;
}

Scenario scenario_at(const ProfileSet& ps, std::size_t t) {
  Scenario s;
  s.index = t;
  s.timestamp = ps.timestamps.at(t);
  s.load_kw.assign(ps.load_kw.begin() + t * ps.n_loads, ps.load_kw.begin() + (t + 1) * ps.n_loads);
  s.load_kvar.assign(ps.load_kvar.begin() + t * ps.n_loads,
                     ps.load_kvar.begin() + (t + 1) * ps.n_loads);
  s.pv_kw.assign(ps.pv_kw.begin() + t * ps.n_plants, ps.pv_kw.begin() + (t + 1) * ps.n_plants);
  double load = 0.0, pv = 0.0;
  for (double v : s.load_kw) load += v;
  for (double v : s.pv_kw) pv += v;
  s.p_pv_total_kw = pv;
  s.p_feeder_kw = load - pv;
  return s;
}

std::vector<Scenario> build_scenarios(const ProfileSet& ps, const FeederModel& model,
                                      DistanceMetric metric) {
  std::vector<Scenario> out;
  out.reserve(ps.size());
  for (std::size_t t = 0; t < ps.size(); ++t) {
    auto s = scenario_at(ps, t);
    const auto c = compute_centers(s, model, metric);
    s.load_center = c.load_center;
    s.pv_center = c.pv_center;
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t BlockGrid::non_empty_blocks() const {
  return static_cast<std::size_t>(
      std::count_if(blocks.begin(), blocks.end(), [](const auto& b) { return !b.empty(); }));
}

namespace {

std::vector<double> uniform_edges(double lo, double hi, std::size_t n) {
  std::vector<double> e(n + 1);
  for (std::size_t i = 0; i <= n; ++i)
    e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n);
  e[n] = hi;
  return e;
}

std::size_t cell_of(double x, double lo, double hi, std::size_t n) {
  if (!(hi > lo)) return 0;
  const double f = (x - lo) / (hi - lo) * static_cast<double>(n);
  if (!(f > 0.0)) return 0;
  return std::min(n - 1, static_cast<std::size_t>(f));
}

}  // namespace

BlockGrid partition_blocks(std::span<const Scenario> scenarios, std::size_t rows, std::size_t cols) {
  if (scenarios.empty()) throw DomainError("partition_blocks: no scenarios");
  if (rows == 0 || cols == 0) throw DomainError("partition_blocks: grid dimensions must be >= 1");

  auto [fmin, fmax] = std::minmax_element(
      scenarios.begin(), scenarios.end(),
      [](const Scenario& a, const Scenario& b) { return a.p_feeder_kw < b.p_feeder_kw; });
  auto [pmin, pmax] = std::minmax_element(
      scenarios.begin(), scenarios.end(),
      [](const Scenario& a, const Scenario& b) { return a.p_pv_total_kw < b.p_pv_total_kw; });

  BlockGrid g;
  g.rows = rows;
  g.cols = cols;
  g.feeder_edges = uniform_edges(fmin->p_feeder_kw, fmax->p_feeder_kw, cols);
  g.pv_edges = uniform_edges(pmin->p_pv_total_kw, pmax->p_pv_total_kw, rows);
  g.blocks.assign(rows * cols, {});
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto c = cell_of(scenarios[i].p_feeder_kw, fmin->p_feeder_kw, fmax->p_feeder_kw, cols);
    const auto r = cell_of(scenarios[i].p_pv_total_kw, pmin->p_pv_total_kw, pmax->p_pv_total_kw, rows);
    g.blocks[r * cols + c].push_back(i);
  }
  return g;
}

namespace {

std::vector<Scenario> collect(std::span<const Scenario> scenarios, const std::set<std::size_t>& picks) {
  std::vector<std::size_t> order(picks.begin(), picks.end());
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scenarios[a].index < scenarios[b].index;
  });
  std::vector<Scenario> out;
  out.reserve(order.size());
  for (auto i : order) out.push_back(scenarios[i]);
  return out;
}

// Positions of the min, lower-median and max of `key` over `members`; ties
// go to the earliest scenario.
template <typename Key>
void add_extremes(std::span<const Scenario> sc, std::vector<std::size_t> members, Key key,
                  std::set<std::size_t>& picks) {
  if (members.empty()) return;
  auto asc = [&](std::size_t a, std::size_t b) {
    const double ka = key(sc[a]), kb = key(sc[b]);
    if (ka != kb) return ka < kb;
    return sc[a].index < sc[b].index;
  };
  std::sort(members.begin(), members.end(), asc);
  picks.insert(members.front());
  picks.insert(members[(members.size() - 1) / 2]);
  const double top = key(sc[members.back()]);
  for (auto m : members)
    if (key(sc[m]) == top) {
      picks.insert(m);  // earliest among the maxima
      break;
    }
}

}  // namespace

std::vector<Scenario> select_representatives(const BlockGrid& grid,
                                             std::span<const Scenario> scenarios) {
  std::set<std::size_t> picks;
  for (const auto& block : grid.blocks) {
    if (block.empty()) continue;
    add_extremes(scenarios, block, [](const Scenario& s) { return s.load_center; }, picks);
    std::vector<std::size_t> with_pv;
    for (auto i : block)
      if (scenarios[i].pv_center) with_pv.push_back(i);
    add_extremes(scenarios, with_pv, [](const Scenario& s) { return *s.pv_center; }, picks);
  }
  return collect(scenarios, picks);
}

std::vector<Scenario> select_random(const BlockGrid& grid, std::span<const Scenario> scenarios,
                                    std::uint64_t seed) {
  constexpr std::size_t kPicks = 6;
  std::mt19937_64 rng(seed);
  std::set<std::size_t> picks;
  for (const auto& block : grid.blocks) {
    if (block.size() <= kPicks) {
      picks.insert(block.begin(), block.end());
      continue;
    }
    auto pool = block;
    // partial Fisher-Yates
    for (std::size_t i = 0; i < kPicks; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      picks.insert(pool[i]);
    }
  }
  return collect(scenarios, picks);
}

void write_scenarios_csv(std::span<const Scenario> scenarios, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << "index,timestamp,p_feeder_kw,p_pv_total_kw,load_center,pv_center\n";
  for (const auto& s : scenarios) {
    out << s.index << ',' << s.timestamp << ',' << csv::fmt(s.p_feeder_kw) << ','
        << csv::fmt(s.p_pv_total_kw) << ',' << csv::fmt(s.load_center) << ','
        << (s.pv_center ? csv::fmt(*s.pv_center) : std::string()) << '\n';
  }
}

}  // namespace voltvar
