#include "voltvar/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

#include "voltvar/csv.hpp"
#include "voltvar/error.hpp"

namespace voltvar {

using json = nlohmann::json;

namespace {
constexpr int kDatasetSchema = 1;
}

std::size_t TrainingDataset::sweep_row_count() const {
  return static_cast<std::size_t>(std::count_if(
      rows.begin(), rows.end(), [](const TrainingRow& r) { return r.kind == RowKind::Sweep; }));
}

std::vector<double> default_q_levels() {
  std::vector<double> q;
  for (int i = -5; i <= 5; ++i) q.push_back(i * 0.2);
  q[5] = 0.0;
  return q;
}

InjectionState scenario_state(const FeederModel& model, const Scenario& s,
                              const std::vector<int>& unit_taps) {
  InjectionState st;
  st.load_kw = s.load_kw;
  st.load_kvar = s.load_kvar;
  st.pv_kw = s.pv_kw;
  st.pv_kvar.assign(model.pv_plants().size(), 0.0);
  st.taps = model.instance_taps(unit_taps);
  return st;
}

TrainingDataset generate_training_data(const FeederModel& model,
                                       std::span<const Scenario> scenarios,
                                       const TrainingOptions& options) {
  if (scenarios.empty()) throw DomainError("generate_training_data: no scenarios");
  if (options.q_levels.empty()) throw DomainError("generate_training_data: no Q levels");

  TrainingDataset ds;
  ds.nodes = model.nodes();
  ds.channels = measurement_channel_names(model);
  for (const auto& pv : model.pv_plants()) ds.plant_ids.push_back(pv.id);
  for (const auto& u : model.regulator_units()) ds.unit_ids.push_back(u.id);
  ds.baseline_taps = model.initial_unit_taps();
  ds.q_levels = options.q_levels;
  std::sort(ds.q_levels.begin(), ds.q_levels.end());
  ds.scenarios.assign(scenarios.begin(), scenarios.end());

  auto record = [&](std::size_t sc, RowKind kind, int plant, int unit, double q,
                    const std::vector<int>& taps, const VoltageSolution& sol) {
    TrainingRow row;
    row.scenario = sc;
    row.kind = kind;
    row.plant = plant;
    row.unit = unit;
    row.q_kvar = q;
    row.unit_taps = taps;
    row.measurements = sol.measurements.vector();
    row.head_q_kvar = sol.measurements.head_q_total();
    row.vmag = sol.vmag_pu;
    ds.rows.push_back(std::move(row));
  };

  auto solve_or_throw = [&](const InjectionState& st, const std::string& what) {
    try {
      return solve(model, st, options.solve);
    } catch (const ConvergenceError& e) {
      throw ConvergenceError("training solve failed for " + what + ": " + e.what(), e.worst_node(),
                             e.mismatch());
    }
  };

  // Tap perturbations on the first scenario only.
  const auto& t0 = ds.baseline_taps;
  {
    const auto base_state = scenario_state(model, ds.scenarios.front(), t0);
    const auto base = solve_or_throw(base_state, "scenario '" + ds.scenarios.front().timestamp + "' base");
    ds.tap_base_vmag = base.vmag_pu;
    for (std::size_t u = 0; u < model.regulator_units().size(); ++u) {
      const auto& first = model.regulators()[model.regulator_units()[u].members.front()];
      auto taps = t0;
      const int dir = taps[u] + 1 <= first.tap_max ? +1 : -1;
      taps[u] += dir;
      const auto sol = solve_or_throw(scenario_state(model, ds.scenarios.front(), taps),
                                      "tap perturbation of '" + ds.unit_ids[u] + "'");
      std::vector<double> delta(model.node_count());
      for (std::size_t n = 0; n < delta.size(); ++n)
        delta[n] = dir * (sol.vmag_pu[n] - base.vmag_pu[n]);
      ds.tap_delta.push_back(std::move(delta));
      record(0, RowKind::TapPerturbation, -1, static_cast<int>(u), 0.0, taps, sol);
    }
  }

  // Reactive power sweeps, one plant at a time.
  for (std::size_t sc = 0; sc < ds.scenarios.size(); ++sc) {
    const auto& scen = ds.scenarios[sc];
    auto state = scenario_state(model, scen, t0);
    for (std::size_t k = 0; k < model.pv_plants().size(); ++k) {
      const auto& pv = model.pv_plants()[k];
      const double cap = excess_capacity_kvar(pv.rated_kva, scen.pv_kw[k]);
      for (double level : ds.q_levels) {
        const double q = level * pv.rated_kva;
        if (std::abs(q) > cap + 1e-9) continue;
        state.pv_kvar[k] = q;
        const auto sol = solve_or_throw(state, "(scenario '" + scen.timestamp + "', plant '" +
                                                   pv.id + "', Q " + csv::fmt(q) + " kvar)");
        record(sc, RowKind::Sweep, static_cast<int>(k), -1, q, t0, sol);
      }
      state.pv_kvar[k] = 0.0;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------

namespace {

const char* kind_name(RowKind k) { return k == RowKind::Sweep ? "sweep" : "tap"; }

RowKind parse_kind(std::string_view s) {
  if (s == "sweep") return RowKind::Sweep;
  if (s == "tap") return RowKind::TapPerturbation;
  throw ParseError("unknown row kind '" + std::string(s) + "'");
}

ProfileSet profile_from_scenarios(std::span<const Scenario> sc, const FeederModel& model) {
  ProfileSet ps;
  ps.n_loads = model.loads().size();
  ps.n_plants = model.pv_plants().size();
  for (const auto& s : sc) {
    ps.timestamps.push_back(s.timestamp);
    ps.load_kw.insert(ps.load_kw.end(), s.load_kw.begin(), s.load_kw.end());
    ps.load_kvar.insert(ps.load_kvar.end(), s.load_kvar.begin(), s.load_kvar.end());
    ps.pv_kw.insert(ps.pv_kw.end(), s.pv_kw.begin(), s.pv_kw.end());
  }
  return ps;
}

}  // namespace

void save_dataset(const TrainingDataset& ds, const FeederModel& model,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  json man;
  man["schema_version"] = kDatasetSchema;
  man["channels"] = ds.channels;
  man["plants"] = ds.plant_ids;
  man["regulator_units"] = ds.unit_ids;
  man["baseline_taps"] = ds.baseline_taps;
  man["q_levels"] = ds.q_levels;
  json sc = json::array();
  for (const auto& s : ds.scenarios) sc.push_back({{"index", s.index}, {"timestamp", s.timestamp}});
  man["scenarios"] = sc;
  std::vector<std::string> nodes;
  for (const auto& n : ds.nodes) nodes.push_back(n.str());
  man["nodes"] = nodes;
  man["tap_base_vmag"] = ds.tap_base_vmag;
  man["tap_delta"] = ds.tap_delta;
  {
    std::ofstream out(dir / "dataset_manifest.json");
    if (!out) throw Error("cannot write dataset manifest in '" + dir.string() + "'");
    out << man.dump(1) << '\n';
  }

  // Scenario injections, same layout as a profile file.
  write_profiles(profile_from_scenarios(ds.scenarios, model), model, dir / "training_scenarios.csv");

  std::ofstream out(dir / "dataset.csv");
  if (!out) throw Error("cannot write dataset.csv in '" + dir.string() + "'");
  out << "scenario,kind,plant,unit,q_kvar";
  for (const auto& u : ds.unit_ids) out << ",tap_" << u;
  for (const auto& c : ds.channels) out << ",m_" << c;
  out << ",head_q_total";
  for (const auto& n : ds.nodes) out << ",v_" << n.str();
  out << '\n';
  for (const auto& r : ds.rows) {
    out << r.scenario << ',' << kind_name(r.kind) << ','
        << (r.plant >= 0 ? ds.plant_ids[static_cast<std::size_t>(r.plant)] : "") << ','
        << (r.unit >= 0 ? ds.unit_ids[static_cast<std::size_t>(r.unit)] : "") << ','
        << csv::fmt(r.q_kvar);
    for (int t : r.unit_taps) out << ',' << t;
    for (double m : r.measurements) out << ',' << csv::fmt(m);
    out << ',' << csv::fmt(r.head_q_kvar);
    for (double v : r.vmag) out << ',' << csv::fmt(v);
    out << '\n';
  }
}

TrainingDataset load_dataset(const std::filesystem::path& dir, const FeederModel& model) {
  json man;
  {
    std::ifstream in(dir / "dataset_manifest.json");
    if (!in) throw ParseError("missing dataset_manifest.json in '" + dir.string() + "'");
    try {
      in >> man;
    } catch (const json::exception& e) {
      throw ParseError(std::string("dataset manifest: ") + e.what());
    }
  }
  if (man.value("schema_version", 0) != kDatasetSchema)
    throw ParseError("dataset manifest: unsupported schema version");

  TrainingDataset ds;
  try {
    ds.channels = man.at("channels").get<std::vector<std::string>>();
    ds.plant_ids = man.at("plants").get<std::vector<std::string>>();
    ds.unit_ids = man.at("regulator_units").get<std::vector<std::string>>();
    ds.baseline_taps = man.at("baseline_taps").get<std::vector<int>>();
    ds.q_levels = man.at("q_levels").get<std::vector<double>>();
    for (const auto& n : man.at("nodes")) ds.nodes.push_back(NodeRef::parse(n.get<std::string>()));
    ds.tap_base_vmag = man.at("tap_base_vmag").get<std::vector<double>>();
    ds.tap_delta = man.at("tap_delta").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("dataset manifest: ") + e.what());
  }
  if (ds.nodes != model.nodes() || ds.channels != measurement_channel_names(model))
    throw ValidationError("dataset in '" + dir.string() + "' was generated for a different feeder");

  const auto ps = read_profiles(dir / "training_scenarios.csv", model);
  const auto& sc = man.at("scenarios");
  if (sc.size() != ps.size()) throw ParseError("training_scenarios.csv does not match manifest");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto s = scenario_at(ps, i);
    s.index = sc[i].at("index").get<std::size_t>();
    const auto c = compute_centers(s, model);
    s.load_center = c.load_center;
    s.pv_center = c.pv_center;
    ds.scenarios.push_back(std::move(s));
  }

  const auto table = csv::read(dir / "dataset.csv");
  const std::size_t nu = ds.unit_ids.size(), nm = ds.channels.size(), nn = ds.nodes.size();
  if (table.header.size() != 5 + nu + nm + 1 + nn) throw ParseError("dataset.csv: unexpected columns");
  for (const auto& f : table.rows) {
    TrainingRow r;
    r.scenario = static_cast<std::size_t>(csv::to_int(f[0], "dataset.csv scenario"));
    r.kind = parse_kind(f[1]);
    if (!f[2].empty()) r.plant = static_cast<int>(model.plant_index(f[2]));
    if (!f[3].empty()) r.unit = static_cast<int>(model.unit_index(f[3]));
    r.q_kvar = csv::to_double(f[4], "dataset.csv");
    std::size_t c = 5;
    for (std::size_t u = 0; u < nu; ++u) r.unit_taps.push_back(csv::to_int(f[c++], "dataset.csv"));
    for (std::size_t m = 0; m < nm; ++m) r.measurements.push_back(csv::to_double(f[c++], "dataset.csv"));
    r.head_q_kvar = csv::to_double(f[c++], "dataset.csv");
    for (std::size_t n = 0; n < nn; ++n) r.vmag.push_back(csv::to_double(f[c++], "dataset.csv"));
    if (r.scenario >= ds.scenarios.size()) throw ParseError("dataset.csv: scenario out of range");
    ds.rows.push_back(std::move(r));
  }
  return ds;
}

// ---------------------------------------------------------------------------

const char* to_string(CriticalTag tag) {
  switch (tag) {
    case CriticalTag::FeederHead: return "feeder-head";
    case CriticalTag::RegulatorPrimary: return "regulator-primary";
    case CriticalTag::RegulatorSecondary: return "regulator-secondary";
    case CriticalTag::PvPlant: return "pv-plant";
    case CriticalTag::ObservedExtreme: return "observed-extreme";
  }
  return "?";
}

CriticalTag parse_critical_tag(std::string_view s) {
  for (auto t : {CriticalTag::FeederHead, CriticalTag::RegulatorPrimary,
                 CriticalTag::RegulatorSecondary, CriticalTag::PvPlant, CriticalTag::ObservedExtreme})
    if (s == to_string(t)) return t;
  throw ParseError("unknown critical-node tag '" + std::string(s) + "'");
}

CriticalNodeSet select_critical_nodes(const TrainingDataset& ds, const FeederModel& model) {
  if (ds.rows.empty()) throw DomainError("select_critical_nodes: empty dataset");
  CriticalNodeSet set;
  std::set<std::size_t> seen;
  auto add = [&](std::size_t n, CriticalTag tag) {
    if (seen.insert(n).second) set.push_back(CriticalNode{model.nodes()[n], n, tag});
  };

  const auto src = model.source_index();
  for (Phase p : model.buses()[src].phases) add(model.node_index(src, p), CriticalTag::FeederHead);
  for (std::size_t r = 0; r < model.regulators().size(); ++r) {
    add(model.primary_node(r), CriticalTag::RegulatorPrimary);
    add(model.secondary_node(r), CriticalTag::RegulatorSecondary);
  }
  for (std::size_t k = 0; k < model.pv_plants().size(); ++k)
    for (auto n : model.plant_nodes(k)) add(n, CriticalTag::PvPlant);

  for (const auto& row : ds.rows) {
    const auto hi = std::max_element(row.vmag.begin(), row.vmag.end());
    const auto lo = std::min_element(row.vmag.begin(), row.vmag.end());
    add(static_cast<std::size_t>(hi - row.vmag.begin()), CriticalTag::ObservedExtreme);
    add(static_cast<std::size_t>(lo - row.vmag.begin()), CriticalTag::ObservedExtreme);
  }
  return set;
}

}  // namespace voltvar
