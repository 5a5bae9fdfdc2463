#include "voltvar/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

#include "voltvar/error.hpp"

namespace voltvar {

using json = nlohmann::json;

char phase_letter(Phase p) { return static_cast<char>('a' + static_cast<int>(p)); }

Phase parse_phase(std::string_view s) {
  if (s.size() == 1) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
    if (c >= 'a' && c <= 'c') return static_cast<Phase>(c - 'a');
  }
  throw ParseError("invalid phase '" + std::string(s) + "' (expected a, b or c)");
}

std::string NodeRef::str() const { return bus + "." + phase_letter(phase); }

NodeRef NodeRef::parse(std::string_view s) {
  const auto dot = s.rfind('.');
  if (dot == std::string_view::npos || dot == 0)
    throw ParseError("invalid node reference '" + std::string(s) + "' (expected bus.phase)");
  return NodeRef{std::string(s.substr(0, dot)), parse_phase(s.substr(dot + 1))};
}

namespace {

std::vector<Phase> parse_phase_list(std::string_view s) {
  std::vector<Phase> out;
  for (char c : s) {
    const Phase p = parse_phase(std::string_view(&c, 1));
    if (std::find(out.begin(), out.end(), p) != out.end())
      throw ParseError("duplicate phase in '" + std::string(s) + "'");
    out.push_back(p);
  }
  if (out.empty()) throw ParseError("empty phase list");
  std::sort(out.begin(), out.end());
  return out;
}

std::string phase_string(const std::vector<Phase>& ps) {
  std::string s;
  for (Phase p : ps) s += phase_letter(p);
  return s;
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

std::string element_label(const char* kind, std::size_t i, const json& j) {
  std::string id = j.is_object() && j.contains("id") && j["id"].is_string()
                       ? j["id"].get<std::string>()
                       : "#" + std::to_string(i);
  return std::string(kind) + " '" + id + "'";
}

FeederData data_from_json(const json& doc) {
  for (const char* key : {"buses", "lines", "loads", "pv_plants", "regulators", "source"})
    if (!doc.contains(key)) throw ParseError(std::string("feeder file missing key '") + key + "'");

  FeederData d;
  std::size_t i = 0;
  for (const auto& jb : doc.at("buses")) {
    try {
      d.buses.push_back(Bus{jb.at("id").get<std::string>(),
                            parse_phase_list(jb.at("phases").get<std::string>()),
                            get_or<double>(jb, "base_kv", 12.47)});
    } catch (const std::exception& e) {
      throw ParseError(element_label("bus", i, jb) + ": " + e.what());
    }
    ++i;
  }
  i = 0;
  for (const auto& jl : doc.at("lines")) {
    try {
      LineSection l;
      l.id = jl.at("id").get<std::string>();
      l.from_bus = jl.at("from").get<std::string>();
      l.to_bus = jl.at("to").get<std::string>();
      l.length_km = get_or<double>(jl, "length_km", 0.0);
      const auto& z = jl.at("z");
      if (!z.is_array() || z.size() != 3) throw ParseError("z must be a 3x3 matrix of [r,x]");
      for (int r = 0; r < 3; ++r) {
        if (!z[r].is_array() || z[r].size() != 3)
          throw ParseError("z must be a 3x3 matrix of [r,x]");
        for (int c = 0; c < 3; ++c) {
          const auto& rx = z[r][c];
          if (!rx.is_array() || rx.size() != 2) throw ParseError("z entries must be [r,x] pairs");
          l.z_ohm[r][c] = Complex(rx[0].get<double>(), rx[1].get<double>());
        }
      }
      d.lines.push_back(std::move(l));
    } catch (const json::exception& e) {
      throw ParseError(element_label("line", i, jl) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(element_label("line", i, jl) + ": " + e.what());
    }
    ++i;
  }
  i = 0;
  for (const auto& jl : doc.at("loads")) {
    try {
      d.loads.push_back(Load{jl.at("id").get<std::string>(), jl.at("bus").get<std::string>(),
                             parse_phase(jl.at("phase").get<std::string>()),
                             get_or<double>(jl, "kw", 0.0), get_or<double>(jl, "kvar", 0.0)});
    } catch (const std::exception& e) {
      throw ParseError(element_label("load", i, jl) + ": " + e.what());
    }
    ++i;
  }
  i = 0;
  for (const auto& jp : doc.at("pv_plants")) {
    try {
      d.pv_plants.push_back(PvPlant{jp.at("id").get<std::string>(), jp.at("bus").get<std::string>(),
                                    parse_phase_list(jp.at("phases").get<std::string>()),
                                    jp.at("rated_kva").get<double>()});
    } catch (const std::exception& e) {
      throw ParseError(element_label("pv plant", i, jp) + ": " + e.what());
    }
    ++i;
  }
  i = 0;
  for (const auto& jr : doc.at("regulators")) {
    try {
      Regulator r;
      r.id = jr.at("id").get<std::string>();
      r.phase = parse_phase(jr.at("phase").get<std::string>());
      r.primary_bus = jr.at("primary_bus").get<std::string>();
      r.secondary_bus = jr.at("secondary_bus").get<std::string>();
      r.tap_min = get_or<int>(jr, "tap_min", -16);
      r.tap_max = get_or<int>(jr, "tap_max", 16);
      r.step_pu = get_or<double>(jr, "step_pu", 0.00625);
      r.initial_tap = get_or<int>(jr, "initial_tap", 0);
      r.gang = get_or<std::string>(jr, "gang", "");
      d.regulators.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw ParseError(element_label("regulator", i, jr) + ": " + e.what());
    }
    ++i;
  }
  try {
    const auto& js = doc.at("source");
    d.source.bus = js.at("bus").get<std::string>();
    if (js.contains("voltage_pu")) {
      const auto& v = js.at("voltage_pu");
      if (v.is_number()) {
        d.source.voltage_pu.fill(v.get<double>());
      } else {
        if (v.size() != 3) throw ParseError("source voltage_pu must have 3 entries");
        for (int p = 0; p < 3; ++p) d.source.voltage_pu[p] = v[p].get<double>();
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("source: ") + e.what());
  }
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------

FeederModel::FeederModel(FeederData data) : data_(std::move(data)) { validate_and_index(); }

void FeederModel::validate_and_index() {
  const auto& buses = data_.buses;
  if (buses.empty()) throw ValidationError("feeder has no buses");

  for (std::size_t b = 0; b < buses.size(); ++b) {
    if (!bus_lookup_.emplace(buses[b].id, b).second)
      throw ValidationError("duplicate bus '" + buses[b].id + "'");
    if (!(buses[b].base_kv > 0.0))
      throw ValidationError("bus '" + buses[b].id + "' has non-positive base_kv");
  }
  auto bus_of = [&](const std::string& id, const std::string& who) {
    auto it = bus_lookup_.find(id);
    if (it == bus_lookup_.end())
      throw ValidationError(who + " references missing bus '" + id + "'");
    return it->second;
  };
  auto require_phase = [&](std::size_t b, Phase p, const std::string& who) {
    const auto& ph = buses[b].phases;
    if (std::find(ph.begin(), ph.end(), p) == ph.end())
      throw ValidationError(who + " uses phase " + phase_letter(p) + " absent at bus '" +
                            buses[b].id + "'");
  };

  source_ = bus_of(data_.source.bus, "source");

  // Undirected edges: lines plus one edge per regulated bus pair.
  struct Edge {
    std::size_t a, b;
    std::string label;
    bool is_reg;
    std::size_t line;
    std::array<std::optional<std::size_t>, 3> regs;
  };
  std::vector<Edge> edges;
  std::set<std::string> line_ids;
  for (std::size_t l = 0; l < data_.lines.size(); ++l) {
    const auto& ln = data_.lines[l];
    const std::string who = "line '" + ln.id + "'";
    if (!line_ids.insert(ln.id).second) throw ValidationError("duplicate " + who);
    if (ln.length_km < 0.0) throw ValidationError(who + " has negative length");
    const auto a = bus_of(ln.from_bus, who);
    const auto b = bus_of(ln.to_bus, who);
    if (a == b) throw ValidationError(who + " is a self-loop");
    edges.push_back({a, b, who, false, l, {}});
  }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> reg_edge;
  std::set<std::string> reg_ids;
  for (std::size_t r = 0; r < data_.regulators.size(); ++r) {
    const auto& rg = data_.regulators[r];
    const std::string who = "regulator '" + rg.id + "'";
    if (!reg_ids.insert(rg.id).second) throw ValidationError("duplicate " + who);
    const auto a = bus_of(rg.primary_bus, who);
    const auto b = bus_of(rg.secondary_bus, who);
    if (a == b) throw ValidationError(who + " has identical primary and secondary bus");
    require_phase(a, rg.phase, who);
    require_phase(b, rg.phase, who);
    if (!(rg.step_pu > 0.0)) throw ValidationError(who + " has non-positive tap step");
    if (rg.tap_min > 0 || rg.tap_max < 0 || rg.tap_min >= rg.tap_max)
      throw ValidationError(who + " tap range must contain 0");
    if (rg.initial_tap < rg.tap_min || rg.initial_tap > rg.tap_max)
      throw ValidationError(who + " initial tap outside range");
    auto [it, fresh] = reg_edge.emplace(std::make_pair(a, b), edges.size());
    if (fresh) edges.push_back({a, b, who, true, 0, {}});
    auto& e = edges[it->second];
    auto& slot = e.regs[static_cast<int>(rg.phase)];
    if (slot) throw ValidationError(who + " duplicates a phase already regulated on that branch");
    slot = r;
  }

  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(buses.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    adj[edges[e].a].push_back({edges[e].b, e});
    adj[edges[e].b].push_back({edges[e].a, e});
  }

  // Orient from the source; any revisit through another edge is a loop.
  branches_.assign(buses.size(), Branch{});
  children_.assign(buses.size(), {});
  std::vector<bool> seen(buses.size(), false);
  std::vector<std::size_t> via(buses.size(), SIZE_MAX);
  std::queue<std::size_t> q;
  q.push(source_);
  seen[source_] = true;
  order_.clear();
  while (!q.empty()) {
    const auto u = q.front();
    q.pop();
    order_.push_back(u);
    for (auto [v, e] : adj[u]) {
      if (e == via[u]) continue;
      if (seen[v]) throw ValidationError("non-radial: " + edges[e].label + " closes a loop");
      seen[v] = true;
      via[v] = e;
      const auto& edge = edges[e];
      Branch br;
      br.parent = u;
      if (edge.is_reg) {
        if (edge.a != u)
          throw ValidationError(edge.label + ": primary bus is downstream of secondary bus");
        br.kind = Branch::Kind::Regulator;
        br.regs = edge.regs;
      } else {
        br.kind = Branch::Kind::Line;
        br.line = edge.line;
      }
      for (Phase p : buses[v].phases)
        if (!bus_has_phase(u, p))
          throw ValidationError(edge.label + ": phase " + phase_letter(p) + " at bus '" +
                                buses[v].id + "' is not fed from bus '" + buses[u].id + "'");
      branches_[v] = br;
      children_[u].push_back(v);
      q.push(v);
    }
  }
  for (std::size_t b = 0; b < buses.size(); ++b)
    if (!seen[b]) throw ValidationError("bus '" + buses[b].id + "' is not connected to the source");
  // connected + no revisits already implies |E| = |V| - 1

  // Nodes.
  node_of_bus_.assign(buses.size(), {-1, -1, -1});
  nodes_.clear();
  for (std::size_t b = 0; b < buses.size(); ++b)
    for (Phase p : buses[b].phases) {
      node_of_bus_[b][static_cast<int>(p)] = static_cast<int>(nodes_.size());
      nodes_.push_back(NodeRef{buses[b].id, p});
    }

  // Distances.
  dist_km_.assign(buses.size(), 0.0);
  dist_z_.assign(buses.size(), {0.0, 0.0, 0.0});
  for (std::size_t b : order_) {
    if (b == source_) continue;
    const auto& br = branches_[b];
    dist_km_[b] = dist_km_[br.parent];
    dist_z_[b] = dist_z_[br.parent];
    if (br.kind == Branch::Kind::Line) {
      const auto& ln = data_.lines[br.line];
      dist_km_[b] += ln.length_km;
      for (int p = 0; p < 3; ++p) dist_z_[b][p] += std::abs(ln.z_ohm[p][p]);
    }
  }

  // Loads and plants.
  for (std::size_t i = 0; i < data_.loads.size(); ++i) {
    const auto& ld = data_.loads[i];
    const std::string who = "load '" + ld.id + "'";
    if (!load_lookup_.emplace(ld.id, i).second) throw ValidationError("duplicate " + who);
    require_phase(bus_of(ld.bus, who), ld.phase, who);
  }
  for (std::size_t i = 0; i < data_.pv_plants.size(); ++i) {
    const auto& pv = data_.pv_plants[i];
    const std::string who = "pv plant '" + pv.id + "'";
    if (!plant_lookup_.emplace(pv.id, i).second) throw ValidationError("duplicate " + who);
    const auto b = bus_of(pv.bus, who);
    for (Phase p : pv.phases) require_phase(b, p, who);
    if (!(pv.rated_kva > 0.0)) throw ValidationError(who + " has non-positive rating");
  }

  // Regulator units.
  units_.clear();
  unit_of_.assign(data_.regulators.size(), 0);
  for (std::size_t r = 0; r < data_.regulators.size(); ++r) {
    const auto& rg = data_.regulators[r];
    const std::string key = rg.gang.empty() ? rg.id : rg.gang;
    auto [it, fresh] = unit_lookup_.emplace(key, units_.size());
    if (fresh) {
      units_.push_back(RegulatorUnit{key, {}, r});
    } else {
      const auto& first = data_.regulators[units_[it->second].members.front()];
      if (first.primary_bus != rg.primary_bus || first.secondary_bus != rg.secondary_bus ||
          first.tap_min != rg.tap_min || first.tap_max != rg.tap_max ||
          first.step_pu != rg.step_pu || first.initial_tap != rg.initial_tap)
        throw ValidationError("regulator '" + rg.id + "' differs from the rest of gang '" + key +
                              "'");
    }
    units_[it->second].members.push_back(r);
    unit_of_[r] = it->second;
  }

  // Upstream regulator per node.
  upstream_.assign(nodes_.size(), std::nullopt);
  for (std::size_t b : order_) {
    if (b == source_) continue;
    const auto& br = branches_[b];
    for (Phase p : buses[b].phases) {
      const auto pi = static_cast<int>(p);
      std::optional<std::size_t> up;
      if (br.kind == Branch::Kind::Regulator && br.regs[pi]) {
        up = br.regs[pi];
      } else {
        const int parent_node = node_of_bus_[br.parent][pi];
        up = upstream_[static_cast<std::size_t>(parent_node)];
      }
      upstream_[static_cast<std::size_t>(node_of_bus_[b][pi])] = up;
    }
  }
}

std::size_t FeederModel::bus_index(std::string_view id) const {
  auto it = bus_lookup_.find(std::string(id));
  if (it == bus_lookup_.end()) throw DomainError("unknown bus '" + std::string(id) + "'");
  return it->second;
}

bool FeederModel::has_bus(std::string_view id) const {
  return bus_lookup_.count(std::string(id)) != 0;
}

bool FeederModel::bus_has_phase(std::size_t bus, Phase p) const {
  const auto& ph = data_.buses[bus].phases;
  return std::find(ph.begin(), ph.end(), p) != ph.end();
}

std::optional<std::size_t> FeederModel::find_node(const NodeRef& n) const {
  auto it = bus_lookup_.find(n.bus);
  if (it == bus_lookup_.end()) return std::nullopt;
  const int idx = node_of_bus_[it->second][static_cast<int>(n.phase)];
  if (idx < 0) return std::nullopt;
  return static_cast<std::size_t>(idx);
}

std::size_t FeederModel::node_index(const NodeRef& n) const {
  auto idx = find_node(n);
  if (!idx) throw DomainError("unknown node '" + n.str() + "'");
  return *idx;
}

std::size_t FeederModel::node_index(std::size_t bus, Phase p) const {
  const int idx = node_of_bus_.at(bus)[static_cast<int>(p)];
  if (idx < 0)
    throw DomainError("bus '" + data_.buses[bus].id + "' has no phase " + phase_letter(p));
  return static_cast<std::size_t>(idx);
}

double FeederModel::electrical_distance(const NodeRef& node, DistanceMetric metric) const {
  return electrical_distance(node_index(node), metric);
}

double FeederModel::electrical_distance(std::size_t node, DistanceMetric metric) const {
  const auto& n = nodes_.at(node);
  const auto b = bus_lookup_.at(n.bus);
  return metric == DistanceMetric::Kilometres ? dist_km_[b]
                                              : dist_z_[b][static_cast<int>(n.phase)];
}

double FeederModel::max_distance(DistanceMetric metric) const {
  double m = 0.0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) m = std::max(m, electrical_distance(i, metric));
  return m;
}

std::optional<std::size_t> FeederModel::upstream_regulator(const NodeRef& node) const {
  return upstream_[node_index(node)];
}

std::optional<std::size_t> FeederModel::upstream_regulator(std::size_t node) const {
  return upstream_.at(node);
}

std::size_t FeederModel::unit_index(std::string_view unit_id) const {
  auto it = unit_lookup_.find(std::string(unit_id));
  if (it == unit_lookup_.end())
    throw DomainError("unknown regulator unit '" + std::string(unit_id) + "'");
  return it->second;
}

std::size_t FeederModel::load_index(std::string_view id) const {
  auto it = load_lookup_.find(std::string(id));
  if (it == load_lookup_.end()) throw DomainError("unknown load '" + std::string(id) + "'");
  return it->second;
}

std::size_t FeederModel::plant_index(std::string_view id) const {
  auto it = plant_lookup_.find(std::string(id));
  if (it == plant_lookup_.end()) throw DomainError("unknown pv plant '" + std::string(id) + "'");
  return it->second;
}

std::vector<int> FeederModel::instance_taps(const std::vector<int>& unit_taps) const {
  if (unit_taps.size() != units_.size())
    throw DomainError("tap vector has " + std::to_string(unit_taps.size()) + " entries, expected " +
                      std::to_string(units_.size()));
  std::vector<int> taps(data_.regulators.size(), 0);
  for (std::size_t r = 0; r < taps.size(); ++r) taps[r] = unit_taps[unit_of_[r]];
  return taps;
}

std::vector<int> FeederModel::initial_unit_taps() const {
  std::vector<int> t;
  t.reserve(units_.size());
  for (const auto& u : units_) t.push_back(data_.regulators[u.members.front()].initial_tap);
  return t;
}

std::vector<std::size_t> FeederModel::plant_nodes(std::size_t plant) const {
  const auto& pv = data_.pv_plants.at(plant);
  const auto b = bus_lookup_.at(pv.bus);
  std::vector<std::size_t> out;
  for (Phase p : pv.phases) out.push_back(node_index(b, p));
  return out;
}

std::size_t FeederModel::secondary_node(std::size_t regulator) const {
  const auto& r = data_.regulators.at(regulator);
  return node_index(bus_lookup_.at(r.secondary_bus), r.phase);
}

std::size_t FeederModel::primary_node(std::size_t regulator) const {
  const auto& r = data_.regulators.at(regulator);
  return node_index(bus_lookup_.at(r.primary_bus), r.phase);
}

double FeederModel::base_volts(std::size_t bus) const {
  return data_.buses.at(bus).base_kv * 1000.0 / std::sqrt(3.0);
}

// ---------------------------------------------------------------------------

FeederModel parse_feeder(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("feeder file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("feeder file must contain a JSON object");
  return FeederModel(data_from_json(doc));
}

FeederModel load_feeder(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feeder file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_feeder(ss.str());
}

std::string feeder_to_json(const FeederData& d) {
  json doc;
  doc["buses"] = json::array();
  for (const auto& b : d.buses)
    doc["buses"].push_back({{"id", b.id}, {"phases", phase_string(b.phases)}, {"base_kv", b.base_kv}});
  doc["lines"] = json::array();
  for (const auto& l : d.lines) {
    json z = json::array();
    for (int r = 0; r < 3; ++r) {
      json row = json::array();
      for (int c = 0; c < 3; ++c) row.push_back({l.z_ohm[r][c].real(), l.z_ohm[r][c].imag()});
      z.push_back(row);
    }
    doc["lines"].push_back({{"id", l.id}, {"from", l.from_bus}, {"to", l.to_bus},
                            {"length_km", l.length_km}, {"z", z}});
  }
  doc["loads"] = json::array();
  for (const auto& l : d.loads)
    doc["loads"].push_back({{"id", l.id}, {"bus", l.bus}, {"phase", std::string(1, phase_letter(l.phase))},
                            {"kw", l.kw}, {"kvar", l.kvar}});
  doc["pv_plants"] = json::array();
  for (const auto& p : d.pv_plants)
    doc["pv_plants"].push_back({{"id", p.id}, {"bus", p.bus}, {"phases", phase_string(p.phases)},
                                {"rated_kva", p.rated_kva}});
  doc["regulators"] = json::array();
  for (const auto& r : d.regulators) {
    json jr = {{"id", r.id},           {"phase", std::string(1, phase_letter(r.phase))},
               {"primary_bus", r.primary_bus}, {"secondary_bus", r.secondary_bus},
               {"tap_min", r.tap_min},  {"tap_max", r.tap_max},
               {"step_pu", r.step_pu},  {"initial_tap", r.initial_tap}};
    if (!r.gang.empty()) jr["gang"] = r.gang;
    doc["regulators"].push_back(jr);
  }
  doc["source"] = {{"bus", d.source.bus},
                   {"voltage_pu", {d.source.voltage_pu[0], d.source.voltage_pu[1], d.source.voltage_pu[2]}}};
  return doc.dump(1);
}

void write_feeder(const FeederData& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write feeder file '" + path.string() + "'");
  out << feeder_to_json(data) << '\n';
}

}  // namespace voltvar
