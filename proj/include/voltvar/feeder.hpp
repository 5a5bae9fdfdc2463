#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace voltvar {

using Complex = std::complex<double>;

enum class Phase : std::uint8_t { A = 0, B = 1, C = 2 };

char phase_letter(Phase p);
Phase parse_phase(std::string_view s);

/// A single-phase node: one phase conductor at one bus.
struct NodeRef {
  std::string bus;
  Phase phase = Phase::A;

  std::string str() const;  // "bus.a"
  static NodeRef parse(std::string_view s);

  friend bool operator==(const NodeRef&, const NodeRef&) = default;
  friend auto operator<=>(const NodeRef&, const NodeRef&) = default;
};

struct Bus {
  std::string id;
  std::vector<Phase> phases;
  double base_kv = 12.47;  // line-to-line
};

/// Series impedance of one section, ohms, full 3x3 phase frame.
using PhaseImpedance = std::array<std::array<Complex, 3>, 3>;

struct LineSection {
  std::string id;
  std::string from_bus;
  std::string to_bus;
  PhaseImpedance z_ohm{};
  double length_km = 0.0;
};

struct Load {
  std::string id;
  std::string bus;
  Phase phase = Phase::A;
  double kw = 0.0;
  double kvar = 0.0;
};

struct PvPlant {
  std::string id;
  std::string bus;
  std::vector<Phase> phases;
  double rated_kva = 0.0;
};

/// One single-phase ideal ratio regulator (ratio = 1 + tap * step).
/// Instances that share a non-empty `gang` are operated together.
struct Regulator {
  std::string id;
  Phase phase = Phase::A;
  std::string primary_bus;
  std::string secondary_bus;
  int tap_min = -16;
  int tap_max = 16;
  double step_pu = 0.00625;
  int initial_tap = 0;
  std::string gang;
};

struct Source {
  std::string bus;
  std::array<double, 3> voltage_pu{1.0, 1.0, 1.0};
};

/// Raw feeder description as read from / written to the model file.
struct FeederData {
  std::vector<Bus> buses;
  std::vector<LineSection> lines;
  std::vector<Load> loads;
  std::vector<PvPlant> pv_plants;
  std::vector<Regulator> regulators;
  Source source;
};

enum class DistanceMetric { Kilometres, ImpedanceMagnitude };

/// A regulator control unit: either a single instance or a gang.
struct RegulatorUnit {
  std::string id;
  std::vector<std::size_t> members;  // regulator instance indices
  std::size_t sensing = 0;           // instance whose secondary voltage drives local control
};

/// The branch feeding a bus from its parent.
struct Branch {
  enum class Kind { Line, Regulator } kind = Kind::Line;
  std::size_t parent = 0;                            // bus index
  std::size_t line = 0;                              // Kind::Line
  std::array<std::optional<std::size_t>, 3> regs{};  // Kind::Regulator, instance per phase
};

/// Validated, immutable radial feeder with precomputed topology.
class FeederModel {
 public:
  explicit FeederModel(FeederData data);

  const FeederData& data() const noexcept { return data_; }
  const std::vector<Bus>& buses() const noexcept { return data_.buses; }
  const std::vector<LineSection>& lines() const noexcept { return data_.lines; }
  const std::vector<Load>& loads() const noexcept { return data_.loads; }
  const std::vector<PvPlant>& pv_plants() const noexcept { return data_.pv_plants; }
  const std::vector<Regulator>& regulators() const noexcept { return data_.regulators; }
  const std::vector<RegulatorUnit>& regulator_units() const noexcept { return units_; }
  const Source& source() const noexcept { return data_.source; }

  std::size_t source_index() const noexcept { return source_; }
  std::size_t bus_index(std::string_view id) const;
  bool has_bus(std::string_view id) const;
  bool bus_has_phase(std::size_t bus, Phase p) const;

  /// Buses ordered parent-before-child, source first.
  const std::vector<std::size_t>& sweep_order() const noexcept { return order_; }
  const Branch& parent_branch(std::size_t bus) const { return branches_[bus]; }
  const std::vector<std::size_t>& children(std::size_t bus) const { return children_[bus]; }

  /// Single-phase nodes, ordered by bus then phase.
  std::size_t node_count() const noexcept { return nodes_.size(); }
  const std::vector<NodeRef>& nodes() const noexcept { return nodes_; }
  std::size_t node_index(const NodeRef& n) const;
  std::optional<std::size_t> find_node(const NodeRef& n) const;
  std::size_t node_index(std::size_t bus, Phase p) const;

  double electrical_distance(const NodeRef& node,
                             DistanceMetric metric = DistanceMetric::Kilometres) const;
  double electrical_distance(std::size_t node,
                             DistanceMetric metric = DistanceMetric::Kilometres) const;
  double max_distance(DistanceMetric metric = DistanceMetric::Kilometres) const;

  /// Regulator instance closest to the node on its source path (same phase).
  std::optional<std::size_t> upstream_regulator(const NodeRef& node) const;
  std::optional<std::size_t> upstream_regulator(std::size_t node) const;

  std::size_t unit_of(std::size_t regulator) const { return unit_of_[regulator]; }
  std::size_t unit_index(std::string_view unit_id) const;
  std::size_t load_index(std::string_view id) const;
  std::size_t plant_index(std::string_view id) const;

  /// Per-instance tap vector from per-unit taps.
  std::vector<int> instance_taps(const std::vector<int>& unit_taps) const;
  std::vector<int> initial_unit_taps() const;

  /// Node indices of a plant's connection point (one per phase).
  std::vector<std::size_t> plant_nodes(std::size_t plant) const;
  std::size_t secondary_node(std::size_t regulator) const;
  std::size_t primary_node(std::size_t regulator) const;

  /// Phase-to-neutral voltage base in volts.
  double base_volts(std::size_t bus) const;

 private:
  void validate_and_index();

  FeederData data_;
  std::size_t source_ = 0;
  std::unordered_map<std::string, std::size_t> bus_lookup_;
  std::unordered_map<std::string, std::size_t> load_lookup_, plant_lookup_, unit_lookup_;
  std::vector<std::size_t> order_;
  std::vector<Branch> branches_;
  std::vector<std::vector<std::size_t>> children_;
  std::vector<NodeRef> nodes_;
  std::vector<std::array<int, 3>> node_of_bus_;  // -1 when phase absent
  std::vector<double> dist_km_;                  // per bus
  std::vector<std::array<double, 3>> dist_z_;    // per bus and phase, ohms
  std::vector<std::optional<std::size_t>> upstream_;  // per node
  std::vector<RegulatorUnit> units_;
  std::vector<std::size_t> unit_of_;
};

FeederModel load_feeder(const std::filesystem::path& path);
FeederModel parse_feeder(std::string_view json_text);
std::string feeder_to_json(const FeederData& data);
void write_feeder(const FeederData& data, const std::filesystem::path& path);

}  // namespace voltvar
