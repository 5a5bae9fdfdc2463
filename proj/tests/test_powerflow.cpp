#include <doctest.h>

#include <Eigen/Dense>

#include "support.hpp"
#include "voltvar/error.hpp"
#include "voltvar/powerflow.hpp"
#include "voltvar/synthetic.hpp"

using namespace voltvar;
using testsupport::two_bus;
using testsupport::two_bus_receiving_volts;

namespace {

// Source power from loads plus series losses computed from the solved voltages.
Complex independent_head_kva(const FeederModel& m, const InjectionState& st, const VoltageSolution& sol) {
  Complex total{};
  for (std::size_t i = 0; i < m.loads().size(); ++i) total += Complex(st.load_kw[i], st.load_kvar[i]);
  for (std::size_t k = 0; k < m.pv_plants().size(); ++k) total -= Complex(st.pv_kw[k], st.pv_kvar[k]);
  for (const auto& l : m.lines()) {
    const auto to = m.bus_index(l.to_bus), from = m.bus_index(l.from_bus);
    const auto& ph = m.buses()[to].phases;
    const auto n = static_cast<Eigen::Index>(ph.size());
    Eigen::MatrixXcd z(n, n);
    Eigen::VectorXcd dv(n);
    for (Eigen::Index a = 0; a < n; ++a) {
      for (Eigen::Index b = 0; b < n; ++b) z(a, b) = l.z_ohm[int(ph[a])][int(ph[b])];
      dv(a) = sol.v_pu[m.node_index(from, ph[a])] * m.base_volts(from) -
              sol.v_pu[m.node_index(to, ph[a])] * m.base_volts(to);
    }
    const Eigen::VectorXcd i = z.partialPivLu().solve(dv);
    for (Eigen::Index a = 0; a < n; ++a) total += dv(a) * std::conj(i(a)) / 1e3;
  }
  return total;
}

}  // namespace

TEST_CASE("two-bus case matches the closed form") {
  const Complex z{0.8, 1.6};
  for (auto [kw, kvar] : {std::pair{300.0, 100.0}, {900.0, 400.0}, {-500.0, 50.0}, {150.0, -200.0}}) {
    const FeederModel m(two_bus(z, kw, kvar));
    const auto sol = solve(m, InjectionState::nominal(m));
    const double vs = m.base_volts(0);
    const double expect = two_bus_receiving_volts(vs, z, kw * 1e3, kvar * 1e3) / vs;
    CHECK(sol.vmag_pu[m.node_index(NodeRef::parse("r.a"))] == doctest::Approx(expect).epsilon(1e-10));
    CHECK(std::abs(sol.vmag_pu[m.node_index(NodeRef::parse("r.a"))] - expect) <= 1e-8);
  }
}

TEST_CASE("uncoupled three-phase lines solve each phase independently") {
  const Complex z{0.5, 1.1};
  const FeederModel m(two_bus(z, 400, 150, {Phase::A, Phase::B, Phase::C}, 1.03));
  const auto sol = solve(m, InjectionState::nominal(m));
  const double vs = 1.03 * m.base_volts(0);
  const double expect = two_bus_receiving_volts(vs, z, 4e5, 1.5e5) / m.base_volts(1);
  for (const char* n : {"r.a", "r.b", "r.c"})
    CHECK(std::abs(sol.vmag_pu[m.node_index(NodeRef::parse(n))] - expect) <= 1e-8);
}

TEST_CASE("regulators apply an ideal ratio") {
  const FeederModel m(synthetic::tutorial_feeder());
  auto st = InjectionState::nominal(m);
  for (int tap : {-16, -5, 0, 7, 16}) {
    st.taps = {tap};
    const auto sol = solve(m, st);
    const double ratio = 1.0 + tap * m.regulators()[0].step_pu;
    CHECK(sol.vmag_pu[m.secondary_node(0)] == doctest::Approx(ratio * sol.vmag_pu[m.primary_node(0)]).epsilon(1e-12));
  }
}

TEST_CASE("source power equals loads plus series losses on the test feeder") {
  const FeederModel m(synthetic::test_feeder());
  auto st = InjectionState::nominal(m);
  st.pv_kw = {500.0, 150.0, 600.0};
  st.pv_kvar = {-100.0, 40.0, 0.0};
  st.taps = m.instance_taps({4, -3});
  const auto sol = solve(m, st);
  CHECK(sol.max_mismatch_pu <= 1e-8);
  Complex head{};
  for (int p = 0; p < 3; ++p) {
    head += sol.head_kva[p];
    CHECK(std::abs(sol.head_kva[p] - sol.load_kva[p] - sol.loss_kva[p]) / 1000.0 <= 1e-6);
  }
  CHECK(std::abs(head - independent_head_kva(m, st, sol)) / 1000.0 <= 1e-6);
}

TEST_CASE("measurement vector follows the channel order") {
  const FeederModel m(synthetic::test_feeder());
  auto st = InjectionState::nominal(m);
  st.pv_kw = {300.0, 100.0, 200.0};
  st.pv_kvar = {10.0, -20.0, 30.0};
  const auto sol = solve(m, st);
  const auto names = measurement_channel_names(m);
  const auto v = sol.measurements.vector();
  REQUIRE(names.size() == v.size());
  CHECK(names.front() == "head_p_a");
  CHECK(names[3] == "head_q_a");
  CHECK(names[6] == "pv1_p");
  CHECK(names[9] == "pv1_q");
  CHECK(v[6] == 300.0);
  CHECK(v[10] == -20.0);
  CHECK(sol.measurements.head_p_total() == doctest::Approx(sol.head_kva[0].real() + sol.head_kva[1].real() + sol.head_kva[2].real()));
}

TEST_CASE("reactive injection raises voltage at the plant") {
  const FeederModel m(synthetic::test_feeder());
  auto st = InjectionState::nominal(m);
  st.pv_kw = {200.0, 50.0, 200.0};
  const auto base = solve(m, st);
  st.pv_kvar[2] = 100.0;
  const auto up = solve(m, st);
  for (auto n : m.plant_nodes(2)) CHECK(up.vmag_pu[n] > base.vmag_pu[n]);
}

TEST_CASE("invalid states are rejected") {
  const FeederModel m(synthetic::tutorial_feeder());
  auto st = InjectionState::nominal(m);
  st.taps = {17};
  CHECK_THROWS_AS(solve(m, st), DomainError);
  st = InjectionState::nominal(m);
  st.pv_kw = {400.0};
  st.pv_kvar = {301.0};  // capacity is 300 kvar
  CHECK_THROWS_AS(solve(m, st), DomainError);
  st.pv_kvar = {300.0};
  CHECK_NOTHROW(solve(m, st));
}

TEST_CASE("excess capacity") {
  CHECK(excess_capacity_kvar(500.0, 400.0) == doctest::Approx(300.0));
  CHECK(excess_capacity_kvar(500.0, 500.0) == 0.0);
  CHECK(excess_capacity_kvar(500.0, 600.0) == 0.0);
}

TEST_CASE("divergence reports the worst node") {
  const FeederModel m(two_bus({2.0, 4.0}, 20000.0, 5000.0));
  try {
    solve(m, InjectionState::nominal(m));
    FAIL("expected divergence");
  } catch (const ConvergenceError& e) {
    CHECK(e.worst_node() == "r.a");
    CHECK(e.mismatch() > 1e-8);
  }
}
