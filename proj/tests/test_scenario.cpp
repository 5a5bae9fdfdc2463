#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "voltvar/error.hpp"
#include "voltvar/scenario.hpp"
#include "voltvar/synthetic.hpp"

using namespace voltvar;

namespace {

ProfileSet tutorial_profiles(int days = 3, int step = 15) {
  static const FeederModel m(synthetic::tutorial_feeder());
  synthetic::ProfileOptions o;
  o.days = days;
  o.step_minutes = step;
  o.seed = 5;
  return synthetic::generate_profiles(m, o);
}

}  // namespace

TEST_CASE("load and PV centers are power-weighted distances") {
  const FeederModel m(synthetic::tutorial_feeder());
  Scenario s;
  s.timestamp = "x";
  s.load_kw = {100, 200, 0, 100};  // n1..n4 at 2, 4, 6, 8 km
  s.load_kvar = {0, 0, 0, 0};
  s.pv_kw = {0};
  auto c = compute_centers(s, m);
  CHECK(c.load_center == doctest::Approx((2 * 100 + 4 * 200 + 8 * 100) / 400.0));
  CHECK_FALSE(c.pv_center.has_value());
  s.pv_kw = {50};
  c = compute_centers(s, m);
  REQUIRE(c.pv_center.has_value());
  CHECK(*c.pv_center == doctest::Approx(8.0));
  s.load_kw = {0, 0, 0, 0};
  CHECK_THROWS_AS(compute_centers(s, m), DomainError);
}

TEST_CASE("profile CSV round trip") {
  const FeederModel m(synthetic::tutorial_feeder());
  const auto p = tutorial_profiles(1, 30);
  const auto path = std::filesystem::temp_directory_path() / "voltvar_profiles_roundtrip.csv";
  write_profiles(p, m, path);
  const auto q = read_profiles(path, m);
  CHECK(q.timestamps == p.timestamps);
  REQUIRE(q.load_kw.size() == p.load_kw.size());
  for (std::size_t i = 0; i < p.load_kw.size(); ++i) CHECK(q.load_kw[i] == doctest::Approx(p.load_kw[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < p.pv_kw.size(); ++i) CHECK(q.pv_kw[i] == doctest::Approx(p.pv_kw[i]).epsilon(1e-12));
  std::filesystem::remove(path);
}

TEST_CASE("synthetic profiles are reproducible and dark at night") {
  const auto a = tutorial_profiles(), b = tutorial_profiles();
  CHECK(a.size() == 3 * 96);
  CHECK(a.load_kw == b.load_kw);
  CHECK(a.pv_kw == b.pv_kw);
  CHECK(a.timestamps.front() == "2024-06-01T00:00");
  CHECK(a.pv_p(0, 0) == 0.0);
  CHECK(a.pv_p(12 * 4, 0) > 0.0);
  for (double v : a.load_kw) CHECK(v > 0.0);
}

TEST_CASE("every scenario falls in exactly one block within its edges") {
  const FeederModel m(synthetic::tutorial_feeder());
  const auto sc = build_scenarios(tutorial_profiles(), m);
  const auto g = partition_blocks(sc, 5, 5);
  std::vector<int> hits(sc.size(), 0);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c)
      for (auto i : g.blocks[r * 5 + c]) {
        ++hits[i];
        CHECK(sc[i].p_feeder_kw >= g.feeder_edges[c] - 1e-9);
        CHECK(sc[i].p_feeder_kw <= g.feeder_edges[c + 1] + 1e-9);
        CHECK(sc[i].p_pv_total_kw >= g.pv_edges[r] - 1e-9);
        CHECK(sc[i].p_pv_total_kw <= g.pv_edges[r + 1] + 1e-9);
      }
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(partition_blocks(sc, 0, 5), DomainError);
}

TEST_CASE("guided selection keeps the extremes of each block") {
  const FeederModel m(synthetic::tutorial_feeder());
  const auto sc = build_scenarios(tutorial_profiles(), m);
  const auto g = partition_blocks(sc, 5, 5);
  const auto picked = select_representatives(g, sc);
  std::set<std::size_t> chosen;
  for (const auto& s : picked) chosen.insert(s.index);
  CHECK(chosen.size() == picked.size());
  CHECK(std::is_sorted(picked.begin(), picked.end(), [](auto& a, auto& b) { return a.index < b.index; }));
  CHECK(picked.size() <= 6 * g.non_empty_blocks());
  for (const auto& block : g.blocks) {
    if (block.empty()) continue;
    std::size_t in = 0;
    double lo = 1e300, hi = -1e300;
    for (auto i : block) {
      in += chosen.count(sc[i].index);
      lo = std::min(lo, sc[i].load_center);
      hi = std::max(hi, sc[i].load_center);
    }
    CHECK(in >= 1);
    CHECK(in <= 6);
    bool has_lo = false, has_hi = false;
    for (auto i : block)
      if (chosen.count(sc[i].index)) {
        has_lo |= sc[i].load_center == lo;
        has_hi |= sc[i].load_center == hi;
      }
    CHECK(has_lo);
    CHECK(has_hi);
  }
}

TEST_CASE("random selection is seeded and bounded per block") {
  const FeederModel m(synthetic::tutorial_feeder());
  const auto sc = build_scenarios(tutorial_profiles(), m);
  const auto g = partition_blocks(sc, 5, 5);
  const auto a = select_random(g, sc, 3), b = select_random(g, sc, 3), c = select_random(g, sc, 4);
  auto ids = [](const std::vector<Scenario>& v) {
    std::vector<std::size_t> o;
    for (const auto& s : v) o.push_back(s.index);
    return o;
  };
  CHECK(ids(a) == ids(b));
  CHECK(ids(a) != ids(c));
  std::size_t expect = 0;
  for (const auto& block : g.blocks) expect += std::min<std::size_t>(6, block.size());
  CHECK(a.size() == expect);
}
