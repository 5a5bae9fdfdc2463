#include "voltvar/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "voltvar/error.hpp"

namespace voltvar::synthetic {

namespace {

constexpr double kPvPeakOverRating = 0.85;

struct Conductor {
  Complex self, mutual;  // ohm/km
};

const Conductor kTrunk{{0.19, 0.47}, {0.06, 0.20}};
const Conductor kBranch{{0.32, 0.52}, {0.06, 0.19}};
const Conductor kLateral{{0.42, 0.50}, {0.0, 0.0}};
const Conductor kLongLateral{{0.19, 0.42}, {0.0, 0.0}};

class Builder {
 public:
  explicit Builder(double base_kv) : base_kv_(base_kv) {}

  void bus(const std::string& id, std::vector<Phase> phases) {
    data.buses.push_back({id, std::move(phases), base_kv_});
  }

  void line(const std::string& from, const std::string& to, double km, const Conductor& c) {
    LineSection l;
    l.id = "L_" + to;
    l.from_bus = from;
    l.to_bus = to;
    l.length_km = km;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) l.z_ohm[i][j] = (i == j ? c.self : c.mutual) * km;
    data.lines.push_back(l);
  }

  void load(const std::string& bus, Phase p, double kw, double pf) {
    const double kvar = kw * std::tan(std::acos(pf));
    data.loads.push_back({"ld_" + bus + "_" + phase_letter(p), bus, p, kw, kvar});
  }

  FeederData data;

 private:
  double base_kv_;
};

const std::vector<Phase> kABC{Phase::A, Phase::B, Phase::C};

}  // namespace

FeederData tutorial_feeder() {
  Builder b(12.47);
  const std::vector<Phase> a{Phase::A};
  b.bus("src", a);
  b.bus("n1", a);
  b.bus("n1r", a);
  b.bus("n2", a);
  b.bus("n3", a);
  b.bus("n4", a);
  b.line("src", "n1", 2.0, kLateral);
  b.line("n1r", "n2", 2.0, kLateral);
  b.line("n2", "n3", 2.0, kLateral);
  b.line("n3", "n4", 2.0, kLateral);
  b.load("n1", Phase::A, 150.0, 0.95);
  b.load("n2", Phase::A, 200.0, 0.92);
  b.load("n3", Phase::A, 120.0, 0.95);
  b.load("n4", Phase::A, 180.0, 0.93);
  b.data.pv_plants.push_back({"pv1", "n4", a, 500.0});
  Regulator r;
  r.id = "vr1";
  r.phase = Phase::A;
  r.primary_bus = "n1";
  r.secondary_bus = "n1r";
  b.data.regulators.push_back(r);
  b.data.source = {"src", {1.0, 1.0, 1.0}};
  return b.data;
}

FeederData test_feeder() {
  Builder b(12.47);
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> kw3(18.0, 34.0), kw1(22.0, 46.0), pf(0.90, 0.97);

  auto three_phase_loads = [&](const std::string& bus) {
    for (Phase p : kABC) b.load(bus, p, kw3(rng), pf(rng));
  };
  auto lateral = [&](const std::string& from, const std::string& prefix, Phase p, int n, double km,
                     const Conductor& c) {
    std::string prev = from;
    for (int i = 1; i <= n; ++i) {
      const std::string id = prefix + std::to_string(i);
      b.bus(id, {p});
      b.line(prev, id, km, c);
      b.load(id, p, kw1(rng), pf(rng));
      prev = id;
    }
    return prev;
  };
  auto branch3 = [&](const std::string& from, const std::string& prefix, int n, double km) {
    std::string prev = from;
    for (int i = 1; i <= n; ++i) {
      const std::string id = prefix + std::to_string(i);
      b.bus(id, kABC);
      b.line(prev, id, km, kBranch);
      three_phase_loads(id);
      prev = id;
    }
    return prev;
  };

  b.bus("sub", kABC);
  // Trunk t1..t12 with the ganged regulator between t4 and t4r.
  std::string prev = "sub";
  for (int i = 1; i <= 12; ++i) {
    const std::string id = "t" + std::to_string(i);
    b.bus(id, kABC);
    b.line(prev, id, 1.3, kTrunk);
    three_phase_loads(id);
    prev = id;
    if (i == 4) {
      b.bus("t4r", kABC);
      for (Phase p : kABC) {
        Regulator r;
        r.id = std::string("vr1") + phase_letter(p);
        r.phase = p;
        r.primary_bus = "t4";
        r.secondary_bus = "t4r";
        r.gang = "vr1";
        b.data.regulators.push_back(r);
      }
      prev = "t4r";
    }
  }

  lateral("t1", "la", Phase::C, 6, 0.8, kLateral);
  lateral("t2", "lb", Phase::A, 6, 0.8, kLateral);
  lateral("t3", "lc", Phase::B, 6, 0.8, kLateral);
  lateral("t3", "ll", Phase::C, 6, 0.8, kLateral);
  lateral("t6", "ld", Phase::A, 7, 0.8, kLateral);
  lateral("t9", "le", Phase::A, 8, 0.8, kLateral);
  lateral("t10", "lh", Phase::B, 8, 0.8, kLateral);
  lateral("t11", "lf", Phase::C, 6, 0.8, kLateral);
  lateral("t12", "lk", Phase::C, 6, 0.8, kLateral);

  // Long single-phase lateral with its own regulator.
  lateral("t7", "lg", Phase::B, 4, 1.1, kLongLateral);
  b.bus("lg4r", {Phase::B});
  {
    Regulator r;
    r.id = "vr2";
    r.phase = Phase::B;
    r.primary_bus = "lg4";
    r.secondary_bus = "lg4r";
    b.data.regulators.push_back(r);
  }
  const std::string lg_end = lateral("lg4r", "lgx", Phase::B, 8, 1.0, kLongLateral);

  // Three-phase branches.
  const std::string m_end = branch3("t8", "m", 6, 1.0);
  branch3("t5", "n", 8, 0.9);
  lateral("m3", "lm", Phase::B, 5, 0.7, kLateral);
  lateral("m5", "li", Phase::C, 6, 0.7, kLateral);
  lateral("n4", "ln", Phase::C, 5, 0.7, kLateral);
  lateral("n6", "lj", Phase::A, 6, 0.7, kLateral);

  double total_kw = 0.0;
  for (const auto& ld : b.data.loads) total_kw += ld.kw;
  // PV peak output equals the coincident peak load (about 85% of summed peaks).
  const double pv_peak = 0.85 * total_kw;
  const double share[3] = {0.42, 0.12, 0.46};
  b.data.pv_plants.push_back({"pv1", "t12", kABC, share[0] * pv_peak / kPvPeakOverRating});
  b.data.pv_plants.push_back({"pv2", lg_end, {Phase::B}, share[1] * pv_peak / kPvPeakOverRating});
  b.data.pv_plants.push_back({"pv3", m_end, kABC, share[2] * pv_peak / kPvPeakOverRating});
  for (auto& pv : b.data.pv_plants) pv.rated_kva = std::round(pv.rated_kva);

  b.data.source = {"sub", {1.02, 1.02, 1.02}};
  return b.data;
}

// ---------------------------------------------------------------------------
// Profiles

namespace {

double bump(double h, double centre, double width) {
  double d = std::fmod(h - centre + 36.0, 24.0) - 12.0;
  return std::exp(-0.5 * d * d / (width * width));
}

double residential(double h) {
  return 0.34 + 0.22 * bump(h, 7.5, 1.1) + 0.08 * bump(h, 13.0, 2.5) + 0.62 * bump(h, 19.0, 1.9);
}

double commercial(double h) {
  const double on = 1.0 / (1.0 + std::exp(-(h - 8.0) * 2.0));
  const double off = 1.0 / (1.0 + std::exp((h - 18.0) * 2.0));
  return 0.30 + 0.70 * on * off;
}

double clear_sky(double h) {
  constexpr double rise = 6.0, set = 20.0;
  if (h <= rise || h >= set) return 0.0;
  return std::pow(std::sin(std::numbers::pi * (h - rise) / (set - rise)), 1.25);
}

std::string stamp(std::chrono::sys_days day0, int minute) {
  const auto day = day0 + std::chrono::days(minute / 1440);
  const std::chrono::year_month_day ymd(day);
  const int m = minute % 1440;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), m / 60, m % 60);
  return buf;
}

std::chrono::sys_days parse_date(const std::string& s) {
  int y = 0;
  unsigned mo = 0, d = 0;
  if (std::sscanf(s.c_str(), "%d-%u-%u", &y, &mo, &d) != 3)
    throw DomainError("invalid start date '" + s + "' (expected YYYY-MM-DD)");
  const std::chrono::year_month_day ymd{std::chrono::year(y), std::chrono::month(mo), std::chrono::day(d)};
  if (!ymd.ok()) throw DomainError("invalid start date '" + s + "'");
  return std::chrono::sys_days(ymd);
}

// Cloud transmission at one-minute resolution for one day; events drift
// across the plants with a per-plant lag.
std::vector<std::vector<double>> cloud_day(std::mt19937_64& rng, std::size_t plants) {
  constexpr int kMin = 1440;
  std::vector<double> opacity(kMin + 60, 0.0);
  std::exponential_distribution<double> gap(1.0 / 18.0), dur(1.0 / 9.0);
  std::uniform_real_distribution<double> depth(0.35, 0.8);
  double t = gap(rng);
  while (t < kMin + 60) {
    const double len = std::max(2.0, dur(rng));
    const double o = depth(rng);
    for (int m = static_cast<int>(t); m < std::min<int>(kMin + 60, static_cast<int>(t + len)); ++m) {
      const double edge = std::min({1.0, (m - t + 1.0) / 2.0, (t + len - m) / 2.0});
      opacity[static_cast<std::size_t>(m)] = std::max(opacity[static_cast<std::size_t>(m)], o * std::max(0.0, edge));
    }
    t += len + gap(rng);
  }
  std::vector<std::vector<double>> out(plants, std::vector<double>(kMin));
  for (std::size_t k = 0; k < plants; ++k) {
    const int lag = static_cast<int>(k) * 6;
    for (int m = 0; m < kMin; ++m) out[k][static_cast<std::size_t>(m)] = 1.0 - opacity[static_cast<std::size_t>(m + lag)];
  }
  return out;
}

}  // namespace

ProfileSet generate_profiles(const FeederModel& model, const ProfileOptions& o) {
  if (o.days <= 0) throw DomainError("profile horizon must be at least one day");
  if (o.step_minutes <= 0 || 1440 % o.step_minutes != 0)
    throw DomainError("step_minutes must divide a day");
  const auto day0 = parse_date(o.start_date);
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  const std::size_t nl = model.loads().size(), nk = model.pv_plants().size();
  struct LoadTraits {
    bool commercial;
    double shift_h, amp, ratio, rho, sigma;
  };
  std::vector<LoadTraits> traits(nl);
  for (std::size_t i = 0; i < nl; ++i) {
    const auto& ld = model.loads()[i];
    auto& t = traits[i];
    t.commercial = u01(rng) < 0.2;
    t.shift_h = (u01(rng) - 0.5) * 1.6;
    t.amp = 0.85 + 0.25 * u01(rng);
    t.ratio = ld.kw > 0.0 ? ld.kvar / ld.kw : 0.0;
    t.rho = std::exp(-1.0 / (10.0 + 30.0 * u01(rng)));
    t.sigma = 0.04 + 0.04 * u01(rng);
  }

  std::vector<DayKind> kinds = o.day_kinds;
  if (kinds.empty())
    for (int d = 0; d < o.days; ++d) kinds.push_back(u01(rng) < o.cloudy_probability ? DayKind::Cloudy : DayKind::Clear);
  if (static_cast<int>(kinds.size()) < o.days) throw DomainError("day_kinds shorter than the horizon");

  const std::size_t steps_per_day = static_cast<std::size_t>(1440 / o.step_minutes);
  const std::size_t n = steps_per_day * static_cast<std::size_t>(o.days);
  ProfileSet ps;
  ps.n_loads = nl;
  ps.n_plants = nk;
  ps.timestamps.reserve(n);
  ps.load_kw.assign(n * nl, 0.0);
  ps.load_kvar.assign(n * nl, 0.0);
  ps.pv_kw.assign(n * nk, 0.0);
  for (std::size_t s = 0; s < n; ++s) ps.timestamps.push_back(stamp(day0, static_cast<int>(s) * o.step_minutes));

  std::vector<double> noise(nl, 0.0);
  const double inv = 1.0 / o.step_minutes;
  for (int d = 0; d < o.days; ++d) {
    const double day_factor = 1.0 + 0.06 * n01(rng);
    std::vector<double> own(nl);
    for (auto& f : own) f = 1.0 + 0.05 * n01(rng);
    const double pv_day = kinds[static_cast<std::size_t>(d)] == DayKind::Clear ? 1.0 : 0.9;
    std::vector<std::vector<double>> clouds;
    if (kinds[static_cast<std::size_t>(d)] == DayKind::Cloudy) clouds = cloud_day(rng, nk);

    for (int m = 0; m < 1440; ++m) {
      const std::size_t s = static_cast<std::size_t>(d) * steps_per_day + static_cast<std::size_t>(m / o.step_minutes);
      const double h = m / 60.0;
      for (std::size_t i = 0; i < nl; ++i) {
        const auto& t = traits[i];
        noise[i] = t.rho * noise[i] + std::sqrt(1.0 - t.rho * t.rho) * t.sigma * n01(rng);
        const double shape = t.commercial ? commercial(h - t.shift_h) : residential(h - t.shift_h);
        const double kw = std::max(0.05, shape * t.amp * day_factor * own[i] * (1.0 + noise[i])) *
                          model.loads()[i].kw * o.load_scale;
        ps.load_kw[s * nl + i] += kw * inv;
        ps.load_kvar[s * nl + i] += kw * t.ratio * inv;
      }
      for (std::size_t k = 0; k < nk; ++k) {
        const double cap = kPvPeakOverRating * model.pv_plants()[k].rated_kva;
        double p = cap * clear_sky(h) * pv_day * o.pv_scale;
        if (!clouds.empty()) p *= clouds[k][static_cast<std::size_t>(m)];
        ps.pv_kw[s * nk + k] += std::min(p, model.pv_plants()[k].rated_kva) * inv;
      }
    }
  }
  return ps;
}

ProfileSet stress_day(const FeederModel& model, std::uint64_t seed) {
  ProfileOptions o;
  o.days = 1;
  o.seed = seed;
  o.day_kinds = {DayKind::Clear};
  o.load_scale = 0.8;
  o.start_date = "2024-07-06";
  return generate_profiles(model, o);
}

}  // namespace voltvar::synthetic
