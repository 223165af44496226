#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aeronoise/acoustics.hpp"
#include "aeronoise/civil_time.hpp"
#include "aeronoise/error.hpp"
#include "aeronoise/ingest.hpp"

namespace aeronoise {

// ---------------------------------------------------------------------------
// Tract <-> NMT mapping

enum class MappingMode { Containing, NearestCentroid };

/// tract_id -> nmt_id
using TractMapping = std::map<std::string, std::string, std::less<>>;

/// Great-circle distance in km.
inline double haversine_km(LatLon a, LatLon b) {
  constexpr double kRad = std::numbers::pi / 180.0;
  constexpr double kEarthKm = 6371.0088;
  const double dlat = (b.lat - a.lat) * kRad;
  const double dlon = (b.lon - a.lon) * kRad;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kRad) * std::cos(b.lat * kRad) * std::sin(dlon / 2) *
                       std::sin(dlon / 2);
  return 2.0 * kEarthKm * std::asin(std::min(1.0, std::sqrt(h)));
}

inline TractMapping map_tracts(std::span<const NmtMeta> nmts, std::span<const TractMeta> tracts,
                               MappingMode mode = MappingMode::Containing) {
  std::set<std::string_view> known;
  for (const auto& t : tracts) known.insert(t.tract_id);
  for (const auto& n : nmts)
    if (!known.count(n.tract_id))
      throw Error(ErrorKind::DanglingReference,
                  "nmt " + n.nmt_id + " references unknown tract " + n.tract_id);

  TractMapping m;
  if (mode == MappingMode::Containing) {
    for (const auto& n : nmts) {
      auto [it, fresh] = m.emplace(n.tract_id, n.nmt_id);
      if (!fresh)
        throw Error(ErrorKind::AmbiguousMapping,
                    "tract " + n.tract_id + " holds " + it->second + " and " + n.nmt_id);
    }
    return m;
  }

  std::vector<const NmtMeta*> by_id;
  for (const auto& n : nmts) by_id.push_back(&n);
  std::sort(by_id.begin(), by_id.end(),
            [](const NmtMeta* a, const NmtMeta* b) { return a->nmt_id < b->nmt_id; });
  if (by_id.empty()) return m;
  for (const auto& t : tracts) {
    const NmtMeta* best = nullptr;
    double best_d = 0.0;
    for (const auto* n : by_id) {
      const double d = haversine_km(t.centroid, n->location);
      if (!best || d < best_d) {
        best = n;
        best_d = d;
      }
    }
    m.emplace(t.tract_id, best->nmt_id);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Tract x hour join

struct TractHourRecord {
  std::string tract_id;
  CivilTime hour_start;
  double population_defacto = 0.0;
  double population_resident = 0.0;
  std::optional<double> laeq;
  std::string source_nmt;

  friend bool operator==(const TractHourRecord&, const TractHourRecord&) = default;
};

/// One record per mapped tract per window hour, sorted by (tract, hour).
inline std::vector<TractHourRecord> fuse(std::span<const PopulationRecord> population,
                                         std::span<const HourlyLaeq> hourly,
                                         const TractMapping& mapping,
                                         std::span<const TractMeta> tracts, const Window& window) {
  std::map<std::pair<std::string_view, std::int64_t>, double> pop;
  for (const auto& p : population) pop.emplace(std::pair{std::string_view(p.tract_id), p.hour_start.hour_index()}, p.defacto_count);
  std::map<std::pair<std::string_view, std::int64_t>, std::optional<double>> noise;
  for (const auto& h : hourly) noise.emplace(std::pair{std::string_view(h.nmt_id), h.hour_start.hour_index()}, h.laeq);
  std::map<std::string_view, double> residents;
  for (const auto& t : tracts) residents.emplace(t.tract_id, t.resident_count);

  std::vector<TractHourRecord> out;
  std::vector<std::string> missing;
  for (const auto& [tract, nmt] : mapping) {
    const auto res = residents.find(tract);
    if (res == residents.end())
      throw Error(ErrorKind::DanglingReference, "mapped tract " + tract + " not in tract table");
    for (auto h = window.start; h < window.end; h = h.plus_hours(1)) {
      const auto p = pop.find({tract, h.hour_index()});
      if (p == pop.end()) {
        missing.push_back("(" + tract + ", " + to_string(h) + ")");
        continue;
      }
      TractHourRecord r;
      r.tract_id = tract;
      r.hour_start = h;
      r.population_defacto = p->second;
      r.population_resident = res->second;
      if (const auto n = noise.find({nmt, h.hour_index()}); n != noise.end()) r.laeq = n->second;
      r.source_nmt = nmt;
      out.push_back(std::move(r));
    }
  }
  if (!missing.empty()) {
    std::string msg = std::to_string(missing.size()) + " tract-hours without population:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " " + missing[i];
    if (missing.size() > 20) msg += " ...";
    throw Error(ErrorKind::MissingPopulation, msg);
  }
  return out;
}

inline std::string serialize_fused(std::span<const TractHourRecord> rows) {
  std::string out = "tract_id,hour_start,population_defacto,population_resident,laeq_dba,source_nmt\n";
  for (const auto& r : rows) {
    out += r.tract_id + ',' + to_string(r.hour_start) + ',';
    append_number(out, r.population_defacto);
    out += ',';
    append_number(out, r.population_resident);
    out += ',';
    if (r.laeq) append_number(out, *r.laeq);
    out += ',' + r.source_nmt + '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runway use and wind geometry

/// Minimal angular distance in degrees, in [0, 180].
inline double angular_distance(double a_deg, double b_deg) {
  double d = std::fmod(std::abs(a_deg - b_deg), 360.0);
  return std::min(d, 360.0 - d);
}

/// Magnetic heading from a runway designator: leading number x 10 ("32L" -> 320).
inline double runway_heading(std::string_view designator) {
  int n = 0;
  std::size_t i = 0;
  for (; i < designator.size() && i < 2 && std::isdigit(static_cast<unsigned char>(designator[i])); ++i)
    n = n * 10 + (designator[i] - '0');
  if (i == 0 || n < 1 || n > 36)
    throw Error(ErrorKind::InvalidConfig, "bad runway designator '" + std::string(designator) + "'");
  return std::fmod(n * 10.0, 360.0);
}

struct RunwayRoles {
  std::string departure;
  std::string arrival;

  friend bool operator==(const RunwayRoles&, const RunwayRoles&) = default;
};

/// hour index -> active runways.
using RunwaySchedule = std::map<std::int64_t, RunwayRoles>;

/// Majority runway per hour and operation type; ties go to the runway used
/// first within the hour. Hours without operations of a type inherit the
/// nearest earlier hour (or, at the start of the window, the first later one).
inline RunwaySchedule infer_runway_schedule(std::span<const FlightEvent> flights,
                                            const Window& window) {
  struct Use {
    int count = 0;
    std::int64_t first = 0;
  };
  std::map<std::int64_t, std::map<std::string, Use>> use[2];
  for (const auto& f : flights) {
    if (!window.contains(f.timestamp)) continue;
    auto& u = use[static_cast<int>(f.operation)][f.timestamp.hour_index()][f.runway];
    if (u.count == 0 || f.timestamp.seconds < u.first) u.first = f.timestamp.seconds;
    ++u.count;
  }
  if (use[0].empty() && use[1].empty())
    throw Error(ErrorKind::InsufficientData, "no flights in window to infer runway use");

  const std::int64_t h0 = window.start.hour_index();
  const std::int64_t h1 = window.end.hour_index();
  std::vector<std::string> roles[2];
  for (int op = 0; op < 2; ++op) {
    auto& v = roles[op];
    v.assign(static_cast<std::size_t>(h1 - h0), {});
    for (const auto& [hour, runways] : use[op]) {
      const std::string* best = nullptr;
      Use best_use;
      for (const auto& [rw, u] : runways) {
        if (!best || u.count > best_use.count ||
            (u.count == best_use.count && u.first < best_use.first)) {
          best = &rw;
          best_use = u;
        }
      }
      v[static_cast<std::size_t>(hour - h0)] = *best;
    }
    std::string carry;
    for (auto& r : v) {
      if (r.empty()) r = carry;
      else carry = r;
    }
    std::string next;
    for (auto it = v.rbegin(); it != v.rend(); ++it) {
      if (!it->empty()) next = *it;
      else *it = next;
    }
  }
  // An operation type never seen borrows the other type's runway.
  for (int op = 0; op < 2; ++op)
    if (use[op].empty()) roles[op] = roles[1 - op];

  RunwaySchedule s;
  for (std::int64_t h = h0; h < h1; ++h) {
    const auto i = static_cast<std::size_t>(h - h0);
    s.emplace(h, RunwayRoles{roles[0][i], roles[1][i]});
  }
  return s;
}

// ---------------------------------------------------------------------------
// Feature table

inline constexpr std::size_t kFeatureCount = 22;
inline constexpr std::size_t kComboCount = 12;

/// Fixed column order of the model inputs.
enum FeatureIndex : std::size_t {
  kHourOfDay = 0,
  kDayOfWeek,
  kNmtLat,
  kNmtLon,
  kTemperature,
  kWindSpeed,
  kWindDeviation,
  kCloudCover,
  kDepartures,
  kArrivals,
  kFirstCombo,
};

inline constexpr std::array<std::string_view, kFirstCombo> kBaseFeatureNames{
    "hour_of_day",    "day_of_week",   "nmt_lat",        "nmt_lon",       "temperature_c",
    "wind_speed_kt",  "wind_deviation_deg", "cloud_cover_tenths", "departures", "arrivals"};

struct AircraftEngine {
  std::string aircraft;
  std::string engine;

  friend auto operator<=>(const AircraftEngine&, const AircraftEngine&) = default;
};

inline std::string combo_feature_name(const AircraftEngine& c) {
  std::string s = "n_";
  for (char ch : c.aircraft + "_" + c.engine)
    s += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return s;
}

/// Most frequent aircraft-engine pairs over the window, by count then name.
inline std::vector<AircraftEngine> rank_combos(std::span<const FlightEvent> flights,
                                               const Window& window,
                                               std::size_t k = kComboCount) {
  std::map<AircraftEngine, int> counts;
  for (const auto& f : flights)
    if (window.contains(f.timestamp)) ++counts[{f.aircraft_type, f.engine_type}];
  std::vector<std::pair<AircraftEngine, int>> v(counts.begin(), counts.end());
  std::stable_sort(v.begin(), v.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<AircraftEngine> out;
  for (std::size_t i = 0; i < v.size() && i < k; ++i) out.push_back(v[i].first);
  return out;
}

struct FeatureRow {
  std::string nmt_id;
  CivilTime hour_start;
  Operation operation = Operation::Departure;
  std::array<double, kFeatureCount> x{};
  std::optional<double> takeoff_laeq;
  std::optional<double> landing_laeq;

  std::optional<double> target() const {
    return operation == Operation::Departure ? takeoff_laeq : landing_laeq;
  }
};

struct FeatureTable {
  std::vector<std::string> feature_names;
  std::vector<AircraftEngine> combos;
  std::vector<FeatureRow> rows;

  /// Index of a named column, or nullopt.
  std::optional<std::size_t> feature_index(std::string_view name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i)
      if (feature_names[i] == name) return i;
    return std::nullopt;
  }
};

/// One row per (nmt, hour, operation) in key order. Combo counts cover every
/// movement of that aircraft-engine pair in the hour; both targets carry the
/// NMT's hourly LAeq.
inline FeatureTable build_features(std::span<const FlightEvent> flights,
                                   std::span<const WeatherHour> weather,
                                   std::span<const NmtMeta> nmts,
                                   std::span<const HourlyLaeq> hourly,
                                   const RunwaySchedule& schedule, const Window& window) {
  FeatureTable t;
  t.combos = rank_combos(flights, window);
  for (auto n : kBaseFeatureNames) t.feature_names.emplace_back(n);
  for (std::size_t i = 0; i < kComboCount; ++i)
    t.feature_names.push_back(i < t.combos.size() ? combo_feature_name(t.combos[i])
                                                  : "n_unused_" + std::to_string(i));

  std::map<std::int64_t, const WeatherHour*> wx;
  for (const auto& w : weather) wx.emplace(w.hour_start.hour_index(), &w);

  std::map<AircraftEngine, std::size_t> combo_slot;
  for (std::size_t i = 0; i < t.combos.size(); ++i) combo_slot.emplace(t.combos[i], i);

  struct HourOps {
    double departures = 0, arrivals = 0;
    std::array<double, kComboCount> combo{};
  };
  std::map<std::int64_t, HourOps> ops;
  for (const auto& f : flights) {
    if (!window.contains(f.timestamp)) continue;
    auto& h = ops[f.timestamp.hour_index()];
    (f.operation == Operation::Departure ? h.departures : h.arrivals) += 1;
    if (auto it = combo_slot.find({f.aircraft_type, f.engine_type}); it != combo_slot.end())
      h.combo[it->second] += 1;
  }

  std::map<std::pair<std::string_view, std::int64_t>, std::optional<double>> noise;
  for (const auto& h : hourly) noise.emplace(std::pair{std::string_view(h.nmt_id), h.hour_start.hour_index()}, h.laeq);

  std::vector<const NmtMeta*> sorted;
  for (const auto& n : nmts) sorted.push_back(&n);
  std::sort(sorted.begin(), sorted.end(),
            [](const NmtMeta* a, const NmtMeta* b) { return a->nmt_id < b->nmt_id; });

  for (auto h = window.start; h < window.end; h = h.plus_hours(1))
    if (!wx.count(h.hour_index()))
      throw Error(ErrorKind::MissingWeather, "no weather for " + to_string(h));

  const HourOps none{};
  for (const auto* n : sorted) {
    for (auto h = window.start; h < window.end; h = h.plus_hours(1)) {
      const auto& w = *wx.at(h.hour_index());
      const auto oit = ops.find(h.hour_index());
      const HourOps& o = oit == ops.end() ? none : oit->second;
      const auto sit = schedule.find(h.hour_index());
      std::optional<double> level;
      if (auto it = noise.find({n->nmt_id, h.hour_index()}); it != noise.end()) level = it->second;
      for (Operation op : {Operation::Departure, Operation::Arrival}) {
        FeatureRow r;
        r.nmt_id = n->nmt_id;
        r.hour_start = h;
        r.operation = op;
        r.x[kHourOfDay] = h.hour_of_day();
        r.x[kDayOfWeek] = h.day_of_week();
        r.x[kNmtLat] = n->location.lat;
        r.x[kNmtLon] = n->location.lon;
        r.x[kTemperature] = w.temperature_c;
        r.x[kWindSpeed] = w.wind_speed_kt;
        double dev = 0.0;
        if (sit != schedule.end()) {
          const auto& rw = op == Operation::Departure ? sit->second.departure : sit->second.arrival;
          if (!rw.empty()) dev = angular_distance(w.wind_direction_deg, runway_heading(rw));
        }
        r.x[kWindDeviation] = dev;
        r.x[kCloudCover] = w.cloud_cover_tenths;
        r.x[kDepartures] = o.departures;
        r.x[kArrivals] = o.arrivals;
        for (std::size_t c = 0; c < kComboCount; ++c) r.x[kFirstCombo + c] = o.combo[c];
        r.takeoff_laeq = level;
        r.landing_laeq = level;
        t.rows.push_back(std::move(r));
      }
    }
  }
  return t;
}

inline std::string serialize_features(const FeatureTable& t) {
  std::string out = "nmt_id,hour_start,operation";
  for (const auto& n : t.feature_names) out += ',' + n;
  out += ",takeoff_laeq,landing_laeq\n";
  for (const auto& r : t.rows) {
    out += r.nmt_id + ',' + to_string(r.hour_start) + ',';
    out += to_string(r.operation);
    for (double v : r.x) {
      out += ',';
      append_number(out, v);
    }
    out += ',';
    if (r.takeoff_laeq) append_number(out, *r.takeoff_laeq);
    out += ',';
    if (r.landing_laeq) append_number(out, *r.landing_laeq);
    out += '\n';
  }
  return out;
}

}  // namespace aeronoise
