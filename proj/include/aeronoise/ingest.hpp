#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "aeronoise/civil_time.hpp"
#include "aeronoise/csv.hpp"
#include "aeronoise/error.hpp"

namespace aeronoise {

// Plausibility band for a single A-weighted reading.
inline constexpr double kMinLevelDba = 0.0;
inline constexpr double kMaxLevelDba = 140.0;
// 3600 s / 3 s.
inline constexpr int kNominalSamplesPerHour = 1200;

struct SplSample {
  std::string nmt_id;
  CivilTime timestamp;
  double level = 0.0;

  friend bool operator==(const SplSample&, const SplSample&) = default;
};

enum class Operation { Departure, Arrival };

constexpr std::string_view to_string(Operation op) {
  return op == Operation::Departure ? "DEPARTURE" : "ARRIVAL";
}

struct FlightEvent {
  CivilTime timestamp;
  Operation operation = Operation::Departure;
  std::string runway;
  std::string aircraft_type;
  std::string engine_type;
  std::string airline;

  friend bool operator==(const FlightEvent&, const FlightEvent&) = default;
};

struct WeatherHour {
  CivilTime hour_start;
  double temperature_c = 0.0;
  double wind_speed_kt = 0.0;
  double wind_direction_deg = 0.0;
  int cloud_cover_tenths = 0;

  friend bool operator==(const WeatherHour&, const WeatherHour&) = default;
};

struct PopulationRecord {
  std::string tract_id;
  CivilTime hour_start;
  double defacto_count = 0.0;

  friend bool operator==(const PopulationRecord&, const PopulationRecord&) = default;
};

enum class LandUse { Commercial, Residential, Mixed, Unknown };

constexpr std::string_view to_string(LandUse u) {
  switch (u) {
    case LandUse::Commercial: return "COMMERCIAL";
    case LandUse::Residential: return "RESIDENTIAL";
    case LandUse::Mixed: return "MIXED";
    case LandUse::Unknown: return "UNKNOWN";
  }
  return "UNKNOWN";
}

struct LatLon {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const LatLon&, const LatLon&) = default;
};

struct TractMeta {
  std::string tract_id;
  std::string district_id;
  LatLon centroid;
  double resident_count = 0.0;
  LandUse land_use = LandUse::Unknown;

  friend bool operator==(const TractMeta&, const TractMeta&) = default;
};

struct NmtMeta {
  std::string nmt_id;
  std::string tract_id;
  LatLon location;

  friend bool operator==(const NmtMeta&, const NmtMeta&) = default;
};

namespace schema {
inline constexpr std::array<std::string_view, 3> kSpl{"nmt_id", "timestamp", "level_dba"};
inline constexpr std::array<std::string_view, 6> kFlights{
    "timestamp", "operation", "runway", "aircraft_type", "engine_type", "airline"};
inline constexpr std::array<std::string_view, 5> kWeather{
    "hour_start", "temperature_c", "wind_speed_kt", "wind_direction_deg", "cloud_cover_tenths"};
inline constexpr std::array<std::string_view, 3> kPopulation{"tract_id", "hour_start",
                                                             "defacto_count"};
inline constexpr std::array<std::string_view, 6> kTracts{
    "tract_id", "district_id", "centroid_lat", "centroid_lon", "resident_count", "land_use"};
inline constexpr std::array<std::string_view, 4> kNmts{"nmt_id", "tract_id", "lat", "lon"};

inline constexpr std::string_view kSplFile = "spl.csv";
inline constexpr std::string_view kFlightsFile = "flights.csv";
inline constexpr std::string_view kWeatherFile = "weather.csv";
inline constexpr std::string_view kPopulationFile = "population.csv";
inline constexpr std::string_view kTractsFile = "tracts.csv";
inline constexpr std::string_view kNmtsFile = "nmts.csv";
}  // namespace schema

namespace detail {

inline void check_range(const CsvReader& r, double v, double lo, double hi, bool hi_open,
                        std::string_view name) {
  if (v < lo || v > hi || (hi_open && v == hi))
    throw Error(ErrorKind::RangeViolation,
                std::string(name) + " " + format_number(v) + " outside [" + format_number(lo) +
                    ", " + format_number(hi) + (hi_open ? ")" : "]"),
                r.line());
}

inline void check_latlon(const CsvReader& r, LatLon p) {
  check_range(r, p.lat, -90.0, 90.0, false, "latitude");
  check_range(r, p.lon, -180.0, 180.0, false, "longitude");
}

template <std::size_t N>
void header_line(std::string& out, const std::array<std::string_view, N>& h) {
  for (std::size_t i = 0; i < N; ++i) {
    if (i) out += ',';
    out += h[i];
  }
  out += '\n';
}

inline void append_time(std::string& out, CivilTime t) {
  char buf[19];
  format_civil_time(t, buf);
  out.append(buf, 19);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsers. Each takes the full file text; rows come back in file order.

inline std::vector<SplSample> parse_spl(std::string_view text) {
  std::vector<SplSample> out;
  CsvReader r(text, schema::kSpl);
  while (r.next()) {
    SplSample s{std::string(r.id(0, "nmt_id")), r.time(1, "timestamp"), r.number(2, "level")};
    detail::check_range(r, s.level, kMinLevelDba, kMaxLevelDba, false, "level_dba");
    out.push_back(std::move(s));
  }
  return out;
}

inline Operation parse_operation(const CsvReader& r, std::string_view f) {
  if (f == "DEPARTURE") return Operation::Departure;
  if (f == "ARRIVAL") return Operation::Arrival;
  throw Error(ErrorKind::MalformedRow, "operation must be DEPARTURE or ARRIVAL", r.line());
}

inline std::vector<FlightEvent> parse_flights(std::string_view text) {
  std::vector<FlightEvent> out;
  CsvReader r(text, schema::kFlights);
  while (r.next()) {
    out.push_back({r.time(0, "timestamp"), parse_operation(r, r[1]), std::string(r.id(2, "runway")),
                   std::string(r.id(3, "aircraft_type")), std::string(r.id(4, "engine_type")),
                   std::string(r.id(5, "airline"))});
  }
  return out;
}

inline std::vector<WeatherHour> parse_weather(std::string_view text) {
  std::vector<WeatherHour> out;
  std::set<CivilTime> seen;
  CsvReader r(text, schema::kWeather);
  while (r.next()) {
    WeatherHour w;
    w.hour_start = r.hour(0, "hour_start");
    w.temperature_c = r.number(1, "temperature_c");
    w.wind_speed_kt = r.number(2, "wind_speed_kt");
    w.wind_direction_deg = r.number(3, "wind_direction_deg");
    const auto cloud = r.integer(4, "cloud_cover_tenths");
    detail::check_range(r, w.temperature_c, -80.0, 60.0, false, "temperature_c");
    detail::check_range(r, w.wind_speed_kt, 0.0, 200.0, false, "wind_speed_kt");
    detail::check_range(r, w.wind_direction_deg, 0.0, 360.0, true, "wind_direction_deg");
    detail::check_range(r, static_cast<double>(cloud), 0.0, 10.0, false, "cloud_cover_tenths");
    w.cloud_cover_tenths = static_cast<int>(cloud);
    if (!seen.insert(w.hour_start).second)
      throw Error(ErrorKind::DuplicateKey, "weather hour " + to_string(w.hour_start), r.line());
    out.push_back(w);
  }
  return out;
}

inline std::vector<PopulationRecord> parse_population(std::string_view text) {
  std::vector<PopulationRecord> out;
  std::set<std::pair<std::string, CivilTime>> seen;
  CsvReader r(text, schema::kPopulation);
  while (r.next()) {
    PopulationRecord p{std::string(r.id(0, "tract_id")), r.hour(1, "hour_start"),
                       r.number(2, "defacto_count")};
    detail::check_range(r, p.defacto_count, 0.0, HUGE_VAL, false, "defacto_count");
    if (!seen.emplace(p.tract_id, p.hour_start).second)
      throw Error(ErrorKind::DuplicateKey,
                  "population (" + p.tract_id + ", " + to_string(p.hour_start) + ")", r.line());
    out.push_back(std::move(p));
  }
  return out;
}

inline LandUse parse_land_use(const CsvReader& r, std::string_view f) {
  if (f == "COMMERCIAL") return LandUse::Commercial;
  if (f == "RESIDENTIAL") return LandUse::Residential;
  if (f == "MIXED") return LandUse::Mixed;
  if (f == "UNKNOWN") return LandUse::Unknown;
  throw Error(ErrorKind::MalformedRow, "unknown land_use '" + std::string(f) + "'", r.line());
}

inline std::vector<TractMeta> parse_tracts(std::string_view text) {
  std::vector<TractMeta> out;
  std::set<std::string, std::less<>> seen;
  CsvReader r(text, schema::kTracts);
  while (r.next()) {
    TractMeta t{std::string(r.id(0, "tract_id")), std::string(r.id(1, "district_id")),
                {r.number(2, "centroid_lat"), r.number(3, "centroid_lon")},
                r.number(4, "resident_count"), parse_land_use(r, r[5])};
    detail::check_latlon(r, t.centroid);
    detail::check_range(r, t.resident_count, 0.0, HUGE_VAL, false, "resident_count");
    if (!seen.insert(t.tract_id).second)
      throw Error(ErrorKind::DuplicateKey, "tract " + t.tract_id, r.line());
    out.push_back(std::move(t));
  }
  return out;
}

inline std::vector<NmtMeta> parse_nmts(std::string_view text) {
  std::vector<NmtMeta> out;
  std::set<std::string, std::less<>> seen;
  CsvReader r(text, schema::kNmts);
  while (r.next()) {
    NmtMeta n{std::string(r.id(0, "nmt_id")), std::string(r.id(1, "tract_id")),
              {r.number(2, "lat"), r.number(3, "lon")}};
    detail::check_latlon(r, n.location);
    if (!seen.insert(n.nmt_id).second)
      throw Error(ErrorKind::DuplicateKey, "nmt " + n.nmt_id, r.line());
    out.push_back(std::move(n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serializers, inverse of the parsers up to canonical number formatting.

inline std::string serialize_spl(std::span<const SplSample> rows) {
  std::string out;
  out.reserve(32 * rows.size() + 32);
  detail::header_line(out, schema::kSpl);
  for (const auto& s : rows) {
    out += s.nmt_id;
    out += ',';
    detail::append_time(out, s.timestamp);
    out += ',';
    append_number(out, s.level);
    out += '\n';
  }
  return out;
}

inline std::string serialize_flights(std::span<const FlightEvent> rows) {
  std::string out;
  detail::header_line(out, schema::kFlights);
  for (const auto& f : rows) {
    detail::append_time(out, f.timestamp);
    out += ',';
    out += to_string(f.operation);
    out += ',' + f.runway + ',' + f.aircraft_type + ',' + f.engine_type + ',' + f.airline + '\n';
  }
  return out;
}

inline std::string serialize_weather(std::span<const WeatherHour> rows) {
  std::string out;
  detail::header_line(out, schema::kWeather);
  for (const auto& w : rows) {
    detail::append_time(out, w.hour_start);
    for (double v : {w.temperature_c, w.wind_speed_kt, w.wind_direction_deg}) {
      out += ',';
      append_number(out, v);
    }
    out += ',' + std::to_string(w.cloud_cover_tenths) + '\n';
  }
  return out;
}

inline std::string serialize_population(std::span<const PopulationRecord> rows) {
  std::string out;
  detail::header_line(out, schema::kPopulation);
  for (const auto& p : rows) {
    out += p.tract_id + ',';
    detail::append_time(out, p.hour_start);
    out += ',';
    append_number(out, p.defacto_count);
    out += '\n';
  }
  return out;
}

inline std::string serialize_tracts(std::span<const TractMeta> rows) {
  std::string out;
  detail::header_line(out, schema::kTracts);
  for (const auto& t : rows) {
    out += t.tract_id + ',' + t.district_id;
    for (double v : {t.centroid.lat, t.centroid.lon, t.resident_count}) {
      out += ',';
      append_number(out, v);
    }
    out += ',';
    out += to_string(t.land_use);
    out += '\n';
  }
  return out;
}

inline std::string serialize_nmts(std::span<const NmtMeta> rows) {
  std::string out;
  detail::header_line(out, schema::kNmts);
  for (const auto& n : rows) {
    out += n.nmt_id + ',' + n.tract_id;
    for (double v : {n.location.lat, n.location.lon}) {
      out += ',';
      append_number(out, v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bundle = all six streams.

struct Bundle {
  std::vector<SplSample> spl;
  std::vector<FlightEvent> flights;
  std::vector<WeatherHour> weather;
  std::vector<PopulationRecord> population;
  std::vector<TractMeta> tracts;
  std::vector<NmtMeta> nmts;
};

namespace detail {
template <typename F>
auto parse_file(const std::filesystem::path& dir, std::string_view name, F parse) {
  const auto path = (dir / name).string();
  const auto text = read_file(path);
  try {
    return parse(std::string_view(text));
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.detail(), e.line());
  }
}
}  // namespace detail

inline Bundle load_bundle(const std::filesystem::path& dir) {
  Bundle b;
  b.spl = detail::parse_file(dir, schema::kSplFile, parse_spl);
  b.flights = detail::parse_file(dir, schema::kFlightsFile, parse_flights);
  b.weather = detail::parse_file(dir, schema::kWeatherFile, parse_weather);
  b.population = detail::parse_file(dir, schema::kPopulationFile, parse_population);
  b.tracts = detail::parse_file(dir, schema::kTractsFile, parse_tracts);
  b.nmts = detail::parse_file(dir, schema::kNmtsFile, parse_nmts);
  return b;
}

// ---------------------------------------------------------------------------
// Cross-stream validation.

enum class FindingKind { CoverageGap, DuplicateKey, DanglingReference, IncompleteHour, OutOfWindow };

constexpr std::string_view to_string(FindingKind k) {
  switch (k) {
    case FindingKind::CoverageGap: return "CoverageGap";
    case FindingKind::DuplicateKey: return "DuplicateKey";
    case FindingKind::DanglingReference: return "DanglingReference";
    case FindingKind::IncompleteHour: return "IncompleteHour";
    case FindingKind::OutOfWindow: return "OutOfWindow";
  }
  return "Unknown";
}

enum class Severity { Warning, Error };

struct Finding {
  FindingKind kind;
  Severity severity;
  std::string stream;
  std::string detail;
};

struct SampleCompleteness {
  std::string nmt_id;
  CivilTime hour_start;
  int count = 0;
  double fraction = 0.0;  // min(1, count / 1200)
};

struct ValidationReport {
  std::vector<Finding> findings;
  std::vector<SampleCompleteness> completeness;

  bool has_errors() const {
    return std::any_of(findings.begin(), findings.end(),
                       [](const Finding& f) { return f.severity == Severity::Error; });
  }
  std::size_t count(FindingKind k) const {
    return static_cast<std::size_t>(std::count_if(
        findings.begin(), findings.end(), [k](const Finding& f) { return f.kind == k; }));
  }
};

/// Report-only consistency check of a parsed bundle against a study window.
/// An empty `runways` list skips the declared-runway check.
inline ValidationReport validate_bundle(const Bundle& b, const Window& window,
                                        std::span<const std::string> runways = {}) {
  ValidationReport rep;
  auto add = [&](FindingKind k, Severity s, std::string_view stream, std::string detail) {
    rep.findings.push_back({k, s, std::string(stream), std::move(detail)});
  };

  std::set<std::string, std::less<>> tract_ids;
  for (const auto& t : b.tracts) tract_ids.insert(t.tract_id);

  // nmts
  std::set<std::string, std::less<>> nmt_ids;
  for (const auto& n : b.nmts) {
    nmt_ids.insert(n.nmt_id);
    if (!tract_ids.count(n.tract_id))
      add(FindingKind::DanglingReference, Severity::Error, "nmts",
          "nmt " + n.nmt_id + " -> unknown tract " + n.tract_id);
  }

  // weather: exactly one record per window hour
  {
    std::set<CivilTime> hours;
    std::size_t outside = 0;
    for (const auto& w : b.weather) {
      if (!window.contains(w.hour_start)) ++outside;
      else if (!hours.insert(w.hour_start).second)
        add(FindingKind::DuplicateKey, Severity::Error, "weather", to_string(w.hour_start));
    }
    for (auto h = window.start; h < window.end; h = h.plus_hours(1))
      if (!hours.count(h))
        add(FindingKind::CoverageGap, Severity::Error, "weather", "missing hour " + to_string(h));
    if (outside)
      add(FindingKind::OutOfWindow, Severity::Warning, "weather",
          std::to_string(outside) + " records outside window");
  }

  // population: one record per known tract per hour
  {
    std::set<std::pair<std::string_view, CivilTime>> keys;
    std::size_t outside = 0;
    std::set<std::string, std::less<>> unknown;
    for (const auto& p : b.population) {
      if (!tract_ids.count(p.tract_id)) unknown.insert(p.tract_id);
      if (!window.contains(p.hour_start)) {
        ++outside;
        continue;
      }
      if (!keys.emplace(p.tract_id, p.hour_start).second)
        add(FindingKind::DuplicateKey, Severity::Error, "population",
            "(" + p.tract_id + ", " + to_string(p.hour_start) + ")");
    }
    for (const auto& u : unknown)
      add(FindingKind::DanglingReference, Severity::Error, "population", "unknown tract " + u);
    for (const auto& t : b.tracts)
      for (auto h = window.start; h < window.end; h = h.plus_hours(1))
        if (!keys.count({t.tract_id, h}))
          add(FindingKind::CoverageGap, Severity::Error, "population",
              "missing (" + t.tract_id + ", " + to_string(h) + ")");
    if (outside)
      add(FindingKind::OutOfWindow, Severity::Warning, "population",
          std::to_string(outside) + " records outside window");
  }

  // flights
  {
    std::set<std::string, std::less<>> declared(runways.begin(), runways.end());
    std::set<std::string, std::less<>> undeclared;
    std::size_t outside = 0;
    for (const auto& f : b.flights) {
      if (!window.contains(f.timestamp)) ++outside;
      if (!declared.empty() && !declared.count(f.runway)) undeclared.insert(f.runway);
    }
    for (const auto& r : undeclared)
      add(FindingKind::DanglingReference, Severity::Error, "flights", "undeclared runway " + r);
    if (outside)
      add(FindingKind::OutOfWindow, Severity::Warning, "flights",
          std::to_string(outside) + " records outside window");
  }

  // spl: per NMT-hour sample counts, duplicate timestamps
  {
    std::map<std::string, std::vector<std::int64_t>, std::less<>> stamps;
    std::size_t outside = 0;
    std::set<std::string, std::less<>> unknown;
    for (const auto& s : b.spl) {
      if (!nmt_ids.count(s.nmt_id)) unknown.insert(s.nmt_id);
      if (!window.contains(s.timestamp)) {
        ++outside;
        continue;
      }
      stamps[s.nmt_id].push_back(s.timestamp.seconds);
    }
    std::map<std::pair<std::string, std::int64_t>, int> counts;
    std::size_t duplicates = 0;
    for (auto& [id, v] : stamps) {
      std::sort(v.begin(), v.end());
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i && v[i] == v[i - 1]) {
          ++duplicates;
          continue;
        }
        ++counts[{id, CivilTime{v[i]}.hour_index()}];
      }
    }
    for (const auto& u : unknown)
      add(FindingKind::DanglingReference, Severity::Error, "spl", "unknown nmt " + u);
    if (duplicates)
      add(FindingKind::DuplicateKey, Severity::Error, "spl",
          std::to_string(duplicates) + " duplicate (nmt, timestamp) samples");
    if (outside)
      add(FindingKind::OutOfWindow, Severity::Warning, "spl",
          std::to_string(outside) + " samples outside window");
    for (const auto& n : b.nmts) {
      for (auto h = window.start; h < window.end; h = h.plus_hours(1)) {
        const auto it = counts.find({n.nmt_id, h.hour_index()});
        const int c = it == counts.end() ? 0 : it->second;
        rep.completeness.push_back(
            {n.nmt_id, h, c, std::min(1.0, static_cast<double>(c) / kNominalSamplesPerHour)});
        if (c == 0)
          add(FindingKind::CoverageGap, Severity::Warning, "spl",
              "no samples for " + n.nmt_id + " at " + to_string(h));
        else if (c < kNominalSamplesPerHour)
          add(FindingKind::IncompleteHour, Severity::Warning, "spl",
              n.nmt_id + " at " + to_string(h) + ": " + std::to_string(c) + "/1200");
      }
    }
  }
  return rep;
}

}  // namespace aeronoise
