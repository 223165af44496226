#pragma once

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aeronoise/acoustics.hpp"
#include "aeronoise/civil_time.hpp"
#include "aeronoise/error.hpp"
#include "aeronoise/exposure.hpp"
#include "aeronoise/ingest.hpp"

namespace aeronoise::validation {

struct HourlySeries {
  std::string key;
  std::vector<std::pair<CivilTime, double>> points;  // hours strictly increasing

  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(points.size());
    for (const auto& p : points) v.push_back(p.second);
    return v;
  }
};

/// Per-tract de facto series from population records, keyed by tract, hours ascending.
inline std::vector<HourlySeries> tract_series(std::span<const PopulationRecord> population) {
  std::map<std::string, std::map<CivilTime, double>> by_tract;
  for (const auto& p : population) by_tract[p.tract_id][p.hour_start] = p.defacto_count;
  std::vector<HourlySeries> out;
  for (auto& [tract, pts] : by_tract) out.push_back({tract, {pts.begin(), pts.end()}});
  return out;
}

/// Hourly sums per district.
inline std::vector<HourlySeries> aggregate_to_district(
    std::span<const HourlySeries> tracts,
    const std::map<std::string, std::string, std::less<>>& tract_to_district) {
  std::map<std::string, std::map<CivilTime, CompensatedSum>> sums;
  for (const auto& s : tracts) {
    const auto it = tract_to_district.find(s.key);
    if (it == tract_to_district.end()) throw Error(ErrorKind::UnmappedTract, s.key);
    auto& d = sums[it->second];
    for (const auto& [h, v] : s.points) d[h].add(v);
  }
  std::vector<HourlySeries> out;
  for (const auto& [district, pts] : sums) {
    HourlySeries s{district, {}};
    for (const auto& [h, acc] : pts) s.points.emplace_back(h, acc.value());
    out.push_back(std::move(s));
  }
  return out;
}

inline std::map<std::string, std::string, std::less<>> district_map(
    std::span<const TractMeta> tracts) {
  std::map<std::string, std::string, std::less<>> m;
  for (const auto& t : tracts) m.emplace(t.tract_id, t.district_id);
  return m;
}

/// Squared Pearson correlation between two measurements of the same series.
inline double r_squared(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "series lengths differ");
  if (a.size() < 2) throw Error(ErrorKind::LengthMismatch, "need at least two points");
  const auto r = pearson(a, b);
  if (!r) throw Error(ErrorKind::ZeroVariance, "a series is constant");
  return *r * *r;
}

/// Hour-over-hour change in percent; length n - 1.
inline std::vector<double> pct_change(std::span<const double> v) {
  if (v.size() < 2) throw Error(ErrorKind::WrongLength, "need at least two points");
  for (double x : v)
    if (!(x > 0.0)) throw Error(ErrorKind::NonPositiveValue, "pct_change requires values > 0");
  std::vector<double> out(v.size() - 1);
  for (std::size_t i = 1; i < v.size(); ++i) out[i - 1] = (v[i] - v[i - 1]) / v[i - 1] * 100.0;
  return out;
}

enum class DiurnalClass { DaytimePeak, NighttimePeak, Flat };

constexpr std::string_view to_string(DiurnalClass c) {
  switch (c) {
    case DiurnalClass::DaytimePeak: return "DAYTIME_PEAK";
    case DiurnalClass::NighttimePeak: return "NIGHTTIME_PEAK";
    case DiurnalClass::Flat: return "FLAT";
  }
  return "FLAT";
}

/// Hour-of-day windows are half-open [from, to) and may wrap midnight.
struct DiurnalConfig {
  int day_from = 8, day_to = 18;
  int night_from = 20, night_to = 6;
  double margin = 0.10;
};

namespace detail {
inline double window_mean(std::span<const double> day, int from, int to) {
  CompensatedSum s;
  int n = 0;
  for (int h = from; h != to; h = (h + 1) % 24, ++n) s.add(day[static_cast<std::size_t>(h)]);
  return n ? s.value() / n : 0.0;
}
}  // namespace detail

inline DiurnalClass classify_diurnal(std::span<const double> day, const DiurnalConfig& cfg = {}) {
  if (day.size() != 24) throw Error(ErrorKind::WrongLength, "expected 24 hourly values");
  const double d = detail::window_mean(day, cfg.day_from, cfg.day_to);
  const double n = detail::window_mean(day, cfg.night_from, cfg.night_to);
  if (d > n * (1.0 + cfg.margin)) return DiurnalClass::DaytimePeak;
  if (n > d * (1.0 + cfg.margin)) return DiurnalClass::NighttimePeak;
  return DiurnalClass::Flat;
}

/// Mean value per hour of day over a multi-day series (24 entries).
inline std::array<double, 24> mean_day(const HourlySeries& s) {
  std::array<CompensatedSum, 24> sum;
  std::array<int, 24> n{};
  for (const auto& [h, v] : s.points) {
    const auto i = static_cast<std::size_t>(h.hour_of_day());
    sum[i].add(v);
    ++n[i];
  }
  std::array<double, 24> out{};
  for (std::size_t i = 0; i < 24; ++i) out[i] = n[i] ? sum[i].value() / n[i] : 0.0;
  return out;
}

struct ProviderAgreement {
  std::string key;
  int hours = 0;
  std::optional<double> r2_absolute;  // null when either series is constant
  std::optional<double> r2_pct_change;
};

/// R^2 of absolute counts and of hour-over-hour changes for two providers'
/// series of one key, over the hours both report.
inline ProviderAgreement compare_providers(const HourlySeries& a, const HourlySeries& b) {
  std::map<CivilTime, double> other(b.points.begin(), b.points.end());
  std::vector<double> xa, xb;
  for (const auto& [h, v] : a.points) {
    if (auto it = other.find(h); it != other.end()) {
      xa.push_back(v);
      xb.push_back(it->second);
    }
  }
  ProviderAgreement p;
  p.key = a.key;
  p.hours = static_cast<int>(xa.size());
  if (xa.size() < 2) throw Error(ErrorKind::LengthMismatch, "fewer than two common hours for " + a.key);
  if (const auto r = pearson(xa, xb)) p.r2_absolute = *r * *r;
  bool positive = true;
  for (std::size_t i = 0; i < xa.size(); ++i) positive = positive && xa[i] > 0 && xb[i] > 0;
  if (positive && xa.size() >= 3) {
    const auto ca = pct_change(xa), cb = pct_change(xb);
    const auto r = pearson(ca, cb);
    if (r) p.r2_pct_change = *r * *r;
  }
  return p;
}

}  // namespace aeronoise::validation
