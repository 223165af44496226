#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "aeronoise/civil_time.hpp"
#include "aeronoise/csv.hpp"
#include "aeronoise/error.hpp"
#include "aeronoise/ingest.hpp"

namespace aeronoise {

/// Speech-interference retention threshold applied to 3-second readings.
inline constexpr double kDefaultRetentionDba = 60.0;
/// Pass as retention threshold to keep every sample.
inline constexpr double kRetainAll = -std::numeric_limits<double>::infinity();

struct HourlyLaeq {
  std::string nmt_id;
  CivilTime hour_start;
  std::optional<double> laeq;  // absent when no sample was retained
  int n_retained = 0;
  double completeness = 0.0;  // all samples / 1200, capped at 1

  friend bool operator==(const HourlyLaeq&, const HourlyLaeq&) = default;
};

/// Neumaier-compensated sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) comp_ += (sum_ - t) + x;
    else comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Samples whose level strictly exceeds `threshold`, order preserved.
inline std::vector<SplSample> retain_above(std::span<const SplSample> samples, double threshold) {
  if (std::isnan(threshold)) throw Error(ErrorKind::InvalidConfig, "retention threshold is NaN");
  std::vector<SplSample> out;
  for (const auto& s : samples)
    if (s.level > threshold) out.push_back(s);
  return out;
}

/// Energy-mean level 10*log10(mean(10^(L/10))).
///
/// Powers are taken relative to the loudest sample and summed in ascending
/// order with compensation, so the result does not depend on input order and
/// a constant input returns that constant exactly.
inline double laeq(std::span<const double> levels) {
  if (levels.empty()) throw Error(ErrorKind::EmptyInput, "laeq of no samples");
  std::vector<double> sorted(levels.begin(), levels.end());
  std::sort(sorted.begin(), sorted.end());
  if (!std::isfinite(sorted.front()) || !std::isfinite(sorted.back()))
    throw Error(ErrorKind::RangeViolation, "non-finite level");
  const double lo = sorted.front();
  const double hi = sorted.back();
  CompensatedSum sum;
  for (double l : sorted) sum.add(std::pow(10.0, (l - hi) / 10.0));
  const double mean = sum.value() / static_cast<double>(sorted.size());
  return std::clamp(hi + 10.0 * std::log10(mean), lo, hi);
}

/// Hourly LAeq per (nmt, hour) from 3-second readings; retention is applied
/// to individual samples before aggregation. Output sorted by (nmt_id, hour).
inline std::vector<HourlyLaeq> hourly_series(std::span<const SplSample> samples,
                                             double retention = kDefaultRetentionDba) {
  if (std::isnan(retention)) throw Error(ErrorKind::InvalidConfig, "retention threshold is NaN");
  struct Acc {
    int total = 0;
    std::vector<double> retained;
  };
  std::unordered_map<std::string, std::map<std::int64_t, Acc>> groups;
  const std::string* last_id = nullptr;
  std::map<std::int64_t, Acc>* last_group = nullptr;
  for (const auto& s : samples) {
    if (!last_id || *last_id != s.nmt_id) {
      last_group = &groups[s.nmt_id];
      last_id = &s.nmt_id;
    }
    auto& acc = (*last_group)[s.timestamp.hour_index()];
    ++acc.total;
    if (s.level > retention) acc.retained.push_back(s.level);
  }

  std::vector<std::string> ids;
  ids.reserve(groups.size());
  for (const auto& [id, _] : groups) ids.push_back(id);
  std::sort(ids.begin(), ids.end());

  std::vector<HourlyLaeq> out;
  for (const auto& id : ids) {
    for (const auto& [hour, acc] : groups[id]) {
      HourlyLaeq h;
      h.nmt_id = id;
      h.hour_start = CivilTime{hour * CivilTime::kHour};
      h.n_retained = static_cast<int>(acc.retained.size());
      if (!acc.retained.empty()) h.laeq = laeq(acc.retained);
      h.completeness =
          std::min(1.0, static_cast<double>(acc.total) / kNominalSamplesPerHour);
      out.push_back(std::move(h));
    }
  }
  return out;
}

inline constexpr std::array<std::string_view, 5> kHourlyLaeqHeader{
    "nmt_id", "hour_start", "laeq_dba", "n_retained", "completeness"};

inline std::string serialize_hourly_laeq(std::span<const HourlyLaeq> rows) {
  std::string out = "nmt_id,hour_start,laeq_dba,n_retained,completeness\n";
  for (const auto& h : rows) {
    out += h.nmt_id + ',' + to_string(h.hour_start) + ',';
    if (h.laeq) append_number(out, *h.laeq);
    out += ',' + std::to_string(h.n_retained) + ',';
    append_number(out, h.completeness);
    out += '\n';
  }
  return out;
}

inline std::vector<HourlyLaeq> parse_hourly_laeq(std::string_view text) {
  std::vector<HourlyLaeq> out;
  CsvReader r(text, kHourlyLaeqHeader);
  while (r.next()) {
    HourlyLaeq h;
    h.nmt_id = std::string(r.id(0, "nmt_id"));
    h.hour_start = r.hour(1, "hour_start");
    if (!r[2].empty()) h.laeq = r.number(2, "laeq_dba");
    h.n_retained = static_cast<int>(r.integer(3, "n_retained"));
    h.completeness = r.number(4, "completeness");
    if (h.laeq.has_value() != (h.n_retained > 0))
      throw Error(ErrorKind::MalformedRow, "laeq presence disagrees with n_retained", r.line());
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace aeronoise
