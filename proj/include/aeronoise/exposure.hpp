#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "aeronoise/acoustics.hpp"
#include "aeronoise/civil_time.hpp"
#include "aeronoise/error.hpp"
#include "aeronoise/fusion.hpp"

namespace aeronoise {

inline constexpr std::array<double, 2> kDefaultThresholds{65.0, 70.0};

enum class PopulationBasis { DeFacto, Residential };

/// Persons counted as exposed: the tract-hour population when the measured
/// level strictly exceeds theta, else 0. An absent level is never exposure.
inline double exposed(const TractHourRecord& r, double theta,
                      PopulationBasis basis = PopulationBasis::DeFacto) {
  if (!std::isfinite(theta)) throw Error(ErrorKind::InvalidConfig, "threshold must be finite");
  if (!r.laeq || !(*r.laeq > theta)) return 0.0;
  return basis == PopulationBasis::DeFacto ? r.population_defacto : r.population_resident;
}

/// Tract x hour grid of exposed persons for one threshold. Cells are stored
/// row-major by tract; grid cells with no fused record hold 0 and are marked
/// uncovered.
struct ExposureMatrix {
  double theta = 0.0;
  PopulationBasis basis = PopulationBasis::DeFacto;
  std::vector<std::string> tract_ids;
  std::vector<CivilTime> hours;
  std::vector<double> cells;
  std::vector<double> population;
  std::vector<char> covered;  // laeq present

  std::size_t tracts() const { return tract_ids.size(); }
  std::size_t width() const { return hours.size(); }
  double at(std::size_t tract, std::size_t hour) const { return cells[tract * hours.size() + hour]; }

  std::vector<double> column(std::size_t hour) const {
    std::vector<double> v(tracts());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = at(i, hour);
    return v;
  }

  double coverage(std::size_t hour) const {
    if (tract_ids.empty()) return 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < tracts(); ++i) n += covered[i * width() + hour] != 0;
    return static_cast<double>(n) / static_cast<double>(tracts());
  }

  bool same_grid(const ExposureMatrix& o) const {
    return theta == o.theta && tract_ids == o.tract_ids && hours == o.hours;
  }
};

inline ExposureMatrix exposure_matrix(std::span<const TractHourRecord> records, double theta,
                                      PopulationBasis basis = PopulationBasis::DeFacto) {
  ExposureMatrix m;
  m.theta = theta;
  m.basis = basis;
  std::set<std::string> tracts;
  std::set<CivilTime> hours;
  for (const auto& r : records) {
    tracts.insert(r.tract_id);
    hours.insert(r.hour_start);
  }
  m.tract_ids.assign(tracts.begin(), tracts.end());
  m.hours.assign(hours.begin(), hours.end());
  const std::size_t w = m.hours.size();
  m.cells.assign(m.tract_ids.size() * w, 0.0);
  m.population.assign(m.cells.size(), 0.0);
  m.covered.assign(m.cells.size(), 0);
  for (const auto& r : records) {
    const auto i = static_cast<std::size_t>(
        std::lower_bound(m.tract_ids.begin(), m.tract_ids.end(), r.tract_id) - m.tract_ids.begin());
    const auto t = static_cast<std::size_t>(
        std::lower_bound(m.hours.begin(), m.hours.end(), r.hour_start) - m.hours.begin());
    const auto k = i * w + t;
    m.cells[k] = exposed(r, theta, basis);
    m.population[k] =
        basis == PopulationBasis::DeFacto ? r.population_defacto : r.population_resident;
    m.covered[k] = r.laeq.has_value();
  }
  return m;
}

/// Mean absolute pairwise difference over twice the mean, computed in
/// O(D log D) from the sorted values:
///   sum_i sum_j |v_i - v_j| = 2 * sum_k v_(k) * (2k - D + 1),  k = 0..D-1.
/// Undefined (nullopt) when every value is zero.
inline std::optional<double> gini(std::span<const double> values) {
  for (double v : values)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw Error(ErrorKind::NegativeValue, "gini input must be finite and >= 0");
  if (values.empty()) return std::nullopt;
  std::vector<double> s(values.begin(), values.end());
  std::sort(s.begin(), s.end());
  const auto d = static_cast<double>(s.size());
  CompensatedSum total, weighted;
  for (std::size_t k = 0; k < s.size(); ++k) {
    total.add(s[k]);
    weighted.add(s[k] * (2.0 * static_cast<double>(k) - d + 1.0));
  }
  if (total.value() <= 0.0) return std::nullopt;
  return std::max(0.0, weighted.value() / (d * total.value()));
}

struct GiniEntry {
  CivilTime hour;
  std::optional<double> gini;
  double exposed_total = 0.0;
  double mean_exposure = 0.0;
  double coverage = 0.0;
};

struct GiniSeries {
  double theta = 0.0;
  std::vector<GiniEntry> entries;
};

inline GiniSeries gini_series(const ExposureMatrix& m) {
  GiniSeries s;
  s.theta = m.theta;
  for (std::size_t t = 0; t < m.width(); ++t) {
    const auto col = m.column(t);
    CompensatedSum total;
    for (double v : col) total.add(v);
    GiniEntry e;
    e.hour = m.hours[t];
    e.exposed_total = total.value();
    e.mean_exposure = col.empty() ? 0.0 : e.exposed_total / static_cast<double>(col.size());
    e.gini = gini(col);
    e.coverage = m.coverage(t);
    s.entries.push_back(e);
  }
  return s;
}

struct BasisComparison {
  CivilTime hour;
  double defacto_total = 0.0;
  double residential_total = 0.0;
  double delta = 0.0;  // defacto - residential
};

inline std::vector<BasisComparison> compare_bases(const ExposureMatrix& defacto,
                                                  const ExposureMatrix& residential) {
  if (!defacto.same_grid(residential))
    throw Error(ErrorKind::GridMismatch, "exposure matrices differ in theta, tracts or hours");
  std::vector<BasisComparison> out;
  for (std::size_t t = 0; t < defacto.width(); ++t) {
    CompensatedSum a, b;
    for (std::size_t i = 0; i < defacto.tracts(); ++i) {
      a.add(defacto.at(i, t));
      b.add(residential.at(i, t));
    }
    out.push_back({defacto.hours[t], a.value(), b.value(), a.value() - b.value()});
  }
  return out;
}

/// Mean exposed total and mean defined Gini per hour of day (0-23).
struct DiurnalExposure {
  int hour_of_day = 0;
  double mean_exposed = 0.0;
  std::optional<double> mean_gini;
  int days = 0;
};

inline std::vector<DiurnalExposure> diurnal_profile(const GiniSeries& s) {
  std::array<CompensatedSum, 24> exposed_sum, gini_sum;
  std::array<int, 24> n{}, n_gini{};
  for (const auto& e : s.entries) {
    const auto h = static_cast<std::size_t>(e.hour.hour_of_day());
    exposed_sum[h].add(e.exposed_total);
    ++n[h];
    if (e.gini) {
      gini_sum[h].add(*e.gini);
      ++n_gini[h];
    }
  }
  std::vector<DiurnalExposure> out;
  for (int h = 0; h < 24; ++h) {
    const auto i = static_cast<std::size_t>(h);
    if (n[i] == 0) continue;
    DiurnalExposure d;
    d.hour_of_day = h;
    d.days = n[i];
    d.mean_exposed = exposed_sum[i].value() / n[i];
    if (n_gini[i]) d.mean_gini = gini_sum[i].value() / n_gini[i];
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runway rotation diagnostics

/// Pearson correlation; nullopt when undefined (n < 2 or zero variance).
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorKind::LengthMismatch, "pearson on series of different length");
  const std::size_t n = a.size();
  if (n < 2) return std::nullopt;
  CompensatedSum sa, sb;
  for (std::size_t i = 0; i < n; ++i) {
    sa.add(a[i]);
    sb.add(b[i]);
  }
  const double ma = sa.value() / static_cast<double>(n);
  const double mb = sb.value() / static_cast<double>(n);
  CompensatedSum sab, saa, sbb;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab.add(da * db);
    saa.add(da * da);
    sbb.add(db * db);
  }
  if (saa.value() <= 0.0 || sbb.value() <= 0.0) return std::nullopt;
  return std::clamp(sab.value() / std::sqrt(saa.value() * sbb.value()), -1.0, 1.0);
}

struct RotationPair {
  std::string nmt_a;
  std::string nmt_b;
  int blocks = 0;                    // blocks where both NMTs have a level
  std::optional<double> correlation;  // of block-mean LAeq
};

/// For every NMT pair, Pearson correlation of block-mean LAeq across
/// clock-aligned blocks of `block_hours`. Strongly negative values mean the
/// two sites take turns being loud.
inline std::vector<RotationPair> rotation_contrast(std::span<const HourlyLaeq> hourly,
                                                   int block_hours = 3) {
  if (block_hours < 1) throw Error(ErrorKind::InvalidConfig, "block_hours must be >= 1");
  std::map<std::string, std::map<std::int64_t, std::pair<double, int>>> sums;
  std::set<std::int64_t> all_blocks;
  for (const auto& h : hourly) {
    if (!h.laeq) continue;
    const auto block = CivilTime::floor_div(h.hour_start.hour_index(), block_hours);
    auto& acc = sums[h.nmt_id][block];
    acc.first += *h.laeq;
    ++acc.second;
    all_blocks.insert(block);
  }
  if (sums.size() < 2 || all_blocks.size() < 2)
    throw Error(ErrorKind::InsufficientData,
                "rotation contrast needs >= 2 NMTs and >= 2 blocks with data");

  std::vector<RotationPair> out;
  for (auto a = sums.begin(); a != sums.end(); ++a) {
    for (auto b = std::next(a); b != sums.end(); ++b) {
      std::vector<double> xa, xb;
      for (const auto& [block, acc] : a->second) {
        const auto it = b->second.find(block);
        if (it == b->second.end()) continue;
        xa.push_back(acc.first / acc.second);
        xb.push_back(it->second.first / it->second.second);
      }
      out.push_back({a->first, b->first, static_cast<int>(xa.size()), pearson(xa, xb)});
    }
  }
  return out;
}

}  // namespace aeronoise
