#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aeronoise/acoustics.hpp"
#include "aeronoise/civil_time.hpp"
#include "aeronoise/error.hpp"
#include "aeronoise/fusion.hpp"
#include "aeronoise/ingest.hpp"
#include "aeronoise/rng.hpp"
#include "aeronoise/table.hpp"
#include "aeronoise/validation.hpp"

namespace aeronoise::synth {

struct TractLayout {
  int near_32l = 1;
  int near_32r = 2;
  int commercial = 1;
  int residential = 1;

  int total() const { return near_32l + near_32r + commercial + residential; }
};

struct ComboSpec {
  std::string aircraft;
  std::string engine;
  double share = 0.0;
  double coef_db = 0.0;  // per movement in the hour
};

inline std::vector<ComboSpec> default_combos() {
  return {
      {"A320", "V2500", 0.17, 0.05},      {"B737", "CFM56", 0.15, 0.05},
      {"A321", "V2500", 0.11, 0.08},      {"A320neo", "PW1", 0.09, -0.15},
      {"B737-8MAX", "LEAP", 0.08, -0.15}, {"A330", "PW4", 0.07, 0.25},
      {"B767", "CF6-80", 0.06, 0.25},     {"A220", "PW1", 0.06, -0.15},
      {"B777", "GE90", 0.05, 0.2},        {"A321neo", "LEAP", 0.05, -0.1},
      {"B737", "CFM56-7", 0.04, 0.05},    {"ATR72", "PW127", 0.03, -0.2},
      {"E190", "CF34", 0.02, 0.0},        {"Q400", "PW150", 0.02, 0.0},
  };
}

/// Ground-truth noise function, additive over the model features.
struct Coefficients {
  double rotation_amplitude = 3.0;   // +/- dB by side runway role
  double wind_speed_slope = 0.15;    // dB per kt
  double wind_speed_ref = 7.0;
  double cloud_threshold = 2.5;      // tenths
  double cloud_step = 1.0;           // +/- dB either side
  double temperature_slope = 0.03;   // dB per degC
  double temperature_ref = 0.0;
  double noise_sd = 1.5;
};

struct ScenarioConfig {
  std::uint64_t seed = 42;
  CivilTime start = *parse_civil_time("2023-01-01T00:00:00");
  int days = 31;
  TractLayout layout;
  // Mean movements per operation type per hour of day.
  std::array<double, 24> flights_per_hour{0, 0, 0, 0, 0, 0, 4, 8, 9, 8, 7, 7,
                                          7, 7, 7, 7, 8, 9, 9, 8, 7, 6, 4, 0};
  int block_hours = 3;
  Coefficients coef;
  std::vector<ComboSpec> combos = default_combos();
  double commuter_amplitude = 0.8;
  double background_fraction = 0.25;
  double jitter_db = 1.0;
  // Training profile written to scenario.conf; the rotation term is an
  // interaction of site and hour that shallow greedy trees pick up slowly.
  int train_max_depth = 8;
  double train_min_child_weight = 20.0;
  double train_lambda = 5.0;

  Window window() const { return {start, start.plus_hours(24LL * days)}; }

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
    if (days < 1) bad("days must be >= 1");
    if (layout.near_32l < 1 || layout.near_32r < 1 || layout.commercial < 1 ||
        layout.residential < 1)
      bad("tract layout counts must be positive");
    if (layout.total() > 99) bad("at most 99 tracts");
    if (block_hours < 1 || 24 % block_hours != 0) bad("block_hours must divide 24");
    if (!start.on_hour()) bad("start must be on the hour");
    if (!(coef.noise_sd >= 0.0) || !std::isfinite(coef.noise_sd)) bad("noise_sd must be >= 0");
    if (!(commuter_amplitude >= 0.0 && commuter_amplitude < 1.0))
      bad("commuter_amplitude must be in [0, 1)");
    if (!(background_fraction >= 0.0 && background_fraction < 1.0))
      bad("background_fraction must be in [0, 1)");
    if (!(jitter_db >= 0.0 && jitter_db <= 5.0)) bad("jitter_db must be in [0, 5]");
    if (combos.empty()) bad("at least one aircraft-engine combination");
    for (double f : flights_per_hour)
      if (!(f >= 0.0) || f > 100.0) bad("flights_per_hour entries must be in [0, 100]");
  }
};

inline const std::vector<std::string>& declared_runways() {
  static const std::vector<std::string> r{"32L", "32R"};
  return r;
}

/// Runway roles for a block: odd blocks land on 32R and depart from 32L.
inline RunwayRoles block_roles(std::int64_t block) {
  return CivilTime::floor_div(block, 2) * 2 != block ? RunwayRoles{"32L", "32R"}
                                                      : RunwayRoles{"32R", "32L"};
}

struct NmtTruth {
  std::string nmt_id;
  std::string tract_id;
  std::string side;  // runway the site sits under
  LandUse land_use = LandUse::Mixed;
  double site_offset = 0.0;
};

struct RotationBlock {
  CivilTime start;
  RunwayRoles roles;
};

struct LevelTruth {
  std::string nmt_id;
  CivilTime hour_start;
  double expected = 0.0;  // noise-free function value
  double intended = 0.0;  // expected + noise, what the SPL stream encodes
};

struct GroundTruth {
  std::uint64_t seed = 0;
  Window window;
  int block_hours = 3;
  Coefficients coef;
  std::vector<ComboSpec> combos;
  std::vector<NmtTruth> nmts;
  std::vector<RotationBlock> rotation;
  std::map<std::string, validation::DiurnalClass> diurnal;  // by tract
  std::string dominant_feature = "nmt_lat";
  std::string monotone_feature = "wind_speed_kt";
  std::string threshold_feature = "cloud_cover_tenths";
  std::vector<LevelTruth> levels;

  const NmtTruth* nmt(std::string_view id) const {
    for (const auto& n : nmts)
      if (n.nmt_id == id) return &n;
    return nullptr;
  }
  bool cross_runway(std::string_view a, std::string_view b) const {
    return nmt(a)->side != nmt(b)->side;
  }
};

struct Scenario {
  Bundle bundle;
  GroundTruth truth;
};

namespace detail {

inline double round_to(double v, double step) { return std::round(v / step) * step; }

inline std::string numbered(std::string_view prefix, int i) {
  std::string s(prefix);
  if (i < 10) s += '0';
  return s + std::to_string(i);
}

// Energy mean of offsets d_k relative to 0 dB.
inline double energy_mean(std::span<const double> d) {
  CompensatedSum s;
  for (double x : d) s.add(std::pow(10.0, x / 10.0));
  return 10.0 * std::log10(s.value() / static_cast<double>(d.size()));
}

}  // namespace detail

/// Deterministic bundle plus the truth it was drawn from.
inline Scenario generate(const ScenarioConfig& cfg) {
  cfg.validate();
  Scenario sc;
  auto& b = sc.bundle;
  auto& gt = sc.truth;
  const Window win = cfg.window();
  const auto hours = static_cast<std::size_t>(win.hours());
  gt.seed = cfg.seed;
  gt.window = win;
  gt.block_hours = cfg.block_hours;
  gt.coef = cfg.coef;
  gt.combos = cfg.combos;

  Rng rng = Rng::stream(cfg.seed, "synth");
  Rng jitter = Rng::stream(cfg.seed, "jitter");

  // Sites on a line so that latitude and longitude order the NMTs alike; the
  // 32R side lies south-west of the 32L side.
  struct Site {
    std::string side;
    LandUse use;
    double offset;
    double residents;
  };
  std::vector<Site> sites;
  for (int j = 0; j < cfg.layout.near_32r; ++j)
    sites.push_back({"32R", LandUse::Mixed, 71.5 + 1.0 * j, 3000.0 - 200.0 * j});
  for (int j = 0; j < cfg.layout.commercial; ++j)
    sites.push_back({"32R", LandUse::Commercial, 67.0 - 0.5 * j, 1500.0 + 100.0 * j});
  for (int j = 0; j < cfg.layout.near_32l; ++j)
    sites.push_back({"32L", LandUse::Mixed, 70.5 + 1.0 * j, 2800.0 - 200.0 * j});
  for (int j = 0; j < cfg.layout.residential; ++j)
    sites.push_back({"32L", LandUse::Residential, 66.0 - 0.5 * j, 4000.0 + 200.0 * j});

  double commercial_residents = 0.0, residential_residents = 0.0;
  for (const auto& s : sites) {
    if (s.use == LandUse::Commercial) commercial_residents += s.residents;
    if (s.use == LandUse::Residential) residential_residents += s.residents;
  }

  for (std::size_t i = 0; i < sites.size(); ++i) {
    const int k = static_cast<int>(i) + 1;
    const auto& s = sites[i];
    const std::string tract = detail::numbered("T", k);
    const std::string nmt = detail::numbered("NMT", k);
    const LatLon at{detail::round_to(37.500 + 0.012 * k, 1e-6),
                    detail::round_to(126.700 + 0.015 * k, 1e-6)};
    b.tracts.push_back({tract, s.side == "32R" ? "DIST-R" : "DIST-L",
                        {detail::round_to(at.lat + 0.001, 1e-6), detail::round_to(at.lon + 0.001, 1e-6)},
                        s.residents, s.use});
    b.nmts.push_back({nmt, tract, at});
    gt.nmts.push_back({nmt, tract, s.side, s.use, s.offset});
    gt.diurnal[tract] = s.use == LandUse::Commercial    ? validation::DiurnalClass::DaytimePeak
                        : s.use == LandUse::Residential ? validation::DiurnalClass::NighttimePeak
                                                        : validation::DiurnalClass::Flat;
  }

  // Weather: weakly autocorrelated hourly series.
  double a_temp = 0.0, a_wind = 0.0, a_dir = 0.0, a_cloud = rng.normal(0.0, 2.0);
  for (std::size_t i = 0; i < hours; ++i) {
    const auto h = win.start.plus_hours(static_cast<std::int64_t>(i));
    a_temp = 0.9 * a_temp + rng.normal(0.0, 0.8);
    a_wind = 0.85 * a_wind + rng.normal(0.0, 1.8);
    a_dir = 0.9 * a_dir + rng.normal(0.0, 15.0);
    a_cloud = 0.8 * a_cloud + rng.normal(0.0, 1.6);
    WeatherHour w;
    w.hour_start = h;
    w.temperature_c = detail::round_to(
        std::clamp(-2.0 + 4.0 * std::sin(2.0 * std::numbers::pi * (h.hour_of_day() - 9) / 24.0) + a_temp,
                   -30.0, 40.0),
        0.1);
    w.wind_speed_kt = detail::round_to(std::clamp(7.0 + a_wind, 0.0, 30.0), 0.1);
    double dir = std::fmod(std::round(320.0 + a_dir), 360.0);
    if (dir < 0) dir += 360.0;
    w.wind_direction_deg = dir;
    w.cloud_cover_tenths = static_cast<int>(std::clamp(std::round(3.5 + a_cloud), 0.0, 10.0));
    b.weather.push_back(w);
  }

  // Flights and the rotation schedule.
  double share_total = 0.0;
  for (const auto& c : cfg.combos) share_total += c.share;
  static const std::array<const char*, 6> airlines{"KAL", "AAR", "JJA", "TWB", "JNA", "ABL"};
  std::vector<std::vector<int>> combo_counts(hours, std::vector<int>(cfg.combos.size(), 0));
  for (std::size_t i = 0; i < hours; ++i) {
    const auto h = win.start.plus_hours(static_cast<std::int64_t>(i));
    const auto block = CivilTime::floor_div(h.hour_index(), cfg.block_hours);
    const auto roles = block_roles(block);
    if (gt.rotation.empty() ||
        CivilTime::floor_div(gt.rotation.back().start.hour_index(), cfg.block_hours) != block)
      gt.rotation.push_back({h, roles});
    const double mean = cfg.flights_per_hour[static_cast<std::size_t>(h.hour_of_day())];
    std::vector<FlightEvent> hour_flights;
    for (Operation op : {Operation::Departure, Operation::Arrival}) {
      const int n = rng.poisson(mean);
      for (int f = 0; f < n; ++f) {
        double u = rng.uniform() * share_total;
        std::size_t c = 0;
        while (c + 1 < cfg.combos.size() && u >= cfg.combos[c].share) u -= cfg.combos[c++].share;
        ++combo_counts[i][c];
        FlightEvent e;
        e.timestamp = CivilTime{h.seconds + static_cast<std::int64_t>(rng.below(3600))};
        e.operation = op;
        e.runway = op == Operation::Departure ? roles.departure : roles.arrival;
        e.aircraft_type = cfg.combos[c].aircraft;
        e.engine_type = cfg.combos[c].engine;
        e.airline = airlines[rng.below(airlines.size())];
        hour_flights.push_back(std::move(e));
      }
    }
    std::stable_sort(hour_flights.begin(), hour_flights.end(),
                     [](const auto& x, const auto& y) { return x.timestamp < y.timestamp; });
    for (auto& e : hour_flights) b.flights.push_back(std::move(e));
  }

  // De facto population: commuters move from residential to commercial tracts by day.
  for (std::size_t t = 0; t < sites.size(); ++t) {
    const auto& s = sites[t];
    for (std::size_t i = 0; i < hours; ++i) {
      const auto h = win.start.plus_hours(static_cast<std::int64_t>(i));
      const double wave =
          cfg.commuter_amplitude * std::cos(2.0 * std::numbers::pi * (h.hour_of_day() - 13) / 24.0);
      double v = s.residents;
      if (s.use == LandUse::Commercial) v = s.residents * (1.0 + wave);
      if (s.use == LandUse::Residential)
        v = s.residents - s.residents / residential_residents * commercial_residents * wave;
      b.population.push_back({b.tracts[t].tract_id, h, detail::round_to(std::max(0.0, v), 0.1)});
    }
  }

  // Hourly levels and their 3-second streams.
  const auto& c = cfg.coef;
  b.spl.reserve(sites.size() * hours * kNominalSamplesPerHour);
  std::vector<double> offsets;
  std::vector<char> loud;
  for (std::size_t t = 0; t < sites.size(); ++t) {
    const auto& nt = gt.nmts[t];
    for (std::size_t i = 0; i < hours; ++i) {
      const auto h = win.start.plus_hours(static_cast<std::int64_t>(i));
      const auto& w = b.weather[i];
      int movements = 0;
      double combo_term = 0.0;
      for (std::size_t k = 0; k < cfg.combos.size(); ++k) {
        movements += combo_counts[i][k];
        combo_term += cfg.combos[k].coef_db * combo_counts[i][k];
      }
      std::optional<double> level;
      if (movements > 0) {
        const auto roles = block_roles(CivilTime::floor_div(h.hour_index(), cfg.block_hours));
        const double side = roles.departure == nt.side ? 1.0 : -1.0;
        const double expected =
            nt.site_offset + side * c.rotation_amplitude +
            c.wind_speed_slope * (w.wind_speed_kt - c.wind_speed_ref) +
            (w.cloud_cover_tenths > c.cloud_threshold ? c.cloud_step : -c.cloud_step) +
            c.temperature_slope * (w.temperature_c - c.temperature_ref) + combo_term;
        const double intended = std::max(60.5, expected + rng.normal(0.0, c.noise_sd));
        gt.levels.push_back({nt.nmt_id, h, expected, intended});
        level = intended;
      }

      loud.assign(kNominalSamplesPerHour, 0);
      offsets.clear();
      if (level)
        for (auto& l : loud) {
          l = jitter.uniform() >= cfg.background_fraction;
          if (l) offsets.push_back(0.0);
        }
      if (!offsets.empty()) {
        // Bounded jitter, shrunk near the retention line, then shifted so the
        // energy mean lands on the intended level.
        const double j = std::min(cfg.jitter_db, std::max(0.0, (*level - 60.3) / 2.0));
        for (auto& d : offsets) d = jitter.uniform(-j, j);
        const double shift = detail::energy_mean(offsets);
        for (auto& d : offsets) d -= shift;
      }
      std::size_t next = 0;
      for (int k = 0; k < kNominalSamplesPerHour; ++k) {
        double v;
        if (loud[static_cast<std::size_t>(k)]) v = *level + offsets[next++];
        else v = jitter.uniform(45.0, 57.0);
        b.spl.push_back({nt.nmt_id, CivilTime{h.seconds + 3LL * k}, detail::round_to(v, 0.1)});
      }
    }
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json to_json(const GroundTruth& gt) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["seed"] = gt.seed;
  j["window"] = {{"start", to_string(gt.window.start)}, {"end", to_string(gt.window.end)}};
  j["block_hours"] = gt.block_hours;
  const auto& c = gt.coef;
  j["function"] = {{"rotation_amplitude", c.rotation_amplitude},
                   {"wind_speed_slope", c.wind_speed_slope},
                   {"wind_speed_ref", c.wind_speed_ref},
                   {"cloud_threshold", c.cloud_threshold},
                   {"cloud_step", c.cloud_step},
                   {"temperature_slope", c.temperature_slope},
                   {"temperature_ref", c.temperature_ref},
                   {"noise_sd", c.noise_sd}};
  auto combos = ordered_json::array();
  for (const auto& k : gt.combos)
    combos.push_back({{"aircraft", k.aircraft},
                      {"engine", k.engine},
                      {"share", k.share},
                      {"coef_db", k.coef_db}});
  j["function"]["combos"] = std::move(combos);
  j["dominant_feature"] = gt.dominant_feature;
  j["monotone_feature"] = gt.monotone_feature;
  j["threshold_feature"] = gt.threshold_feature;
  auto nmts = ordered_json::array();
  for (const auto& n : gt.nmts)
    nmts.push_back({{"nmt_id", n.nmt_id},
                    {"tract_id", n.tract_id},
                    {"side", n.side},
                    {"land_use", to_string(n.land_use)},
                    {"site_offset", n.site_offset}});
  j["nmts"] = std::move(nmts);
  auto diurnal = ordered_json::object();
  for (const auto& [tract, cls] : gt.diurnal) diurnal[tract] = to_string(cls);
  j["diurnal"] = std::move(diurnal);
  auto rotation = ordered_json::array();
  for (const auto& r : gt.rotation)
    rotation.push_back({{"start", to_string(r.start)},
                        {"departure", r.roles.departure},
                        {"arrival", r.roles.arrival}});
  j["rotation"] = std::move(rotation);
  auto levels = ordered_json::array();
  for (const auto& l : gt.levels)
    levels.push_back({{"nmt_id", l.nmt_id},
                      {"hour_start", to_string(l.hour_start)},
                      {"expected", l.expected},
                      {"intended", l.intended}});
  j["levels"] = std::move(levels);
  return j;
}

inline constexpr std::string_view kGroundTruthFile = "ground_truth.json";
inline constexpr std::string_view kScenarioConfFile = "scenario.conf";

/// Run settings a later `report` needs to read this bundle.
inline std::string scenario_conf(const ScenarioConfig& cfg) {
  const auto w = cfg.window();
  return "window_start=" + to_string(w.start) + "\nwindow_end=" + to_string(w.end) +
         "\nrunways=32L,32R\nseed=" + std::to_string(cfg.seed) +
         "\nblock_hours=" + std::to_string(cfg.block_hours) +
         "\nmax_depth=" + std::to_string(cfg.train_max_depth) +
         "\nmin_child_weight=" + format_number(cfg.train_min_child_weight) +
         "\nlambda=" + format_number(cfg.train_lambda) + "\n";
}

/// Writes the six input files, ground_truth.json and scenario.conf.
inline void write_scenario(const Scenario& sc, const ScenarioConfig& cfg,
                           const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& b = sc.bundle;
  auto put = [&](std::string_view name, const std::string& text) {
    write_text((dir / name).string(), text);
  };
  put(schema::kSplFile, serialize_spl(b.spl));
  put(schema::kFlightsFile, serialize_flights(b.flights));
  put(schema::kWeatherFile, serialize_weather(b.weather));
  put(schema::kPopulationFile, serialize_population(b.population));
  put(schema::kTractsFile, serialize_tracts(b.tracts));
  put(schema::kNmtsFile, serialize_nmts(b.nmts));
  put(kGroundTruthFile, to_json(sc.truth).dump(1) + "\n");
  put(kScenarioConfFile, scenario_conf(cfg));
}

}  // namespace aeronoise::synth
