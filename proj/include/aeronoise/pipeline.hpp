#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "aeronoise/acoustics.hpp"
#include "aeronoise/civil_time.hpp"
#include "aeronoise/csv.hpp"
#include "aeronoise/error.hpp"
#include "aeronoise/exposure.hpp"
#include "aeronoise/fusion.hpp"
#include "aeronoise/gbm.hpp"
#include "aeronoise/ingest.hpp"
#include "aeronoise/rng.hpp"
#include "aeronoise/shap.hpp"
#include "aeronoise/synth.hpp"
#include "aeronoise/table.hpp"
#include "aeronoise/validation.hpp"

namespace aeronoise::pipeline {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// key=value configuration

using KeyValues = std::map<std::string, std::string, std::less<>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

inline double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end || !std::isfinite(out))
    throw Error(ErrorKind::InvalidConfig, std::string(key) + ": not a number '" + std::string(v) + "'");
  return out;
}

inline std::int64_t to_int(std::string_view key, std::string_view v) {
  std::int64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end)
    throw Error(ErrorKind::InvalidConfig, std::string(key) + ": not an integer '" + std::string(v) + "'");
  return out;
}

inline std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || p != end)
    throw Error(ErrorKind::InvalidConfig, std::string(key) + ": not a seed '" + std::string(v) + "'");
  return out;
}

inline CivilTime to_time(std::string_view key, std::string_view v) {
  const auto t = parse_civil_time(v);
  if (!t) throw Error(ErrorKind::InvalidConfig, std::string(key) + ": bad timestamp '" + std::string(v) + "'");
  return *t;
}

inline std::string hex(std::uint64_t h) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[static_cast<std::size_t>(i)] = digits[h & 15];
  return s;
}

}  // namespace detail

/// `key = value` lines; blank lines and `#` comments are ignored.
inline KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line = 0;
  while (!text.empty()) {
    ++line;
    const auto nl = text.find('\n');
    auto s = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = detail::trim(s);
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorKind::InvalidConfig, "expected key=value", line);
    const auto key = detail::trim(s.substr(0, eq));
    if (key.empty()) throw Error(ErrorKind::InvalidConfig, "empty key", line);
    kv[std::string(key)] = std::string(detail::trim(s.substr(eq + 1)));
  }
  return kv;
}

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  fs::path in = ".";
  fs::path out = "out";
  std::optional<CivilTime> window_start;
  std::optional<CivilTime> window_end;
  std::vector<double> thresholds{kDefaultThresholds.begin(), kDefaultThresholds.end()};
  double retention_dba = kDefaultRetentionDba;
  MappingMode mapping = MappingMode::Containing;
  gbm::TrainConfig train;
  std::uint64_t seed = 42;
  std::vector<std::string> runways;
  TableFormat format = TableFormat::Csv;
  std::optional<fs::path> alt_population;
  int block_hours = 3;
  std::vector<std::string> dependence_features{"temperature_c", "wind_speed_kt",
                                               "wind_deviation_deg", "cloud_cover_tenths"};

  /// Applies recognised keys; unknown keys are rejected.
  void apply(const KeyValues& kv) {
    using namespace detail;
    for (const auto& [k, v] : kv) {
      if (k == "window_start") window_start = to_time(k, v);
      else if (k == "window_end") window_end = to_time(k, v);
      else if (k == "thresholds") {
        thresholds.clear();
        for (const auto& s : split_list(v)) thresholds.push_back(to_double(k, s));
      } else if (k == "retention_dba") retention_dba = to_double(k, v);
      else if (k == "mapping") mapping = parse_mapping(v);
      else if (k == "seed") seed = to_u64(k, v);
      else if (k == "runways") runways = split_list(v);
      else if (k == "format") format = parse_format(v);
      else if (k == "alt_population") alt_population = fs::path(v);
      else if (k == "block_hours") block_hours = static_cast<int>(to_int(k, v));
      else if (k == "dependence_features") dependence_features = split_list(v);
      else if (k == "learning_rate") train.learning_rate = to_double(k, v);
      else if (k == "rounds_max") train.rounds_max = static_cast<int>(to_int(k, v));
      else if (k == "max_depth") train.max_depth = static_cast<int>(to_int(k, v));
      else if (k == "lambda") train.lambda = to_double(k, v);
      else if (k == "gamma") train.gamma = to_double(k, v);
      else if (k == "min_child_weight") train.min_child_weight = to_double(k, v);
      else if (k == "early_stopping_patience")
        train.early_stopping_patience = static_cast<int>(to_int(k, v));
      else if (k == "split_fraction") train.split_fraction = to_double(k, v);
      else throw Error(ErrorKind::InvalidConfig, "unknown config key '" + k + "'");
    }
  }

  /// Sorts and deduplicates thresholds and checks every invariant.
  void normalize() {
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    if (thresholds.empty()) throw Error(ErrorKind::InvalidConfig, "at least one threshold");
    for (double t : thresholds)
      if (!std::isfinite(t)) throw Error(ErrorKind::InvalidConfig, "thresholds must be finite");
    if (std::isnan(retention_dba)) throw Error(ErrorKind::InvalidConfig, "retention_dba is NaN");
    if (window_start && !window_start->on_hour())
      throw Error(ErrorKind::InvalidConfig, "window_start must be on the hour");
    if (window_end && !window_end->on_hour())
      throw Error(ErrorKind::InvalidConfig, "window_end must be on the hour");
    if (window_start && window_end && !(*window_start < *window_end))
      throw Error(ErrorKind::InvalidConfig, "window_start must precede window_end");
    if (block_hours < 1) throw Error(ErrorKind::InvalidConfig, "block_hours must be >= 1");
    train.seed = seed;
    train.validate();
  }

  static MappingMode parse_mapping(std::string_view v) {
    if (v == "containing") return MappingMode::Containing;
    if (v == "nearest") return MappingMode::NearestCentroid;
    throw Error(ErrorKind::InvalidConfig, "mapping must be containing or nearest");
  }

  static TableFormat parse_format(std::string_view v) {
    if (v == "csv") return TableFormat::Csv;
    if (v == "json") return TableFormat::Json;
    throw Error(ErrorKind::InvalidConfig, "format must be csv or json");
  }
};

/// Reads `<in>/scenario.conf` when present, then `config_file`.
inline RunConfig load_run_config(const fs::path& in, const std::optional<fs::path>& config_file) {
  RunConfig c;
  c.in = in;
  if (const auto p = in / synth::kScenarioConfFile; fs::exists(p))
    c.apply(parse_key_values(read_file(p.string())));
  if (config_file) c.apply(parse_key_values(read_file(config_file->string())));
  return c;
}

/// Scenario overrides for `synth`.
inline void apply_scenario(synth::ScenarioConfig& s, const KeyValues& kv) {
  using namespace detail;
  for (const auto& [k, v] : kv) {
    if (k == "seed") s.seed = to_u64(k, v);
    else if (k == "days") s.days = static_cast<int>(to_int(k, v));
    else if (k == "start") s.start = to_time(k, v);
    else if (k == "near_32l") s.layout.near_32l = static_cast<int>(to_int(k, v));
    else if (k == "near_32r") s.layout.near_32r = static_cast<int>(to_int(k, v));
    else if (k == "commercial") s.layout.commercial = static_cast<int>(to_int(k, v));
    else if (k == "residential") s.layout.residential = static_cast<int>(to_int(k, v));
    else if (k == "block_hours") s.block_hours = static_cast<int>(to_int(k, v));
    else if (k == "noise_sd") s.coef.noise_sd = to_double(k, v);
    else if (k == "rotation_amplitude") s.coef.rotation_amplitude = to_double(k, v);
    else if (k == "cloud_threshold") s.coef.cloud_threshold = to_double(k, v);
    else if (k == "cloud_step") s.coef.cloud_step = to_double(k, v);
    else if (k == "wind_speed_slope") s.coef.wind_speed_slope = to_double(k, v);
    else if (k == "commuter_amplitude") s.commuter_amplitude = to_double(k, v);
    else if (k == "background_fraction") s.background_fraction = to_double(k, v);
    else if (k == "jitter_db") s.jitter_db = to_double(k, v);
    else if (k == "train_max_depth") s.train_max_depth = static_cast<int>(to_int(k, v));
    else if (k == "train_min_child_weight") s.train_min_child_weight = to_double(k, v);
    else if (k == "train_lambda") s.train_lambda = to_double(k, v);
    else throw Error(ErrorKind::InvalidConfig, "unknown scenario key '" + k + "'");
  }
}

// ---------------------------------------------------------------------------
// Content-hash manifest of intermediates in the output directory.

class Manifest {
 public:
  static constexpr std::string_view kFile = "manifest.json";

  explicit Manifest(fs::path dir) : path_(std::move(dir) / kFile) {
    if (!fs::exists(path_)) return;
    try {
      const auto j = Json::parse(read_file(path_.string()));
      for (const auto& [name, e] : j.items())
        entries_[name] = {e.at("inputs").get<std::string>(), e.at("output").get<std::string>()};
    } catch (const std::exception&) {
      entries_.clear();  // unreadable manifest: rebuild everything
    }
  }

  /// True when `file` was produced from the same inputs and is unchanged since.
  bool fresh(const std::string& name, std::uint64_t inputs, const fs::path& file) const {
    const auto it = entries_.find(name);
    if (it == entries_.end() || it->second.first != detail::hex(inputs) || !fs::exists(file))
      return false;
    return it->second.second == detail::hex(fnv1a64(read_file(file.string())));
  }

  void record(const std::string& name, std::uint64_t inputs, std::string_view output) {
    entries_[name] = {detail::hex(inputs), detail::hex(fnv1a64(output))};
    Json j = Json::object();
    for (const auto& [n, e] : entries_) j[n] = {{"inputs", e.first}, {"output", e.second}};
    write_text(path_.string(), j.dump(1) + "\n");
  }

 private:
  fs::path path_;
  std::map<std::string, std::pair<std::string, std::string>> entries_;
};

// ---------------------------------------------------------------------------
// Session: lazily computed pipeline stages over one input/output pair.

inline std::string op_label(Operation op) {
  return op == Operation::Departure ? "takeoff" : "landing";
}

struct ModelRun {
  gbm::TrainResult result;
  gbm::Dataset all;
  gbm::Dataset train;
  gbm::Dataset test;
  gbm::Metrics train_metrics;
  gbm::Metrics test_metrics;
  bool reused = false;
};

struct ShapRun {
  std::vector<shap::Attribution> attributions;
  std::vector<shap::FeatureImportance> summary;
  std::map<std::string, std::vector<shap::DependencePoint>> dependence;
  double max_local_error = 0.0;
};

struct ExposureRun {
  std::vector<ExposureMatrix> defacto;  // one per threshold, ascending
  std::vector<ExposureMatrix> residential;
  std::vector<GiniSeries> gini;
  std::vector<std::vector<BasisComparison>> comparison;
  std::vector<RotationPair> rotation;
};

struct ValidationRow {
  std::string scope;  // tract | district
  std::string key;
  validation::DiurnalClass diurnal = validation::DiurnalClass::Flat;
  std::optional<validation::ProviderAgreement> providers;
};

class Session {
 public:
  explicit Session(RunConfig cfg) : cfg_(std::move(cfg)), manifest_(prepare(cfg_)) {}

  const RunConfig& config() const { return cfg_; }
  const std::vector<std::string>& written() const { return written_; }

  // -- inputs ---------------------------------------------------------------
  const std::vector<WeatherHour>& weather() { return load(weather_, schema::kWeatherFile, parse_weather); }
  const std::vector<FlightEvent>& flights() { return load(flights_, schema::kFlightsFile, parse_flights); }
  const std::vector<PopulationRecord>& population() {
    return load(population_, schema::kPopulationFile, parse_population);
  }
  const std::vector<TractMeta>& tracts() { return load(tracts_, schema::kTractsFile, parse_tracts); }
  const std::vector<NmtMeta>& nmts() { return load(nmts_, schema::kNmtsFile, parse_nmts); }
  const std::vector<SplSample>& spl() { return load(spl_, schema::kSplFile, parse_spl); }

  /// Configured window, else the span of the weather records.
  Window window() {
    if (cfg_.window_start && cfg_.window_end) return {*cfg_.window_start, *cfg_.window_end};
    const auto& w = weather();
    if (w.empty() && !(cfg_.window_start && cfg_.window_end))
      throw Error(ErrorKind::InsufficientData, "no weather records to infer the study window from");
    CivilTime lo = w.front().hour_start, hi = lo;
    for (const auto& x : w) {
      lo = std::min(lo, x.hour_start);
      hi = std::max(hi, x.hour_start);
    }
    return {cfg_.window_start.value_or(lo), cfg_.window_end.value_or(hi.plus_hours(1))};
  }

  // -- stages ---------------------------------------------------------------
  ValidationReport validate_inputs() {
    Bundle b{spl(), flights(), weather(), population(), tracts(), nmts()};
    auto rep = validate_bundle(b, window(), cfg_.runways);
    Table f{{"stream", "kind", "severity", "detail"}, {}, ""};
    for (const auto& x : rep.findings)
      f.rows.push_back({x.stream, std::string(to_string(x.kind)),
                        std::string(x.severity == Severity::Error ? "error" : "warning"), x.detail});
    emit("findings", f);
    Table c{{"nmt_id", "hour_start", "samples", "completeness"}, {}, ""};
    for (const auto& x : rep.completeness)
      c.rows.push_back({x.nmt_id, to_string(x.hour_start), std::int64_t{x.count}, x.fraction});
    emit("sample_completeness", c);
    return rep;
  }

  const std::vector<HourlyLaeq>& hourly() {
    if (hourly_) return *hourly_;
    const auto path = cfg_.out / "hourly_laeq.csv";
    const auto key = fnv1a64(format_number(cfg_.retention_dba), input_hash(schema::kSplFile));
    if (manifest_.fresh("hourly_laeq", key, path)) {
      hourly_ = parse_hourly_laeq(read_file(path.string()));
      reused_.push_back("hourly_laeq");
    } else {
      hourly_ = hourly_series(spl(), cfg_.retention_dba);
      const auto text = serialize_hourly_laeq(*hourly_);
      put(path, text);
      manifest_.record("hourly_laeq", key, text);
    }
    return *hourly_;
  }

  const TractMapping& mapping() {
    if (!mapping_) mapping_ = map_tracts(nmts(), tracts(), cfg_.mapping);
    return *mapping_;
  }

  const std::vector<TractHourRecord>& fused() {
    if (!fused_) {
      fused_ = fuse(population(), hourly(), mapping(), tracts(), window());
      put(cfg_.out / "fused.csv", serialize_fused(*fused_));
    }
    return *fused_;
  }

  const FeatureTable& features() {
    if (!features_) {
      const auto w = window();
      const auto schedule = infer_runway_schedule(flights(), w);
      features_ = build_features(flights(), weather(), nmts(), hourly(), schedule, w);
      features_text_ = serialize_features(*features_);
      put(cfg_.out / "features.csv", features_text_);
    }
    return *features_;
  }

  const ExposureRun& exposure() {
    if (exposure_) return *exposure_;
    ExposureRun r;
    const auto& recs = fused();
    Table compare{{"theta", "hour_start", "defacto_total", "residential_total", "delta"}, {}, ""};
    for (double theta : cfg_.thresholds) {
      r.defacto.push_back(exposure_matrix(recs, theta, PopulationBasis::DeFacto));
      r.residential.push_back(exposure_matrix(recs, theta, PopulationBasis::Residential));
      r.gini.push_back(gini_series(r.defacto.back()));
      r.comparison.push_back(compare_bases(r.defacto.back(), r.residential.back()));
      const auto& m = r.defacto.back();
      const auto& g = r.gini.back();

      Table grid;
      grid.columns.push_back("hour_start");
      for (const auto& t : m.tract_ids) grid.columns.push_back(t);
      grid.columns.push_back("exposed_total");
      grid.columns.push_back("coverage");
      for (std::size_t h = 0; h < m.width(); ++h) {
        std::vector<Table::Cell> row{to_string(m.hours[h])};
        for (std::size_t i = 0; i < m.tracts(); ++i) row.emplace_back(m.at(i, h));
        row.emplace_back(g.entries[h].exposed_total);
        row.emplace_back(m.coverage(h));
        grid.rows.push_back(std::move(row));
      }
      emit("exposure_" + format_number(theta), grid);

      Table gt{{"hour_start", "gini", "exposed_total", "mean_exposure", "coverage"}, {}, "null"};
      for (const auto& e : g.entries)
        gt.rows.push_back({to_string(e.hour), Table::opt(e.gini), e.exposed_total,
                           e.mean_exposure, e.coverage});
      emit("gini_" + format_number(theta), gt);

      for (const auto& c : r.comparison.back())
        compare.rows.push_back({theta, to_string(c.hour), c.defacto_total, c.residential_total, c.delta});
    }
    emit("compare", compare);

    r.rotation = rotation_contrast(hourly(), cfg_.block_hours);
    Table rot{{"nmt_a", "nmt_b", "blocks", "correlation"}, {}, "null"};
    for (const auto& p : r.rotation)
      rot.rows.push_back({p.nmt_a, p.nmt_b, std::int64_t{p.blocks}, Table::opt(p.correlation)});
    emit("rotation", rot);
    exposure_ = std::move(r);
    return *exposure_;
  }

  const ModelRun& model(Operation op) {
    auto& slot = models_[static_cast<int>(op)];
    if (slot) return *slot;
    const auto& table = features();
    ModelRun run;
    run.all = gbm::make_dataset(table, op);
    auto [train, test] = gbm::split_data(run.all, cfg_.train.split_fraction, cfg_.seed);
    run.train = std::move(train);
    run.test = std::move(test);

    const std::string name = "model_" + op_label(op);
    const auto path = cfg_.out / (name + ".json");
    const auto key = fnv1a64(gbm::to_json(cfg_.train).dump() + op_label(op), fnv1a64(features_text_));
    if (manifest_.fresh(name, key, path)) {
      run.result = gbm::result_from_json(Json::parse(read_file(path.string())));
      run.reused = true;
      reused_.push_back(name);
    } else {
      run.result = gbm::train(run.train, run.test, cfg_.train);
      const auto text = gbm::serialize(run.result);
      put(path, text);
      manifest_.record(name, key, text);
    }
    run.train_metrics = gbm::evaluate(run.result.model, run.train);
    run.test_metrics = gbm::evaluate(run.result.model, run.test);
    slot = std::move(run);
    return *slot;
  }

  const ShapRun& explanation(Operation op) {
    auto& slot = shap_[static_cast<int>(op)];
    if (slot) return *slot;
    const auto& m = model(op);
    const auto& names = m.result.model.feature_names;
    ShapRun s;
    s.attributions = shap::explain(m.result.model, m.all);
    for (std::size_t i = 0; i < s.attributions.size(); ++i) {
      const auto& a = s.attributions[i];
      CompensatedSum sum;
      sum.add(a.phi0);
      for (double p : a.phis) sum.add(p);
      s.max_local_error = std::max(
          s.max_local_error, std::abs(sum.value() - gbm::predict(m.result.model, m.all.row(i))));
    }
    s.summary = shap::summary(s.attributions, names);

    const std::string label = op_label(op);
    Table values;
    values.columns.push_back("key");
    for (const auto& n : names) values.columns.push_back(n);
    values.columns.push_back("phi0");
    for (const auto& a : s.attributions) {
      std::vector<Table::Cell> row{a.key};
      for (double p : a.phis) row.emplace_back(p);
      row.emplace_back(a.phi0);
      values.rows.push_back(std::move(row));
    }
    emit("shap_values_" + label, values);

    Table sum{{"rank", "feature", "mean_abs_phi"}, {}, ""};
    for (std::size_t i = 0; i < s.summary.size(); ++i)
      sum.rows.push_back({static_cast<std::int64_t>(i + 1), s.summary[i].name, s.summary[i].mean_abs});
    emit("shap_summary_" + label, sum);

    for (const auto& f : cfg_.dependence_features) {
      auto pts = shap::dependence(s.attributions, m.all, f);
      Table dep{{f, "phi"}, {}, ""};
      for (const auto& p : pts) dep.rows.push_back({p.value, p.phi});
      emit("shap_dependence_" + label + "_" + f, dep);
      s.dependence.emplace(f, std::move(pts));
    }
    slot = std::move(s);
    return *slot;
  }

  const std::vector<ValidationRow>& validation_rows() {
    if (validation_) return *validation_;
    const auto w = window();
    std::vector<PopulationRecord> in_window;
    for (const auto& p : population())
      if (w.contains(p.hour_start)) in_window.push_back(p);
    const auto tract_series = validation::tract_series(in_window);
    const auto districts = validation::district_map(tracts());
    const auto district_series = validation::aggregate_to_district(tract_series, districts);

    std::optional<std::vector<validation::HourlySeries>> alt_tracts, alt_districts;
    if (cfg_.alt_population) {
      const auto path = cfg_.alt_population->is_absolute() ? *cfg_.alt_population
                                                           : cfg_.in / *cfg_.alt_population;
      std::vector<PopulationRecord> alt;
      for (auto& p : parse_population(read_file(path.string())))
        if (w.contains(p.hour_start)) alt.push_back(std::move(p));
      alt_tracts = validation::tract_series(alt);
      alt_districts = validation::aggregate_to_district(*alt_tracts, districts);
    }

    std::vector<ValidationRow> rows;
    auto add = [&](std::string_view scope, const std::vector<validation::HourlySeries>& series,
                   const std::optional<std::vector<validation::HourlySeries>>& alt) {
      for (const auto& s : series) {
        ValidationRow r;
        r.scope = scope;
        r.key = s.key;
        const auto day = validation::mean_day(s);
        r.diurnal = validation::classify_diurnal(day);
        if (alt)
          for (const auto& a : *alt)
            if (a.key == s.key) r.providers = validation::compare_providers(s, a);
        rows.push_back(std::move(r));
      }
    };
    add("tract", tract_series, alt_tracts);
    add("district", district_series, alt_districts);

    Table t{{"scope", "key", "diurnal_class", "provider_hours", "r2_absolute", "r2_pct_change"},
            {},
            "null"};
    for (const auto& r : rows) {
      std::vector<Table::Cell> row{r.scope, r.key, std::string(to_string(r.diurnal))};
      if (r.providers) {
        row.emplace_back(std::int64_t{r.providers->hours});
        row.push_back(Table::opt(r.providers->r2_absolute));
        row.push_back(Table::opt(r.providers->r2_pct_change));
      } else {
        row.insert(row.end(), 3, Table::Cell{std::monostate{}});
      }
      t.rows.push_back(std::move(row));
    }
    emit("validation", t);
    validation_ = std::move(rows);
    return *validation_;
  }

  /// Everything, bundled into report.json.
  Json report() {
    const auto w = window();
    const auto& ex = exposure();
    Json j;

    Json meta;
    meta["window"] = {{"start", to_string(w.start)}, {"end", to_string(w.end)}};
    meta["thresholds"] = cfg_.thresholds;
    meta["retention_dba"] = cfg_.retention_dba;
    meta["mapping"] = cfg_.mapping == MappingMode::Containing ? "containing" : "nearest";
    meta["tract_order"] = ex.defacto.front().tract_ids;
    Json mapping_json = Json::object();
    for (const auto& [t, n] : mapping()) mapping_json[t] = n;
    meta["tract_to_nmt"] = std::move(mapping_json);
    meta["generation_seed"] = cfg_.seed;
    meta["runways"] = cfg_.runways;
    meta["block_hours"] = cfg_.block_hours;
    meta["feature_names"] = features().feature_names;
    Json inputs = Json::object();
    for (auto f : {schema::kSplFile, schema::kFlightsFile, schema::kWeatherFile,
                   schema::kPopulationFile, schema::kTractsFile, schema::kNmtsFile})
      inputs[std::string(f)] = detail::hex(input_hash(f));
    meta["input_hashes"] = std::move(inputs);
    j["meta"] = std::move(meta);

    Json exposure_json = Json::array();
    Json gini_json = Json::array();
    Json compare_json = Json::array();
    for (std::size_t k = 0; k < cfg_.thresholds.size(); ++k) {
      const auto& m = ex.defacto[k];
      const auto& g = ex.gini[k];
      Json cells = Json::array();
      for (std::size_t i = 0; i < m.tracts(); ++i) {
        Json row = Json::array();
        for (std::size_t h = 0; h < m.width(); ++h) row.push_back(m.at(i, h));
        cells.push_back(std::move(row));
      }
      Json hours = Json::array();
      for (const auto& h : m.hours) hours.push_back(to_string(h));
      exposure_json.push_back({{"theta", m.theta},
                               {"tract_ids", m.tract_ids},
                               {"hours", std::move(hours)},
                               {"cells", std::move(cells)}});

      Json entries = Json::array();
      for (const auto& e : g.entries) {
        Json x;
        x["hour"] = to_string(e.hour);
        x["gini"] = e.gini ? Json(*e.gini) : Json(nullptr);
        x["exposed_total"] = e.exposed_total;
        x["mean_exposure"] = e.mean_exposure;
        x["coverage"] = e.coverage;
        entries.push_back(std::move(x));
      }
      Json diurnal = Json::array();
      for (const auto& d : diurnal_profile(g))
        diurnal.push_back({{"hour_of_day", d.hour_of_day},
                           {"mean_exposed", d.mean_exposed},
                           {"mean_gini", d.mean_gini ? Json(*d.mean_gini) : Json(nullptr)},
                           {"days", d.days}});
      gini_json.push_back(
          {{"theta", g.theta}, {"entries", std::move(entries)}, {"diurnal", std::move(diurnal)}});

      Json cmp = Json::array();
      for (const auto& c : ex.comparison[k])
        cmp.push_back({{"hour", to_string(c.hour)},
                       {"defacto_total", c.defacto_total},
                       {"residential_total", c.residential_total},
                       {"delta", c.delta}});
      compare_json.push_back({{"theta", m.theta}, {"entries", std::move(cmp)}});
    }
    j["exposure"] = std::move(exposure_json);
    j["gini"] = std::move(gini_json);
    j["comparison"] = std::move(compare_json);

    Json rotation = Json::array();
    for (const auto& p : ex.rotation)
      rotation.push_back({{"nmt_a", p.nmt_a},
                          {"nmt_b", p.nmt_b},
                          {"blocks", p.blocks},
                          {"correlation", p.correlation ? Json(*p.correlation) : Json(nullptr)}});
    j["rotation"] = std::move(rotation);

    Json model_json = Json::object();
    Json shap_json = Json::object();
    for (Operation op : {Operation::Departure, Operation::Arrival}) {
      const auto& m = model(op);
      model_json[op_label(op)] = {{"rows_train", m.train.rows()},
                                  {"rows_test", m.test.rows()},
                                  {"base_score", m.result.model.base_score},
                                  {"learning_rate", m.result.model.learning_rate},
                                  {"rounds_run", m.result.history.size()},
                                  {"trees", m.result.best_round},
                                  {"train_mae", m.train_metrics.mae},
                                  {"train_rmse", m.train_metrics.rmse},
                                  {"test_mae", m.test_metrics.mae},
                                  {"test_rmse", m.test_metrics.rmse}};
      const auto& s = explanation(op);
      Json ranking = Json::array();
      for (const auto& f : s.summary) ranking.push_back({{"feature", f.name}, {"mean_abs_phi", f.mean_abs}});
      Json turning = Json::object();
      for (const auto& [f, pts] : s.dependence) {
        const auto tp = shap::turning_point(pts);
        turning[f] = tp ? Json(*tp) : Json(nullptr);
      }
      shap_json[op_label(op)] = {{"phi0", s.attributions.empty() ? 0.0 : s.attributions.front().phi0},
                                 {"rows", s.attributions.size()},
                                 {"max_local_error", s.max_local_error},
                                 {"summary", std::move(ranking)},
                                 {"turning_points", std::move(turning)}};
    }
    j["model"] = std::move(model_json);
    j["shap"] = std::move(shap_json);

    Json val = Json::array();
    for (const auto& r : validation_rows()) {
      Json x;
      x["scope"] = r.scope;
      x["key"] = r.key;
      x["diurnal_class"] = to_string(r.diurnal);
      if (r.providers) {
        x["provider_hours"] = r.providers->hours;
        x["r2_absolute"] = r.providers->r2_absolute ? Json(*r.providers->r2_absolute) : Json(nullptr);
        x["r2_pct_change"] =
            r.providers->r2_pct_change ? Json(*r.providers->r2_pct_change) : Json(nullptr);
      }
      val.push_back(std::move(x));
    }
    j["validation"] = std::move(val);

    put(cfg_.out / "report.json", j.dump(1) + "\n");
    return j;
  }

  const std::vector<std::string>& reused() const { return reused_; }

 private:
  static fs::path prepare(const RunConfig& c) {
    fs::create_directories(c.out);
    return c.out;
  }

  template <typename T, typename F>
  const std::vector<T>& load(std::optional<std::vector<T>>& slot, std::string_view name, F parse) {
    if (slot) return *slot;
    const auto path = (cfg_.in / name).string();
    const auto text = read_file(path);
    hashes_[std::string(name)] = fnv1a64(text);
    try {
      slot = parse(std::string_view(text));
    } catch (const Error& e) {
      throw Error(e.kind(), path + ": " + e.detail(), e.line());
    }
    return *slot;
  }

  std::uint64_t input_hash(std::string_view name) {
    const auto it = hashes_.find(name);
    if (it != hashes_.end()) return it->second;
    const auto h = fnv1a64(read_file((cfg_.in / name).string()));
    hashes_.emplace(std::string(name), h);
    return h;
  }

  void put(const fs::path& p, const std::string& text) {
    write_text(p.string(), text);
    written_.push_back(p.filename().string());
  }

  void emit(const std::string& stem, const Table& t) {
    const auto path = write_table((cfg_.out / stem).string(), t, cfg_.format);
    written_.push_back(fs::path(path).filename().string());
  }

  RunConfig cfg_;
  Manifest manifest_;
  std::map<std::string, std::uint64_t, std::less<>> hashes_;
  std::vector<std::string> written_;
  std::vector<std::string> reused_;

  std::optional<std::vector<WeatherHour>> weather_;
  std::optional<std::vector<FlightEvent>> flights_;
  std::optional<std::vector<PopulationRecord>> population_;
  std::optional<std::vector<TractMeta>> tracts_;
  std::optional<std::vector<NmtMeta>> nmts_;
  std::optional<std::vector<SplSample>> spl_;

  std::optional<std::vector<HourlyLaeq>> hourly_;
  std::optional<TractMapping> mapping_;
  std::optional<std::vector<TractHourRecord>> fused_;
  std::optional<FeatureTable> features_;
  std::string features_text_;
  std::optional<ExposureRun> exposure_;
  std::array<std::optional<ModelRun>, 2> models_;
  std::array<std::optional<ShapRun>, 2> shap_;
  std::optional<std::vector<ValidationRow>> validation_;
};

}  // namespace aeronoise::pipeline
